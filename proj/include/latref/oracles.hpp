// Copyright 2026 The latref Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reference computations that need no trained model: finite differences,
// brute-force enumeration and Gauss-Hermite quadrature. Shared by the unit
// tests, the acceptance runner and `latref selftest`.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "latref/eval.hpp"
#include "latref/tensor.hpp"

namespace latref {

struct OracleCheck {
  std::string name;
  double value = 0.0;      // the measured error or statistic
  double tolerance = 0.0;  // pass when value < tolerance unless noted
  bool pass = false;
  std::string detail;
};

// ---- Finite differences ---------------------------------------------------

// Max over coordinates of |g - g_fd| / max(1, |g_fd|), central differences
// of step h on `value`. Unlike finite_diff_check the probes run with
// recording enabled, so `value` may itself call Tape::grad.
double fd_max_rel_error(const std::function<double(const Tensor&)>& value, const Tensor& grad,
                        const Tensor& z, double h = 1e-5);

// One check per differentiable op plus detach and a second-order case.
std::vector<OracleCheck> op_gradient_suite(uint64_t seed, double tol = 1e-6);

// GradNet (both kinds, w.r.t. latent and parameters), LVM loss and AR
// log-likelihood on small configurations.
std::vector<OracleCheck> net_gradient_suite(uint64_t seed, double tol = 1e-4);

// ---- Proxy-gradient objective ---------------------------------------------

// For n random (net, z, z~) per kind: |loss + mean |z~ - z|^2 - mse| and
// the distance of the objective's Newton minimizer from z~ - z.
std::vector<OracleCheck> objective_identity_suite(int64_t n, uint64_t seed, double tol = 1e-9);

// ---- Enumeration ------------------------------------------------------------

// Joint argmax over all vocab^T sequences, first in lexicographic order on
// ties.
TokenSeq enumerate_joint_argmax(const Tensor& log_probs);

// Tokenwise argmax vs enumeration on n random (LVM, z, x) with T <= 3 and
// vocab 5. Value is the number of mismatches.
OracleCheck argmax_enumeration_check(int64_t n, uint64_t seed);

// ---- Quadrature -------------------------------------------------------------

struct GaussHermite {
  std::vector<double> nodes;    // physicists' Hermite roots
  std::vector<double> weights;  // for weight function exp(-x^2)
};
// Golub-Welsch on the Jacobi matrix of the Hermite recurrence.
GaussHermite gauss_hermite(int n);

// A per-position model with T = 2, D = 1 and V = 3 whose likelihood is a
// softmax of a quadratic in z, so the marginal has no closed form.
struct ToyMarginalInstance {
  std::array<double, 2> prior_mean{0.3, -0.5};
  std::array<double, 2> prior_log_std{0.1, -0.2};
  std::array<double, 2> proposal_mean{0.6, -0.9};
  std::array<double, 2> proposal_log_std{-0.3, -0.4};
  std::array<double, 3> lin{1.5, -0.7, 0.2};
  std::array<double, 3> quad{-0.4, 0.3, 0.1};
  std::array<double, 3> bias{0.2, 0.1, -0.3};
  std::array<int64_t, 2> y{2, 0};

  double log_likelihood(const LatentState& z) const;
  MarginalProblem problem() const;
  // log of prod_t integral p(y_t | z_t) p(z_t) dz_t by n-point quadrature.
  double quadrature_log_marginal(int n = 80) const;
};

// Estimate at n samples vs quadrature truth, and median absolute error over
// `seeds` replicates at each N in `ns` (must decrease).
std::vector<OracleCheck> importance_sampling_suite(int64_t n_large, std::vector<int64_t> ns,
                                                   int64_t seeds, uint64_t seed,
                                                   double tol = 0.05);

// ---- Runner -----------------------------------------------------------------

// Every suite above at its default tolerance.
std::vector<OracleCheck> selftest_checks(uint64_t seed);

}  // namespace latref
