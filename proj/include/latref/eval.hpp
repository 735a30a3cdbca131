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

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "latref/data.hpp"
#include "latref/gradnet.hpp"
#include "latref/lvm.hpp"

namespace latref {

// ---- Importance sampling --------------------------------------------------

struct MarginalEstimate {
  double value = 0.0;  // nats
  int64_t n_samples = 0;
  int64_t dropped = 0;  // samples with a non-finite weight
  double ess = 0.0;     // (sum w)^2 / sum w^2 over kept samples
};

// log p(y | z) for a batch of latents.
using BatchLogLikelihood = std::function<std::vector<double>(std::span<const LatentState>)>;

struct MarginalProblem {
  DiagGaussianSeq prior;
  DiagGaussianSeq proposal;
  BatchLogLikelihood log_likelihood;
};

// logsumexp_i [log p(y|z_i) + log p(z_i) - log q(z_i)] - log N over the kept
// samples, z_i ~ proposal drawn from Rng(seed). Throws if every weight is
// non-finite.
MarginalEstimate importance_sample(const MarginalProblem& problem, int64_t n, uint64_t seed,
                                   int64_t chunk = 250);

// Same estimator from precomputed log-weights.
MarginalEstimate marginal_from_log_weights(std::span<const double> log_weights);

// log p(y | x) under the LVM with q(z | y, x) as proposal.
MarginalEstimate is_marginal(const Lvm& lvm, const TokenSeq& y, const Tensor& h_src, int64_t n,
                             uint64_t seed);

// tau(z; x): the marginal of the tokenwise-argmax decode at z.
MarginalEstimate tau_estimate(const Lvm& lvm, const LatentState& z, const Tensor& h_src,
                              int64_t n, uint64_t seed);

// log p(y | mu, x) + log p(mu | x).
double proxy_bound(const Lvm& lvm, const TokenSeq& y, const LatentState& mu, const Tensor& h_src);

// ---- Sequence metrics -----------------------------------------------------

int64_t edit_distance(const TokenSeq& a, const TokenSeq& b);
// Positions t > 0 with y_t == y_{t-1}.
int64_t repetition_count(const TokenSeq& y);
// Fraction of positions t < max(|hyp|, |ref|) where both have the same
// token; 1 when both are empty.
double token_accuracy(const TokenSeq& hyp, const TokenSeq& ref);
// Corpus BLEU in [0, 100]: n-grams up to 4, add-one smoothing for orders
// above 1, brevity penalty. Throws on an empty corpus or length mismatch.
double bleu(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs);

// ---- Per-step reports -------------------------------------------------------

struct StepRecord {
  int64_t example = 0;
  DecodeProcedure procedure = DecodeProcedure::kDelta;
  int64_t steps = 0;  // L
  TokenSeq raw;
  TokenSeq output;  // after repetition removal
  double log_marginal = 0.0;
  int64_t is_dropped = 0;
  int64_t edit_from_initial = 0;
  int64_t repetitions = 0;
  double token_accuracy = 0.0;
  double proxy_bound = 0.0;
};

struct StepRow {
  std::string procedure;
  int64_t steps = 0;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  int64_t n = 0;
};

struct StepReport {
  std::vector<int64_t> steps_list;
  std::vector<StepRow> rows;
  std::vector<StepRecord> records;
  // Per example: the delta proxy bound at every step 0..max L.
  std::vector<std::vector<double>> delta_proxy_series;
  std::vector<std::string> excluded;  // "example <i>: <reason>"
  // Per-step wall times and decoder calls, by procedure.
  std::map<std::string, std::vector<int64_t>> step_wall_ns;
  std::map<std::string, std::vector<int64_t>> step_decoder_calls;

  // Mean of `metric` for (procedure, L); throws if absent.
  double mean(DecodeProcedure procedure, int64_t steps, const std::string& metric) const;
};

struct ReportModels {
  const Lvm* lvm = nullptr;
  const LatentGradient* score = nullptr;   // for the score procedure
  const LatentGradient* energy = nullptr;  // for the energy procedure
};

// Decodes every test example from the prior mean at the most likely length,
// refines with each procedure up to max(steps_list), and aggregates
// log-marginal (IS over the output, or over the reference when
// cfg.score_references), edit distance from the L=0 output, repetitions,
// token accuracy, BLEU and the proxy bound at each L. Refinement uses
// decode.alpha and decode.termination. The IS seed of example i depends only
// on (seed, i), so equal outputs get equal estimates.
StepReport step_report(std::span<const Example> test, const ReportModels& models,
                       const EvalConfig& cfg, const DecodeConfig& decode, uint64_t seed);

std::string step_report_csv(const StepReport& report);
std::string step_report_json(const StepReport& report);

}  // namespace latref
