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

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "latref/tensor.hpp"

namespace latref {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  int64_t rows() const { return value().rows(); }
  int64_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Receives the incoming gradient and the node's own output; returns one
// gradient per parent (an invalid Var means "no contribution").
using BackwardFn = std::function<std::vector<Var>(const Var& grad, const Var& out)>;

// Reverse-mode tape. Nodes are appended in evaluation order, so node ids are
// a topological order. Backward rules are written with the same differentiable
// ops, which makes gradients differentiable again when requested.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

  // Gradients of the scalar `root` with respect to each of `wrt`. Leaves that
  // do not influence the root receive exact zeros. With `create_graph` the
  // returned gradients are recorded and can themselves be differentiated.
  std::vector<Var> grad(const Var& root, std::span<const Var> wrt, bool create_graph = false);
  std::vector<Tensor> gradients(const Var& root, std::span<const Var> wrt);

  // Disables recording of backward rules; values are still computed.
  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

  size_t size() const { return nodes_.size(); }
  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<Var> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& tape) : tape_(tape), prev_(tape.grad_enabled()) {
    tape_.set_grad_enabled(false);
  }
  ~NoGradGuard() { tape_.set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape& tape_;
  bool prev_;
};

// ---- Primitive ops -------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

// a[n,m] + b[m] broadcast over rows.
Var add_row(const Var& a, const Var& b);
// a[n,m] * b[m] broadcast over rows.
Var mul_row(const Var& a, const Var& b);
// Column totals: [n,m] -> [m].
Var sum_rows(const Var& a);
// [m] -> [n,m].
Var broadcast_rows(const Var& b, int64_t n);
// Row totals: [n,m] -> [n].
Var row_sum(const Var& a);
// [n] -> [n,m].
Var broadcast_cols(const Var& c, int64_t m);
Var sum(const Var& a);
// Scalar -> tensor of `shape` filled with it.
Var fill(const Var& s, const Shape& shape);

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var square(const Var& a);
Var pow(const Var& a, double p);
Var clamp(const Var& a, double lo, double hi);
Var relu(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, int64_t start, int64_t len);
Var slice_rows(const Var& a, int64_t start, int64_t len);
Var pad_cols(const Var& a, int64_t start, int64_t total);
Var pad_rows(const Var& a, int64_t start, int64_t total);

// Copies the value without gradient flow.
Var detach(const Var& a);

// ---- Composite ops -------------------------------------------------------

Var mean(const Var& a);
// Average over rows: [n,m] -> [m].
Var mean_rows(const Var& a);
// a[n,m] - c[n] broadcast over columns.
Var sub_col(const Var& a, const Var& c);
Var gelu(const Var& a);
// Row-wise, stabilized by subtracting the row max.
Var softmax(const Var& a);
Var log_softmax(const Var& a);
// Row-wise log-sum-exp: [n,m] -> [n].
Var logsumexp_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// ---- Gradient checking ---------------------------------------------------

using ScalarFn = std::function<Var(Tape&, const Var&)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  int64_t worst_index = -1;
};

// Max over coordinates of |g_ad - g_fd| / max(1, |g_fd|) with central
// differences of step h. Throws Error naming the coordinate if f is not
// finite at a probe point.
FiniteDiffReport finite_diff_check(const ScalarFn& f, const Tensor& z, double h = 1e-5);

// Autodiff gradient of f at z.
Tensor autodiff_grad(const ScalarFn& f, const Tensor& z);

}  // namespace latref
