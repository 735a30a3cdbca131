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

#include "latref/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace latref {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw Error("operation on an empty Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw Error("operands live on different tapes");
  return tape_of(a);
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw Error(std::string(op) + ": expected a matrix, got " + shape_str(t.shape));
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out = a;
  for (auto& v : out.data) v = f(v);
  return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
  return out;
}

}  // namespace

const Tensor& Var::value() const { return tape_of(*this).value(id_); }

bool Var::requires_grad() const { return valid() && tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  bool needs = grad_enabled_ &&
               std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  if (!needs) return constant(std::move(value));
  nodes_.push_back(Node{std::move(value), std::move(parents), std::move(backward), true});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

std::vector<Var> Tape::grad(const Var& root, std::span<const Var> wrt, bool create_graph) {
  if (root.tape() != this) throw Error("grad: root lives on a different tape");
  if (root.value().numel() != 1) {
    throw Error("grad: root must be scalar, got shape " + shape_str(root.shape()));
  }
  bool prev = grad_enabled_;
  grad_enabled_ = create_graph;

  const int root_id = root.id();
  std::vector<Var> grads(static_cast<size_t>(root_id) + 1);
  if (requires_grad(root_id)) {
    grads[static_cast<size_t>(root_id)] = constant(Tensor::full(root.shape(), 1.0));
  }
  for (int id = root_id; id >= 0; --id) {
    Var g = grads[static_cast<size_t>(id)];
    if (!g.valid()) continue;
    // Copy out what we need; the deque may grow while backward runs.
    std::vector<Var> parents = nodes_[static_cast<size_t>(id)].parents;
    BackwardFn fn = nodes_[static_cast<size_t>(id)].backward;
    if (!fn) continue;
    std::vector<Var> pg = fn(g, Var(this, id));
    for (size_t i = 0; i < parents.size(); ++i) {
      const Var& p = parents[i];
      if (!pg[i].valid() || !p.requires_grad()) continue;
      auto& slot = grads[static_cast<size_t>(p.id())];
      slot = slot.valid() ? add(slot, pg[i]) : pg[i];
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.tape() != this) throw Error("grad: wrt lives on a different tape");
    Var g = w.id() <= root_id ? grads[static_cast<size_t>(w.id())] : Var();
    out.push_back(g.valid() ? g : constant(Tensor::zeros(w.shape())));
  }
  grad_enabled_ = prev;
  return out;
}

std::vector<Tensor> Tape::gradients(const Var& root, std::span<const Var> wrt) {
  auto g = grad(root, wrt, false);
  std::vector<Tensor> out;
  out.reserve(g.size());
  for (auto& v : g) out.push_back(v.value());
  return out;
}

// ---- Primitives ----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  auto& t = tape_of(a, b);
  auto v = map_binary(a.value(), b.value(), "add", [](double x, double y) { return x + y; });
  return t.record(std::move(v), {a, b},
                  [](const Var& g, const Var&) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  auto& t = tape_of(a, b);
  auto v = map_binary(a.value(), b.value(), "sub", [](double x, double y) { return x - y; });
  return t.record(std::move(v), {a, b},
                  [](const Var& g, const Var&) { return std::vector<Var>{g, neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
  auto& t = tape_of(a, b);
  auto v = map_binary(a.value(), b.value(), "mul", [](double x, double y) { return x * y; });
  return t.record(std::move(v), {a, b}, [a, b](const Var& g, const Var&) {
    std::vector<Var> r(2);
    if (a.requires_grad()) r[0] = mul(g, b);
    if (b.requires_grad()) r[1] = mul(g, a);
    return r;
  });
}

Var neg(const Var& a) {
  auto v = map_unary(a.value(), [](double x) { return -x; });
  return tape_of(a).record(std::move(v), {a},
                           [](const Var& g, const Var&) { return std::vector<Var>{neg(g)}; });
}

Var scale(const Var& a, double c) {
  auto v = map_unary(a.value(), [c](double x) { return c * x; });
  return tape_of(a).record(std::move(v), {a},
                           [c](const Var& g, const Var&) { return std::vector<Var>{scale(g, c)}; });
}

Var add_scalar(const Var& a, double c) {
  auto v = map_unary(a.value(), [c](double x) { return x + c; });
  return tape_of(a).record(std::move(v), {a},
                           [](const Var& g, const Var&) { return std::vector<Var>{g}; });
}

Var matmul(const Var& a, const Var& b) {
  auto& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw Error("matmul: shape mismatch " + shape_str(av.shape) + " x " + shape_str(bv.shape));
  }
  Tensor out = Tensor::zeros({av.rows(), bv.cols()});
  MutMap(out.data.data(), av.rows(), bv.cols()).noalias() =
      ConstMap(av.data.data(), av.rows(), av.cols()) * ConstMap(bv.data.data(), bv.rows(), bv.cols());
  return t.record(std::move(out), {a, b}, [a, b](const Var& g, const Var&) {
    std::vector<Var> r(2);
    if (a.requires_grad()) r[0] = matmul(g, transpose(b));
    if (b.requires_grad()) r[1] = matmul(transpose(a), g);
    return r;
  });
}

Var transpose(const Var& a) {
  const auto& av = a.value();
  require_matrix(av, "transpose");
  Tensor out = Tensor::zeros({av.cols(), av.rows()});
  MutMap(out.data.data(), av.cols(), av.rows()) =
      ConstMap(av.data.data(), av.rows(), av.cols()).transpose();
  return tape_of(a).record(std::move(out), {a},
                           [](const Var& g, const Var&) { return std::vector<Var>{transpose(g)}; });
}

Var reshape(const Var& a, Shape shape) {
  Shape orig = a.shape();
  Tensor out(shape, a.value().data);
  return tape_of(a).record(std::move(out), {a}, [orig](const Var& g, const Var&) {
    return std::vector<Var>{reshape(g, orig)};
  });
}

Var add_row(const Var& a, const Var& b) {
  auto& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_matrix(av, "add_row");
  if (bv.rank() != 1 || bv.numel() != av.cols()) {
    throw Error("add_row: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  Tensor out = av;
  const int64_t n = av.rows(), m = av.cols();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.data[i * m + j] += bv.data[j];
  return t.record(std::move(out), {a, b}, [](const Var& g, const Var&) {
    return std::vector<Var>{g, sum_rows(g)};
  });
}

Var mul_row(const Var& a, const Var& b) {
  auto& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_matrix(av, "mul_row");
  if (bv.rank() != 1 || bv.numel() != av.cols()) {
    throw Error("mul_row: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  Tensor out = av;
  const int64_t n = av.rows(), m = av.cols();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.data[i * m + j] *= bv.data[j];
  return t.record(std::move(out), {a, b}, [a, b](const Var& g, const Var&) {
    std::vector<Var> r(2);
    if (a.requires_grad()) r[0] = mul_row(g, b);
    if (b.requires_grad()) r[1] = sum_rows(mul(g, a));
    return r;
  });
}

Var sum_rows(const Var& a) {
  const auto& av = a.value();
  require_matrix(av, "sum_rows");
  const int64_t n = av.rows(), m = av.cols();
  Tensor out = Tensor::zeros({m});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.data[j] += av.data[i * m + j];
  return tape_of(a).record(std::move(out), {a}, [n](const Var& g, const Var&) {
    return std::vector<Var>{broadcast_rows(g, n)};
  });
}

Var broadcast_rows(const Var& b, int64_t n) {
  const auto& bv = b.value();
  if (bv.rank() != 1) throw Error("broadcast_rows: expected a vector, got " + shape_str(bv.shape));
  const int64_t m = bv.numel();
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < n; ++i) std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + i * m);
  return tape_of(b).record(std::move(out), {b},
                           [](const Var& g, const Var&) { return std::vector<Var>{sum_rows(g)}; });
}

Var row_sum(const Var& a) {
  const auto& av = a.value();
  require_matrix(av, "row_sum");
  const int64_t n = av.rows(), m = av.cols();
  Tensor out = Tensor::zeros({n});
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < m; ++j) s += av.data[i * m + j];
    out.data[i] = s;
  }
  return tape_of(a).record(std::move(out), {a}, [m](const Var& g, const Var&) {
    return std::vector<Var>{broadcast_cols(g, m)};
  });
}

Var broadcast_cols(const Var& c, int64_t m) {
  const auto& cv = c.value();
  if (cv.rank() != 1) throw Error("broadcast_cols: expected a vector, got " + shape_str(cv.shape));
  const int64_t n = cv.numel();
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.data[i * m + j] = cv.data[i];
  return tape_of(c).record(std::move(out), {c},
                           [](const Var& g, const Var&) { return std::vector<Var>{row_sum(g)}; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  Shape shape = a.shape();
  return tape_of(a).record(Tensor::scalar(s), {a}, [shape](const Var& g, const Var&) {
    return std::vector<Var>{fill(g, shape)};
  });
}

Var fill(const Var& s, const Shape& shape) {
  Tensor out = Tensor::full(shape, s.value().item());
  return tape_of(s).record(std::move(out), {s},
                           [](const Var& g, const Var&) { return std::vector<Var>{sum(g)}; });
}

Var exp(const Var& a) {
  auto v = map_unary(a.value(), [](double x) { return std::exp(x); });
  return tape_of(a).record(std::move(v), {a},
                           [](const Var& g, const Var& out) { return std::vector<Var>{mul(g, out)}; });
}

Var log(const Var& a) {
  auto v = map_unary(a.value(), [](double x) { return std::log(x); });
  return tape_of(a).record(std::move(v), {a}, [a](const Var& g, const Var&) {
    return std::vector<Var>{mul(g, pow(a, -1.0))};
  });
}

Var tanh(const Var& a) {
  auto v = map_unary(a.value(), [](double x) { return std::tanh(x); });
  return tape_of(a).record(std::move(v), {a}, [](const Var& g, const Var& out) {
    return std::vector<Var>{mul(g, add_scalar(neg(square(out)), 1.0))};
  });
}

Var square(const Var& a) {
  auto v = map_unary(a.value(), [](double x) { return x * x; });
  return tape_of(a).record(std::move(v), {a}, [a](const Var& g, const Var&) {
    return std::vector<Var>{scale(mul(g, a), 2.0)};
  });
}

Var pow(const Var& a, double p) {
  auto v = map_unary(a.value(), [p](double x) { return std::pow(x, p); });
  return tape_of(a).record(std::move(v), {a}, [a, p](const Var& g, const Var&) {
    return std::vector<Var>{mul(g, scale(pow(a, p - 1.0), p))};
  });
}

Var clamp(const Var& a, double lo, double hi) {
  const auto& av = a.value();
  Tensor out = av;
  Tensor mask = Tensor::zeros(av.shape);
  for (size_t i = 0; i < av.data.size(); ++i) {
    out.data[i] = std::clamp(av.data[i], lo, hi);
    mask.data[i] = (av.data[i] >= lo && av.data[i] <= hi) ? 1.0 : 0.0;
  }
  auto& t = tape_of(a);
  return t.record(std::move(out), {a}, [mask = std::move(mask)](const Var& g, const Var&) {
    return std::vector<Var>{mul(g, g.tape()->constant(mask))};
  });
}

Var relu(const Var& a) {
  const auto& av = a.value();
  Tensor mask = map_unary(av, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
  Tensor out = map_binary(av, mask, "relu", [](double x, double m) { return x * m; });
  return tape_of(a).record(std::move(out), {a}, [mask = std::move(mask)](const Var& g, const Var&) {
    return std::vector<Var>{mul(g, g.tape()->constant(mask))};
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  auto& t = tape_of(parts[0]);
  const int64_t n = parts[0].rows();
  int64_t total = 0;
  std::vector<int64_t> offsets;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.rows() != n) {
      throw Error("concat_cols: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                  shape_str(p.shape()));
    }
    offsets.push_back(total);
    total += p.cols();
  }
  Tensor out = Tensor::zeros({n, total});
  for (size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    const int64_t m = pv.cols();
    for (int64_t i = 0; i < n; ++i)
      std::copy_n(pv.data.begin() + i * m, m, out.data.begin() + i * total + offsets[k]);
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  std::vector<int64_t> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  return t.record(std::move(out), ps, [offsets, widths](const Var& g, const Var&) {
    std::vector<Var> r;
    for (size_t k = 0; k < offsets.size(); ++k) r.push_back(slice_cols(g, offsets[k], widths[k]));
    return r;
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  auto& t = tape_of(parts[0]);
  const int64_t m = parts[0].cols();
  int64_t total = 0;
  std::vector<int64_t> offsets, heights;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_rows");
    if (p.cols() != m) {
      throw Error("concat_rows: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                  shape_str(p.shape()));
    }
    offsets.push_back(total);
    heights.push_back(p.rows());
    total += p.rows();
  }
  Tensor out = Tensor::zeros({total, m});
  for (size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + offsets[k] * m);
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(std::move(out), ps, [offsets, heights](const Var& g, const Var&) {
    std::vector<Var> r;
    for (size_t k = 0; k < offsets.size(); ++k) r.push_back(slice_rows(g, offsets[k], heights[k]));
    return r;
  });
}

Var slice_cols(const Var& a, int64_t start, int64_t len) {
  const auto& av = a.value();
  require_matrix(av, "slice_cols");
  const int64_t n = av.rows(), m = av.cols();
  if (start < 0 || len < 0 || start + len > m) {
    throw Error("slice_cols: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                ") outside " + shape_str(av.shape));
  }
  Tensor out = Tensor::zeros({n, len});
  for (int64_t i = 0; i < n; ++i)
    std::copy_n(av.data.begin() + i * m + start, len, out.data.begin() + i * len);
  return tape_of(a).record(std::move(out), {a}, [start, m](const Var& g, const Var&) {
    return std::vector<Var>{pad_cols(g, start, m)};
  });
}

Var slice_rows(const Var& a, int64_t start, int64_t len) {
  const auto& av = a.value();
  require_matrix(av, "slice_rows");
  const int64_t n = av.rows(), m = av.cols();
  if (start < 0 || len < 0 || start + len > n) {
    throw Error("slice_rows: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                ") outside " + shape_str(av.shape));
  }
  Tensor out({len, m}, std::vector<double>(av.data.begin() + start * m,
                                           av.data.begin() + (start + len) * m));
  return tape_of(a).record(std::move(out), {a}, [start, n](const Var& g, const Var&) {
    return std::vector<Var>{pad_rows(g, start, n)};
  });
}

Var pad_cols(const Var& a, int64_t start, int64_t total) {
  const auto& av = a.value();
  require_matrix(av, "pad_cols");
  const int64_t n = av.rows(), len = av.cols();
  if (start < 0 || start + len > total) throw Error("pad_cols: range outside target width");
  Tensor out = Tensor::zeros({n, total});
  for (int64_t i = 0; i < n; ++i)
    std::copy_n(av.data.begin() + i * len, len, out.data.begin() + i * total + start);
  return tape_of(a).record(std::move(out), {a}, [start, len](const Var& g, const Var&) {
    return std::vector<Var>{slice_cols(g, start, len)};
  });
}

Var pad_rows(const Var& a, int64_t start, int64_t total) {
  const auto& av = a.value();
  require_matrix(av, "pad_rows");
  const int64_t len = av.rows(), m = av.cols();
  if (start < 0 || start + len > total) throw Error("pad_rows: range outside target height");
  Tensor out = Tensor::zeros({total, m});
  std::copy(av.data.begin(), av.data.end(), out.data.begin() + start * m);
  return tape_of(a).record(std::move(out), {a}, [start, len](const Var& g, const Var&) {
    return std::vector<Var>{slice_rows(g, start, len)};
  });
}

Var detach(const Var& a) { return tape_of(a).constant(a.value()); }

// ---- Composites ----------------------------------------------------------

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().numel())); }

Var mean_rows(const Var& a) { return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows())); }

Var sub_col(const Var& a, const Var& c) { return sub(a, broadcast_cols(c, a.cols())); }

Var gelu(const Var& a) {
  // tanh approximation
  const double k = std::sqrt(2.0 / std::numbers::pi);
  Var inner = scale(add(a, scale(pow(a, 3.0), 0.044715)), k);
  return scale(mul(a, add_scalar(tanh(inner), 1.0)), 0.5);
}

namespace {

// Row maxima as a constant; softmax is invariant to the shift.
Var row_max_const(const Var& a) {
  const auto& av = a.value();
  require_matrix(av, "softmax");
  const int64_t n = av.rows(), m = av.cols();
  Tensor mx = Tensor::zeros({n});
  for (int64_t i = 0; i < n; ++i) {
    auto r = av.row(i);
    mx.data[i] = m > 0 ? *std::max_element(r.begin(), r.end()) : 0.0;
  }
  return a.tape()->constant(std::move(mx));
}

}  // namespace

Var logsumexp_rows(const Var& a) {
  Var mx = row_max_const(a);
  Var shifted = sub_col(a, mx);
  return add(log(row_sum(exp(shifted))), mx);
}

Var log_softmax(const Var& a) {
  Var shifted = sub_col(a, row_max_const(a));
  return sub_col(shifted, log(row_sum(exp(shifted))));
}

Var softmax(const Var& a) {
  Var e = exp(sub_col(a, row_max_const(a)));
  Var inv = pow(row_sum(e), -1.0);
  return mul(e, broadcast_cols(inv, a.cols()));
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const double inv_m = 1.0 / static_cast<double>(x.cols());
  Var mu = scale(row_sum(x), inv_m);
  Var centered = sub_col(x, mu);
  Var var = scale(row_sum(square(centered)), inv_m);
  Var inv_std = pow(add_scalar(var, eps), -0.5);
  Var normed = mul(centered, broadcast_cols(inv_std, x.cols()));
  return add_row(mul_row(normed, gamma), beta);
}

// ---- Gradient checking ---------------------------------------------------

Tensor autodiff_grad(const ScalarFn& f, const Tensor& z) {
  Tape tape;
  Var zv = tape.leaf(z);
  Var y = f(tape, zv);
  std::vector<Var> wrt{zv};
  return tape.gradients(y, wrt)[0];
}

FiniteDiffReport finite_diff_check(const ScalarFn& f, const Tensor& z, double h) {
  if (!(h > 0.0)) throw Error("finite_diff_check: step must be positive");
  Tensor g_ad = autodiff_grad(f, z);
  auto eval = [&](const Tensor& at) {
    Tape tape;
    NoGradGuard guard(tape);
    return f(tape, tape.constant(at)).value().item();
  };
  FiniteDiffReport rep;
  for (int64_t i = 0; i < z.numel(); ++i) {
    Tensor zp = z, zm = z;
    zp.data[i] += h;
    zm.data[i] -= h;
    double fp = eval(zp), fm = eval(zm);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error("finite_diff_check: non-finite function value at coordinate " + std::to_string(i));
    }
    double g_fd = (fp - fm) / (2.0 * h);
    double err = std::abs(g_ad.data[i] - g_fd) / std::max(1.0, std::abs(g_fd));
    if (err > rep.max_rel_error || rep.worst_index < 0) {
      rep.max_rel_error = std::max(rep.max_rel_error, err);
      rep.worst_index = i;
    }
  }
  return rep;
}

}  // namespace latref
