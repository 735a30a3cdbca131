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

#include "latref/nn.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace latref::nn {

Tensor positional_encoding(int64_t length, int64_t d_model) {
  Tensor pe = Tensor::zeros({length, d_model});
  for (int64_t t = 0; t < length; ++t) {
    for (int64_t i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      pe(t, i) = std::sin(static_cast<double>(t) * freq);
      if (i + 1 < d_model) pe(t, i + 1) = std::cos(static_cast<double>(t) * freq);
    }
  }
  return pe;
}

Var linear(Binding& p, const std::string& prefix, const Var& x) {
  return add_row(matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

Var layer_norm(Binding& p, const std::string& prefix, const Var& x) {
  return latref::layer_norm(x, p(prefix + ".g"), p(prefix + ".b"));
}

Var attention(Binding& p, const std::string& prefix, const Var& query, const Var& memory,
              int64_t n_heads, bool causal) {
  const int64_t d_model = query.cols();
  if (d_model % n_heads != 0) throw Error("attention: d_model not divisible by n_heads");
  const int64_t dh = d_model / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = linear(p, prefix + ".q", query);
  Var k = linear(p, prefix + ".k", memory);
  Var v = linear(p, prefix + ".v", memory);

  Var mask;
  if (causal) {
    const int64_t n = query.rows(), m = memory.rows();
    Tensor mk = Tensor::zeros({n, m});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < m; ++j) mk(i, j) = -1e9;
    mask = p.tape().constant(std::move(mk));
  }

  std::vector<Var> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int64_t h = 0; h < n_heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (causal) scores = add(scores, mask);
    heads.push_back(matmul(softmax(scores), vh));
  }
  return linear(p, prefix + ".o", n_heads == 1 ? heads[0] : concat_cols(heads));
}

namespace {

void add_attention(ParamStore& s, const std::string& prefix, int64_t d, Rng& rng) {
  for (const char* n : {".q", ".k", ".v", ".o"}) s.add_linear(prefix + n, d, d, rng);
}

void add_ffn(ParamStore& s, const std::string& prefix, const StackDims& dims, Rng& rng) {
  s.add_linear(prefix + ".ff1", dims.d_model, dims.d_filter, rng);
  s.add_linear(prefix + ".ff2", dims.d_filter, dims.d_model, rng);
}

Var ffn(Binding& p, const std::string& prefix, const Var& x) {
  return linear(p, prefix + ".ff2", gelu(linear(p, prefix + ".ff1", x)));
}

std::string layer_name(const std::string& prefix, int64_t i) {
  return prefix + ".layer" + std::to_string(i);
}

}  // namespace

void add_encoder_stack(ParamStore& store, const std::string& prefix, const StackDims& dims,
                       Rng& rng) {
  for (int64_t i = 0; i < dims.n_layers; ++i) {
    const auto l = layer_name(prefix, i);
    store.add_layer_norm(l + ".ln1", dims.d_model);
    add_attention(store, l + ".self", dims.d_model, rng);
    store.add_layer_norm(l + ".ln2", dims.d_model);
    add_ffn(store, l, dims, rng);
  }
  store.add_layer_norm(prefix + ".ln_f", dims.d_model);
}

void add_decoder_stack(ParamStore& store, const std::string& prefix, const StackDims& dims,
                       Rng& rng) {
  for (int64_t i = 0; i < dims.n_layers; ++i) {
    const auto l = layer_name(prefix, i);
    store.add_layer_norm(l + ".ln1", dims.d_model);
    add_attention(store, l + ".self", dims.d_model, rng);
    store.add_layer_norm(l + ".ln2", dims.d_model);
    add_attention(store, l + ".cross", dims.d_model, rng);
    store.add_layer_norm(l + ".ln3", dims.d_model);
    add_ffn(store, l, dims, rng);
  }
  store.add_layer_norm(prefix + ".ln_f", dims.d_model);
}

Var encoder_stack(Binding& p, const std::string& prefix, const StackDims& dims, Var x) {
  for (int64_t i = 0; i < dims.n_layers; ++i) {
    const auto l = layer_name(prefix, i);
    Var h = layer_norm(p, l + ".ln1", x);
    x = add(x, attention(p, l + ".self", h, h, dims.n_heads));
    x = add(x, ffn(p, l, layer_norm(p, l + ".ln2", x)));
  }
  return layer_norm(p, prefix + ".ln_f", x);
}

Var decoder_stack(Binding& p, const std::string& prefix, const StackDims& dims, Var x,
                  const Var& memory, bool causal) {
  for (int64_t i = 0; i < dims.n_layers; ++i) {
    const auto l = layer_name(prefix, i);
    Var h = layer_norm(p, l + ".ln1", x);
    x = add(x, attention(p, l + ".self", h, h, dims.n_heads, causal));
    x = add(x, attention(p, l + ".cross", layer_norm(p, l + ".ln2", x), memory, dims.n_heads));
    x = add(x, ffn(p, l, layer_norm(p, l + ".ln3", x)));
  }
  return layer_norm(p, prefix + ".ln_f", x);
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data.data(), t.rows(), t.cols()); }

Eigen::Map<const Eigen::RowVectorXd> as_row(const Tensor& t) {
  return Eigen::Map<const Eigen::RowVectorXd>(t.data.data(), static_cast<int64_t>(t.data.size()));
}

RowMat frozen_linear(const ParamStore& ps, const std::string& prefix, const RowMat& x) {
  RowMat y = x * as_matrix(ps.get(prefix + ".w"));
  y.rowwise() += as_row(ps.get(prefix + ".b"));
  return y;
}

RowMat frozen_layer_norm(const ParamStore& ps, const std::string& prefix, const RowMat& x) {
  const auto g = as_row(ps.get(prefix + ".g"));
  const auto b = as_row(ps.get(prefix + ".b"));
  RowMat y(x.rows(), x.cols());
  const double inv_m = 1.0 / static_cast<double>(x.cols());
  for (int64_t i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).sum() * inv_m;
    const Eigen::RowVectorXd c = x.row(i).array() - mu;
    const double inv_std = std::pow(c.squaredNorm() * inv_m + 1e-5, -0.5);
    y.row(i) = (c * inv_std).cwiseProduct(g) + b;
  }
  return y;
}

void softmax_rows_inplace(RowMat& s) {
  for (int64_t i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

// Queries are split into blocks of `segment` rows; each block attends over
// the matching block of `kv_rows` rows of k/v, or over all of k/v when
// `shared` is set.
RowMat frozen_attention(const ParamStore& ps, const std::string& prefix, const RowMat& query,
                        const RowMat& memory, int64_t n_heads, int64_t segment, bool shared) {
  const int64_t d = query.cols();
  const int64_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const RowMat q = frozen_linear(ps, prefix + ".q", query);
  const RowMat k = frozen_linear(ps, prefix + ".k", memory);
  const RowMat v = frozen_linear(ps, prefix + ".v", memory);
  RowMat heads(query.rows(), d);
  const int64_t n_blocks = shared ? 1 : query.rows() / segment;
  const int64_t q_rows = shared ? query.rows() : segment;
  for (int64_t blk = 0; blk < n_blocks; ++blk) {
    const int64_t r0 = blk * q_rows;
    const int64_t m0 = shared ? 0 : r0;
    const int64_t m_rows = shared ? memory.rows() : segment;
    for (int64_t h = 0; h < n_heads; ++h) {
      RowMat s = q.block(r0, h * dh, q_rows, dh) * k.block(m0, h * dh, m_rows, dh).transpose();
      s *= inv_sqrt;
      softmax_rows_inplace(s);
      heads.block(r0, h * dh, q_rows, dh) = s * v.block(m0, h * dh, m_rows, dh);
    }
  }
  return frozen_linear(ps, prefix + ".o", heads);
}

}  // namespace

Tensor decoder_stack_batched(const ParamStore& params, const std::string& prefix,
                             const StackDims& dims, const Tensor& x, int64_t segment,
                             const Tensor& memory) {
  if (segment < 1 || x.rows() % segment != 0) {
    throw Error("decoder_stack_batched: " + std::to_string(x.rows()) +
                " rows do not split into segments of " + std::to_string(segment));
  }
  if (x.cols() != dims.d_model || memory.cols() != dims.d_model) {
    require_same_shape(x, Tensor::zeros({x.rows(), dims.d_model}), "decoder_stack_batched input");
    require_same_shape(memory, Tensor::zeros({memory.rows(), dims.d_model}),
                       "decoder_stack_batched memory");
  }
  RowMat h = as_matrix(x);
  const RowMat mem = as_matrix(memory);
  const double k = std::sqrt(2.0 / std::numbers::pi);
  for (int64_t i = 0; i < dims.n_layers; ++i) {
    const auto l = layer_name(prefix, i);
    RowMat a = frozen_layer_norm(params, l + ".ln1", h);
    h += frozen_attention(params, l + ".self", a, a, dims.n_heads, segment, false);
    a = frozen_layer_norm(params, l + ".ln2", h);
    h += frozen_attention(params, l + ".cross", a, mem, dims.n_heads, segment, true);
    a = frozen_layer_norm(params, l + ".ln3", h);
    RowMat f = frozen_linear(params, l + ".ff1", a);
    f = (0.5 * f.array() * (1.0 + (k * (f.array() + 0.044715 * f.array().cube())).tanh())).matrix();
    h += frozen_linear(params, l + ".ff2", f);
  }
  h = frozen_layer_norm(params, prefix + ".ln_f", h);
  Tensor out = Tensor::zeros({h.rows(), h.cols()});
  Eigen::Map<RowMat>(out.data.data(), h.rows(), h.cols()) = h;
  return out;
}

}  // namespace latref::nn
