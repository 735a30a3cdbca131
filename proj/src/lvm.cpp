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

#include "latref/lvm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "latref/nn.hpp"

namespace latref {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kMaskedLogit = -1e9;

nn::StackDims stack_dims(const LvmConfig& c) {
  return {c.d_model, c.d_filter, c.n_heads, c.n_layers};
}

void check_config(const LvmConfig& c) {
  if (c.vocab <= kFirstContentToken) throw Error("lvm: vocab must exceed the special tokens");
  if (c.d_latent < 1 || c.d_model < 1 || c.n_layers < 0 || c.n_heads < 1 || c.t_max < 1 ||
      c.len_offset_max < 0) {
    throw Error("lvm: invalid hyperparameters");
  }
  if (c.d_model % c.n_heads != 0) throw Error("lvm: d_model must be divisible by n_heads");
  if (!(c.log_std_min < c.log_std_max)) throw Error("lvm: empty log-std clamp range");
}

}  // namespace

double DiagGaussianSeq::log_density(const LatentState& z) const {
  require_same_shape(z, mean, "log_density");
  double s = 0.0;
  for (size_t i = 0; i < z.data.size(); ++i) {
    const double u = (z.data[i] - mean.data[i]) * std::exp(-log_std.data[i]);
    s += -0.5 * u * u - log_std.data[i] - kHalfLog2Pi;
  }
  return s;
}

LatentState DiagGaussianSeq::sample(Rng& rng) const {
  LatentState z = mean;
  for (size_t i = 0; i < z.data.size(); ++i) z.data[i] += std::exp(log_std.data[i]) * rng.normal();
  return z;
}

double kl_divergence(const DiagGaussianSeq& q, const DiagGaussianSeq& p) {
  require_same_shape(q.mean, p.mean, "kl_divergence");
  double s = 0.0;
  for (size_t i = 0; i < q.mean.data.size(); ++i) {
    const double vq = std::exp(2.0 * q.log_std.data[i]);
    const double vp = std::exp(2.0 * p.log_std.data[i]);
    const double d = q.mean.data[i] - p.mean.data[i];
    s += p.log_std.data[i] - q.log_std.data[i] + (vq + d * d) / (2.0 * vp) - 0.5;
  }
  return s;
}

Var kl_divergence(const GaussianVars& q, const GaussianVars& p) {
  return sum(kl_divergence_terms(q, p));
}

Var kl_divergence_terms(const GaussianVars& q, const GaussianVars& p) {
  // log s_p - log s_q + (s_q^2 + (m_q - m_p)^2) / (2 s_p^2) - 1/2
  Var diff = sub(q.mean, p.mean);
  Var var_q = exp(scale(q.log_std, 2.0));
  Var inv_var_p = exp(scale(p.log_std, -2.0));
  Var quad = scale(mul(add(var_q, square(diff)), inv_var_p), 0.5);
  return add_scalar(add(sub(p.log_std, q.log_std), quad), -0.5);
}

int64_t LengthDistribution::argmax_offset() const {
  auto it = std::max_element(probs.begin(), probs.end());
  return static_cast<int64_t>(it - probs.begin()) - max_offset;
}

std::vector<int64_t> LengthDistribution::top_lengths(int64_t src_len, int64_t l,
                                                     int64_t t_max) const {
  if (l < 1) throw Error("top_lengths: need at least one candidate");
  std::vector<size_t> order(probs.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return probs[a] > probs[b]; });
  std::vector<int64_t> out;
  for (size_t idx : order) {
    if (static_cast<int64_t>(out.size()) == l) break;
    const int64_t len =
        std::clamp<int64_t>(src_len + static_cast<int64_t>(idx) - max_offset, 1, t_max);
    if (std::find(out.begin(), out.end(), len) == out.end()) out.push_back(len);
  }
  return out;
}

Lvm::Lvm(const LvmConfig& cfg, uint64_t seed) : cfg_(cfg) {
  check_config(cfg_);
  Rng rng = Rng(seed).split(0x1f3);
  const auto dims = stack_dims(cfg_);
  const int64_t d = cfg_.d_model;
  Tensor emb = Tensor::zeros({cfg_.vocab, d});
  for (auto& v : emb.data) v = rng.normal();
  params_.add("emb", std::move(emb));
  nn::add_encoder_stack(params_, "enc", dims, rng);
  nn::add_decoder_stack(params_, "prior", dims, rng);
  params_.add_linear("prior.head", d, 2 * cfg_.d_latent, rng, 0.1);
  nn::add_decoder_stack(params_, "post", dims, rng);
  params_.add_linear("post.head", d, 2 * cfg_.d_latent, rng, 0.1);
  params_.add_linear("dec.in", cfg_.d_latent, d, rng);
  nn::add_decoder_stack(params_, "dec", dims, rng);
  params_.add_linear("dec.out", d, cfg_.vocab, rng);
  params_.add_linear("len.hidden", d, d, rng);
  params_.add_linear("len.out", d, 2 * cfg_.len_offset_max + 1, rng);
}

Lvm::Lvm(const LvmConfig& cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) {
  check_config(cfg_);
  Lvm reference(cfg_, 0);
  for (const auto& [name, t] : reference.params_.tensors()) {
    if (!params_.contains(name)) throw Error("lvm: checkpoint lacks parameter " + name);
    require_same_shape(params_.get(name), t, ("lvm parameter " + name).c_str());
  }
  if (params_.size() != reference.params_.size()) throw Error("lvm: unexpected extra parameters");
}

Var Lvm::embed(Binding& p, const TokenSeq& tokens) const {
  const int64_t n = static_cast<int64_t>(tokens.size());
  Tensor one_hot = Tensor::zeros({n, cfg_.vocab});
  for (int64_t t = 0; t < n; ++t) {
    const int tok = tokens[static_cast<size_t>(t)];
    if (tok < 0 || tok >= cfg_.vocab) {
      throw Error("token id " + std::to_string(tok) + " outside vocabulary of size " +
                  std::to_string(cfg_.vocab));
    }
    one_hot(t, tok) = 1.0;
  }
  Tape& tape = p.tape();
  Var e = matmul(tape.constant(std::move(one_hot)), p("emb"));
  return add(e, tape.constant(nn::positional_encoding(n, cfg_.d_model)));
}

Var Lvm::encode(Binding& p, const TokenSeq& x) const {
  if (x.empty()) throw Error("encode: empty source sequence");
  validate_tokens(x, static_cast<int>(cfg_.vocab), cfg_.t_max, "source");
  return nn::encoder_stack(p, "enc", stack_dims(cfg_), embed(p, x));
}

GaussianVars Lvm::gaussian_head(Binding& p, const std::string& prefix, const Var& h) const {
  Var out = nn::linear(p, prefix + ".head", h);
  const int64_t d = cfg_.d_latent;
  return {slice_cols(out, 0, d), clamp(slice_cols(out, d, d), cfg_.log_std_min, cfg_.log_std_max)};
}

GaussianVars Lvm::prior(Binding& p, const Var& h_src, int64_t length) const {
  if (length < 1) throw Error("prior: target length must be >= 1");
  Var q = p.tape().constant(nn::positional_encoding(length, cfg_.d_model));
  Var h = nn::decoder_stack(p, "prior", stack_dims(cfg_), q, h_src);
  return gaussian_head(p, "prior", h);
}

GaussianVars Lvm::posterior(Binding& p, const Var& h_src, const TokenSeq& y) const {
  if (y.empty()) throw Error("posterior: empty target sequence");
  if (static_cast<int64_t>(y.size()) > cfg_.t_max) throw Error("posterior: target exceeds t_max");
  Var h = nn::decoder_stack(p, "post", stack_dims(cfg_), embed(p, y), h_src);
  return gaussian_head(p, "post", h);
}

Var Lvm::decode_logits(Binding& p, const Var& z, const Var& h_src) const {
  if (z.cols() != cfg_.d_latent) {
    throw Error("decode_logits: latent shape " + shape_str(z.shape()) + " does not match d_latent " +
                std::to_string(cfg_.d_latent));
  }
  Tape& tape = p.tape();
  Var in = add(nn::linear(p, "dec.in", z),
               tape.constant(nn::positional_encoding(z.rows(), cfg_.d_model)));
  Var h = nn::decoder_stack(p, "dec", stack_dims(cfg_), in, h_src);
  Var logits = nn::linear(p, "dec.out", h);
  Tensor mask = Tensor::zeros({cfg_.vocab});
  for (int s = 0; s < kFirstContentToken; ++s) mask.data[static_cast<size_t>(s)] = kMaskedLogit;
  return add_row(logits, tape.constant(std::move(mask)));
}

Var Lvm::length_logits(Binding& p, const Var& h_src) const {
  Var pooled = reshape(mean_rows(h_src), {1, cfg_.d_model});
  return nn::linear(p, "len.out", gelu(nn::linear(p, "len.hidden", pooled)));
}

Tensor Lvm::encode(const TokenSeq& x) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  return encode(p, x).value();
}

DiagGaussianSeq Lvm::prior(const Tensor& h_src, int64_t length) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  auto g = prior(p, tape.constant(h_src), length);
  return {g.mean.value(), g.log_std.value()};
}

DiagGaussianSeq Lvm::posterior(const Tensor& h_src, const TokenSeq& y) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  auto g = posterior(p, tape.constant(h_src), y);
  return {g.mean.value(), g.log_std.value()};
}

Tensor Lvm::decode_logits(const LatentState& z, const Tensor& h_src) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  return decode_logits(p, tape.constant(z), tape.constant(h_src)).value();
}

Tensor Lvm::decode_log_probs(const LatentState& z, const Tensor& h_src) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  return log_softmax(decode_logits(p, tape.constant(z), tape.constant(h_src))).value();
}

double Lvm::decode_log_prob(const TokenSeq& y, const LatentState& z, const Tensor& h_src) const {
  return sequence_log_prob(decode_log_probs(z, h_src), y);
}

std::vector<Tensor> Lvm::decode_log_probs_batch(std::span<const LatentState> zs,
                                                const Tensor& h_src) const {
  std::vector<Tensor> out;
  if (zs.empty()) return out;
  const int64_t t = zs[0].rows(), d = cfg_.d_latent, dm = cfg_.d_model, v = cfg_.vocab;
  const int64_t n = static_cast<int64_t>(zs.size());
  const Tensor pe = nn::positional_encoding(t, dm);
  const Tensor& w_in = params_.get("dec.in.w");
  const Tensor& b_in = params_.get("dec.in.b");
  Tensor x = Tensor::zeros({n * t, dm});
  for (int64_t i = 0; i < n; ++i) {
    const auto& z = zs[static_cast<size_t>(i)];
    if (z.rows() != t || z.cols() != d) {
      throw Error("decode_log_probs_batch: latent shape " + shape_str(z.shape) +
                  " differs from " + shape_str({t, d}));
    }
    for (int64_t r = 0; r < t; ++r) {
      for (int64_t c = 0; c < dm; ++c) {
        double acc = b_in.data[static_cast<size_t>(c)];
        for (int64_t k = 0; k < d; ++k) acc += z(r, k) * w_in(k, c);
        x(i * t + r, c) = acc + pe(r, c);
      }
    }
  }
  const Tensor h = nn::decoder_stack_batched(params_, "dec", stack_dims(cfg_), x, t, h_src);
  const Tensor& w_out = params_.get("dec.out.w");
  const Tensor& b_out = params_.get("dec.out.b");
  out.reserve(zs.size());
  std::vector<double> logits(static_cast<size_t>(v));
  for (int64_t i = 0; i < n; ++i) {
    Tensor lp = Tensor::zeros({t, v});
    for (int64_t r = 0; r < t; ++r) {
      const auto hr = h.row(i * t + r);
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t c = 0; c < v; ++c) {
        double acc = b_out.data[static_cast<size_t>(c)];
        for (int64_t k = 0; k < dm; ++k) acc += hr[static_cast<size_t>(k)] * w_out(k, c);
        if (c < kFirstContentToken) acc += kMaskedLogit;
        logits[static_cast<size_t>(c)] = acc;
        mx = std::max(mx, acc);
      }
      double z = 0.0;
      for (double l : logits) z += std::exp(l - mx);
      const double lse = mx + std::log(z);
      for (int64_t c = 0; c < v; ++c) lp(r, c) = logits[static_cast<size_t>(c)] - lse;
    }
    out.push_back(std::move(lp));
  }
  return out;
}

LengthDistribution Lvm::predict_length(const Tensor& h_src) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  Var probs = softmax(length_logits(p, tape.constant(h_src)));
  return {cfg_.len_offset_max, probs.value().data};
}

Checkpoint Lvm::to_checkpoint(uint64_t seed) const {
  nlohmann::json meta;
  meta["kind"] = "lvm";
  meta["config"] = nlohmann::json::parse(lvm_config_json(cfg_));
  return Checkpoint{kCheckpointVersion, seed, meta.dump(), params_.tensors()};
}

Lvm Lvm::from_checkpoint(const Checkpoint& ckpt) {
  auto meta = nlohmann::json::parse(ckpt.metadata);
  if (meta.value("kind", "") != "lvm") throw Error("checkpoint does not hold an LVM");
  ParamStore ps;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;
    ps.add(name, t);
  }
  return Lvm(parse_lvm_config(meta.at("config").dump()), std::move(ps));
}

TokenSeq argmax_tokens(const Tensor& scores) {
  TokenSeq out;
  out.reserve(static_cast<size_t>(scores.rows()));
  for (int64_t t = 0; t < scores.rows(); ++t) {
    auto r = scores.row(t);
    out.push_back(static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()));
  }
  return out;
}

double sequence_log_prob(const Tensor& log_probs, const TokenSeq& y) {
  if (static_cast<int64_t>(y.size()) != log_probs.rows()) {
    throw Error("sequence_log_prob: sequence length " + std::to_string(y.size()) +
                " does not match " + std::to_string(log_probs.rows()) + " positions");
  }
  double s = 0.0;
  for (size_t t = 0; t < y.size(); ++t) s += log_probs(static_cast<int64_t>(t), y[t]);
  return s;
}

}  // namespace latref
