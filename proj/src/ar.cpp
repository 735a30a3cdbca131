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

#include "latref/ar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "latref/nn.hpp"

namespace latref {

namespace {

constexpr double kMaskedLogit = -1e9;

nn::StackDims stack_dims(const ArConfig& c) { return {c.d_model, c.d_filter, c.n_heads, c.n_layers}; }

Tensor special_mask(int64_t vocab) {
  Tensor m = Tensor::zeros({vocab});
  m.data[kPad] = kMaskedLogit;
  m.data[kBos] = kMaskedLogit;
  return m;
}

}  // namespace

ArModel::ArModel(const ArConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg_.beam < 1) throw Error("ar: beam width must be >= 1");
  if (cfg_.d_model % cfg_.n_heads != 0) throw Error("ar: d_model must be divisible by n_heads");
  Rng rng = Rng(seed).split(0xa5);
  Tensor emb = Tensor::zeros({cfg_.vocab, cfg_.d_model});
  for (auto& v : emb.data) v = rng.normal();
  params_.add("emb", std::move(emb));
  nn::add_encoder_stack(params_, "enc", stack_dims(cfg_), rng);
  nn::add_decoder_stack(params_, "dec", stack_dims(cfg_), rng);
  params_.add_linear("out", cfg_.d_model, cfg_.vocab, rng);
}

ArModel::ArModel(const ArConfig& cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) {
  ArModel reference(cfg_, 0);
  for (const auto& [name, t] : reference.params_.tensors()) {
    if (!params_.contains(name)) throw Error("ar: checkpoint lacks parameter " + name);
    require_same_shape(params_.get(name), t, ("ar parameter " + name).c_str());
  }
}

Var ArModel::encode(Binding& p, const TokenSeq& x) const {
  if (x.empty()) throw Error("ar: empty source sequence");
  validate_tokens(x, static_cast<int>(cfg_.vocab), cfg_.t_max, "source");
  const int64_t n = static_cast<int64_t>(x.size());
  Tensor one_hot = Tensor::zeros({n, cfg_.vocab});
  for (int64_t t = 0; t < n; ++t) one_hot(t, x[static_cast<size_t>(t)]) = 1.0;
  Tape& tape = p.tape();
  Var e = add(matmul(tape.constant(std::move(one_hot)), p("emb")),
              tape.constant(nn::positional_encoding(n, cfg_.d_model)));
  return nn::encoder_stack(p, "enc", stack_dims(cfg_), e);
}

// Logits for every position of BOS + prefix (row t predicts token t+1).
Var ArModel::next_logits(Binding& p, const Var& memory, const TokenSeq& prefix) const {
  TokenSeq in{kBos};
  in.insert(in.end(), prefix.begin(), prefix.end());
  const int64_t n = static_cast<int64_t>(in.size());
  Tensor one_hot = Tensor::zeros({n, cfg_.vocab});
  for (int64_t t = 0; t < n; ++t) {
    const int tok = in[static_cast<size_t>(t)];
    if (tok < 0 || tok >= cfg_.vocab) throw Error("ar: token id outside vocabulary");
    one_hot(t, tok) = 1.0;
  }
  Tape& tape = p.tape();
  Var e = add(matmul(tape.constant(std::move(one_hot)), p("emb")),
              tape.constant(nn::positional_encoding(n, cfg_.d_model)));
  Var h = nn::decoder_stack(p, "dec", stack_dims(cfg_), e, memory, /*causal=*/true);
  return add_row(nn::linear(p, "out", h), tape.constant(special_mask(cfg_.vocab)));
}

Var ArModel::log_prob(Binding& p, const TokenSeq& y, const TokenSeq& x) const {
  Var memory = encode(p, x);
  Var lp = log_softmax(next_logits(p, memory, y));
  Tensor pick = Tensor::zeros(lp.shape());
  for (size_t t = 0; t < y.size(); ++t) pick(static_cast<int64_t>(t), y[t]) = 1.0;
  pick(static_cast<int64_t>(y.size()), kEos) = 1.0;
  return sum(mul(lp, p.tape().constant(std::move(pick))));
}

double ArModel::log_prob(const TokenSeq& y, const TokenSeq& x) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  return log_prob(p, y, x).value().item();
}

TokenSeq ArModel::generate(const TokenSeq& x) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  Var memory = encode(p, x);

  struct Hyp {
    TokenSeq tokens;
    double score = 0.0;
    bool done = false;
  };
  std::vector<Hyp> beam{Hyp{}};
  for (int64_t step = 0; step <= cfg_.t_max; ++step) {
    std::vector<Hyp> next;
    bool any_open = false;
    for (const auto& h : beam) {
      if (h.done) {
        next.push_back(h);
        continue;
      }
      any_open = true;
      Var lp = log_softmax(next_logits(p, memory, h.tokens));
      auto row = lp.value().row(lp.rows() - 1);
      // EOS and the content tokens; PAD and BOS are never emitted.
      for (int v = kEos; v < cfg_.vocab; ++v) {
        Hyp c = h;
        c.score += row[static_cast<size_t>(v)];
        if (v != kEos) c.tokens.push_back(v);
        c.done = v == kEos || static_cast<int64_t>(c.tokens.size()) == cfg_.t_max;
        next.push_back(std::move(c));
      }
    }
    if (!any_open) break;
    std::stable_sort(next.begin(), next.end(),
                     [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
    if (static_cast<int64_t>(next.size()) > cfg_.beam) next.resize(static_cast<size_t>(cfg_.beam));
    beam = std::move(next);
  }
  return beam.front().tokens;
}

Checkpoint ArModel::to_checkpoint(uint64_t seed) const {
  nlohmann::json meta;
  meta["kind"] = "ar";
  meta["config"] = nlohmann::json::parse(ar_config_json(cfg_));
  return Checkpoint{kCheckpointVersion, seed, meta.dump(), params_.tensors()};
}

ArModel ArModel::from_checkpoint(const Checkpoint& ckpt) {
  auto meta = nlohmann::json::parse(ckpt.metadata);
  if (meta.value("kind", "") != "ar") throw Error("checkpoint does not hold an AR model");
  ParamStore ps;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;
    ps.add(name, t);
  }
  return ArModel(parse_ar_config(meta.at("config").dump()), std::move(ps));
}

double ar_normalized_score(const ArModel& ar, const TokenSeq& y, const TokenSeq& x) {
  if (y.empty()) return -std::numeric_limits<double>::infinity();
  return ar.log_prob(y, x) / static_cast<double>(y.size());
}

size_t select_best(std::span<const double> scores) {
  if (scores.empty()) throw Error("select_best: no candidates");
  size_t best = 0;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

size_t ar_rescore(const ArModel& ar, std::span<const TokenSeq> candidates, const TokenSeq& x) {
  if (candidates.empty()) throw Error("ar_rescore: no candidates");
  if (candidates.size() == 1) return 0;
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(ar_normalized_score(ar, c, x));
  return select_best(scores);
}

}  // namespace latref
