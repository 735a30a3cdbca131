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

#include <span>

#include "latref/checkpoint.hpp"
#include "latref/config.hpp"
#include "latref/params.hpp"
#include "latref/tokens.hpp"

namespace latref {

// Small autoregressive encoder-decoder used for length-normalized
// rescoring of candidates and, optionally, for distillation targets.
class ArModel {
 public:
  ArModel(const ArConfig& cfg, uint64_t seed);
  ArModel(const ArConfig& cfg, ParamStore params);

  const ArConfig& config() const { return cfg_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  // log p(y_1..y_T, EOS | x) as a differentiable scalar.
  Var log_prob(Binding& p, const TokenSeq& y, const TokenSeq& x) const;
  double log_prob(const TokenSeq& y, const TokenSeq& x) const;

  // Beam search with the configured width (greedy for width 1).
  TokenSeq generate(const TokenSeq& x) const;

  Checkpoint to_checkpoint(uint64_t seed) const;
  static ArModel from_checkpoint(const Checkpoint& ckpt);

 private:
  Var encode(Binding& p, const TokenSeq& x) const;
  Var next_logits(Binding& p, const Var& memory, const TokenSeq& prefix) const;

  ArConfig cfg_;
  ParamStore params_;
};

// Length-normalized AR score log p(y|x) / |y|; -inf for an empty y.
double ar_normalized_score(const ArModel& ar, const TokenSeq& y, const TokenSeq& x);

// Index of the best candidate by length-normalized AR score. Ties and the
// all-empty case resolve to the lowest index. Throws on an empty list.
size_t ar_rescore(const ArModel& ar, std::span<const TokenSeq> candidates, const TokenSeq& x);

// Same selection rule over precomputed scores.
size_t select_best(std::span<const double> scores);

}  // namespace latref
