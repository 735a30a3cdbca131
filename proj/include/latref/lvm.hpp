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
#include <vector>

#include "latref/checkpoint.hpp"
#include "latref/config.hpp"
#include "latref/params.hpp"
#include "latref/tokens.hpp"

namespace latref {

// A T x D latent matrix (z, mu, or a refinement target).
using LatentState = Tensor;

// Per-position diagonal Gaussian over a T x D latent.
struct DiagGaussianSeq {
  Tensor mean;
  Tensor log_std;

  int64_t length() const { return mean.rows(); }
  int64_t dim() const { return mean.cols(); }
  double log_density(const LatentState& z) const;
  LatentState sample(Rng& rng) const;
};

// KL(q || p), summed over positions and dimensions.
double kl_divergence(const DiagGaussianSeq& q, const DiagGaussianSeq& p);

struct GaussianVars {
  Var mean;
  Var log_std;
};

Var kl_divergence(const GaussianVars& q, const GaussianVars& p);
// Elementwise KL terms, T x D.
Var kl_divergence_terms(const GaussianVars& q, const GaussianVars& p);

// Probabilities over length offsets -R..R (index i is offset i - R).
struct LengthDistribution {
  int64_t max_offset = 0;
  std::vector<double> probs;

  int64_t argmax_offset() const;
  // The l most probable target lengths for a source of length src_len,
  // clipped to [1, t_max], most probable first; ties go to the smaller
  // offset. Duplicates introduced by clipping are dropped.
  std::vector<int64_t> top_lengths(int64_t src_len, int64_t l, int64_t t_max) const;
};

// Non-autoregressive latent-variable model: source encoder, prior p(z|x),
// approximate posterior q(z|y,x), factorized decoder p(y|z,x) and length
// predictor. Special tokens are masked out of the decoder's output.
class Lvm {
 public:
  Lvm(const LvmConfig& cfg, uint64_t seed);
  Lvm(const LvmConfig& cfg, ParamStore params);

  const LvmConfig& config() const { return cfg_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  // Differentiable pieces.
  Var encode(Binding& p, const TokenSeq& x) const;
  GaussianVars prior(Binding& p, const Var& h_src, int64_t length) const;
  GaussianVars posterior(Binding& p, const Var& h_src, const TokenSeq& y) const;
  Var decode_logits(Binding& p, const Var& z, const Var& h_src) const;
  Var length_logits(Binding& p, const Var& h_src) const;

  // Frozen evaluation.
  Tensor encode(const TokenSeq& x) const;
  DiagGaussianSeq prior(const Tensor& h_src, int64_t length) const;
  DiagGaussianSeq posterior(const Tensor& h_src, const TokenSeq& y) const;
  Tensor decode_logits(const LatentState& z, const Tensor& h_src) const;
  // Per-position log-probabilities, T x V.
  Tensor decode_log_probs(const LatentState& z, const Tensor& h_src) const;
  // log p(y|z,x) = sum_t log_softmax(logits_t)[y_t].
  double decode_log_prob(const TokenSeq& y, const LatentState& z, const Tensor& h_src) const;
  // Tape-free decode of many equal-length latents at once; one T x V
  // log-probability table per latent. Matches decode_log_probs to rounding.
  std::vector<Tensor> decode_log_probs_batch(std::span<const LatentState> zs,
                                             const Tensor& h_src) const;
  LengthDistribution predict_length(const Tensor& h_src) const;

  Checkpoint to_checkpoint(uint64_t seed) const;
  static Lvm from_checkpoint(const Checkpoint& ckpt);

 private:
  GaussianVars gaussian_head(Binding& p, const std::string& prefix, const Var& h) const;
  Var embed(Binding& p, const TokenSeq& tokens) const;

  LvmConfig cfg_;
  ParamStore params_;
};

// Tokenwise argmax of a T x V score matrix; ties go to the lowest id.
TokenSeq argmax_tokens(const Tensor& scores);

// Sum of log_probs[t, y_t].
double sequence_log_prob(const Tensor& log_probs, const TokenSeq& y);

}  // namespace latref
