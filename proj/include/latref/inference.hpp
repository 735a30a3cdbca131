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

#include <cstdint>
#include <vector>

#include "latref/ar.hpp"
#include "latref/config.hpp"
#include "latref/gradnet.hpp"
#include "latref/lvm.hpp"

namespace latref {

struct TraceStep {
  int64_t step = 0;  // 1-based
  LatentState z;
  // Decoded tokens at z. Delta steps decode every step; energy and score
  // steps leave this empty since they never call the decoder.
  TokenSeq tokens;
  int64_t wall_ns = 0;
  int64_t decoder_calls = 0;
  int64_t posterior_calls = 0;
  int64_t gradnet_calls = 0;
  double max_abs_update = 0.0;
};

struct RefinementTrace {
  DecodeProcedure procedure = DecodeProcedure::kDelta;
  LatentState init;
  TokenSeq init_tokens;
  std::vector<TraceStep> steps;
  // Decoder calls outside the steps: the initial decode for delta
  // inference, the final decode for energy and score refinement.
  int64_t init_decoder_calls = 0;
  int64_t final_decoder_calls = 0;
  int64_t final_decode_ns = 0;
  bool converged = false;
  bool early_exit = false;
  bool aborted_non_finite = false;
};

struct RefineResult {
  LatentState z;
  TokenSeq tokens;
  RefinementTrace trace;
};

// E-step: the mean of q(z | y, x), which is the point mass closest in KL.
LatentState delta_estep(const Lvm& lvm, const TokenSeq& y, const Tensor& h_src);

// M-step: tokenwise argmax of the decoder at mu; ties go to the lowest id.
TokenSeq delta_mstep(const Lvm& lvm, const LatentState& mu, const Tensor& h_src);

// y_0 = mstep(z0), then up to `steps` rounds of mu_k = estep(y_{k-1}),
// y_k = mstep(mu_k). Stops after the round in which y repeats.
RefineResult delta_infer(const Lvm& lvm, const LatentState& z0, const Tensor& h_src,
                         int64_t steps);

// Gradient-based refinement in latent space: z <- z - alpha dE/dz for an
// energy field, z <- z + alpha S for a score field. Runs cfg.steps updates,
// or stops early once the largest update is below cfg.converge_eps when
// termination is kConverged. A non-finite update aborts and keeps the last
// finite state. Decodes once at the end.
RefineResult refine(const Lvm& lvm, const LatentGradient& field, const LatentState& z0,
                    const Tensor& h_src, const DecodeConfig& cfg);

struct DecodeModels {
  const Lvm* lvm = nullptr;
  // Required for energy and score procedures with steps > 0.
  const LatentGradient* field = nullptr;
  // Required whenever more than one candidate is decoded.
  const ArModel* ar = nullptr;
};

struct Candidate {
  int64_t length = 0;
  int64_t length_rank = 0;
  int64_t init_index = 0;
  bool prior_mean = false;
  TokenSeq raw;
  double score = 0.0;  // length-normalized AR score (0 when not rescored)
  RefinementTrace trace;
  LatentState z;
};

struct DecodeResult {
  TokenSeq raw;     // winner before postprocessing
  TokenSeq output;  // winner with consecutive duplicates removed
  size_t best = 0;
  std::vector<Candidate> candidates;
  bool empty_output = false;
  int64_t refine_ns = 0;
  int64_t rescore_ns = 0;
};

// Latent inits for one target length, in candidate order: the prior mean
// first when included, then prior samples. Sample i of length rank r uses
// stream Rng(cfg.seed).split(r * 1024 + i), so results never depend on
// evaluation order.
std::vector<LatentState> latent_inits(const DiagGaussianSeq& prior, const DecodeConfig& cfg,
                                      int64_t length_rank);

// Top-l lengths x n_w inits, each refined by cfg.procedure, rescored by
// the AR model and postprocessed.
DecodeResult decode_pipeline(const TokenSeq& x, const DecodeModels& models,
                             const DecodeConfig& cfg);

}  // namespace latref
