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

#include "latref/inference.hpp"

#include <chrono>
#include <cmath>

namespace latref {

namespace {

using Clock = std::chrono::steady_clock;

int64_t elapsed_ns(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

}  // namespace

LatentState delta_estep(const Lvm& lvm, const TokenSeq& y, const Tensor& h_src) {
  return lvm.posterior(h_src, y).mean;
}

TokenSeq delta_mstep(const Lvm& lvm, const LatentState& mu, const Tensor& h_src) {
  return argmax_tokens(lvm.decode_logits(mu, h_src));
}

RefineResult delta_infer(const Lvm& lvm, const LatentState& z0, const Tensor& h_src,
                         int64_t steps) {
  if (steps < 0) throw Error("delta_infer: steps must be >= 0");
  RefineResult r;
  r.trace.procedure = DecodeProcedure::kDelta;
  r.trace.init = z0;
  r.trace.init_tokens = delta_mstep(lvm, z0, h_src);
  r.trace.init_decoder_calls = 1;
  r.z = z0;
  r.tokens = r.trace.init_tokens;
  for (int64_t k = 1; k <= steps; ++k) {
    const auto t0 = Clock::now();
    TraceStep s;
    s.step = k;
    s.z = delta_estep(lvm, r.tokens, h_src);
    s.tokens = delta_mstep(lvm, s.z, h_src);
    s.wall_ns = elapsed_ns(t0);
    s.decoder_calls = 1;
    s.posterior_calls = 1;
    s.max_abs_update = max_abs_diff(s.z, r.z);
    const bool repeated = s.tokens == r.tokens;
    r.z = s.z;
    r.tokens = s.tokens;
    r.trace.steps.push_back(std::move(s));
    if (repeated) {
      r.trace.early_exit = k < steps;
      break;
    }
  }
  return r;
}

namespace {

// `field` may be null only when cfg.steps == 0.
RefineResult refine_with(const Lvm& lvm, const LatentGradient* field, bool energy,
                         const LatentState& z0, const Tensor& h_src, const DecodeConfig& cfg) {
  if (cfg.steps < 0) throw Error("refine: steps must be >= 0");
  if (!(cfg.alpha > 0.0)) throw Error("refine: alpha must be > 0");
  if (field == nullptr && cfg.steps > 0) throw Error("refine: a gradient network is required");
  RefineResult r;
  r.trace.procedure = energy ? DecodeProcedure::kEnergy : DecodeProcedure::kScore;
  r.trace.init = z0;
  r.z = z0;
  for (int64_t k = 1; k <= cfg.steps; ++k) {
    const auto t0 = Clock::now();
    LatentState next = r.z;
    if (energy) {
      const Tensor g = field->energy_grad(r.z, h_src);
      for (size_t i = 0; i < next.data.size(); ++i) next.data[i] -= cfg.alpha * g.data[i];
    } else {
      const Tensor s = field->score(r.z, h_src);
      for (size_t i = 0; i < next.data.size(); ++i) next.data[i] += cfg.alpha * s.data[i];
    }
    if (!next.all_finite()) {
      r.trace.aborted_non_finite = true;
      break;
    }
    TraceStep s;
    s.step = k;
    s.max_abs_update = max_abs_diff(next, r.z);
    s.z = next;
    s.gradnet_calls = 1;
    s.wall_ns = elapsed_ns(t0);
    r.z = std::move(next);
    const bool small = s.max_abs_update < cfg.converge_eps;
    r.trace.steps.push_back(std::move(s));
    if (cfg.termination == Termination::kConverged && small) {
      r.trace.converged = true;
      break;
    }
  }
  const auto t0 = Clock::now();
  r.tokens = delta_mstep(lvm, r.z, h_src);
  r.trace.final_decode_ns = elapsed_ns(t0);
  r.trace.final_decoder_calls = 1;
  return r;
}

}  // namespace

RefineResult refine(const Lvm& lvm, const LatentGradient& field, const LatentState& z0,
                    const Tensor& h_src, const DecodeConfig& cfg) {
  return refine_with(lvm, &field, field.kind() == GradNetKind::kEnergy, z0, h_src, cfg);
}

std::vector<LatentState> latent_inits(const DiagGaussianSeq& prior, const DecodeConfig& cfg,
                                      int64_t length_rank) {
  if (cfg.latent_samples < 1) throw Error("decode: latent_samples must be >= 1");
  std::vector<LatentState> out;
  const bool with_mean = cfg.init == LatentInit::kPriorMean || cfg.include_prior_mean;
  if (with_mean) out.push_back(prior.mean);
  const Rng base(cfg.seed);
  for (int64_t i = 0; static_cast<int64_t>(out.size()) < cfg.latent_samples; ++i) {
    Rng rng = base.split(static_cast<uint64_t>(length_rank) * 1024 + static_cast<uint64_t>(i));
    out.push_back(prior.sample(rng));
  }
  return out;
}

DecodeResult decode_pipeline(const TokenSeq& x, const DecodeModels& models,
                             const DecodeConfig& cfg) {
  if (models.lvm == nullptr) throw Error("decode: an LVM is required");
  if (cfg.length_candidates < 1) throw Error("decode: length_candidates must be >= 1");
  const Lvm& lvm = *models.lvm;
  const bool needs_field = cfg.procedure != DecodeProcedure::kDelta && cfg.steps > 0;
  if (needs_field) {
    if (models.field == nullptr) {
      throw Error("decode: procedure " + to_string(cfg.procedure) + " needs a gradient network");
    }
    const bool want_energy = cfg.procedure == DecodeProcedure::kEnergy;
    if ((models.field->kind() == GradNetKind::kEnergy) != want_energy) {
      throw Error("decode: gradient network kind " + to_string(models.field->kind()) +
                  " does not match procedure " + to_string(cfg.procedure));
    }
  }

  const Tensor h_src = lvm.encode(x);
  const auto lengths = lvm.predict_length(h_src).top_lengths(
      static_cast<int64_t>(x.size()), cfg.length_candidates, lvm.config().t_max);

  DecodeResult out;
  const auto t_refine = Clock::now();
  for (size_t r = 0; r < lengths.size(); ++r) {
    const DiagGaussianSeq prior = lvm.prior(h_src, lengths[r]);
    const auto inits = latent_inits(prior, cfg, static_cast<int64_t>(r));
    const bool with_mean = cfg.init == LatentInit::kPriorMean || cfg.include_prior_mean;
    for (size_t i = 0; i < inits.size(); ++i) {
      RefineResult res;
      if (cfg.procedure == DecodeProcedure::kDelta) {
        res = delta_infer(lvm, inits[i], h_src, cfg.steps);
      } else {
        res = refine_with(lvm, models.field, cfg.procedure == DecodeProcedure::kEnergy, inits[i],
                          h_src, cfg);
      }
      Candidate c;
      c.length = lengths[r];
      c.length_rank = static_cast<int64_t>(r);
      c.init_index = static_cast<int64_t>(i);
      c.prior_mean = with_mean && i == 0;
      c.raw = std::move(res.tokens);
      c.trace = std::move(res.trace);
      c.z = std::move(res.z);
      out.candidates.push_back(std::move(c));
    }
  }
  out.refine_ns = elapsed_ns(t_refine);

  const auto t_rescore = Clock::now();
  if (out.candidates.size() > 1) {
    if (models.ar == nullptr) throw Error("decode: more than one candidate needs an AR rescorer");
    std::vector<double> scores;
    for (auto& c : out.candidates) {
      c.score = ar_normalized_score(*models.ar, c.raw, x);
      scores.push_back(c.score);
    }
    out.best = select_best(scores);
  }
  out.rescore_ns = elapsed_ns(t_rescore);

  out.raw = out.candidates[out.best].raw;
  out.output = remove_repetitions(out.raw);
  out.empty_output = out.output.empty();
  return out;
}

}  // namespace latref
