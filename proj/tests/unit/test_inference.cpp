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

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "latref/ar.hpp"
#include "latref/gradnet.hpp"
#include "latref/inference.hpp"

namespace latref {
namespace {

LvmConfig small_lvm() {
  LvmConfig c;
  c.vocab = 12;
  c.d_latent = 2;
  c.d_model = 16;
  c.d_filter = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.t_max = 8;
  c.len_offset_max = 2;
  return c;
}

// S(z) = c everywhere.
class ConstantScore : public LatentGradient {
 public:
  explicit ConstantScore(double c) : c_(c) {}
  GradNetKind kind() const override { return GradNetKind::kScore; }
  Tensor energy_grad(const LatentState&, const Tensor&) const override { throw Error("score only"); }
  Tensor score(const LatentState& z, const Tensor&) const override { return Tensor::full(z.shape, c_); }

 private:
  double c_;
};

// E(z) = 0.5 * |z - a|^2 with a fixed a.
class QuadraticEnergy : public LatentGradient {
 public:
  explicit QuadraticEnergy(double a) : a_(a) {}
  GradNetKind kind() const override { return GradNetKind::kEnergy; }
  Tensor energy_grad(const LatentState& z, const Tensor&) const override {
    Tensor g = z;
    for (auto& v : g.data) v -= a_;
    return g;
  }
  Tensor score(const LatentState&, const Tensor&) const override { throw Error("energy only"); }

 private:
  double a_;
};

class NanScore : public LatentGradient {
 public:
  GradNetKind kind() const override { return GradNetKind::kScore; }
  Tensor energy_grad(const LatentState&, const Tensor&) const override { throw Error("score only"); }
  Tensor score(const LatentState& z, const Tensor&) const override { return Tensor::full(z.shape, NAN); }
};

TEST(DeltaSteps, EStepIsPosteriorMeanAndMStepIsArgmax) {
  Lvm lvm(small_lvm(), 1);
  const Tensor h = lvm.encode({3, 4, 5});
  EXPECT_EQ(delta_estep(lvm, {6, 7, 8}, h).data, lvm.posterior(h, {6, 7, 8}).mean.data);
  Rng rng(2);
  const LatentState z = rng.normal_like({3, 2});
  EXPECT_EQ(delta_mstep(lvm, z, h), argmax_tokens(lvm.decode_logits(z, h)));
}

TEST(DeltaInfer, AlternatesAndCountsCalls) {
  Lvm lvm(small_lvm(), 3);
  const Tensor h = lvm.encode({3, 4, 5});
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const LatentState z0 = rng.normal_like({4, 2});
    const RefineResult r = delta_infer(lvm, z0, h, 5);
    ASSERT_GE(r.trace.steps.size(), 1u);
    EXPECT_EQ(r.trace.init_decoder_calls, 1);
    TokenSeq prev = r.trace.init_tokens;
    for (const TraceStep& s : r.trace.steps) {
      EXPECT_EQ(s.decoder_calls, 1);
      EXPECT_EQ(s.posterior_calls, 1);
      EXPECT_EQ(s.gradnet_calls, 0);
      EXPECT_EQ(s.z.data, delta_estep(lvm, prev, h).data);
      EXPECT_EQ(s.tokens, delta_mstep(lvm, s.z, h));
      prev = s.tokens;
    }
    EXPECT_EQ(r.tokens, prev);
  }
}

TEST(DeltaInfer, EarlyExitReachesFixedPoint) {
  Lvm lvm(small_lvm(), 5);
  const Tensor h = lvm.encode({3, 4});
  Rng rng(6);
  int exits = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const LatentState z0 = rng.normal_like({3, 2});
    const RefineResult short_run = delta_infer(lvm, z0, h, 8);
    if (!short_run.trace.early_exit) continue;
    ++exits;
    const size_t n = short_run.trace.steps.size();
    EXPECT_LT(n, 8u);
    if (n >= 2) EXPECT_EQ(short_run.trace.steps[n - 1].tokens, short_run.trace.steps[n - 2].tokens);
    // Continuing from the fixed point changes nothing.
    const RefineResult again = delta_infer(lvm, short_run.z, h, 3);
    EXPECT_EQ(again.tokens, short_run.tokens);
    EXPECT_EQ(again.z.data, short_run.z.data);
  }
  EXPECT_GT(exits, 0);
}

TEST(DeltaInfer, ZeroStepsDecodesInit) {
  Lvm lvm(small_lvm(), 7);
  const Tensor h = lvm.encode({3});
  const LatentState z0 = Tensor::zeros({2, 2});
  const RefineResult r = delta_infer(lvm, z0, h, 0);
  EXPECT_TRUE(r.trace.steps.empty());
  EXPECT_EQ(r.z.data, z0.data);
  EXPECT_EQ(r.tokens, delta_mstep(lvm, z0, h));
  EXPECT_THROW(delta_infer(lvm, z0, h, -1), Error);
}

TEST(Refine, ConstantScoreMovesLinearly) {
  Lvm lvm(small_lvm(), 8);
  const Tensor h = lvm.encode({3, 4});
  const ConstantScore field(0.25);
  DecodeConfig cfg;
  cfg.steps = 4;
  cfg.alpha = 0.5;
  const LatentState z0 = Tensor::zeros({3, 2});
  const RefineResult r = refine(lvm, field, z0, h, cfg);
  ASSERT_EQ(r.trace.steps.size(), 4u);
  for (size_t k = 0; k < 4; ++k) {
    for (double v : r.trace.steps[k].z.data) EXPECT_NEAR(v, 0.125 * static_cast<double>(k + 1), 1e-15);
    EXPECT_EQ(r.trace.steps[k].decoder_calls, 0);
    EXPECT_EQ(r.trace.steps[k].gradnet_calls, 1);
    EXPECT_TRUE(r.trace.steps[k].tokens.empty());
  }
  EXPECT_EQ(r.trace.final_decoder_calls, 1);
  EXPECT_EQ(r.tokens, delta_mstep(lvm, r.z, h));
}

TEST(Refine, QuadraticEnergyContractsGeometrically) {
  Lvm lvm(small_lvm(), 9);
  const Tensor h = lvm.encode({3, 4});
  const QuadraticEnergy field(1.0);
  DecodeConfig cfg;
  cfg.procedure = DecodeProcedure::kEnergy;
  cfg.steps = 5;
  cfg.alpha = 0.3;
  Rng rng(10);
  const LatentState z0 = rng.normal_like({2, 2});
  const RefineResult r = refine(lvm, field, z0, h, cfg);
  for (size_t i = 0; i < z0.data.size(); ++i) {
    EXPECT_NEAR(r.z.data[i] - 1.0, std::pow(0.7, 5) * (z0.data[i] - 1.0), 1e-12);
  }
}

TEST(Refine, ConvergenceTerminationStopsEarly) {
  Lvm lvm(small_lvm(), 11);
  const Tensor h = lvm.encode({3});
  const QuadraticEnergy field(0.0);
  DecodeConfig cfg;
  cfg.steps = 100;
  cfg.alpha = 0.5;
  cfg.termination = Termination::kConverged;
  cfg.converge_eps = 1e-3;
  const RefineResult r = refine(lvm, field, Tensor::full({2, 2}, 1.0), h, cfg);
  EXPECT_TRUE(r.trace.converged);
  EXPECT_LT(r.trace.steps.size(), 100u);
  EXPECT_LT(r.trace.steps.back().max_abs_update, 1e-3);
}

TEST(Refine, NonFiniteUpdateAbortsAndKeepsLastFiniteState) {
  Lvm lvm(small_lvm(), 12);
  const Tensor h = lvm.encode({3});
  const NanScore field;
  DecodeConfig cfg;
  cfg.steps = 3;
  const LatentState z0 = Tensor::full({2, 2}, 0.5);
  const RefineResult r = refine(lvm, field, z0, h, cfg);
  EXPECT_TRUE(r.trace.aborted_non_finite);
  EXPECT_EQ(r.z.data, z0.data);
  EXPECT_EQ(r.tokens.size(), 2u);
}

TEST(Refine, RejectsBadArguments) {
  Lvm lvm(small_lvm(), 13);
  const Tensor h = lvm.encode({3});
  const ConstantScore field(1.0);
  DecodeConfig cfg;
  cfg.alpha = 0.0;
  EXPECT_THROW(refine(lvm, field, Tensor::zeros({1, 2}), h, cfg), Error);
  cfg.alpha = 1.0;
  cfg.steps = -1;
  EXPECT_THROW(refine(lvm, field, Tensor::zeros({1, 2}), h, cfg), Error);
}

GradNetConfig small_energy() {
  GradNetConfig c;
  c.kind = GradNetKind::kEnergy;
  c.d_latent = 2;
  c.d_model = 16;
  c.d_filter = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_source = 16;
  return c;
}

TEST(Refine, ScoreFromEnergyTrajectoryIsBitIdentical) {
  Lvm lvm(small_lvm(), 14);
  GradNet energy(small_energy(), 15);
  const ScoreFromEnergy wrapped(energy);
  const Tensor h = lvm.encode({3, 5, 7});
  Rng rng(16);
  const LatentState z0 = rng.normal_like({3, 2});
  DecodeConfig ecfg;
  ecfg.procedure = DecodeProcedure::kEnergy;
  ecfg.steps = 4;
  ecfg.alpha = 0.7;
  DecodeConfig scfg = ecfg;
  scfg.procedure = DecodeProcedure::kScore;
  const RefineResult a = refine(lvm, energy, z0, h, ecfg);
  const RefineResult b = refine(lvm, wrapped, z0, h, scfg);
  ASSERT_EQ(a.trace.steps.size(), b.trace.steps.size());
  for (size_t k = 0; k < a.trace.steps.size(); ++k) EXPECT_EQ(a.trace.steps[k].z.data, b.trace.steps[k].z.data);
  EXPECT_EQ(a.tokens, b.tokens);
}

TEST(Pipeline, LatentInitsHonourCounts) {
  DiagGaussianSeq prior{Tensor::full({3, 2}, 0.5), Tensor::zeros({3, 2})};
  DecodeConfig cfg;
  cfg.latent_samples = 4;
  auto inits = latent_inits(prior, cfg, 0);
  ASSERT_EQ(inits.size(), 4u);
  EXPECT_EQ(inits[0].data, prior.mean.data);
  cfg.init = LatentInit::kPriorSample;
  cfg.include_prior_mean = false;
  inits = latent_inits(prior, cfg, 0);
  ASSERT_EQ(inits.size(), 4u);
  std::set<std::vector<double>> distinct;
  for (const auto& z : inits) distinct.insert(z.data);
  EXPECT_EQ(distinct.size(), 4u);
  EXPECT_EQ(latent_inits(prior, cfg, 0)[2].data, inits[2].data);
  EXPECT_NE(latent_inits(prior, cfg, 1)[0].data, inits[0].data);
  cfg.latent_samples = 0;
  EXPECT_THROW(latent_inits(prior, cfg, 0), Error);
}

ArConfig small_ar() {
  ArConfig c;
  c.vocab = 12;
  c.d_model = 16;
  c.d_filter = 32;
  c.t_max = 8;
  return c;
}

TEST(Pipeline, CandidateCountsAndRescoring) {
  Lvm lvm(small_lvm(), 17);
  const ConstantScore field(0.1);
  ArModel ar(small_ar(), 18);
  DecodeModels models{&lvm, &field, &ar};
  DecodeConfig cfg;
  cfg.length_candidates = 3;
  cfg.latent_samples = 2;
  cfg.init = LatentInit::kPriorSample;
  const TokenSeq x{3, 4, 5, 6};
  const DecodeResult r = decode_pipeline(x, models, cfg);
  const auto lengths = lvm.predict_length(lvm.encode(x)).top_lengths(4, 3, 8);
  ASSERT_EQ(r.candidates.size(), lengths.size() * 2);
  std::vector<double> scores;
  for (const Candidate& c : r.candidates) {
    EXPECT_EQ(static_cast<int64_t>(c.raw.size()), c.length);
    EXPECT_EQ(c.length, lengths[static_cast<size_t>(c.length_rank)]);
    EXPECT_NEAR(c.score, ar_normalized_score(ar, c.raw, x), 1e-12);
    scores.push_back(c.score);
  }
  EXPECT_EQ(r.best, select_best(scores));
  EXPECT_TRUE(r.candidates[0].prior_mean);
  EXPECT_FALSE(r.candidates[1].prior_mean);
  EXPECT_EQ(r.raw, r.candidates[r.best].raw);
  EXPECT_EQ(r.output, remove_repetitions(r.raw));
}

TEST(Pipeline, SingleCandidateNeedsNoRescorer) {
  Lvm lvm(small_lvm(), 19);
  const ConstantScore field(0.1);
  DecodeModels models{&lvm, &field, nullptr};
  DecodeConfig cfg;
  const DecodeResult r = decode_pipeline({3, 4}, models, cfg);
  ASSERT_EQ(r.candidates.size(), 1u);
  EXPECT_EQ(r.best, 0u);
  cfg.latent_samples = 2;
  EXPECT_THROW(decode_pipeline({3, 4}, models, cfg), Error);
}

TEST(Pipeline, RejectsMismatchedField) {
  Lvm lvm(small_lvm(), 20);
  const QuadraticEnergy energy(0.0);
  DecodeConfig cfg;
  cfg.procedure = DecodeProcedure::kScore;
  EXPECT_THROW(decode_pipeline({3}, DecodeModels{&lvm, &energy, nullptr}, cfg), Error);
  EXPECT_THROW(decode_pipeline({3}, DecodeModels{&lvm, nullptr, nullptr}, cfg), Error);
  cfg.steps = 0;
  EXPECT_NO_THROW(decode_pipeline({3}, DecodeModels{&lvm, nullptr, nullptr}, cfg));
}

TEST(Pipeline, StructuralDecoderCallsPerStep) {
  Lvm lvm(small_lvm(), 21);
  const ConstantScore field(0.05);
  DecodeConfig cfg;
  cfg.steps = 3;
  const DecodeResult s = decode_pipeline({3, 4, 5}, DecodeModels{&lvm, &field, nullptr}, cfg);
  for (const auto& st : s.candidates[0].trace.steps) EXPECT_EQ(st.decoder_calls, 0);
  cfg.procedure = DecodeProcedure::kDelta;
  const DecodeResult d = decode_pipeline({3, 4, 5}, DecodeModels{&lvm, nullptr, nullptr}, cfg);
  for (const auto& st : d.candidates[0].trace.steps) EXPECT_EQ(st.decoder_calls, 1);
}

}  // namespace
}  // namespace latref
