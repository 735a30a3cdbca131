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
#include <numeric>

#include "latref/ar.hpp"
#include "latref/gradnet.hpp"
#include "latref/lvm.hpp"
#include "latref/oracles.hpp"
#include "latref/rng.hpp"

namespace latref {
namespace {

LvmConfig tiny_lvm() {
  LvmConfig c;
  c.vocab = 10;
  c.d_latent = 3;
  c.d_model = 16;
  c.d_filter = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.t_max = 8;
  c.len_offset_max = 3;
  return c;
}

GradNetConfig tiny_gradnet(GradNetKind kind) {
  GradNetConfig c;
  c.kind = kind;
  c.d_latent = 3;
  c.d_model = 16;
  c.d_filter = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_source = 16;
  return c;
}

TEST(Encoder, DeterministicShapedAndPositionSensitive) {
  Lvm lvm(tiny_lvm(), 1);
  const Tensor a = lvm.encode({4, 5, 6});
  EXPECT_EQ(a.data, lvm.encode({4, 5, 6}).data);
  EXPECT_EQ(lvm.encode({7}).shape, (Shape{1, 16}));
  EXPECT_NE(a.data, lvm.encode({6, 5, 4}).data);
}

TEST(Encoder, RejectsBadTokens) {
  Lvm lvm(tiny_lvm(), 1);
  EXPECT_THROW(lvm.encode({4, 10}), Error);
  EXPECT_THROW(lvm.encode({}), Error);
  EXPECT_THROW(lvm.encode({4, 0, 5}), Error);
}

TEST(Prior, SamplingIsSeededAndCentered) {
  Lvm lvm(tiny_lvm(), 2);
  const DiagGaussianSeq p = lvm.prior(lvm.encode({3, 4, 5}), 4);
  EXPECT_EQ(p.mean.shape, (Shape{4, 3}));
  Rng a(9), b(9);
  EXPECT_EQ(p.sample(a).data, p.sample(b).data);
  Rng rng(10);
  const int n = 100000;
  std::vector<double> acc(p.mean.data.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const LatentState z = p.sample(rng);
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += z.data[k];
  }
  for (size_t k = 0; k < acc.size(); ++k) {
    const double sd = std::exp(p.log_std.data[k]);
    // 4.5 sigma keeps the family-wise false alarm rate over 12 coordinates below 1e-4.
    EXPECT_NEAR(acc[k] / n, p.mean.data[k], 4.5 * sd / std::sqrt(n)) << "coordinate " << k;
  }
}

TEST(Posterior, DeterministicAndZeroSelfKl) {
  Lvm lvm(tiny_lvm(), 3);
  const Tensor h = lvm.encode({3, 4, 5});
  const DiagGaussianSeq q = lvm.posterior(h, {6, 7});
  EXPECT_EQ(q.mean.data, lvm.posterior(h, {6, 7}).mean.data);
  EXPECT_EQ(kl_divergence(q, q), 0.0);
  const double kl = kl_divergence(q, lvm.prior(h, 2));
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_GE(kl, 0.0);
}

TEST(Kl, UnitShiftIsOneHalfPerDimension) {
  DiagGaussianSeq q{Tensor::mat(1, 2, {1.0, 1.0}), Tensor::zeros({1, 2})};
  DiagGaussianSeq p{Tensor::zeros({1, 2}), Tensor::zeros({1, 2})};
  EXPECT_NEAR(kl_divergence(q, p), 1.0, 1e-15);
}

TEST(Kl, NonNegativeOnRandomPairs) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    DiagGaussianSeq q{rng.normal_like({3, 2}), rng.normal_like({3, 2})};
    DiagGaussianSeq p{rng.normal_like({3, 2}), rng.normal_like({3, 2})};
    EXPECT_GE(kl_divergence(q, p), -1e-9);
  }
}

TEST(GaussianHeads, ClampHoldsForAdversarialWeights) {
  Lvm lvm(tiny_lvm(), 5);
  Rng rng(6);
  for (auto& [name, t] : lvm.params().tensors()) {
    for (auto& v : t.data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * 200.0 * rng.uniform();
  }
  const Tensor h = lvm.encode({3, 8, 5});
  for (const DiagGaussianSeq& g : {lvm.prior(h, 5), lvm.posterior(h, {4, 4, 9})}) {
    ASSERT_TRUE(g.log_std.all_finite());
    for (double v : g.log_std.data) {
      EXPECT_GE(v, -5.0);
      EXPECT_LE(v, 3.0);
    }
  }
}

TEST(Decoder, SequenceLogProbIsSumOfLogSoftmax) {
  Lvm lvm(tiny_lvm(), 7);
  const Tensor h = lvm.encode({3, 4});
  Rng rng(8);
  const LatentState z = rng.normal_like({3, 3});
  const Tensor logits = lvm.decode_logits(z, h);
  const TokenSeq y{5, 9, 3};
  double ref = 0.0;
  for (int64_t t = 0; t < 3; ++t) {
    double mx = -1e300;
    for (int64_t v = 0; v < 10; ++v) mx = std::max(mx, logits(t, v));
    double s = 0.0;
    for (int64_t v = 0; v < 10; ++v) s += std::exp(logits(t, v) - mx);
    ref += logits(t, y[static_cast<size_t>(t)]) - mx - std::log(s);
  }
  EXPECT_NEAR(lvm.decode_log_prob(y, z, h), ref, 1e-12);
}

TEST(Decoder, SpecialTokensNeverWin) {
  Lvm lvm(tiny_lvm(), 8);
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const LatentState z = rng.normal_like({4, 3});
    for (int tok : argmax_tokens(lvm.decode_logits(z, lvm.encode({3, 4})))) EXPECT_GE(tok, kFirstContentToken);
  }
}

TEST(Decoder, TokenwiseArgmaxIsJointArgmaxForThreeTokensTwoPositions) {
  LvmConfig c = tiny_lvm();
  c.vocab = 6;  // three content tokens
  Lvm lvm(c, 10);
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    LatentState z = rng.normal_like({2, 3});
    for (auto& v : z.data) v *= 3.0;
    const Tensor h = lvm.encode({3, 5});
    EXPECT_EQ(argmax_tokens(lvm.decode_logits(z, h)), enumerate_joint_argmax(lvm.decode_log_probs(z, h)));
  }
}

TEST(Decoder, ExhaustiveArgmaxSweep) {
  const OracleCheck c = argmax_enumeration_check(200, 12);
  EXPECT_TRUE(c.pass) << c.value << " mismatches";
}

TEST(Decoder, ArgmaxTiesGoToLowestId) {
  EXPECT_EQ(argmax_tokens(Tensor::mat(2, 3, {1.0, 1.0, 0.0, 0.0, 2.0, 2.0})), (TokenSeq{0, 1}));
}

TEST(Decoder, BatchedMatchesPerLatent) {
  Lvm lvm(tiny_lvm(), 13);
  const Tensor h = lvm.encode({3, 6, 4});
  Rng rng(14);
  std::vector<LatentState> zs;
  for (int i = 0; i < 5; ++i) zs.push_back(rng.normal_like({4, 3}));
  const auto batch = lvm.decode_log_probs_batch(zs, h);
  ASSERT_EQ(batch.size(), zs.size());
  for (size_t i = 0; i < zs.size(); ++i) {
    const Tensor ref = lvm.decode_log_probs(zs[i], h);
    for (int64_t t = 0; t < ref.rows(); ++t) {
      for (int64_t v = 0; v < ref.cols(); ++v) {
        // Special-token columns sit near -1e9, where one ulp is about 1e-7.
        const double tol = v < kFirstContentToken ? 1e-15 * std::abs(ref(t, v)) : 1e-10;
        EXPECT_NEAR(batch[i](t, v), ref(t, v), tol) << "row " << t << " col " << v;
      }
    }
  }
}

TEST(Length, DistributionSumsToOneAndTopLengthsAreOrdered) {
  Lvm lvm(tiny_lvm(), 15);
  const LengthDistribution d = lvm.predict_length(lvm.encode({3, 4, 5, 6}));
  ASSERT_EQ(d.probs.size(), 7u);
  EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-12);
  const auto top1 = d.top_lengths(4, 1, 8);
  ASSERT_EQ(top1.size(), 1u);
  EXPECT_EQ(top1[0], std::clamp<int64_t>(4 + d.argmax_offset(), 1, 8));
  const auto top5 = d.top_lengths(4, 5, 8);
  EXPECT_EQ(top5.size(), 5u);
  EXPECT_EQ(top5[0], top1[0]);
}

TEST(Length, ClippingDropsDuplicates) {
  LengthDistribution d{2, {0.3, 0.25, 0.2, 0.15, 0.1}};
  // Offsets -2, -1 clip to length 1 for a source of length 1.
  EXPECT_EQ(d.top_lengths(1, 5, 8), (std::vector<int64_t>{1, 2, 3}));
  EXPECT_EQ(d.argmax_offset(), -2);
}

TEST(GradNetModel, EnergyFieldMatchesFiniteDifferences) {
  for (const auto& c : net_gradient_suite(16)) EXPECT_TRUE(c.pass) << c.name << ": " << c.value;
}

TEST(GradNetModel, EnergyGradientAtRandomPoints) {
  GradNet net(tiny_gradnet(GradNetKind::kEnergy), 17);
  Rng rng(18);
  for (int i = 0; i < 10; ++i) {
    const Tensor h = rng.normal_like({3, 16});
    ScalarFn f = [&](Tape& tape, const Var& z) {
      Binding p(tape, net.params(), false);
      return net.energy(p, z, tape.constant(h));
    };
    EXPECT_LT(finite_diff_check(f, rng.normal_like({4, 3})).max_rel_error, 1e-4);
  }
}

TEST(GradNetModel, EnergyBatchMatchesPerItemAndDiffers) {
  GradNet net(tiny_gradnet(GradNetKind::kEnergy), 19);
  Rng rng(20);
  const Tensor h = rng.normal_like({3, 16});
  std::vector<LatentState> zs;
  for (int i = 0; i < 4; ++i) zs.push_back(rng.normal_like({5, 3}));
  const auto e = net.energy_batch(zs, h);
  for (size_t i = 0; i < zs.size(); ++i) EXPECT_NEAR(e[i], net.energy(zs[i], h), 1e-10);
  EXPECT_NE(e[0], e[1]);
}

TEST(GradNetModel, ScoreShapeDeterminismAndKindChecks) {
  GradNet score(tiny_gradnet(GradNetKind::kScore), 21);
  GradNet energy(tiny_gradnet(GradNetKind::kEnergy), 21);
  Rng rng(22);
  const Tensor h = rng.normal_like({3, 16});
  const LatentState z = rng.normal_like({6, 3});
  const Tensor s = score.score(z, h);
  EXPECT_EQ(s.shape, z.shape);
  EXPECT_TRUE(s.all_finite());
  EXPECT_EQ(s.data, score.score(z, h).data);
  EXPECT_THROW(score.energy(z, h), Error);
  EXPECT_THROW(energy.score(z, h), Error);
}

TEST(GradNetModel, ScoreFromEnergyIsNegatedGradient) {
  GradNet energy(tiny_gradnet(GradNetKind::kEnergy), 23);
  ScoreFromEnergy wrapped(energy);
  Rng rng(24);
  const Tensor h = rng.normal_like({2, 16});
  const LatentState z = rng.normal_like({3, 3});
  const Tensor g = energy.energy_grad(z, h), s = wrapped.score(z, h);
  for (size_t i = 0; i < g.data.size(); ++i) EXPECT_EQ(s.data[i], -g.data[i]);
}

TEST(ModelCheckpoint, RoundTripsPreserveOutputs) {
  Lvm lvm(tiny_lvm(), 25);
  const Lvm back = Lvm::from_checkpoint(parse_checkpoint(serialize_checkpoint(lvm.to_checkpoint(25))));
  EXPECT_EQ(back.encode({3, 4}).data, lvm.encode({3, 4}).data);
  GradNet net(tiny_gradnet(GradNetKind::kScore), 26);
  const GradNet nb = GradNet::from_checkpoint(parse_checkpoint(serialize_checkpoint(net.to_checkpoint(26))));
  EXPECT_EQ(nb.kind(), GradNetKind::kScore);
  Rng rng(27);
  const Tensor h = rng.normal_like({2, 16});
  const LatentState z = rng.normal_like({3, 3});
  EXPECT_EQ(nb.score(z, h).data, net.score(z, h).data);
}

ArConfig tiny_ar() {
  ArConfig c;
  c.vocab = 10;
  c.d_model = 16;
  c.d_filter = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.t_max = 8;
  return c;
}

TEST(Rescorer, SelectionRules) {
  ArModel ar(tiny_ar(), 28);
  const TokenSeq x{3, 4, 5};
  const std::vector<TokenSeq> one{{6, 7}};
  EXPECT_EQ(ar_rescore(ar, one, x), 0u);
  const std::vector<TokenSeq> dup{{6, 7}, {6, 7}};
  EXPECT_EQ(ar_rescore(ar, dup, x), 0u);
  const std::vector<TokenSeq> empties{{}, {}};
  EXPECT_EQ(ar_rescore(ar, empties, x), 0u);
  const std::vector<TokenSeq> mixed{{}, {5}};
  EXPECT_EQ(ar_rescore(ar, mixed, x), 1u);
  EXPECT_THROW(ar_rescore(ar, std::vector<TokenSeq>{}, x), Error);
}

TEST(Rescorer, MatchesExhaustiveScoring) {
  ArModel ar(tiny_ar(), 29);
  const TokenSeq x{3, 8, 5};
  const std::vector<TokenSeq> cands{{4, 5, 6}, {9}, {7, 7, 3, 4}};
  size_t best = 0;
  double best_score = -1e300;
  for (size_t i = 0; i < cands.size(); ++i) {
    const double s = ar.log_prob(cands[i], x) / static_cast<double>(cands[i].size());
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  EXPECT_EQ(ar_rescore(ar, cands, x), best);
  EXPECT_NEAR(ar_normalized_score(ar, cands[0], x), ar.log_prob(cands[0], x) / 3.0, 1e-15);
  EXPECT_EQ(select_best(std::vector<double>{1.0, 3.0, 3.0}), 1u);
}

TEST(Rescorer, GenerateProducesContentTokens) {
  ArModel ar(tiny_ar(), 30);
  const TokenSeq y = ar.generate({3, 4, 5});
  EXPECT_LE(static_cast<int64_t>(y.size()), 8);
  for (int t : y) EXPECT_GE(t, kFirstContentToken);
}

}  // namespace
}  // namespace latref
