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

#include "latref/gradfield.hpp"
#include "latref/gradnet.hpp"
#include "latref/inference.hpp"

namespace latref {
namespace {

LvmConfig lvm_cfg(int64_t d) {
  LvmConfig c;
  c.vocab = 12;
  c.d_latent = d;
  c.d_model = 16;
  c.d_filter = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.t_max = 8;
  c.len_offset_max = 2;
  return c;
}

GradNetConfig net_cfg(GradNetKind kind) {
  GradNetConfig c;
  c.kind = kind;
  c.d_latent = 2;
  c.d_model = 16;
  c.d_filter = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_source = 16;
  return c;
}

// Score pointing at a fixed target point in every row.
class PullTo : public LatentGradient {
 public:
  PullTo(double u, double v) : u_(u), v_(v) {}
  GradNetKind kind() const override { return GradNetKind::kScore; }
  Tensor energy_grad(const LatentState&, const Tensor&) const override { throw Error("score only"); }
  Tensor score(const LatentState& z, const Tensor&) const override {
    Tensor s = z;
    for (int64_t t = 0; t < z.rows(); ++t) {
      s(t, 0) = u_ - z(t, 0);
      s(t, 1) = v_ - z(t, 1);
    }
    return s;
  }

 private:
  double u_, v_;
};

TEST(GradField, RejectsUnsupportedSettings) {
  Lvm wide(lvm_cfg(3), 1);
  Lvm flat(lvm_cfg(2), 1);
  const PullTo field(0.0, 0.0);
  GradFieldConfig cfg;
  EXPECT_THROW(gradfield_export(wide, field, {3, 4}, cfg, DecodeConfig{}), Error);
  cfg.resolution = 1;
  EXPECT_THROW(gradfield_export(flat, field, {3, 4}, cfg, DecodeConfig{}), Error);
  cfg = GradFieldConfig{};
  cfg.extent_std = 0.0;
  EXPECT_THROW(gradfield_export(flat, field, {3, 4}, cfg, DecodeConfig{}), Error);
  cfg = GradFieldConfig{};
  cfg.position = 50;
  EXPECT_THROW(gradfield_export(flat, field, {3, 4}, cfg, DecodeConfig{}), Error);
}

TEST(GradField, GridGeometryAndDirections) {
  Lvm lvm(lvm_cfg(2), 2);
  const PullTo field(0.25, -0.5);
  GradFieldConfig cfg;
  cfg.resolution = 5;
  cfg.steps = 2;
  const TokenSeq x{3, 4, 5};
  const GradFieldGrid g = gradfield_export(lvm, field, x, cfg, DecodeConfig{});
  const Tensor h = lvm.encode(x);
  const DiagGaussianSeq prior = lvm.prior(h, g.length);
  EXPECT_EQ(g.resolution(), 5);
  EXPECT_EQ(g.directions.size(), 25u);
  EXPECT_EQ(g.field_kind, "score");
  EXPECT_DOUBLE_EQ(g.prior_mean[0], prior.mean(0, 0));
  EXPECT_NEAR(g.axis_u[2], prior.mean(0, 0), 1e-12);
  EXPECT_NEAR(g.axis_v.back() - g.axis_v.front(), 6.0 * std::exp(prior.log_std(0, 1)), 1e-12);
  for (int64_t i = 0; i < 5; ++i) {
    for (int64_t j = 0; j < 5; ++j) {
      const Point2& d = g.directions[static_cast<size_t>(i * 5 + j)];
      EXPECT_NEAR(d[0], 0.25 - g.axis_u[static_cast<size_t>(i)], 1e-12);
      EXPECT_NEAR(d[1], -0.5 - g.axis_v[static_cast<size_t>(j)], 1e-12);
    }
  }
}

TEST(GradField, TrajectoriesStartAtPriorMeanAndReplay) {
  Lvm lvm(lvm_cfg(2), 3);
  GradNet net(net_cfg(GradNetKind::kScore), 4);
  GradFieldConfig cfg;
  cfg.resolution = 3;
  cfg.steps = 3;
  DecodeConfig dc;
  dc.alpha = 0.5;
  const TokenSeq x{3, 6, 9};
  const GradFieldGrid g = gradfield_export(lvm, net, x, cfg, dc);
  ASSERT_EQ(g.trajectories.size(), 2u);
  const Tensor h = lvm.encode(x);
  const LatentState z0 = lvm.prior(h, g.length).mean;
  for (const auto& t : g.trajectories) {
    ASSERT_FALSE(t.states.empty());
    EXPECT_EQ(t.states[0].data, z0.data) << t.procedure;
    EXPECT_EQ(t.states.size(), t.tokens.size());
  }
  const FieldTrajectory& delta = g.trajectories[0];
  EXPECT_EQ(delta.procedure, "delta");
  EXPECT_EQ(delta.states.back().data, delta_infer(lvm, z0, h, 3).z.data);
  EXPECT_EQ(g.posterior_tokens, delta.tokens.back());
  const FieldTrajectory& score = g.trajectories[1];
  EXPECT_EQ(score.procedure, "score");
  ASSERT_EQ(score.states.size(), 4u);
  DecodeConfig replay = dc;
  replay.steps = 3;
  const RefineResult r = refine(lvm, net, z0, h, replay);
  for (size_t k = 0; k < 3; ++k) EXPECT_EQ(score.states[k + 1].data, r.trace.steps[k].z.data);
  EXPECT_EQ(score.tokens.back(), r.tokens);
}

TEST(GradField, JsonRoundTripIsExact) {
  Lvm lvm(lvm_cfg(2), 5);
  GradNet net(net_cfg(GradNetKind::kEnergy), 6);
  GradFieldConfig cfg;
  cfg.resolution = 4;
  cfg.steps = 2;
  DecodeConfig dc;
  dc.procedure = DecodeProcedure::kEnergy;
  const GradFieldGrid g = gradfield_export(lvm, net, {3, 4}, cfg, dc);
  EXPECT_EQ(g.field_kind, "energy");
  const std::string text = gradfield_to_json(g);
  const GradFieldGrid back = gradfield_from_json(text);
  EXPECT_EQ(gradfield_to_json(back), text);
  EXPECT_EQ(back.directions, g.directions);
  EXPECT_EQ(back.trajectories[1].states[2].data, g.trajectories[1].states[2].data);
}

TEST(GradField, ReaderRejectsBadFiles) {
  EXPECT_THROW(gradfield_from_json("{}"), Error);
  EXPECT_THROW(gradfield_from_json("not json"), Error);
  Lvm lvm(lvm_cfg(2), 7);
  const PullTo field(0.0, 0.0);
  GradFieldConfig cfg;
  cfg.resolution = 2;
  GradFieldGrid g = gradfield_export(lvm, field, {3}, cfg, DecodeConfig{});
  g.format_version = 2;
  EXPECT_THROW(gradfield_from_json(gradfield_to_json(g)), Error);
  g.format_version = 1;
  g.directions.pop_back();
  EXPECT_THROW(gradfield_from_json(gradfield_to_json(g)), Error);
}

TEST(GradField, LocalMinimumHelper) {
  GradFieldGrid g;
  for (int i = 0; i < 5; ++i) {
    g.axis_u.push_back(i - 2.0);
    g.axis_v.push_back(i - 2.0);
  }
  for (double u : g.axis_u) {
    for (double v : g.axis_v) g.directions.push_back({1.0 - u, -1.0 - v});
  }
  EXPECT_TRUE(direction_norm_local_min(g, {1.0, -1.0}));
  EXPECT_TRUE(direction_norm_local_min(g, {0.9, -1.2}));
  EXPECT_FALSE(direction_norm_local_min(g, {-2.0, 2.0}));
  EXPECT_FALSE(direction_norm_local_min(g, {0.0, 0.0}));
}

}  // namespace
}  // namespace latref
