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
#include "latref/lvm.hpp"

namespace latref {

// Source of refinement directions over a frozen LVM's latent space.
// Energy-kind estimators descend energy_grad; score-kind ones ascend score.
class LatentGradient {
 public:
  virtual ~LatentGradient() = default;
  virtual GradNetKind kind() const = 0;
  // d E / d z; only for energy kind.
  virtual Tensor energy_grad(const LatentState& z, const Tensor& h_src) const = 0;
  // Ascent direction estimate; only for score kind.
  virtual Tensor score(const LatentState& z, const Tensor& h_src) const = 0;
};

// Inference network over (z, source encoding). The energy kind pools the
// final hidden states over time into one scalar; the score kind emits a
// T x D ascent direction.
class GradNet : public LatentGradient {
 public:
  GradNet(const GradNetConfig& cfg, uint64_t seed);
  GradNet(const GradNetConfig& cfg, ParamStore params);

  const GradNetConfig& config() const { return cfg_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  GradNetKind kind() const override { return cfg_.kind; }

  // Differentiable forward passes. Raise Error on kind mismatch.
  Var energy(Binding& p, const Var& z, const Var& h_src) const;
  Var score(Binding& p, const Var& z, const Var& h_src) const;

  double energy(const LatentState& z, const Tensor& h_src) const;
  std::vector<double> energy_batch(std::span<const LatentState> zs, const Tensor& h_src) const;
  Tensor energy_grad(const LatentState& z, const Tensor& h_src) const override;
  Tensor score(const LatentState& z, const Tensor& h_src) const override;

  Checkpoint to_checkpoint(uint64_t seed) const;
  static GradNet from_checkpoint(const Checkpoint& ckpt);

 private:
  Var trunk(Binding& p, const Var& z, const Var& h_src) const;

  GradNetConfig cfg_;
  ParamStore params_;
};

// Score-kind view of an energy net: score(z) := -dE/dz.
class ScoreFromEnergy : public LatentGradient {
 public:
  explicit ScoreFromEnergy(const LatentGradient& energy) : energy_(energy) {}
  GradNetKind kind() const override { return GradNetKind::kScore; }
  Tensor energy_grad(const LatentState& z, const Tensor& h_src) const override;
  Tensor score(const LatentState& z, const Tensor& h_src) const override;

 private:
  const LatentGradient& energy_;
};

}  // namespace latref
