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

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "latref/adam.hpp"
#include "latref/ar.hpp"
#include "latref/data.hpp"
#include "latref/gradnet.hpp"
#include "latref/lvm.hpp"

namespace latref {

// ---- ELBO ----------------------------------------------------------------

struct ElboTerms {
  // -(recon - sum_t max(KL_t, free_nats)) + length_weight * length_ce
  Var loss;
  double recon = 0.0;
  double kl = 0.0;  // the unfloored KL(q || p)
  double length_ce = 0.0;
};

// One-example ELBO with a single reparameterized sample z = mu + sigma * eps
// (eps is |y| x d_latent standard normal noise) and the KL term in closed
// form. With free_nats = 0 the loss is the negative ELBO plus the length term.
ElboTerms elbo_terms(const Lvm& lvm, Binding& p, const TokenSeq& x, const TokenSeq& y,
                     const Tensor& eps, double length_weight, double free_nats = 0.0);

struct ElboBatchStats {
  double recon = 0.0;
  double kl = 0.0;
  double length_ce = 0.0;
  double loss = 0.0;
  int64_t skipped = 0;  // examples whose loss was not finite
};

// Batch-mean ELBO statistics over frozen parameters. Example i draws its
// noise from Rng(seed).split(i).
ElboBatchStats elbo_loss(const Lvm& lvm, std::span<const Example> batch, uint64_t seed,
                         double length_weight = 1.0);

// ---- Proxy-gradient objective ---------------------------------------------

// Per-example objective for an ascent direction s and displacement d = z~ - z:
// |s|^2 - 2 s.d, which equals |s - d|^2 - |d|^2.
double proxy_objective(const Tensor& s, const Tensor& d);

struct GradNetExample {
  LatentState z;
  LatentState z_tilde;
  Tensor h_src;
  bool pre_updated = false;
};

struct TargetStats {
  int64_t dropped = 0;
  int64_t pre_updated = 0;
};

// z ~ p(z|x) at the given target length; with probability
// cfg.pre_update_prob, one refinement step along `current` (if any) with
// step size cfg.pre_update_alpha; z~ = result of cfg.delta_steps rounds of
// delta inference from z. Returns nullopt (and counts a drop) if z or z~ is
// not finite.
std::optional<GradNetExample> make_gradnet_target(const Lvm& lvm, const LatentGradient* current,
                                                  const TokenSeq& x, int64_t length,
                                                  const GradNetTrainConfig& cfg, Rng& rng,
                                                  TargetStats* stats = nullptr);

// Batch mean of the objective. Score kind: |S|^2 - 2 S.(z~ - z). Energy
// kind: |dE/dz|^2 + 2 (dE/dz).(z~ - z), differentiated through dE/dz.
Var gradnet_loss(const GradNet& net, Binding& p, std::span<const GradNetExample> batch);
double gradnet_loss(const GradNet& net, std::span<const GradNetExample> batch);

// ---- Trainers ---------------------------------------------------------------

struct TrainHooks {
  // JSON-lines metrics sink: one record per log interval holding means over
  // the steps since the previous record, plus standalone gradient-check
  // records at checkpoint steps.
  std::ostream* metrics = nullptr;
  // Called every checkpoint_every steps and after the final step.
  std::function<void(int64_t step, const AdamState& adam)> checkpoint;
};

struct TrainSummary {
  int64_t last_step = 0;
  int64_t skipped_steps = 0;
  // Batch loss per executed step, in order.
  std::vector<double> losses;
};

// Steps run from start_step + 1 to cfg.optim.steps. All randomness of step s
// comes from Rng(seed).split(s), so resuming reproduces the same losses.
TrainSummary train_lvm(Lvm& lvm, AdamState& adam, int64_t start_step,
                       std::span<const Example> data, const LvmTrainConfig& cfg, uint64_t seed,
                       const TrainHooks& hooks = {});

// The LVM is only read. Metrics include the batch floor -mean|z~ - z|^2.
TrainSummary train_gradnet(GradNet& net, AdamState& adam, int64_t start_step, const Lvm& lvm,
                           std::span<const Example> data, const GradNetTrainConfig& cfg,
                           uint64_t seed, const TrainHooks& hooks = {});

TrainSummary train_ar(ArModel& ar, AdamState& adam, int64_t start_step,
                      std::span<const Example> data, const ArTrainConfig& cfg, uint64_t seed,
                      const TrainHooks& hooks = {});

// Replaces each target by the AR model's decode of its source.
std::vector<Example> distill_targets(const ArModel& ar, std::span<const Example> data);

// ---- Resumable checkpoints -----------------------------------------------

// Adds optimizer moments ("adam.m.<name>", "adam.v.<name>") and the step
// counter to a model checkpoint.
Checkpoint with_train_state(Checkpoint model, const AdamState& adam, int64_t step);
// Inverse of with_train_state; returns the stored step (0 if absent).
int64_t restore_train_state(const Checkpoint& ckpt, AdamState& adam);

}  // namespace latref
