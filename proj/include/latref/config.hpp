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
#include <string>
#include <vector>

namespace latref {

inline constexpr int kConfigFormatVersion = 1;

struct LvmConfig {
  int64_t vocab = 32;
  int64_t d_latent = 8;
  int64_t d_model = 64;
  int64_t d_filter = 128;
  int64_t n_layers = 2;
  int64_t n_heads = 4;
  int64_t t_max = 24;
  // Length offsets are predicted in [-len_offset_max, len_offset_max].
  int64_t len_offset_max = 8;
  double log_std_min = -5.0;
  double log_std_max = 3.0;
};

enum class GradNetKind { kEnergy, kScore };

struct GradNetConfig {
  GradNetKind kind = GradNetKind::kScore;
  int64_t d_latent = 8;
  int64_t d_model = 64;
  int64_t d_filter = 128;
  int64_t n_layers = 2;
  int64_t n_heads = 4;
  // Width of the source encoding the net attends over (the LVM's d_model).
  int64_t d_source = 64;
};

struct ArConfig {
  int64_t vocab = 32;
  int64_t d_model = 32;
  int64_t d_filter = 64;
  int64_t n_layers = 1;
  int64_t n_heads = 2;
  int64_t t_max = 24;
  int64_t beam = 1;
};

struct OptimConfig {
  int64_t steps = 20000;
  int64_t batch_size = 8;
  double lr = 1e-3;
  // Reference recipe: 8K warmup over 1M steps; rescaled for desk runs.
  int64_t warmup = 400;
  int64_t log_every = 100;
  int64_t checkpoint_every = 5000;
};

struct LvmTrainConfig {
  OptimConfig optim{20000, 4, 1e-3, 400, 100, 5000};
  double length_loss_weight = 1.0;
  // Per-position floor on the KL term of the training loss: each position
  // contributes max(KL_t, kl_free_nats). 0 trains the plain ELBO.
  double kl_free_nats = 0.1;
  // Train on greedy outputs of the AR model instead of references.
  bool distill_from_ar = false;
};

struct GradNetTrainConfig {
  OptimConfig optim{2000, 16, 1e-3, 400, 100, 1000};
  int64_t delta_steps = 4;
  double pre_update_prob = 0.5;
  // Step size for the stochastic pre-update; defaults to the decode alpha.
  double pre_update_alpha = 1.0;
  int64_t samples_per_source = 1;
};

struct ArTrainConfig {
  OptimConfig optim{3000, 8, 1e-3, 200, 100, 1000};
};

enum class DecodeProcedure { kDelta, kEnergy, kScore };
enum class LatentInit { kPriorMean, kPriorSample };
enum class Termination { kFixedSteps, kConverged };

struct DecodeConfig {
  DecodeProcedure procedure = DecodeProcedure::kScore;
  int64_t steps = 1;  // L
  double alpha = 1.0;
  LatentInit init = LatentInit::kPriorMean;
  int64_t length_candidates = 1;  // l
  int64_t latent_samples = 1;     // n_w
  // With prior-sample init, also refine the prior mean as one candidate.
  bool include_prior_mean = true;
  uint64_t seed = 0;
  Termination termination = Termination::kFixedSteps;
  double converge_eps = 1e-4;
};

struct EvalConfig {
  int64_t is_samples = 500;
  std::vector<int64_t> steps_list{0, 1, 2, 4, 8};
  std::vector<DecodeProcedure> procedures{DecodeProcedure::kDelta, DecodeProcedure::kScore};
  // Score references instead of model outputs under the marginal estimator.
  bool score_references = false;
  int64_t max_examples = 0;  // 0 = all
};

enum class TaskKind { kCopy, kReverse, kSort, kCipher };

struct TaskSpec {
  TaskKind task = TaskKind::kCipher;
  int64_t vocab = 32;
  int64_t min_len = 4;
  int64_t max_len = 8;
  int64_t n_train = 20000;
  int64_t n_dev = 200;
  int64_t n_test = 500;
  // Number of substitution tables. The table index is the sum of the first
  // cipher_key_tokens source tokens (0 = all of them) mod cipher_keys; more
  // tokens make the key harder to infer from the source.
  int64_t cipher_keys = 4;
  int64_t cipher_key_tokens = 0;
  uint64_t seed = 1;
};

struct GradFieldConfig {
  int64_t position = 0;
  int64_t resolution = 25;
  double extent_std = 3.0;
  int64_t steps = 4;
};

struct RunConfig {
  int format_version = kConfigFormatVersion;
  uint64_t seed = 1234;
  TaskSpec task;
  LvmConfig lvm;
  GradNetConfig gradnet;
  ArConfig ar;
  LvmTrainConfig lvm_train;
  GradNetTrainConfig gradnet_train;
  ArTrainConfig ar_train;
  DecodeConfig decode;
  EvalConfig eval;
  GradFieldConfig gradfield;
};

// Strict JSON I/O: unknown keys and type errors raise Error naming the key
// path (e.g. "lvm.d_model"); missing keys take defaults. Serialization
// always writes every key.
RunConfig parse_run_config(const std::string& json_text);
std::string dump_run_config(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

std::string lvm_config_json(const LvmConfig& cfg);
LvmConfig parse_lvm_config(const std::string& json_text);
std::string gradnet_config_json(const GradNetConfig& cfg);
GradNetConfig parse_gradnet_config(const std::string& json_text);
std::string ar_config_json(const ArConfig& cfg);
ArConfig parse_ar_config(const std::string& json_text);

std::string to_string(GradNetKind k);
std::string to_string(DecodeProcedure p);
std::string to_string(LatentInit i);
std::string to_string(TaskKind t);
GradNetKind parse_gradnet_kind(const std::string& s);
DecodeProcedure parse_procedure(const std::string& s);
LatentInit parse_init(const std::string& s);
TaskKind parse_task(const std::string& s);

}  // namespace latref
