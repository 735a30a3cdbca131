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

// Run-directory pipeline behind the command-line tool.
//
// Layout of a run directory:
//   config.json                  materialized RunConfig, every key present
//   data/{train,dev,test}.{src,tgt}, data/task.json
//   checkpoints/{lvm,ar,gradnet-score,gradnet-energy}.ckpt
//   logs/<model>.jsonl           training metrics, one record per interval
//   outputs/<name>.txt           translate output; .raw.txt, .trace.jsonl and
//                                .config.json sit beside it
//   reports/step_report.{csv,json}, reports/eval.config.json
//   reports/gradfield.json, reports/gradfield.config.json

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latref/config.hpp"
#include "latref/eval.hpp"
#include "latref/gradfield.hpp"
#include "latref/inference.hpp"
#include "latref/training.hpp"

namespace latref {

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path checkpoint(const std::string& model) const {
    return root / "checkpoints" / (model + ".ckpt");
  }
  std::filesystem::path log(const std::string& model) const {
    return root / "logs" / (model + ".jsonl");
  }
  std::filesystem::path outputs() const { return root / "outputs"; }
  std::filesystem::path reports() const { return root / "reports"; }
};

// "gradnet-score" or "gradnet-energy".
std::string gradnet_model_name(GradNetKind kind);

// Independent seeds for each pipeline stage, derived from RunConfig::seed.
enum class SeedStream : uint64_t {
  kLvmInit = 1,
  kLvmTrain,
  kArInit,
  kArTrain,
  kGradNetInit,
  kGradNetTrain,
  kEval,
};
uint64_t stage_seed(const RunConfig& cfg, SeedStream stream);

// Applies "a.b.c=value" assignments. The value is read as JSON and falls
// back to a plain string, so `lvm.d_latent=2` and `decode.procedure=delta`
// both work. Errors name the key path.
RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& assignments);

// Base config: `config_path` if given, else the run directory's config.json,
// else defaults. Overrides and the seed are applied on top.
RunConfig resolve_config(const RunPaths& run, const std::optional<std::string>& config_path,
                         const std::vector<std::string>& overrides,
                         std::optional<uint64_t> seed);

// Writes config.json when absent. When present it must match `cfg` unless
// `force` is set, in which case it is replaced.
void persist_config(const RunPaths& run, const RunConfig& cfg, bool force);

// ---- Stages -----------------------------------------------------------------

Corpus run_gen_data(const RunPaths& run, const RunConfig& cfg);

struct TrainOptions {
  // Continue from the stage checkpoint (model, optimizer and step) when
  // present; otherwise start from scratch and truncate the metrics log.
  bool resume = false;
  std::ostream* progress = nullptr;  // human-readable progress lines
};

TrainSummary run_train_lvm(const RunPaths& run, const RunConfig& cfg, const TrainOptions& opt);
TrainSummary run_train_ar(const RunPaths& run, const RunConfig& cfg, const TrainOptions& opt);
TrainSummary run_train_gradnet(const RunPaths& run, const RunConfig& cfg, GradNetKind kind,
                               const TrainOptions& opt);

struct TranslateOptions {
  std::string input;   // default: data/test.src
  std::string output;  // default: outputs/translate.txt
  std::string trace;   // default: <output stem>.trace.jsonl
  std::string lvm;     // checkpoint overrides; default: the run's checkpoints
  std::string gradnet;
  std::string ar;
};

struct TranslateSummary {
  std::vector<DecodeResult> results;
  std::filesystem::path output;
  std::filesystem::path trace;
};

// Decodes every input line with cfg.decode. Writes the postprocessed output,
// the raw winners, one JSON trace line per example, and the effective
// config beside the output.
TranslateSummary run_translate(const RunPaths& run, const RunConfig& cfg,
                               const TranslateOptions& opt);

// One JSON object per example: candidates with per-step timing and decoder
// call counts.
std::string trace_json_line(int64_t example, const TokenSeq& source, const DecodeResult& result);

StepReport run_eval(const RunPaths& run, const RunConfig& cfg);

struct GradFieldOptions {
  int64_t example = 0;           // index into data/test.src
  std::optional<TokenSeq> source;  // overrides `example`
  GradNetKind kind = GradNetKind::kScore;
  std::string output;  // default: reports/gradfield.json
};

GradFieldGrid run_gradfield(const RunPaths& run, const RunConfig& cfg, const GradFieldOptions& opt);

// Reads a whole file; throws Error naming the path when missing.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// File contents with wall-clock fields ("wall_time" and keys ending in
// "_ns") removed from .json and .jsonl files; other files verbatim.
std::string canonical_artifact(const std::filesystem::path& path);

// canonical_artifact of every file under `root`, keyed by relative path.
std::map<std::string, std::string> run_artifacts(const std::filesystem::path& root);

}  // namespace latref
