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

#include "latref/workbench.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "latref/inference.hpp"
#include "latref/rng.hpp"

namespace latref {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

Lvm load_lvm(const fs::path& path) { return Lvm::from_checkpoint(load_checkpoint(path.string())); }

Corpus load_run_corpus(const RunPaths& run) {
  if (!fs::exists(run.data() / "train.src")) {
    throw Error("no corpus in " + run.data().string() + "; run gen-data first");
  }
  return read_corpus(run.data().string());
}

// Metrics sink plus the checkpoint hook shared by the three trainers.
struct StageIo {
  std::ofstream metrics;
  TrainHooks hooks;
};

template <typename Model>
void open_stage(StageIo& io, const RunPaths& run, const std::string& name, const Model& model,
                uint64_t init_seed, bool append) {
  ensure_dir(run.log(name).parent_path());
  ensure_dir(run.checkpoint(name).parent_path());
  io.metrics.open(run.log(name), append ? std::ios::app : std::ios::trunc);
  if (!io.metrics) throw Error("cannot open metrics log " + run.log(name).string());
  io.hooks.metrics = &io.metrics;
  const fs::path path = run.checkpoint(name);
  io.hooks.checkpoint = [&model, path, init_seed](int64_t step, const AdamState& adam) {
    save_checkpoint(path.string(), with_train_state(model.to_checkpoint(init_seed), adam, step));
  };
}

template <typename Model>
int64_t maybe_resume(Model& model, AdamState& adam, const fs::path& path, bool resume,
                     std::ostream* progress) {
  if (!resume || !fs::exists(path)) return 0;
  const Checkpoint ckpt = load_checkpoint(path.string());
  model = Model::from_checkpoint(ckpt);
  const int64_t step = restore_train_state(ckpt, adam);
  if (progress) *progress << "resuming " << path.string() << " at step " << step << "\n";
  return step;
}

void report_summary(std::ostream* progress, const std::string& name, const TrainSummary& s) {
  if (!progress) return;
  *progress << name << ": trained to step " << s.last_step << ", " << s.skipped_steps
            << " skipped steps";
  if (!s.losses.empty()) *progress << ", last loss " << s.losses.back();
  *progress << "\n";
}

std::unique_ptr<GradNet> load_gradnet_if(const fs::path& path) {
  if (!fs::exists(path)) return nullptr;
  return std::make_unique<GradNet>(GradNet::from_checkpoint(load_checkpoint(path.string())));
}

nlohmann::json trace_steps_json(const RefinementTrace& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"step", s.step},
                     {"wall_ns", s.wall_ns},
                     {"decoder_calls", s.decoder_calls},
                     {"posterior_calls", s.posterior_calls},
                     {"gradnet_calls", s.gradnet_calls},
                     {"max_abs_update", s.max_abs_update}});
  }
  return steps;
}

}  // namespace

std::string gradnet_model_name(GradNetKind kind) { return "gradnet-" + to_string(kind); }

uint64_t stage_seed(const RunConfig& cfg, SeedStream stream) {
  return Rng(cfg.seed).split(static_cast<uint64_t>(stream)).next_u64();
}

RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& assignments) {
  if (assignments.empty()) return cfg;
  nlohmann::json j = nlohmann::json::parse(dump_run_config(cfg));
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error("override must look like key.path=value, got '" + a + "'");
    }
    const std::string path = a.substr(0, eq), text = a.substr(eq + 1);
    nlohmann::json* node = &j;
    std::string walked;
    for (size_t start = 0; start <= path.size();) {
      const size_t dot = std::min(path.find('.', start), path.size());
      const std::string key = path.substr(start, dot - start);
      walked += (walked.empty() ? "" : ".") + key;
      if (!node->is_object() || !node->contains(key)) throw Error("unknown config key: " + walked);
      node = &(*node)[key];
      start = dot + 1;
    }
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    *node = value.is_discarded() ? nlohmann::json(text) : value;
  }
  return parse_run_config(j.dump());
}

RunConfig resolve_config(const RunPaths& run, const std::optional<std::string>& config_path,
                         const std::vector<std::string>& overrides,
                         std::optional<uint64_t> seed) {
  RunConfig cfg;
  if (config_path) {
    cfg = load_run_config(*config_path);
  } else if (fs::exists(run.config())) {
    cfg = load_run_config(run.config().string());
  }
  cfg = apply_overrides(cfg, overrides);
  if (seed) cfg.seed = *seed;
  return cfg;
}

void persist_config(const RunPaths& run, const RunConfig& cfg, bool force) {
  const std::string text = dump_run_config(cfg);
  if (fs::exists(run.config()) && !force) {
    if (dump_run_config(load_run_config(run.config().string())) != text) {
      throw Error("run directory " + run.root.string() +
                  " already holds a different config.json; use a fresh run directory or --force");
    }
    return;
  }
  ensure_dir(run.root);
  write_text_file(run.config(), text);
}

Corpus run_gen_data(const RunPaths& run, const RunConfig& cfg) {
  Corpus c = generate_corpus(cfg.task, cfg.lvm.t_max);
  ensure_dir(run.data());
  write_corpus(run.data().string(), c, cfg.task);
  return c;
}

TrainSummary run_train_lvm(const RunPaths& run, const RunConfig& cfg, const TrainOptions& opt) {
  const Corpus corpus = load_run_corpus(run);
  std::vector<Example> train = corpus.train;
  if (cfg.lvm_train.distill_from_ar) {
    const fs::path ar_path = run.checkpoint("ar");
    if (!fs::exists(ar_path)) throw Error("distillation needs " + ar_path.string() + "; run train-ar first");
    train = distill_targets(ArModel::from_checkpoint(load_checkpoint(ar_path.string())), train);
  }
  const uint64_t init_seed = stage_seed(cfg, SeedStream::kLvmInit);
  Lvm lvm(cfg.lvm, init_seed);
  AdamState adam;
  const int64_t start = maybe_resume(lvm, adam, run.checkpoint("lvm"), opt.resume, opt.progress);
  StageIo io;
  open_stage(io, run, "lvm", lvm, init_seed, start > 0);
  const auto s = train_lvm(lvm, adam, start, train, cfg.lvm_train,
                           stage_seed(cfg, SeedStream::kLvmTrain), io.hooks);
  if (start >= cfg.lvm_train.optim.steps) io.hooks.checkpoint(start, adam);
  report_summary(opt.progress, "lvm", s);
  return s;
}

TrainSummary run_train_ar(const RunPaths& run, const RunConfig& cfg, const TrainOptions& opt) {
  const Corpus corpus = load_run_corpus(run);
  const uint64_t init_seed = stage_seed(cfg, SeedStream::kArInit);
  ArModel ar(cfg.ar, init_seed);
  AdamState adam;
  const int64_t start = maybe_resume(ar, adam, run.checkpoint("ar"), opt.resume, opt.progress);
  StageIo io;
  open_stage(io, run, "ar", ar, init_seed, start > 0);
  const auto s = train_ar(ar, adam, start, corpus.train, cfg.ar_train,
                          stage_seed(cfg, SeedStream::kArTrain), io.hooks);
  if (start >= cfg.ar_train.optim.steps) io.hooks.checkpoint(start, adam);
  report_summary(opt.progress, "ar", s);
  return s;
}

TrainSummary run_train_gradnet(const RunPaths& run, const RunConfig& cfg, GradNetKind kind,
                               const TrainOptions& opt) {
  const Corpus corpus = load_run_corpus(run);
  const fs::path lvm_path = run.checkpoint("lvm");
  if (!fs::exists(lvm_path)) throw Error("missing checkpoint " + lvm_path.string() + "; run train-lvm first");
  const Lvm lvm = load_lvm(lvm_path);
  GradNetConfig gc = cfg.gradnet;
  gc.kind = kind;
  const std::string name = gradnet_model_name(kind);
  // Each kind gets its own stream so both can be trained from one config.
  const uint64_t init_seed = Rng(stage_seed(cfg, SeedStream::kGradNetInit)).split(static_cast<uint64_t>(kind)).next_u64();
  GradNet net(gc, init_seed);
  AdamState adam;
  const int64_t start = maybe_resume(net, adam, run.checkpoint(name), opt.resume, opt.progress);
  StageIo io;
  open_stage(io, run, name, net, init_seed, start > 0);
  const uint64_t train_seed = Rng(stage_seed(cfg, SeedStream::kGradNetTrain)).split(static_cast<uint64_t>(kind)).next_u64();
  const auto s = train_gradnet(net, adam, start, lvm, corpus.train, cfg.gradnet_train, train_seed, io.hooks);
  if (start >= cfg.gradnet_train.optim.steps) io.hooks.checkpoint(start, adam);
  report_summary(opt.progress, name, s);
  return s;
}

std::string trace_json_line(int64_t example, const TokenSeq& source, const DecodeResult& r) {
  nlohmann::json j;
  j["example"] = example;
  j["source"] = source;
  j["raw"] = r.raw;
  j["output"] = r.output;
  j["best"] = r.best;
  j["empty_output"] = r.empty_output;
  j["refine_ns"] = r.refine_ns;
  j["rescore_ns"] = r.rescore_ns;
  auto& cands = j["candidates"] = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    cands.push_back({{"length", c.length},
                     {"length_rank", c.length_rank},
                     {"init_index", c.init_index},
                     {"prior_mean", c.prior_mean},
                     {"raw", c.raw},
                     {"score", c.score},
                     {"procedure", to_string(c.trace.procedure)},
                     {"init_decoder_calls", c.trace.init_decoder_calls},
                     {"final_decoder_calls", c.trace.final_decoder_calls},
                     {"final_decode_ns", c.trace.final_decode_ns},
                     {"converged", c.trace.converged},
                     {"early_exit", c.trace.early_exit},
                     {"aborted_non_finite", c.trace.aborted_non_finite},
                     {"steps", trace_steps_json(c.trace)}});
  }
  return j.dump();
}

TranslateSummary run_translate(const RunPaths& run, const RunConfig& cfg,
                               const TranslateOptions& opt) {
  const fs::path input = opt.input.empty() ? run.data() / "test.src" : fs::path(opt.input);
  TranslateSummary out;
  out.output = opt.output.empty() ? run.outputs() / "translate.txt" : fs::path(opt.output);
  const fs::path stem = out.output.parent_path() / out.output.stem();
  out.trace = opt.trace.empty() ? fs::path(stem.string() + ".trace.jsonl") : fs::path(opt.trace);

  const fs::path lvm_path = opt.lvm.empty() ? run.checkpoint("lvm") : fs::path(opt.lvm);
  if (!fs::exists(lvm_path)) throw Error("missing checkpoint " + lvm_path.string());
  const Lvm lvm = load_lvm(lvm_path);

  std::unique_ptr<GradNet> net;
  std::unique_ptr<ScoreFromEnergy> wrapped;
  DecodeModels models{&lvm, nullptr, nullptr};
  const DecodeConfig& dc = cfg.decode;
  if (dc.procedure != DecodeProcedure::kDelta && dc.steps > 0) {
    const GradNetKind want =
        dc.procedure == DecodeProcedure::kScore ? GradNetKind::kScore : GradNetKind::kEnergy;
    const fs::path path = opt.gradnet.empty() ? run.checkpoint(gradnet_model_name(want)) : fs::path(opt.gradnet);
    if (!fs::exists(path)) throw Error("missing checkpoint " + path.string());
    net = load_gradnet_if(path);
    if (net->kind() == want) {
      models.field = net.get();
    } else if (want == GradNetKind::kScore) {
      wrapped = std::make_unique<ScoreFromEnergy>(*net);
      models.field = wrapped.get();
    } else {
      throw Error("energy refinement needs an energy network, " + path.string() + " holds a score network");
    }
  }
  std::unique_ptr<ArModel> ar;
  if (dc.length_candidates * dc.latent_samples > 1) {
    const fs::path path = opt.ar.empty() ? run.checkpoint("ar") : fs::path(opt.ar);
    if (!fs::exists(path)) throw Error("missing checkpoint " + path.string() + " (needed to rescore candidates)");
    ar = std::make_unique<ArModel>(ArModel::from_checkpoint(load_checkpoint(path.string())));
    models.ar = ar.get();
  }

  const auto sources = read_sequences(input.string());
  ensure_dir(out.output.parent_path().empty() ? fs::path(".") : out.output.parent_path());
  std::vector<TokenSeq> outputs, raws;
  std::ofstream trace(out.trace, std::ios::trunc);
  if (!trace) throw Error("cannot open trace file " + out.trace.string());
  for (size_t i = 0; i < sources.size(); ++i) {
    try {
      out.results.push_back(decode_pipeline(sources[i], models, dc));
    } catch (const Error& e) {
      throw Error(input.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    outputs.push_back(out.results.back().output);
    raws.push_back(out.results.back().raw);
    trace << trace_json_line(static_cast<int64_t>(i), sources[i], out.results.back()) << "\n";
  }
  write_sequences(out.output.string(), outputs);
  write_sequences(stem.string() + ".raw.txt", raws);
  write_text_file(stem.string() + ".config.json", dump_run_config(cfg));
  return out;
}

StepReport run_eval(const RunPaths& run, const RunConfig& cfg) {
  const fs::path lvm_path = run.checkpoint("lvm");
  if (!fs::exists(lvm_path)) throw Error("missing checkpoint " + lvm_path.string());
  const Lvm lvm = load_lvm(lvm_path);
  const Corpus corpus = load_run_corpus(run);
  ReportModels models{&lvm, nullptr, nullptr};
  std::unique_ptr<GradNet> score, energy;
  std::unique_ptr<ScoreFromEnergy> wrapped;
  for (DecodeProcedure p : cfg.eval.procedures) {
    if (p == DecodeProcedure::kScore && !models.score) {
      score = load_gradnet_if(run.checkpoint(gradnet_model_name(GradNetKind::kScore)));
      if (score) {
        models.score = score.get();
      } else if ((energy = load_gradnet_if(run.checkpoint(gradnet_model_name(GradNetKind::kEnergy))))) {
        wrapped = std::make_unique<ScoreFromEnergy>(*energy);
        models.score = wrapped.get();
      } else {
        throw Error("score evaluation needs " + run.checkpoint(gradnet_model_name(GradNetKind::kScore)).string());
      }
    }
    if (p == DecodeProcedure::kEnergy && !models.energy) {
      if (!energy) energy = load_gradnet_if(run.checkpoint(gradnet_model_name(GradNetKind::kEnergy)));
      if (!energy) {
        throw Error("energy evaluation needs " + run.checkpoint(gradnet_model_name(GradNetKind::kEnergy)).string());
      }
      models.energy = energy.get();
    }
  }
  StepReport rep = step_report(corpus.test, models, cfg.eval, cfg.decode, stage_seed(cfg, SeedStream::kEval));
  ensure_dir(run.reports());
  write_text_file(run.reports() / "step_report.csv", step_report_csv(rep));
  write_text_file(run.reports() / "step_report.json", step_report_json(rep));
  write_text_file(run.reports() / "eval.config.json", dump_run_config(cfg));
  return rep;
}

GradFieldGrid run_gradfield(const RunPaths& run, const RunConfig& cfg, const GradFieldOptions& opt) {
  const fs::path lvm_path = run.checkpoint("lvm");
  if (!fs::exists(lvm_path)) throw Error("missing checkpoint " + lvm_path.string());
  const Lvm lvm = load_lvm(lvm_path);
  const fs::path net_path = run.checkpoint(gradnet_model_name(opt.kind));
  auto net = load_gradnet_if(net_path);
  if (!net) throw Error("missing checkpoint " + net_path.string());
  TokenSeq x;
  if (opt.source) {
    x = *opt.source;
  } else {
    const auto sources = read_sequences((run.data() / "test.src").string());
    if (opt.example < 0 || opt.example >= static_cast<int64_t>(sources.size())) {
      throw Error("gradfield: example index " + std::to_string(opt.example) + " out of range");
    }
    x = sources[static_cast<size_t>(opt.example)];
  }
  GradFieldGrid g = gradfield_export(lvm, *net, x, cfg.gradfield, cfg.decode);
  const fs::path out = opt.output.empty() ? run.reports() / "gradfield.json" : fs::path(opt.output);
  ensure_dir(out.parent_path().empty() ? fs::path(".") : out.parent_path());
  write_text_file(out, gradfield_to_json(g));
  write_text_file(out.parent_path() / (out.stem().string() + ".config.json"), dump_run_config(cfg));
  return g;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

namespace {

bool is_timing_key(const std::string& k) {
  return k == "wall_time" || (k.size() > 3 && k.compare(k.size() - 3, 3, "_ns") == 0);
}

void strip_timing(nlohmann::json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end();) {
      if (is_timing_key(it.key())) {
        it = j.erase(it);
      } else {
        strip_timing(*it);
        ++it;
      }
    }
  } else if (j.is_array()) {
    for (auto& e : j) strip_timing(e);
  }
}

}  // namespace

std::string canonical_artifact(const fs::path& path) {
  const std::string text = read_text_file(path);
  const std::string ext = path.extension().string();
  if (ext == ".json") {
    auto j = nlohmann::json::parse(text);
    strip_timing(j);
    return j.dump();
  }
  if (ext == ".jsonl") {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      strip_timing(j);
      out += j.dump() + "\n";
    }
    return out;
  }
  return text;
}

std::map<std::string, std::string> run_artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    out[fs::relative(e.path(), root).generic_string()] = canonical_artifact(e.path());
  }
  return out;
}

}  // namespace latref
