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

// Python module _latref: configuration, run-directory stages, decoding with
// trained checkpoints, metrics and the oracle suites.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>

#include "latref/ar.hpp"
#include "latref/checkpoint.hpp"
#include "latref/eval.hpp"
#include "latref/gradnet.hpp"
#include "latref/inference.hpp"
#include "latref/oracles.hpp"
#include "latref/tokens.hpp"
#include "latref/workbench.hpp"

namespace py = pybind11;
using namespace latref;

namespace {

RunConfig config_from(const std::optional<std::string>& json, const std::vector<std::string>& overrides) {
  return apply_overrides(json ? parse_run_config(*json) : RunConfig{}, overrides);
}

py::dict candidate_dict(const Candidate& c) {
  py::dict d;
  d["length"] = c.raw.size();
  d["prior_mean"] = c.prior_mean;
  d["raw"] = c.raw;
  d["score"] = c.score;
  return d;
}

py::dict result_dict(const DecodeResult& r) {
  py::dict d;
  d["raw"] = r.raw;
  d["output"] = r.output;
  d["empty_output"] = r.empty_output;
  py::list cands;
  for (const auto& c : r.candidates) cands.append(candidate_dict(c));
  d["candidates"] = cands;
  return d;
}

py::dict train_dict(const TrainSummary& s) {
  py::dict d;
  d["last_step"] = s.last_step;
  d["skipped_steps"] = s.skipped_steps;
  d["losses"] = s.losses;
  return d;
}

py::list checks_list(const std::vector<OracleCheck>& checks) {
  py::list out;
  for (const auto& c : checks) {
    py::dict d;
    d["name"] = c.name;
    d["value"] = c.value;
    d["tolerance"] = c.tolerance;
    d["pass"] = c.pass;
    d["detail"] = c.detail;
    out.append(d);
  }
  return out;
}

// Trained models loaded from checkpoint files.
class Decoder {
 public:
  Decoder(const std::string& lvm, const std::string& gradnet, const std::string& ar)
      : lvm_(Lvm::from_checkpoint(load_checkpoint(lvm))) {
    if (!gradnet.empty()) gradnet_ = std::make_unique<GradNet>(GradNet::from_checkpoint(load_checkpoint(gradnet)));
    if (!ar.empty()) ar_ = std::make_unique<ArModel>(ArModel::from_checkpoint(load_checkpoint(ar)));
    if (gradnet_ && gradnet_->kind() == GradNetKind::kEnergy) {
      score_from_energy_ = std::make_unique<ScoreFromEnergy>(*gradnet_);
    }
  }

  DecodeResult translate(const TokenSeq& x, const DecodeConfig& cfg) const {
    DecodeModels m;
    m.lvm = &lvm_;
    m.ar = ar_.get();
    m.field = gradnet_.get();
    if (cfg.procedure == DecodeProcedure::kScore && score_from_energy_) m.field = score_from_energy_.get();
    return decode_pipeline(x, m, cfg);
  }

  py::dict refine_trace(const TokenSeq& x, const DecodeConfig& cfg) const {
    DecodeConfig one = cfg;
    one.length_candidates = 1;
    one.latent_samples = 1;
    const DecodeResult r = translate(x, one);
    const RefinementTrace& t = r.candidates.at(0).trace;
    py::list steps;
    for (const auto& s : t.steps) {
      py::dict d;
      d["tokens"] = s.tokens;
      d["z"] = s.z.data;
      d["max_abs_update"] = s.max_abs_update;
      steps.append(d);
    }
    py::dict d;
    d["procedure"] = to_string(t.procedure);
    d["init"] = t.init.data;
    d["init_tokens"] = t.init_tokens;
    d["steps"] = steps;
    d["converged"] = t.converged;
    d["early_exit"] = t.early_exit;
    d["aborted_non_finite"] = t.aborted_non_finite;
    return d;
  }

  int64_t d_latent() const { return lvm_.config().d_latent; }

 private:
  Lvm lvm_;
  std::unique_ptr<GradNet> gradnet_;
  std::unique_ptr<ArModel> ar_;
  std::unique_ptr<ScoreFromEnergy> score_from_energy_;
};

}  // namespace

PYBIND11_MODULE(_latref, m) {
  m.doc() = "Latent refinement for non-autoregressive sequence models";

  py::register_exception<Error>(m, "LatrefError", PyExc_ValueError);

  m.def("default_config", [] { return dump_run_config(RunConfig{}); },
        "Default run configuration as JSON text");
  m.def(
      "make_config",
      [](const std::optional<std::string>& json, const std::vector<std::string>& overrides) {
        return dump_run_config(config_from(json, overrides));
      },
      py::arg("json") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      "Validate a configuration, apply key.path=value overrides and return canonical JSON");

  m.def(
      "init_run",
      [](const std::string& run_dir, const std::optional<std::string>& json,
         const std::vector<std::string>& overrides, std::optional<uint64_t> seed, bool force) {
        const RunPaths run{run_dir};
        RunConfig cfg = config_from(json, overrides);
        if (seed) cfg.seed = *seed;
        persist_config(run, cfg, force);
        return dump_run_config(cfg);
      },
      py::arg("run_dir"), py::arg("json") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      py::arg("seed") = py::none(), py::arg("force") = false,
      "Write <run_dir>/config.json; refuses to change an existing one unless force");

  auto stage_config = [](const std::string& run_dir) {
    return resolve_config(RunPaths{run_dir}, std::nullopt, {}, std::nullopt);
  };

  m.def("gen_data", [=](const std::string& run_dir) {
    const Corpus c = run_gen_data(RunPaths{run_dir}, stage_config(run_dir));
    return py::make_tuple(c.train.size(), c.dev.size(), c.test.size());
  });
  m.def(
      "train_lvm",
      [=](const std::string& run_dir, bool resume) {
        TrainOptions opt;
        opt.resume = resume;
        return train_dict(run_train_lvm(RunPaths{run_dir}, stage_config(run_dir), opt));
      },
      py::arg("run_dir"), py::arg("resume") = false);
  m.def(
      "train_ar",
      [=](const std::string& run_dir, bool resume) {
        TrainOptions opt;
        opt.resume = resume;
        return train_dict(run_train_ar(RunPaths{run_dir}, stage_config(run_dir), opt));
      },
      py::arg("run_dir"), py::arg("resume") = false);
  m.def(
      "train_gradnet",
      [=](const std::string& run_dir, const std::string& kind, bool resume) {
        TrainOptions opt;
        opt.resume = resume;
        return train_dict(run_train_gradnet(RunPaths{run_dir}, stage_config(run_dir), parse_gradnet_kind(kind), opt));
      },
      py::arg("run_dir"), py::arg("kind") = "score", py::arg("resume") = false);
  m.def(
      "translate",
      [=](const std::string& run_dir, const std::vector<std::string>& overrides, const std::string& output) {
        TranslateOptions opt;
        opt.output = output;
        const TranslateSummary s = run_translate(RunPaths{run_dir}, apply_overrides(stage_config(run_dir), overrides), opt);
        py::list out;
        for (const auto& r : s.results) out.append(result_dict(r));
        return out;
      },
      py::arg("run_dir"), py::arg("overrides") = std::vector<std::string>{}, py::arg("output") = "",
      "Decode <run_dir>/data/test.src; overrides apply to this call only");
  m.def(
      "evaluate",
      [=](const std::string& run_dir, const std::vector<std::string>& overrides) {
        return step_report_json(run_eval(RunPaths{run_dir}, apply_overrides(stage_config(run_dir), overrides)));
      },
      py::arg("run_dir"), py::arg("overrides") = std::vector<std::string>{},
      "Per-step report as JSON text (also written under <run_dir>/reports)");
  m.def(
      "gradfield",
      [=](const std::string& run_dir, int64_t example, const std::string& kind) {
        GradFieldOptions opt;
        opt.example = example;
        opt.kind = parse_gradnet_kind(kind);
        return gradfield_to_json(run_gradfield(RunPaths{run_dir}, stage_config(run_dir), opt));
      },
      py::arg("run_dir"), py::arg("example") = 0, py::arg("kind") = "score");
  m.def(
      "run_artifacts",
      [](const std::string& root) {
        py::dict out;
        for (const auto& [k, v] : run_artifacts(root)) out[py::str(k)] = py::bytes(v);
        return out;
      },
        "Run-directory files keyed by relative path, with wall-clock fields removed");

  py::class_<Decoder>(m, "Decoder")
      .def(py::init<const std::string&, const std::string&, const std::string&>(), py::arg("lvm"),
           py::arg("gradnet") = "", py::arg("ar") = "")
      .def(
          "translate",
          [](const Decoder& d, const TokenSeq& x, const std::vector<std::string>& overrides) {
            return result_dict(d.translate(x, apply_overrides(RunConfig{}, overrides).decode));
          },
          py::arg("source"), py::arg("overrides") = std::vector<std::string>{},
          "Decode one source sequence; overrides use decode.* keys")
      .def(
          "trace",
          [](const Decoder& d, const TokenSeq& x, const std::vector<std::string>& overrides) {
            return d.refine_trace(x, apply_overrides(RunConfig{}, overrides).decode);
          },
          py::arg("source"), py::arg("overrides") = std::vector<std::string>{},
          "Refinement trace of the single prior-mean candidate")
      .def_property_readonly("d_latent", &Decoder::d_latent);

  m.def("edit_distance", &edit_distance);
  m.def("repetition_count", &repetition_count);
  m.def("remove_repetitions", &remove_repetitions);
  m.def("token_accuracy", &token_accuracy);
  m.def("bleu", [](const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) { return bleu(hyps, refs); });

  m.def("selftest", [](uint64_t seed) { return checks_list(selftest_checks(seed)); }, py::arg("seed") = 0);
  m.def("objective_identity_suite",
        [](int64_t n, uint64_t seed) { return checks_list(objective_identity_suite(n, seed)); },
        py::arg("n") = 100, py::arg("seed") = 0);
  m.def("toy_quadrature_log_marginal", [](int n) { return ToyMarginalInstance{}.quadrature_log_marginal(n); },
        py::arg("n") = 80);
  m.def(
      "toy_importance_sample",
      [](int64_t n, uint64_t seed) {
        const MarginalEstimate e = importance_sample(ToyMarginalInstance{}.problem(), n, seed);
        return py::make_tuple(e.value, e.ess);
      },
      py::arg("n"), py::arg("seed") = 0);
}
