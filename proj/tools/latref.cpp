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

// Command-line entry point. Every subcommand works on a run directory; see
// latref/workbench.hpp for its layout and docs/config_schema.md for keys.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latref/oracles.hpp"
#include "latref/tokens.hpp"
#include "latref/workbench.hpp"

namespace {

using namespace latref;

struct CommonFlags {
  std::string run_dir;
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  bool force = false;
};

void add_common(CLI::App* sub, CommonFlags& f, bool run_dir_required = true) {
  auto* rd = sub->add_option("--run-dir", f.run_dir,
                             "Run directory holding config.json, data/, checkpoints/, logs/, "
                             "outputs/ and reports/");
  if (run_dir_required) rd->required();
  sub->add_option("--config", f.config,
                  "RunConfig JSON to start from (default: <run-dir>/config.json, else built-in "
                  "defaults)");
  sub->add_option("--set", f.overrides,
                  "Override a config key, e.g. --set lvm.d_latent=2 (repeatable; value parsed "
                  "as JSON, else as a string)");
  sub->add_option("--seed", f.seed, "Override the run seed (RunConfig.seed)");
  sub->add_flag("--force", f.force,
                "Replace <run-dir>/config.json when it differs from the effective config");
}

RunConfig base_config(const CommonFlags& f) {
  return resolve_config(RunPaths{f.run_dir}, f.config, f.overrides, f.seed);
}

// Stages that create artifacts pin the run directory's config.
RunConfig pinned_config(const CommonFlags& f) {
  RunConfig cfg = base_config(f);
  persist_config(RunPaths{f.run_dir}, cfg, f.force);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latref: latent-variable sequence models with iterative latent refinement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "latref 0.1.0");

  // gen-data
  CommonFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic train/dev/test corpus into <run-dir>/data");
  add_common(gen_cmd, gen);

  // train-*
  CommonFlags tl, ta, tg;
  bool resume_lvm = false, resume_ar = false, resume_gn = false;
  std::string gn_kind;
  auto* tl_cmd = app.add_subcommand("train-lvm", "Train the latent-variable model on <run-dir>/data/train");
  add_common(tl_cmd, tl);
  tl_cmd->add_flag("--resume", resume_lvm, "Continue from checkpoints/lvm.ckpt when present");
  auto* ta_cmd = app.add_subcommand("train-ar", "Train the autoregressive rescorer");
  add_common(ta_cmd, ta);
  ta_cmd->add_flag("--resume", resume_ar, "Continue from checkpoints/ar.ckpt when present");
  auto* tg_cmd = app.add_subcommand("train-gradnet", "Train an energy or score inference network against checkpoints/lvm.ckpt");
  add_common(tg_cmd, tg);
  tg_cmd->add_option("--kind", gn_kind, "Network kind: energy or score (default: gradnet.kind)")
      ->check(CLI::IsMember({"energy", "score"}));
  tg_cmd->add_flag("--resume", resume_gn, "Continue from checkpoints/gradnet-<kind>.ckpt when present");

  // translate
  CommonFlags tr;
  TranslateOptions tro;
  std::optional<std::string> procedure, init, termination;
  std::optional<int64_t> steps, length_cands, n_w;
  std::optional<double> alpha;
  std::optional<uint64_t> decode_seed;
  std::optional<bool> include_mean;
  auto* tr_cmd = app.add_subcommand("translate", "Decode source sequences (one whitespace-separated token sequence per line)");
  add_common(tr_cmd, tr);
  tr_cmd->add_option("--procedure", procedure, "Refinement procedure: delta, energy or score (decode.procedure)")
      ->check(CLI::IsMember({"delta", "energy", "score"}));
  tr_cmd->add_option("--L", steps, "Refinement steps L (decode.steps)");
  tr_cmd->add_option("--alpha", alpha, "Step size for energy/score updates (decode.alpha)");
  tr_cmd->add_option("--l", length_cands, "Number of length candidates l (decode.length_candidates)");
  tr_cmd->add_option("--n-w", n_w, "Latent inits per length n_w (decode.latent_samples)");
  tr_cmd->add_option("--init", init, "Latent init: prior_mean or prior_sample (decode.init)")
      ->check(CLI::IsMember({"prior_mean", "prior_sample"}));
  tr_cmd->add_option("--include-prior-mean", include_mean,
                     "With prior_sample init, also refine the prior mean (decode.include_prior_mean)");
  tr_cmd->add_option("--termination", termination, "fixed_steps or converged (decode.termination)")
      ->check(CLI::IsMember({"fixed_steps", "converged"}));
  tr_cmd->add_option("--decode-seed", decode_seed, "Seed for prior samples (decode.seed)");
  tr_cmd->add_option("--input", tro.input, "Source file (default: <run-dir>/data/test.src)");
  tr_cmd->add_option("--output", tro.output,
                     "Postprocessed output file (default: <run-dir>/outputs/translate.txt); raw "
                     "winners, trace and config are written beside it");
  tr_cmd->add_option("--trace", tro.trace, "Trace JSON-lines file (default: <output stem>.trace.jsonl)");
  tr_cmd->add_option("--lvm", tro.lvm, "LVM checkpoint (default: <run-dir>/checkpoints/lvm.ckpt)");
  tr_cmd->add_option("--gradnet", tro.gradnet,
                     "Inference network checkpoint (default: <run-dir>/checkpoints/gradnet-<kind>.ckpt); "
                     "an energy network also serves the score procedure");
  tr_cmd->add_option("--ar", tro.ar, "Rescorer checkpoint (default: <run-dir>/checkpoints/ar.ckpt); needed when l * n_w > 1");

  // eval
  CommonFlags ev;
  std::optional<int64_t> is_samples, max_examples;
  std::vector<int64_t> steps_list;
  std::vector<std::string> procedures;
  bool score_refs = false;
  auto* ev_cmd = app.add_subcommand("eval", "Per-step report on <run-dir>/data/test: marginal log-prob, edit distance, repetitions, token accuracy, BLEU, proxy bound");
  add_common(ev_cmd, ev);
  ev_cmd->add_option("--is-samples", is_samples, "Importance samples per estimate (eval.is_samples)");
  ev_cmd->add_option("--max-examples", max_examples, "Evaluate the first N test examples, 0 = all (eval.max_examples)");
  ev_cmd->add_option("--steps-list", steps_list, "Refinement step counts to report (eval.steps_list)");
  ev_cmd->add_option("--procedures", procedures, "Procedures to evaluate (eval.procedures)")
      ->check(CLI::IsMember({"delta", "energy", "score"}));
  ev_cmd->add_flag("--score-references", score_refs,
                   "Estimate the marginal of the references instead of the outputs (eval.score_references)");

  // gradfield
  CommonFlags gf;
  GradFieldOptions gfo;
  std::string gf_kind = "score", gf_source;
  std::optional<int64_t> gf_position, gf_resolution, gf_steps;
  std::optional<double> gf_extent;
  auto* gf_cmd = app.add_subcommand("gradfield", "Export a 2-D slice of the refinement field with trajectories (needs lvm.d_latent = 2)");
  add_common(gf_cmd, gf);
  gf_cmd->add_option("--example", gfo.example, "Index into <run-dir>/data/test.src (default 0)");
  gf_cmd->add_option("--source", gf_source, "Source tokens, e.g. \"5 9 12 4\" (overrides --example)");
  gf_cmd->add_option("--kind", gf_kind, "Network to visualize: score or energy (default score)")
      ->check(CLI::IsMember({"energy", "score"}));
  gf_cmd->add_option("--position", gf_position, "Token position whose latent varies (gradfield.position)");
  gf_cmd->add_option("--resolution", gf_resolution, "Grid cells per axis (gradfield.resolution)");
  gf_cmd->add_option("--extent-std", gf_extent, "Half-width in prior standard deviations (gradfield.extent_std)");
  gf_cmd->add_option("--L", gf_steps, "Trajectory steps (gradfield.steps)");
  gf_cmd->add_option("--output", gfo.output, "Output JSON (default: <run-dir>/reports/gradfield.json)");

  // selftest
  uint64_t st_seed = 20260;
  auto* st_cmd = app.add_subcommand("selftest", "Run the finite-difference, enumeration and quadrature oracle suites; no checkpoints needed");
  st_cmd->add_option("--seed", st_seed, "Seed for the randomized oracle cases");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      const RunConfig cfg = pinned_config(gen);
      const Corpus c = run_gen_data(RunPaths{gen.run_dir}, cfg);
      std::cout << "wrote " << c.train.size() << " train, " << c.dev.size() << " dev, " << c.test.size()
                << " test pairs to " << RunPaths{gen.run_dir}.data().string() << "\n";
    } else if (*tl_cmd) {
      run_train_lvm(RunPaths{tl.run_dir}, pinned_config(tl), {resume_lvm, &std::cout});
    } else if (*ta_cmd) {
      run_train_ar(RunPaths{ta.run_dir}, pinned_config(ta), {resume_ar, &std::cout});
    } else if (*tg_cmd) {
      const RunConfig cfg = pinned_config(tg);
      const GradNetKind kind = gn_kind.empty() ? cfg.gradnet.kind : parse_gradnet_kind(gn_kind);
      run_train_gradnet(RunPaths{tg.run_dir}, cfg, kind, {resume_gn, &std::cout});
    } else if (*tr_cmd) {
      RunConfig cfg = base_config(tr);
      DecodeConfig& d = cfg.decode;
      if (procedure) d.procedure = parse_procedure(*procedure);
      if (steps) d.steps = *steps;
      if (alpha) d.alpha = *alpha;
      if (length_cands) d.length_candidates = *length_cands;
      if (n_w) d.latent_samples = *n_w;
      if (init) d.init = parse_init(*init);
      if (include_mean) d.include_prior_mean = *include_mean;
      if (termination) d.termination = *termination == "converged" ? Termination::kConverged : Termination::kFixedSteps;
      if (decode_seed) d.seed = *decode_seed;
      const auto s = run_translate(RunPaths{tr.run_dir}, cfg, tro);
      std::cout << "decoded " << s.results.size() << " sequences to " << s.output.string() << "\n";
    } else if (*ev_cmd) {
      RunConfig cfg = base_config(ev);
      if (is_samples) cfg.eval.is_samples = *is_samples;
      if (max_examples) cfg.eval.max_examples = *max_examples;
      if (!steps_list.empty()) cfg.eval.steps_list = steps_list;
      if (!procedures.empty()) {
        cfg.eval.procedures.clear();
        for (const auto& p : procedures) cfg.eval.procedures.push_back(parse_procedure(p));
      }
      if (score_refs) cfg.eval.score_references = true;
      const StepReport rep = run_eval(RunPaths{ev.run_dir}, cfg);
      std::cout << step_report_csv(rep);
      for (const auto& e : rep.excluded) std::cerr << "excluded " << e << "\n";
    } else if (*gf_cmd) {
      RunConfig cfg = base_config(gf);
      if (gf_position) cfg.gradfield.position = *gf_position;
      if (gf_resolution) cfg.gradfield.resolution = *gf_resolution;
      if (gf_extent) cfg.gradfield.extent_std = *gf_extent;
      if (gf_steps) cfg.gradfield.steps = *gf_steps;
      gfo.kind = parse_gradnet_kind(gf_kind);
      if (!gf_source.empty()) gfo.source = parse_tokens(gf_source);
      const GradFieldGrid g = run_gradfield(RunPaths{gf.run_dir}, cfg, gfo);
      std::cout << "exported " << g.resolution() << "x" << g.resolution() << " field at position "
                << g.position << "\n";
    } else if (*st_cmd) {
      bool ok = true;
      for (const auto& c : selftest_checks(st_seed)) {
        std::printf("%s  %-48s value=%.3e tol=%.1e %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                    c.value, c.tolerance, c.detail.c_str());
        ok = ok && c.pass;
      }
      std::printf("selftest %s\n", ok ? "passed" : "FAILED");
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
