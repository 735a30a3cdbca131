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

#include "latref/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"
#include "latref/tensor.hpp"

namespace latref {

using nlohmann::json;

std::string to_string(GradNetKind k) { return k == GradNetKind::kEnergy ? "energy" : "score"; }

std::string to_string(DecodeProcedure p) {
  switch (p) {
    case DecodeProcedure::kDelta: return "delta";
    case DecodeProcedure::kEnergy: return "energy";
    case DecodeProcedure::kScore: return "score";
  }
  return "?";
}

std::string to_string(LatentInit i) {
  return i == LatentInit::kPriorMean ? "prior_mean" : "prior_sample";
}

std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kSort: return "sort";
    case TaskKind::kCipher: return "cipher";
  }
  return "?";
}

static std::string to_string(Termination t) {
  return t == Termination::kFixedSteps ? "fixed_steps" : "converged";
}

GradNetKind parse_gradnet_kind(const std::string& s) {
  if (s == "energy") return GradNetKind::kEnergy;
  if (s == "score") return GradNetKind::kScore;
  throw Error("unknown gradnet kind '" + s + "' (expected energy|score)");
}

DecodeProcedure parse_procedure(const std::string& s) {
  if (s == "delta") return DecodeProcedure::kDelta;
  if (s == "energy") return DecodeProcedure::kEnergy;
  if (s == "score") return DecodeProcedure::kScore;
  throw Error("unknown procedure '" + s + "' (expected delta|energy|score)");
}

LatentInit parse_init(const std::string& s) {
  if (s == "prior_mean") return LatentInit::kPriorMean;
  if (s == "prior_sample") return LatentInit::kPriorSample;
  throw Error("unknown init '" + s + "' (expected prior_mean|prior_sample)");
}

TaskKind parse_task(const std::string& s) {
  if (s == "copy") return TaskKind::kCopy;
  if (s == "reverse") return TaskKind::kReverse;
  if (s == "sort") return TaskKind::kSort;
  if (s == "cipher") return TaskKind::kCipher;
  throw Error("unknown task '" + s + "' (expected copy|reverse|sort|cipher)");
}

static Termination parse_termination(const std::string& s) {
  if (s == "fixed_steps") return Termination::kFixedSteps;
  if (s == "converged") return Termination::kConverged;
  throw Error("unknown termination '" + s + "' (expected fixed_steps|converged)");
}

namespace {

template <typename V> void visit(V& v, LvmConfig& c) {
  v.field("vocab", c.vocab);
  v.field("d_latent", c.d_latent);
  v.field("d_model", c.d_model);
  v.field("d_filter", c.d_filter);
  v.field("n_layers", c.n_layers);
  v.field("n_heads", c.n_heads);
  v.field("t_max", c.t_max);
  v.field("len_offset_max", c.len_offset_max);
  v.field("log_std_min", c.log_std_min);
  v.field("log_std_max", c.log_std_max);
}

template <typename V> void visit(V& v, GradNetConfig& c) {
  v.enumeration("kind", c.kind, parse_gradnet_kind);
  v.field("d_latent", c.d_latent);
  v.field("d_model", c.d_model);
  v.field("d_filter", c.d_filter);
  v.field("n_layers", c.n_layers);
  v.field("n_heads", c.n_heads);
  v.field("d_source", c.d_source);
}

template <typename V> void visit(V& v, ArConfig& c) {
  v.field("vocab", c.vocab);
  v.field("d_model", c.d_model);
  v.field("d_filter", c.d_filter);
  v.field("n_layers", c.n_layers);
  v.field("n_heads", c.n_heads);
  v.field("t_max", c.t_max);
  v.field("beam", c.beam);
}

template <typename V> void visit(V& v, OptimConfig& c) {
  v.field("steps", c.steps);
  v.field("batch_size", c.batch_size);
  v.field("lr", c.lr);
  v.field("warmup", c.warmup);
  v.field("log_every", c.log_every);
  v.field("checkpoint_every", c.checkpoint_every);
}

template <typename V> void visit(V& v, LvmTrainConfig& c) {
  v.nested("optim", c.optim);
  v.field("length_loss_weight", c.length_loss_weight);
  v.field("kl_free_nats", c.kl_free_nats);
  v.field("distill_from_ar", c.distill_from_ar);
}

template <typename V> void visit(V& v, GradNetTrainConfig& c) {
  v.nested("optim", c.optim);
  v.field("delta_steps", c.delta_steps);
  v.field("pre_update_prob", c.pre_update_prob);
  v.field("pre_update_alpha", c.pre_update_alpha);
  v.field("samples_per_source", c.samples_per_source);
}

template <typename V> void visit(V& v, ArTrainConfig& c) { v.nested("optim", c.optim); }

template <typename V> void visit(V& v, DecodeConfig& c) {
  v.enumeration("procedure", c.procedure, parse_procedure);
  v.field("steps", c.steps);
  v.field("alpha", c.alpha);
  v.enumeration("init", c.init, parse_init);
  v.field("length_candidates", c.length_candidates);
  v.field("latent_samples", c.latent_samples);
  v.field("include_prior_mean", c.include_prior_mean);
  v.field("seed", c.seed);
  v.enumeration("termination", c.termination, parse_termination);
  v.field("converge_eps", c.converge_eps);
}

template <typename V> void visit(V& v, EvalConfig& c) {
  v.field("is_samples", c.is_samples);
  v.field("steps_list", c.steps_list);
  v.enum_list("procedures", c.procedures, parse_procedure);
  v.field("score_references", c.score_references);
  v.field("max_examples", c.max_examples);
}

template <typename V> void visit(V& v, TaskSpec& c) {
  v.enumeration("task", c.task, parse_task);
  v.field("vocab", c.vocab);
  v.field("min_len", c.min_len);
  v.field("max_len", c.max_len);
  v.field("n_train", c.n_train);
  v.field("n_dev", c.n_dev);
  v.field("n_test", c.n_test);
  v.field("cipher_keys", c.cipher_keys);
  v.field("cipher_key_tokens", c.cipher_key_tokens);
  v.field("seed", c.seed);
}

template <typename V> void visit(V& v, GradFieldConfig& c) {
  v.field("position", c.position);
  v.field("resolution", c.resolution);
  v.field("extent_std", c.extent_std);
  v.field("steps", c.steps);
}

template <typename V> void visit(V& v, RunConfig& c) {
  v.field("format_version", c.format_version);
  v.field("seed", c.seed);
  v.nested("task", c.task);
  v.nested("lvm", c.lvm);
  v.nested("gradnet", c.gradnet);
  v.nested("ar", c.ar);
  v.nested("lvm_train", c.lvm_train);
  v.nested("gradnet_train", c.gradnet_train);
  v.nested("ar_train", c.ar_train);
  v.nested("decode", c.decode);
  v.nested("eval", c.eval);
  v.nested("gradfield", c.gradfield);
}

class JsonReader {
 public:
  JsonReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error("config: expected an object at '" + where() + "'");
  }

  template <typename T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = convert<T>(*it);
    } catch (const json::exception&) {
      throw Error("config: wrong type for key '" + child(key) + "'");
    }
  }

  template <typename E, typename Parse>
  void enumeration(const char* key, E& out, Parse parse) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_string()) throw Error("config: expected a string for key '" + child(key) + "'");
    try {
      out = parse(it->template get<std::string>());
    } catch (const Error& e) {
      throw Error("config: key '" + child(key) + "': " + e.what());
    }
  }

  template <typename E, typename Parse>
  void enum_list(const char* key, std::vector<E>& out, Parse parse) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) throw Error("config: expected an array for key '" + child(key) + "'");
    out.clear();
    for (const auto& e : *it) {
      if (!e.is_string()) throw Error("config: expected strings in '" + child(key) + "'");
      try {
        out.push_back(parse(e.template get<std::string>()));
      } catch (const Error& err) {
        throw Error("config: key '" + child(key) + "': " + err.what());
      }
    }
  }

  template <typename S>
  void nested(const char* key, S& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    JsonReader sub(*it, child(key));
    visit(sub, out);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw Error("config: unknown key '" + child(it.key()) + "'");
    }
  }

 private:
  template <typename T>
  static T convert(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw json::type_error::create(302, "bool", &v);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw json::type_error::create(302, "int", &v);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw json::type_error::create(302, "number", &v);
    }
    return v.get<T>();
  }
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class JsonWriter {
 public:
  template <typename T>
  void field(const char* key, T& v) {
    out[key] = v;
  }
  template <typename E, typename Parse>
  void enumeration(const char* key, E& v, Parse) {
    out[key] = to_string(v);
  }
  template <typename E, typename Parse>
  void enum_list(const char* key, std::vector<E>& v, Parse) {
    json arr = json::array();
    for (auto e : v) arr.push_back(to_string(e));
    out[key] = arr;
  }
  template <typename S>
  void nested(const char* key, S& v) {
    JsonWriter sub;
    visit(sub, v);
    out[key] = sub.out;
  }
  json out = json::object();
};

template <typename S>
S parse_struct(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: malformed JSON: ") + e.what());
  }
  S s;
  JsonReader r(j, "");
  visit(r, s);
  r.finish();
  return s;
}

template <typename S>
std::string dump_struct(const S& s) {
  S copy = s;
  JsonWriter w;
  visit(w, copy);
  return w.out.dump(2);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  auto cfg = parse_struct<RunConfig>(json_text);
  if (cfg.format_version != kConfigFormatVersion) {
    throw Error("config: key 'format_version': unsupported version " +
                std::to_string(cfg.format_version));
  }
  return cfg;
}

std::string dump_run_config(const RunConfig& cfg) { return dump_struct(cfg); }

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string lvm_config_json(const LvmConfig& cfg) { return dump_struct(cfg); }
LvmConfig parse_lvm_config(const std::string& t) { return parse_struct<LvmConfig>(t); }
std::string gradnet_config_json(const GradNetConfig& cfg) { return dump_struct(cfg); }
GradNetConfig parse_gradnet_config(const std::string& t) { return parse_struct<GradNetConfig>(t); }
std::string ar_config_json(const ArConfig& cfg) { return dump_struct(cfg); }
ArConfig parse_ar_config(const std::string& t) { return parse_struct<ArConfig>(t); }

}  // namespace latref
