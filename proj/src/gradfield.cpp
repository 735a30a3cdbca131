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

#include "latref/gradfield.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "latref/inference.hpp"

namespace latref {

namespace {

Point2 at(const LatentState& z, int64_t t) { return {z(t, 0), z(t, 1)}; }

Tensor direction(const LatentGradient& field, const LatentState& z, const Tensor& h) {
  if (field.kind() == GradNetKind::kScore) return field.score(z, h);
  Tensor g = field.energy_grad(z, h);
  for (auto& v : g.data) v = -v;
  return g;
}

nlohmann::json tensor_json(const Tensor& t) {
  return {{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  Tensor t;
  t.shape = j.at("shape").get<Shape>();
  t.data = j.at("data").get<std::vector<double>>();
  if (static_cast<int64_t>(t.data.size()) != shape_numel(t.shape)) {
    throw Error("gradfield: tensor payload does not match its shape");
  }
  return t;
}

}  // namespace

GradFieldGrid gradfield_export(const Lvm& lvm, const LatentGradient& field, const TokenSeq& x,
                               const GradFieldConfig& cfg, const DecodeConfig& decode) {
  if (lvm.config().d_latent != 2) {
    throw Error("gradfield: needs a 2-dimensional latent, checkpoint has d_latent = " +
                std::to_string(lvm.config().d_latent));
  }
  if (cfg.resolution < 2) throw Error("gradfield: resolution must be >= 2");
  if (!(cfg.extent_std > 0.0)) throw Error("gradfield: extent_std must be > 0");
  if (cfg.steps < 0) throw Error("gradfield: steps must be >= 0");

  GradFieldGrid g;
  g.source = x;
  g.field_kind = to_string(field.kind());
  const Tensor h = lvm.encode(x);
  g.length = lvm.predict_length(h).top_lengths(static_cast<int64_t>(x.size()), 1,
                                                lvm.config().t_max)[0];
  if (cfg.position < 0 || cfg.position >= g.length) {
    throw Error("gradfield: position " + std::to_string(cfg.position) +
                " outside the predicted length " + std::to_string(g.length));
  }
  g.position = cfg.position;
  const DiagGaussianSeq prior = lvm.prior(h, g.length);
  const LatentState& z0 = prior.mean;
  g.prior_mean = at(z0, g.position);

  const int64_t n = cfg.resolution;
  for (int axis = 0; axis < 2; ++axis) {
    auto& out = axis == 0 ? g.axis_u : g.axis_v;
    const double m = z0(g.position, axis);
    const double half = cfg.extent_std * std::exp(prior.log_std(g.position, axis));
    for (int64_t i = 0; i < n; ++i) {
      out.push_back(m - half + 2.0 * half * static_cast<double>(i) / static_cast<double>(n - 1));
    }
  }
  g.directions.reserve(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      LatentState z = z0;
      z(g.position, 0) = g.axis_u[static_cast<size_t>(i)];
      z(g.position, 1) = g.axis_v[static_cast<size_t>(j)];
      const Tensor d = direction(field, z, h);
      g.directions.push_back(at(d, g.position));
    }
  }

  FieldTrajectory delta{"delta", {z0}, {}};
  auto dres = delta_infer(lvm, z0, h, cfg.steps);
  delta.tokens.push_back(dres.trace.init_tokens);
  for (const auto& s : dres.trace.steps) {
    delta.states.push_back(s.z);
    delta.tokens.push_back(s.tokens);
  }
  g.posterior_tokens = dres.tokens;
  g.posterior_mean = at(delta_estep(lvm, dres.tokens, h), g.position);

  FieldTrajectory refined{g.field_kind, {z0}, {}};
  DecodeConfig dc = decode;
  dc.steps = cfg.steps;
  dc.termination = Termination::kFixedSteps;
  auto rres = refine(lvm, field, z0, h, dc);
  for (const auto& s : rres.trace.steps) refined.states.push_back(s.z);
  for (const auto& z : refined.states) refined.tokens.push_back(delta_mstep(lvm, z, h));

  g.trajectories.push_back(std::move(delta));
  g.trajectories.push_back(std::move(refined));
  return g;
}

std::string gradfield_to_json(const GradFieldGrid& g) {
  nlohmann::json j;
  j["format_version"] = g.format_version;
  j["source"] = g.source;
  j["length"] = g.length;
  j["position"] = g.position;
  j["field_kind"] = g.field_kind;
  j["axis_u"] = g.axis_u;
  j["axis_v"] = g.axis_v;
  j["directions"] = g.directions;
  j["prior_mean"] = g.prior_mean;
  j["posterior_mean"] = g.posterior_mean;
  j["posterior_tokens"] = g.posterior_tokens;
  auto& trajs = j["trajectories"] = nlohmann::json::array();
  for (const auto& t : g.trajectories) {
    nlohmann::json tj;
    tj["procedure"] = t.procedure;
    auto& pts = tj["points"] = nlohmann::json::array();
    auto& states = tj["states"] = nlohmann::json::array();
    for (size_t k = 0; k < t.states.size(); ++k) {
      pts.push_back({{"step", k}, {"point", at(t.states[k], g.position)}});
      states.push_back(tensor_json(t.states[k]));
    }
    tj["tokens"] = t.tokens;
    trajs.push_back(std::move(tj));
  }
  return j.dump(1);
}

GradFieldGrid gradfield_from_json(const std::string& text) {
  GradFieldGrid g;
  try {
    const auto j = nlohmann::json::parse(text);
    g.format_version = j.at("format_version").get<int>();
    if (g.format_version != 1) {
      throw Error("gradfield: unsupported format version " + std::to_string(g.format_version));
    }
    g.source = j.at("source").get<TokenSeq>();
    g.length = j.at("length").get<int64_t>();
    g.position = j.at("position").get<int64_t>();
    g.field_kind = j.at("field_kind").get<std::string>();
    g.axis_u = j.at("axis_u").get<std::vector<double>>();
    g.axis_v = j.at("axis_v").get<std::vector<double>>();
    g.directions = j.at("directions").get<std::vector<Point2>>();
    g.prior_mean = j.at("prior_mean").get<Point2>();
    g.posterior_mean = j.at("posterior_mean").get<Point2>();
    g.posterior_tokens = j.at("posterior_tokens").get<TokenSeq>();
    for (const auto& tj : j.at("trajectories")) {
      FieldTrajectory t;
      t.procedure = tj.at("procedure").get<std::string>();
      for (const auto& s : tj.at("states")) t.states.push_back(tensor_from_json(s));
      t.tokens = tj.at("tokens").get<std::vector<TokenSeq>>();
      g.trajectories.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("gradfield: malformed file: ") + e.what());
  }
  if (g.axis_u.size() != g.axis_v.size() ||
      g.directions.size() != g.axis_u.size() * g.axis_v.size()) {
    throw Error("gradfield: grid dimensions are inconsistent");
  }
  return g;
}

bool direction_norm_local_min(const GradFieldGrid& g, const Point2& p) {
  const int64_t n = g.resolution();
  auto nearest = [](const std::vector<double>& axis, double v) {
    int64_t best = 0;
    for (int64_t i = 1; i < static_cast<int64_t>(axis.size()); ++i) {
      if (std::abs(axis[static_cast<size_t>(i)] - v) < std::abs(axis[static_cast<size_t>(best)] - v)) {
        best = i;
      }
    }
    return best;
  };
  const int64_t ci = nearest(g.axis_u, p[0]), cj = nearest(g.axis_v, p[1]);
  auto norm = [&](int64_t i, int64_t j) {
    const auto& d = g.directions[static_cast<size_t>(i * n + j)];
    return std::hypot(d[0], d[1]);
  };
  const double c = norm(ci, cj);
  for (int64_t di = -1; di <= 1; ++di) {
    for (int64_t dj = -1; dj <= 1; ++dj) {
      const int64_t i = ci + di, j = cj + dj;
      if ((di == 0 && dj == 0) || i < 0 || j < 0 || i >= n || j >= n) continue;
      if (norm(i, j) < c) return false;
    }
  }
  return true;
}

}  // namespace latref
