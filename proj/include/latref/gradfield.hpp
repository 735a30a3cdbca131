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

#include <array>
#include <string>
#include <vector>

#include "latref/config.hpp"
#include "latref/gradnet.hpp"
#include "latref/lvm.hpp"

namespace latref {

using Point2 = std::array<double, 2>;

struct FieldTrajectory {
  std::string procedure;  // "delta", "score" or "energy"
  // Full latent after each step; entry 0 is the init.
  std::vector<LatentState> states;
  std::vector<TokenSeq> tokens;  // decode of each state
};

// A 2-D slice of a refinement field. Only the latent at `position` varies
// over the grid; the other positions stay at the init (the prior mean).
// Cell (i, j) sits at (axis_u[i], axis_v[j]); `directions` is indexed
// i * resolution + j and holds S for score fields and -dE/dz for energy ones.
struct GradFieldGrid {
  int format_version = 1;
  TokenSeq source;
  int64_t length = 0;
  int64_t position = 0;
  std::string field_kind;
  std::vector<double> axis_u;
  std::vector<double> axis_v;
  std::vector<Point2> directions;
  std::vector<FieldTrajectory> trajectories;
  Point2 prior_mean{};
  // Mean of q(z | y, x) at `position`, with y the final delta output.
  Point2 posterior_mean{};
  TokenSeq posterior_tokens;

  int64_t resolution() const { return static_cast<int64_t>(axis_u.size()); }
};

// Requires a 2-dimensional latent; throws Error otherwise. The target length
// is the most likely one under the length predictor. Grid bounds are the
// prior mean +- cfg.extent_std prior standard deviations per axis. Delta and
// field trajectories run for cfg.steps steps with decode.alpha.
GradFieldGrid gradfield_export(const Lvm& lvm, const LatentGradient& field, const TokenSeq& x,
                               const GradFieldConfig& cfg, const DecodeConfig& decode);

std::string gradfield_to_json(const GradFieldGrid& grid);
GradFieldGrid gradfield_from_json(const std::string& text);

// Whether the grid cell nearest to `p` has a direction norm no larger than
// any of its (up to 8) neighbors.
bool direction_norm_local_min(const GradFieldGrid& grid, const Point2& p);

}  // namespace latref
