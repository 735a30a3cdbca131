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
#include <map>
#include <string>

#include "latref/params.hpp"

namespace latref {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  int64_t t = 0;
  // Updates skipped because a gradient was not finite.
  int64_t skipped = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

enum class AdamResult { kApplied, kSkippedNonFinite };

// One bias-corrected Adam update. If any gradient entry is non-finite the
// parameters and moments are left untouched and `skipped` is incremented.
AdamResult adam_step(AdamState& state, ParamStore& params,
                     const std::map<std::string, Tensor>& grads);

// Inverse square-root schedule with linear warmup; `step` counts from 1.
double inverse_sqrt_lr(double base_lr, int64_t step, int64_t warmup);

}  // namespace latref
