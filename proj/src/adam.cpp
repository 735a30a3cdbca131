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

#include "latref/adam.hpp"

#include <algorithm>
#include <cmath>

namespace latref {

AdamResult adam_step(AdamState& state, ParamStore& params,
                     const std::map<std::string, Tensor>& grads) {
  for (const auto& [name, p] : params.tensors()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw Error("adam_step: missing gradient for " + name);
    require_same_shape(p, it->second, "adam_step");
    if (!it->second.all_finite()) {
      ++state.skipped;
      return AdamResult::kSkippedNonFinite;
    }
  }

  const int64_t t = state.t + 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  for (auto& [name, p] : params.tensors()) {
    const Tensor& g = grads.at(name);
    auto& m = state.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    auto& v = state.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double gi = g.data[i];
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  state.t = t;
  return AdamResult::kApplied;
}

double inverse_sqrt_lr(double base_lr, int64_t step, int64_t warmup) {
  const double s = static_cast<double>(std::max<int64_t>(step, 1));
  if (warmup <= 0) return base_lr / std::sqrt(s);
  const double w = static_cast<double>(warmup);
  return base_lr * std::min(s / w, std::sqrt(w / s));
}

}  // namespace latref
