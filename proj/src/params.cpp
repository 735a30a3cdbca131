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

#include "latref/params.hpp"

#include <cmath>

namespace latref {

void ParamStore::add(const std::string& name, Tensor value) {
  if (!tensors_.emplace(name, std::move(value)).second) {
    throw Error("duplicate parameter name: " + name);
  }
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::mut(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

int64_t ParamStore::numel() const {
  int64_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.numel();
  return n;
}

void ParamStore::add_linear(const std::string& prefix, int64_t in, int64_t out, Rng& rng,
                            double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w = Tensor::zeros({in, out});
  for (auto& v : w.data) v = (2.0 * rng.uniform() - 1.0) * limit;
  add(prefix + ".w", std::move(w));
  add(prefix + ".b", Tensor::zeros({out}));
}

void ParamStore::add_layer_norm(const std::string& prefix, int64_t dim) {
  add(prefix + ".g", Tensor::full({dim}, 1.0));
  add(prefix + ".b", Tensor::zeros({dim}));
}

Var Binding::operator()(const std::string& name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  const Tensor& t = store_->get(name);
  Var v = trainable_ ? tape_->leaf(t) : tape_->constant(t);
  vars_.emplace(name, v);
  return v;
}

std::map<std::string, Tensor> Binding::gradients(const Var& loss) {
  std::vector<Var> wrt;
  std::vector<std::string> names;
  for (const auto& [name, v] : vars_) {
    names.push_back(name);
    wrt.push_back(v);
  }
  auto g = tape_->gradients(loss, wrt);
  std::map<std::string, Tensor> out;
  for (size_t i = 0; i < names.size(); ++i) out.emplace(names[i], std::move(g[i]));
  for (const auto& [name, t] : store_->tensors()) {
    if (!out.count(name)) out.emplace(name, Tensor::zeros(t.shape));
  }
  return out;
}

}  // namespace latref
