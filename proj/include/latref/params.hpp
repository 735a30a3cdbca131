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

#include <map>
#include <string>
#include <vector>

#include "latref/autograd.hpp"
#include "latref/rng.hpp"

namespace latref {

// Named parameter tensors. Iteration order is the name order, which keeps
// initialization, optimizer updates and serialization deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& mut(const std::string& name);

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::map<std::string, Tensor>& tensors() { return tensors_; }
  size_t size() const { return tensors_.size(); }
  int64_t numel() const;

  // Glorot-uniform matrix, zero bias, unit gain helpers.
  void add_linear(const std::string& prefix, int64_t in, int64_t out, Rng& rng, double gain = 1.0);
  void add_layer_norm(const std::string& prefix, int64_t dim);

 private:
  std::map<std::string, Tensor> tensors_;
};

// Exposes a ParamStore on a tape. Trainable bindings create leaves; frozen
// bindings create constants so no gradient work is spent on them.
class Binding {
 public:
  Binding(Tape& tape, const ParamStore& store, bool trainable)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  Var operator()(const std::string& name);
  Tape& tape() const { return *tape_; }
  bool trainable() const { return trainable_; }

  // Every parameter touched so far, by name.
  const std::map<std::string, Var>& bound() const { return vars_; }

  // Gradients of `loss` w.r.t. all parameters of the store; untouched
  // parameters get zeros.
  std::map<std::string, Tensor> gradients(const Var& loss);

 private:
  Tape* tape_;
  const ParamStore* store_;
  bool trainable_;
  std::map<std::string, Var> vars_;
};

}  // namespace latref
