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

#include "latref/tensor.hpp"

namespace latref {

// Counter-based splittable generator. Output i of a stream is a pure
// function of (key, i), so draws never depend on platform library details
// and child streams can be derived without touching the parent.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  // Independent child stream; does not advance this stream.
  Rng split(uint64_t stream) const;

  uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  Tensor normal_like(const Shape& shape);

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

  static uint64_t mix(uint64_t x);

 private:
  Rng(uint64_t key, uint64_t counter, int) : key_(key), counter_(counter) {}
  uint64_t key_;
  uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace latref
