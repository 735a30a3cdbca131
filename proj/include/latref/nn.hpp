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

#include <string>

#include "latref/params.hpp"

namespace latref::nn {

struct StackDims {
  int64_t d_model = 64;
  int64_t d_filter = 256;
  int64_t n_heads = 4;
  int64_t n_layers = 2;
};

// Sinusoidal position table, T x d_model.
Tensor positional_encoding(int64_t length, int64_t d_model);

Var linear(Binding& p, const std::string& prefix, const Var& x);
Var layer_norm(Binding& p, const std::string& prefix, const Var& x);

// Multi-head attention of `query` rows over `memory` rows. With `causal`,
// query i only sees memory rows <= i.
Var attention(Binding& p, const std::string& prefix, const Var& query, const Var& memory,
              int64_t n_heads, bool causal = false);

// Pre-norm layers. Encoder layers self-attend; decoder layers self-attend and
// then cross-attend over `memory`. A final layer norm closes each stack.
void add_encoder_stack(ParamStore& store, const std::string& prefix, const StackDims& dims,
                       Rng& rng);
void add_decoder_stack(ParamStore& store, const std::string& prefix, const StackDims& dims,
                       Rng& rng);
Var encoder_stack(Binding& p, const std::string& prefix, const StackDims& dims, Var x);
Var decoder_stack(Binding& p, const std::string& prefix, const StackDims& dims, Var x,
                  const Var& memory, bool causal = false);

// Frozen, tape-free decoder stack over a batch of equal-length sequences
// stacked row-wise in `x` ((n * segment) x d_model). Self-attention stays
// within each segment of `segment` rows; every row cross-attends over the
// shared `memory`. Agrees with decoder_stack to rounding.
Tensor decoder_stack_batched(const ParamStore& params, const std::string& prefix,
                             const StackDims& dims, const Tensor& x, int64_t segment,
                             const Tensor& memory);

}  // namespace latref::nn
