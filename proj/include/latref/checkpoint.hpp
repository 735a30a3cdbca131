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

#include "latref/tensor.hpp"

namespace latref {

inline constexpr uint32_t kCheckpointVersion = 1;

// On-disk layout (all integers little-endian):
//
//   bytes[8]  magic "LATREFCK"
//   u32       format version
//   u64       PRNG seed
//   u32       metadata length, then that many bytes of UTF-8 JSON
//   u32       tensor count
//   per tensor, in name order:
//     u32 name length, name bytes
//     u32 rank, u64 extent[rank]
//     f64 payload[prod(extent)] as IEEE-754 bit patterns
struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  uint64_t seed = 0;
  std::string metadata;  // JSON text: hyperparameters, kind, step, ...
  std::map<std::string, Tensor> tensors;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace latref
