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

#include "latref/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace latref {

namespace {

constexpr char kMagic[8] = {'L', 'A', 'T', 'R', 'E', 'F', 'C', 'K'};

template <typename T>
void put_le(std::string& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string take(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<uint32_t>(out, ckpt.version);
  put_le<uint64_t>(out, ckpt.seed);
  put_le<uint32_t>(out, static_cast<uint32_t>(ckpt.metadata.size()));
  out += ckpt.metadata;
  put_le<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_le<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_le<uint64_t>(out, static_cast<uint64_t>(d));
    for (double v : t.data) put_le<uint64_t>(out, std::bit_cast<uint64_t>(v));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw Error("not a checkpoint file (bad magic)");
  }
  Checkpoint ckpt;
  ckpt.version = r.le<uint32_t>();
  if (ckpt.version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.seed = r.le<uint64_t>();
  ckpt.metadata = r.take(r.le<uint32_t>());
  const uint32_t count = r.le<uint32_t>();
  for (uint32_t k = 0; k < count; ++k) {
    std::string name = r.take(r.le<uint32_t>());
    const uint32_t rank = r.le<uint32_t>();
    if (rank > 2) throw Error("checkpoint tensor " + name + " has unsupported rank");
    Shape shape;
    for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int64_t>(r.le<uint64_t>()));
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = std::bit_cast<double>(r.le<uint64_t>());
    if (!ckpt.tensors.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw Error("checkpoint has duplicate tensor " + name);
    }
  }
  if (!r.done()) throw Error("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  // Write to a sibling file and rename so a crash never leaves a torn file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open checkpoint for writing: " + path);
    const std::string bytes = serialize_checkpoint(ckpt);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("failed writing checkpoint: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error("failed moving checkpoint into place: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("missing checkpoint: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace latref
