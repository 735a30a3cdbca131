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

#include "latref/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "latref/rng.hpp"
#include "latref/tensor.hpp"

namespace latref {

namespace {

int64_t content_size(const TaskSpec& s) { return s.vocab - kFirstContentToken; }

}  // namespace

Task::Task(const TaskSpec& spec) : spec_(spec) {
  if (content_size(spec_) < 2) throw Error("task: vocabulary has too few content tokens");
  if (spec_.task == TaskKind::kCipher) {
    if (spec_.cipher_keys < 1) throw Error("task: cipher_keys must be >= 1");
    if (spec_.cipher_key_tokens < 0) throw Error("task: cipher_key_tokens must be >= 0");
    Rng rng = Rng(spec_.seed).split(0xc1f);
    for (int64_t k = 0; k < spec_.cipher_keys; ++k) {
      std::vector<int> perm(static_cast<size_t>(content_size(spec_)));
      std::iota(perm.begin(), perm.end(), kFirstContentToken);
      for (size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      tables_.push_back(std::move(perm));
    }
  }
}

int64_t Task::cipher_key(const TokenSeq& x) const {
  const size_t n = spec_.cipher_key_tokens == 0
                       ? x.size()
                       : std::min(x.size(), static_cast<size_t>(spec_.cipher_key_tokens));
  int64_t s = 0;
  for (size_t i = 0; i < n; ++i) s += x[i];
  return s % spec_.cipher_keys;
}

TokenSeq Task::transduce(const TokenSeq& x) const {
  switch (spec_.task) {
    case TaskKind::kCopy:
      return x;
    case TaskKind::kReverse:
      return TokenSeq(x.rbegin(), x.rend());
    case TaskKind::kSort: {
      TokenSeq y = x;
      std::sort(y.begin(), y.end());
      return y;
    }
    case TaskKind::kCipher: {
      const auto& table = tables_[static_cast<size_t>(cipher_key(x))];
      TokenSeq y;
      y.reserve(x.size());
      for (int t : x) y.push_back(table[static_cast<size_t>(t - kFirstContentToken)]);
      return y;
    }
  }
  throw Error("task: unknown kind");
}

Corpus generate_corpus(const TaskSpec& spec, int64_t t_max) {
  if (spec.min_len < 1 || spec.min_len > spec.max_len) throw Error("gen_data: invalid length range");
  if (spec.max_len > t_max) {
    throw Error("gen_data: max_len " + std::to_string(spec.max_len) + " exceeds t_max " +
                std::to_string(t_max));
  }
  if (spec.max_len > content_size(spec)) {
    throw Error("gen_data: max_len exceeds the number of distinct content tokens");
  }
  Task task(spec);
  std::set<TokenSeq> seen;
  auto draw = [&](int64_t n, uint64_t stream) {
    Rng rng = Rng(spec.seed).split(stream);
    std::vector<Example> out;
    int64_t attempts = 0;
    while (static_cast<int64_t>(out.size()) < n) {
      if (++attempts > 100 * (n + 10)) throw Error("gen_data: source space exhausted");
      const int64_t len =
          spec.min_len + static_cast<int64_t>(rng.below(static_cast<uint64_t>(spec.max_len - spec.min_len + 1)));
      std::vector<int> pool(static_cast<size_t>(content_size(spec)));
      std::iota(pool.begin(), pool.end(), kFirstContentToken);
      TokenSeq x;
      for (int64_t i = 0; i < len; ++i) {
        const size_t j = static_cast<size_t>(i) + rng.below(pool.size() - static_cast<size_t>(i));
        std::swap(pool[static_cast<size_t>(i)], pool[j]);
        x.push_back(pool[static_cast<size_t>(i)]);
      }
      if (!seen.insert(x).second) continue;
      out.push_back({x, task.transduce(x)});
    }
    return out;
  };
  Corpus c;
  c.test = draw(spec.n_test, 3);
  c.dev = draw(spec.n_dev, 2);
  c.train = draw(spec.n_train, 1);
  return c;
}

void write_sequences(const std::string& path, const std::vector<TokenSeq>& seqs) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path);
  for (const auto& s : seqs) f << format_tokens(s) << '\n';
}

std::vector<TokenSeq> read_sequences(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  std::vector<TokenSeq> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    try {
      out.push_back(parse_tokens(line));
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Example> read_parallel(const std::string& src_path, const std::string& tgt_path) {
  auto src = read_sequences(src_path);
  auto tgt = read_sequences(tgt_path);
  if (src.size() != tgt.size()) {
    throw Error("parallel files differ in line count: " + src_path + " vs " + tgt_path);
  }
  std::vector<Example> out;
  for (size_t i = 0; i < src.size(); ++i) out.push_back({std::move(src[i]), std::move(tgt[i])});
  return out;
}

void write_corpus(const std::string& dir, const Corpus& corpus, const TaskSpec& spec) {
  std::filesystem::create_directories(dir);
  auto split = [&](const std::string& name, const std::vector<Example>& ex) {
    std::vector<TokenSeq> s, t;
    for (const auto& e : ex) {
      s.push_back(e.src);
      t.push_back(e.tgt);
    }
    write_sequences(dir + "/" + name + ".src", s);
    write_sequences(dir + "/" + name + ".tgt", t);
  };
  split("train", corpus.train);
  split("dev", corpus.dev);
  split("test", corpus.test);
  RunConfig rc;
  rc.task = spec;
  auto full = nlohmann::json::parse(dump_run_config(rc));
  std::ofstream f(dir + "/task.json", std::ios::trunc);
  f << full.at("task").dump(2) << '\n';
}

Corpus read_corpus(const std::string& dir) {
  Corpus c;
  c.train = read_parallel(dir + "/train.src", dir + "/train.tgt");
  c.dev = read_parallel(dir + "/dev.src", dir + "/dev.tgt");
  c.test = read_parallel(dir + "/test.src", dir + "/test.tgt");
  return c;
}

}  // namespace latref
