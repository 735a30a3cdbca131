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
#include <vector>

#include "latref/config.hpp"
#include "latref/tokens.hpp"

namespace latref {

struct Example {
  TokenSeq src;
  TokenSeq tgt;
};

struct Corpus {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

// Synthetic transduction tasks over content tokens [3, vocab).
//
//   copy     y = x
//   reverse  y = x reversed
//   sort     y = x in nondecreasing order
//   cipher   y_t = table_k(x_t) with k = (x_0 + ... + x_{m-1}) mod
//            cipher_keys, m = cipher_key_tokens (0 = whole source), over
//            cipher_keys fixed random permutations drawn from the task seed
//
// Sources never repeat a token, so no target has adjacent duplicates.
class Task {
 public:
  explicit Task(const TaskSpec& spec);

  const TaskSpec& spec() const { return spec_; }
  TokenSeq transduce(const TokenSeq& x) const;
  int64_t cipher_key(const TokenSeq& x) const;

 private:
  TaskSpec spec_;
  std::vector<std::vector<int>> tables_;
};

// Deterministic in the spec. Test, dev and train are drawn from separate
// streams and no source appears in more than one split. Throws Error if the
// length range is invalid or exceeds t_max.
Corpus generate_corpus(const TaskSpec& spec, int64_t t_max);

// Writes {train,dev,test}.{src,tgt} (one sequence per line) and task.json.
void write_corpus(const std::string& dir, const Corpus& corpus, const TaskSpec& spec);
Corpus read_corpus(const std::string& dir);

std::vector<TokenSeq> read_sequences(const std::string& path);
void write_sequences(const std::string& path, const std::vector<TokenSeq>& seqs);
std::vector<Example> read_parallel(const std::string& src_path, const std::string& tgt_path);

}  // namespace latref
