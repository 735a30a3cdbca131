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

#include "latref/tokens.hpp"

#include <sstream>

#include "latref/tensor.hpp"

namespace latref {

void validate_tokens(const TokenSeq& seq, int vocab, int64_t max_len, const char* what) {
  if (static_cast<int64_t>(seq.size()) > max_len) {
    throw Error(std::string(what) + ": length " + std::to_string(seq.size()) + " exceeds maximum " +
                std::to_string(max_len));
  }
  for (size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] < 0 || seq[i] >= vocab) {
      throw Error(std::string(what) + ": token id " + std::to_string(seq[i]) + " at position " +
                  std::to_string(i) + " outside vocabulary of size " + std::to_string(vocab));
    }
    if (seq[i] < kFirstContentToken) {
      throw Error(std::string(what) + ": special token " + std::to_string(seq[i]) +
                  " inside sequence at position " + std::to_string(i));
    }
  }
}

TokenSeq remove_repetitions(const TokenSeq& seq) {
  TokenSeq out;
  out.reserve(seq.size());
  for (int tok : seq) {
    if (out.empty() || out.back() != tok) out.push_back(tok);
  }
  return out;
}

std::string format_tokens(const TokenSeq& seq) {
  std::string s;
  for (size_t i = 0; i < seq.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(seq[i]);
  }
  return s;
}

TokenSeq parse_tokens(const std::string& line) {
  std::istringstream is(line);
  TokenSeq out;
  std::string word;
  while (is >> word) {
    size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(word, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != word.size()) throw Error("malformed token '" + word + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace latref
