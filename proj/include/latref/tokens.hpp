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

namespace latref {

using TokenSeq = std::vector<int>;

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFirstContentToken = 3;

// Throws Error if a token is outside [0, vocab), PAD appears, or the
// sequence is longer than max_len.
void validate_tokens(const TokenSeq& seq, int vocab, int64_t max_len, const char* what);

// Drops consecutive duplicates; relative order of the rest is kept.
TokenSeq remove_repetitions(const TokenSeq& seq);

std::string format_tokens(const TokenSeq& seq);
// Whitespace-separated integers.
TokenSeq parse_tokens(const std::string& line);

}  // namespace latref
