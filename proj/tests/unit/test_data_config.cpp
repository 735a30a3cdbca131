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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "latref/config.hpp"
#include "latref/data.hpp"
#include "latref/tensor.hpp"

namespace latref {
namespace {

namespace fs = std::filesystem;

TaskSpec small_spec(TaskKind kind) {
  TaskSpec s;
  s.task = kind;
  s.vocab = 16;
  s.min_len = 2;
  s.max_len = 5;
  s.n_train = 200;
  s.n_dev = 20;
  s.n_test = 30;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

TEST(Tasks, SimpleTransductions) {
  const TokenSeq x{7, 3, 5};
  EXPECT_EQ(Task(small_spec(TaskKind::kCopy)).transduce(x), x);
  EXPECT_EQ(Task(small_spec(TaskKind::kReverse)).transduce(x), (TokenSeq{5, 3, 7}));
  EXPECT_EQ(Task(small_spec(TaskKind::kSort)).transduce(x), (TokenSeq{3, 5, 7}));
}

TEST(Tasks, CipherKeyUsesLeadingTokens) {
  TaskSpec spec = small_spec(TaskKind::kCipher);
  spec.cipher_key_tokens = 2;
  EXPECT_EQ(Task(spec).cipher_key({5, 6, 9}), (5 + 6) % 4);
  EXPECT_EQ(Task(spec).cipher_key({5}), 5 % 4);
  spec.cipher_key_tokens = 0;
  EXPECT_EQ(Task(spec).cipher_key({5, 6, 9}), (5 + 6 + 9) % 4);
  spec.cipher_key_tokens = 1;
  EXPECT_EQ(Task(spec).cipher_key({5, 6, 9}), 5 % 4);
  spec.cipher_key_tokens = -1;
  EXPECT_THROW(Task{spec}, Error);
}

TEST(Tasks, CipherIsAKeyedBijection) {
  TaskSpec spec = small_spec(TaskKind::kCipher);
  spec.cipher_key_tokens = 1;
  const Task task(spec);
  const int64_t keys = task.spec().cipher_keys;
  for (int a = 3; a < 16; ++a) {
    for (int b = 3; b < 16; ++b) {
      if (a == b) continue;
      const TokenSeq x{a, b};
      const TokenSeq y = task.transduce(x);
      ASSERT_EQ(y.size(), 2u);
      EXPECT_EQ(task.cipher_key(x), a % keys);
      for (int t : y) {
        EXPECT_GE(t, kFirstContentToken);
        EXPECT_LT(t, 16);
      }
      EXPECT_NE(y[0], y[1]);
    }
  }
  // Every key table is a permutation of the content tokens.
  for (int64_t k = 0; k < keys; ++k) {
    std::set<int> seen;
    for (int a = 3; a < 16; ++a) {
      for (int b = 3; b < 16; ++b) {
        if (a == b || a % keys != k) continue;
        const TokenSeq y = task.transduce({a, b});
        seen.insert(y.begin(), y.end());
      }
    }
    EXPECT_EQ(seen.size(), 13u) << "key " << k;
  }
}

TEST(Corpus, SplitsAreDisjointAndFollowTheTask) {
  const TaskSpec spec = small_spec(TaskKind::kCipher);
  const Corpus c = generate_corpus(spec, 8);
  EXPECT_EQ(c.train.size(), 200u);
  EXPECT_EQ(c.dev.size(), 20u);
  EXPECT_EQ(c.test.size(), 30u);
  std::set<TokenSeq> sources;
  const Task task(spec);
  for (const auto* split : {&c.train, &c.dev, &c.test}) {
    for (const auto& ex : *split) {
      EXPECT_TRUE(sources.insert(ex.src).second) << format_tokens(ex.src);
      EXPECT_GE(ex.src.size(), 2u);
      EXPECT_LE(ex.src.size(), 5u);
      EXPECT_EQ(ex.tgt, task.transduce(ex.src));
    }
  }
}

TEST(Corpus, RejectsImpossibleSpecs) {
  TaskSpec s = small_spec(TaskKind::kCopy);
  s.max_len = 9;
  EXPECT_THROW(generate_corpus(s, 8), Error);
  s = small_spec(TaskKind::kCopy);
  s.min_len = 4;
  s.max_len = 3;
  EXPECT_THROW(generate_corpus(s, 8), Error);
  s = small_spec(TaskKind::kCopy);
  s.vocab = 5;
  s.min_len = 1;
  s.max_len = 1;
  s.n_train = 10;
  EXPECT_THROW(generate_corpus(s, 8), Error);
}

TEST(Corpus, RegenerationIsByteIdentical) {
  const fs::path a = fs::temp_directory_path() / "latref_corpus_a";
  const fs::path b = fs::temp_directory_path() / "latref_corpus_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const TaskSpec spec = small_spec(TaskKind::kCipher);
  write_corpus(a.string(), generate_corpus(spec, 8), spec);
  write_corpus(b.string(), generate_corpus(spec, 8), spec);
  for (const char* f : {"train.src", "train.tgt", "dev.src", "dev.tgt", "test.src", "test.tgt", "task.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_FALSE(slurp(a / f).empty()) << f;
  }
  const Corpus back = read_corpus(a.string());
  const Corpus orig = generate_corpus(spec, 8);
  ASSERT_EQ(back.test.size(), orig.test.size());
  for (size_t i = 0; i < back.test.size(); ++i) EXPECT_EQ(back.test[i].tgt, orig.test[i].tgt);
  TaskSpec other = spec;
  other.seed = spec.seed + 1;
  EXPECT_NE(generate_corpus(other, 8).train[0].src, orig.train[0].src);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(TokenText, FormatParseRoundTrip) {
  const TokenSeq s{3, 14, 27};
  EXPECT_EQ(format_tokens(s), "3 14 27");
  EXPECT_EQ(parse_tokens(format_tokens(s)), s);
  EXPECT_EQ(parse_tokens(""), TokenSeq{});
  EXPECT_THROW(parse_tokens("3 x 4"), Error);
  EXPECT_THROW(validate_tokens({3, 40}, 32, 8, "target"), Error);
  EXPECT_THROW(validate_tokens({1, 4}, 32, 8, "target"), Error);
}

TEST(TokenText, ParallelFilesMustAlign) {
  const fs::path d = fs::temp_directory_path() / "latref_parallel";
  fs::create_directories(d);
  write_sequences((d / "a.src").string(), {{3, 4}, {5}});
  write_sequences((d / "a.tgt").string(), {{6}});
  EXPECT_THROW(read_parallel((d / "a.src").string(), (d / "a.tgt").string()), Error);
  EXPECT_THROW(read_sequences((d / "missing").string()), Error);
  fs::remove_all(d);
}

TEST(Config, DefaultsRoundTrip) {
  const RunConfig cfg;
  const std::string text = dump_run_config(cfg);
  EXPECT_EQ(dump_run_config(parse_run_config(text)), text);
  EXPECT_EQ(dump_run_config(parse_run_config("{}")), text);
}

TEST(Config, PartialOverrideKeepsDefaults) {
  const RunConfig cfg = parse_run_config(R"({"lvm": {"d_latent": 2}, "decode": {"procedure": "delta"}})");
  EXPECT_EQ(cfg.lvm.d_latent, 2);
  EXPECT_EQ(cfg.lvm.d_model, RunConfig{}.lvm.d_model);
  EXPECT_EQ(cfg.decode.procedure, DecodeProcedure::kDelta);
}

void expect_error_mentions(const std::string& json, const std::string& needle) {
  try {
    parse_run_config(json);
    ADD_FAILURE() << "accepted: " << json;
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Config, StrictErrorsNameTheKeyPath) {
  expect_error_mentions(R"({"lvm": {"d_modle": 3}})", "lvm.d_modle");
  expect_error_mentions(R"({"bogus": 1})", "bogus");
  expect_error_mentions(R"({"lvm": {"d_model": "wide"}})", "lvm.d_model");
  expect_error_mentions(R"({"decode": {"procedure": "sideways"}})", "decode.procedure");
  expect_error_mentions(R"({"eval": {"procedures": ["delta", 3]}})", "eval.procedures");
  expect_error_mentions(R"({"lvm_train": {"optim": {"lr": true}}})", "lvm_train.optim.lr");
  expect_error_mentions(R"({"format_version": 99})", "format_version");
  expect_error_mentions(R"({"lvm": 3})", "lvm");
  expect_error_mentions("{not json", "malformed");
}

TEST(Config, EnumNamesRoundTrip) {
  for (auto k : {GradNetKind::kEnergy, GradNetKind::kScore}) EXPECT_EQ(parse_gradnet_kind(to_string(k)), k);
  for (auto p : {DecodeProcedure::kDelta, DecodeProcedure::kEnergy, DecodeProcedure::kScore}) {
    EXPECT_EQ(parse_procedure(to_string(p)), p);
  }
  for (auto t : {TaskKind::kCopy, TaskKind::kReverse, TaskKind::kSort, TaskKind::kCipher}) {
    EXPECT_EQ(parse_task(to_string(t)), t);
  }
  EXPECT_EQ(parse_init(to_string(LatentInit::kPriorSample)), LatentInit::kPriorSample);
  EXPECT_THROW(parse_gradnet_kind("both"), Error);
}

TEST(Config, ModelConfigsRoundTrip) {
  LvmConfig l;
  l.d_latent = 5;
  EXPECT_EQ(parse_lvm_config(lvm_config_json(l)).d_latent, 5);
  GradNetConfig g;
  g.kind = GradNetKind::kEnergy;
  EXPECT_EQ(parse_gradnet_config(gradnet_config_json(g)).kind, GradNetKind::kEnergy);
  ArConfig a;
  a.beam = 3;
  EXPECT_EQ(parse_ar_config(ar_config_json(a)).beam, 3);
}

}  // namespace
}  // namespace latref
