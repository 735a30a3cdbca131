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

#include <cmath>
#include <cstring>
#include <filesystem>

#include "latref/adam.hpp"
#include "latref/autograd.hpp"
#include "latref/checkpoint.hpp"
#include "latref/oracles.hpp"
#include "latref/rng.hpp"

namespace latref {
namespace {

Tensor eval_op(const std::function<Var(Tape&)>& f) {
  Tape tape;
  return f(tape).value();
}

TEST(Tensor, RejectsDataShapeMismatch) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5, 0.0)), Error);
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  Tensor s = eval_op([](Tape& t) { return softmax(t.constant(Tensor::mat(1, 2, {0.0, 0.0}))); });
  EXPECT_EQ(s.data, (std::vector<double>{0.5, 0.5}));
}

TEST(Ops, SoftmaxRowsAreProbabilityVectors) {
  Rng rng(3);
  Tensor x = rng.normal_like({6, 9});
  for (auto& v : x.data) v *= 20.0;
  Tensor s = eval_op([&](Tape& t) { return softmax(t.constant(x)); });
  for (int64_t r = 0; r < s.rows(); ++r) {
    double total = 0.0;
    for (double p : s.row(r)) {
      EXPECT_GE(p, 0.0);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Ops, MatmulByIdentity) {
  Rng rng(4);
  Tensor a = rng.normal_like({2, 5});
  Tensor out = eval_op([&](Tape& t) { return matmul(t.constant(Tensor::identity(2)), t.constant(a)); });
  EXPECT_EQ(out.data, a.data);
}

TEST(Ops, LogSoftmaxSubtractsLogSumExp) {
  const Tensor x = Tensor::mat(1, 3, {1.0, 2.0, 3.0});
  Tensor lse = eval_op([&](Tape& t) { return logsumexp_rows(t.constant(x)); });
  // log(e + e^2 + e^3) by long-double summation.
  const long double ref = std::log(std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L));
  EXPECT_NEAR(lse.data[0], static_cast<double>(ref), 1e-14);
  EXPECT_NEAR(lse.data[0], 3.40760596, 1e-8);
  Tensor ls = eval_op([&](Tape& t) { return log_softmax(t.constant(x)); });
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(ls.data[i], x.data[i] - lse.data[0], 1e-14);
}

TEST(Ops, LogSoftmaxStableForHugeLogits) {
  Tensor ls = eval_op([](Tape& t) { return log_softmax(t.constant(Tensor::mat(1, 2, {1000.0, 0.0}))); });
  EXPECT_TRUE(ls.all_finite());
  EXPECT_NEAR(ls.data[0], 0.0, 1e-12);
  EXPECT_NEAR(ls.data[1], -1000.0, 1e-9);
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({3, 2}));
  try {
    add(a, b);
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(matmul(a, a), Error);
}

TEST(Backward, SquaredNormGradient) {
  ScalarFn f = [](Tape&, const Var& z) { return sum(square(z)); };
  Tensor g = autodiff_grad(f, Tensor::vec({1.0, -2.0}));
  EXPECT_EQ(g.data, (std::vector<double>{2.0, -4.0}));
  EXPECT_LT(finite_diff_check(f, Tensor::vec({0.3, -1.7, 2.2})).max_rel_error, 1e-8);
}

TEST(Backward, ExpAtZero) {
  ScalarFn f = [](Tape&, const Var& z) { return sum(exp(z)); };
  EXPECT_EQ(autodiff_grad(f, Tensor::vec({0.0})).data[0], 1.0);
  EXPECT_LT(finite_diff_check(f, Tensor::vec({0.0})).max_rel_error, 1e-9);
}

TEST(Backward, ConstantFunctionHasZeroGradient) {
  ScalarFn f = [](Tape& t, const Var&) { return t.constant(Tensor::scalar(4.0)); };
  for (double g : autodiff_grad(f, Tensor::vec({1.0, 2.0})).data) EXPECT_EQ(g, 0.0);
}

TEST(Backward, UnusedLeafGetsExactZero) {
  Tape tape;
  Var a = tape.leaf(Tensor::vec({1.0, 2.0}));
  Var b = tape.leaf(Tensor::vec({3.0}));
  std::vector<Var> wrt{a, b};
  auto g = tape.gradients(sum(square(a)), wrt);
  EXPECT_EQ(g[1].data, (std::vector<double>{0.0}));
}

TEST(Backward, NonScalarRootRejected) {
  Tape tape;
  Var a = tape.leaf(Tensor::vec({1.0, 2.0}));
  std::vector<Var> wrt{a};
  EXPECT_THROW(tape.gradients(square(a), wrt), Error);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  // f = sum(u * u + 3u) with u = tanh(z) used three times.
  ScalarFn f = [](Tape&, const Var& z) {
    Var u = tanh(z);
    return sum(add(mul(u, u), scale(u, 3.0)));
  };
  const Tensor z = Tensor::vec({0.4, -1.1, 0.9});
  Tensor g = autodiff_grad(f, z);
  for (size_t i = 0; i < z.data.size(); ++i) {
    const double u = std::tanh(z.data[i]);
    EXPECT_NEAR(g.data[i], (2.0 * u + 3.0) * (1.0 - u * u), 1e-14);
  }
  EXPECT_LT(finite_diff_check(f, z).max_rel_error, 1e-6);
}

TEST(Backward, ParentsPrecedeChildren) {
  Tape tape;
  Var a = tape.leaf(Tensor::vec({1.0}));
  Var b = exp(a);
  Var c = add(b, a);
  EXPECT_LT(a.id(), b.id());
  EXPECT_LT(b.id(), c.id());
}

TEST(Backward, NoGradGuardRecordsNothingDifferentiable) {
  Tape tape;
  Var a = tape.leaf(Tensor::vec({1.0}));
  {
    NoGradGuard guard(tape);
    Var b = exp(a);
    EXPECT_FALSE(b.requires_grad());
  }
  EXPECT_TRUE(exp(a).requires_grad());
}

TEST(FiniteDiff, ReportsNonFiniteProbe) {
  ScalarFn f = [](Tape&, const Var& z) { return sum(log(z)); };
  try {
    // The probe below zero at the second coordinate takes log of a negative.
    finite_diff_check(f, Tensor::vec({1.0, 1e-6}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(finite_diff_check(f, Tensor::vec({1.0}), 0.0), Error);
}

TEST(FiniteDiff, EveryOpMatchesCentralDifferences) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& c : op_gradient_suite(seed)) EXPECT_TRUE(c.pass) << c.name << " seed " << seed << ": " << c.value << " " << c.detail;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore p;
  p.add("w", Tensor::vec({0.5}));
  AdamState s;
  s.lr = 1e-3;
  s.eps = 1e-8;
  ASSERT_EQ(adam_step(s, p, {{"w", Tensor::vec({2.0})}}), AdamResult::kApplied);
  EXPECT_NEAR(p.get("w").data[0] - 0.5, -1e-3, 1e-11);
  EXPECT_EQ(s.t, 1);
}

TEST(Adam, TwoStepsMatchScriptedRecurrence) {
  ParamStore p;
  p.add("w", Tensor::vec({1.0, -1.0}));
  AdamState s;
  s.lr = 0.01;
  const std::vector<double> g{0.3, -2.0};
  std::vector<double> theta{1.0, -1.0}, m(2, 0.0), v(2, 0.0);
  for (int t = 1; t <= 2; ++t) {
    adam_step(s, p, {{"w", Tensor::vec(g)}});
    for (int i = 0; i < 2; ++i) {
      m[i] = s.beta1 * m[i] + (1 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1 - s.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(s.beta1, t)), vh = v[i] / (1 - std::pow(s.beta2, t));
      theta[i] -= s.lr * mh / (std::sqrt(vh) + s.eps);
    }
  }
  EXPECT_NEAR(p.get("w").data[0], theta[0], 1e-15);
  EXPECT_NEAR(p.get("w").data[1], theta[1], 1e-15);
}

TEST(Adam, ZeroGradientAndZeroLrAreIdentity) {
  ParamStore p;
  p.add("w", Tensor::vec({0.25, 7.0}));
  AdamState s;
  adam_step(s, p, {{"w", Tensor::vec({0.0, 0.0})}});
  EXPECT_EQ(p.get("w").data, (std::vector<double>{0.25, 7.0}));
  s.lr = 0.0;
  adam_step(s, p, {{"w", Tensor::vec({3.0, -1.0})}});
  EXPECT_EQ(p.get("w").data, (std::vector<double>{0.25, 7.0}));
  EXPECT_EQ(s.t, 2);
}

TEST(Adam, NonFiniteGradientSkipsAndCounts) {
  ParamStore p;
  p.add("w", Tensor::vec({1.0}));
  AdamState s;
  EXPECT_EQ(adam_step(s, p, {{"w", Tensor::vec({std::nan("")})}}), AdamResult::kSkippedNonFinite);
  EXPECT_EQ(p.get("w").data[0], 1.0);
  EXPECT_EQ(s.skipped, 1);
  EXPECT_EQ(s.t, 0);
}

TEST(Schedule, WarmupThenInverseSqrt) {
  EXPECT_NEAR(inverse_sqrt_lr(1.0, 50, 100), 0.5, 1e-12);
  EXPECT_NEAR(inverse_sqrt_lr(1.0, 100, 100), 1.0, 1e-12);
  EXPECT_NEAR(inverse_sqrt_lr(1.0, 400, 100), 0.5, 1e-12);
}

TEST(Rng, SeededStreamsRepeatAndSplitsDiffer) {
  Rng a(11), b(11);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng root(11);
  EXPECT_NE(root.split(1).next_u64(), root.split(2).next_u64());
  Rng c(11);
  c.split(5);
  EXPECT_EQ(c.next_u64(), Rng(11).next_u64());
}

TEST(Rng, NormalMoments) {
  Rng rng(5);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint c;
  c.seed = 99;
  c.metadata = R"({"kind":"test"})";
  c.tensors["a"] = Tensor::mat(2, 2, {1.0, -0.0, 1e-300, std::nextafter(1.0, 2.0)});
  c.tensors["s"] = Tensor::scalar(3.5);
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint d = parse_checkpoint(bytes);
  EXPECT_EQ(d.seed, 99u);
  EXPECT_EQ(d.metadata, c.metadata);
  ASSERT_EQ(d.tensors.size(), 2u);
  for (const auto& [name, t] : c.tensors) {
    EXPECT_EQ(d.tensors.at(name).shape, t.shape);
    EXPECT_EQ(0, std::memcmp(d.tensors.at(name).data.data(), t.data.data(), t.data.size() * sizeof(double)));
  }
  EXPECT_EQ(serialize_checkpoint(d), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
  Checkpoint c;
  c.tensors["a"] = Tensor::vec({1.0, 2.0});
  std::string bytes = serialize_checkpoint(c);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), Error);
}

TEST(Checkpoint, SaveLeavesNoTemporaryBehind) {
  const auto dir = std::filesystem::temp_directory_path() / "latref_ckpt_test";
  std::filesystem::create_directories(dir);
  Checkpoint c;
  c.tensors["a"] = Tensor::vec({1.0});
  save_checkpoint((dir / "m.ckpt").string(), c);
  EXPECT_TRUE(std::filesystem::exists(dir / "m.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "m.ckpt.tmp"));
  EXPECT_EQ(load_checkpoint((dir / "m.ckpt").string()).tensors.at("a").data[0], 1.0);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace latref
