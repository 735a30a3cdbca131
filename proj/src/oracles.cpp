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

#include "latref/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "latref/ar.hpp"
#include "latref/autograd.hpp"
#include "latref/gradnet.hpp"
#include "latref/lvm.hpp"
#include "latref/training.hpp"

namespace latref {

namespace {

OracleCheck below(std::string name, double value, double tol, std::string detail = {}) {
  return {std::move(name), value, tol, std::isfinite(value) && value < tol, std::move(detail)};
}

Tensor uniform_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Normal draws kept at least `gap` away from each of `kinks`.
Tensor away_from(Rng& rng, const Shape& shape, std::vector<double> kinks, double gap) {
  Tensor t = rng.normal_like(shape);
  for (auto& v : t.data) {
    for (double k : kinks) {
      if (std::abs(v - k) < gap) v = k + (v < k ? -gap : gap);
    }
  }
  return t;
}

// sum(out * W) with W a fixed pseudo-random tensor of out's shape.
Var weighted_sum(Tape& tape, const Var& out) {
  Rng rng(0x5eed);
  return sum(mul(out, tape.constant(rng.normal_like(out.shape()))));
}

double param_fd_error(ParamStore& store, const std::function<Var(Binding&)>& loss_fn,
                      double h = 1e-5) {
  std::map<std::string, Tensor> grads;
  {
    Tape tape;
    Binding p(tape, store, true);
    grads = p.gradients(loss_fn(p));
  }
  auto value = [&] {
    Tape tape;
    Binding p(tape, store, false);
    return loss_fn(p).value().item();
  };
  double worst = 0.0;
  for (auto& [name, t] : store.tensors()) {
    const Tensor& g = grads.at(name);
    for (size_t i = 0; i < t.data.size(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + h;
      const double fp = value();
      t.data[i] = saved - h;
      const double fm = value();
      t.data[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, std::abs(g.data[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

GradNetConfig small_gradnet(GradNetKind kind) {
  GradNetConfig c;
  c.kind = kind;
  c.d_latent = 2;
  c.d_model = 8;
  c.d_filter = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_source = 8;
  return c;
}

LvmConfig small_lvm(int64_t vocab, int64_t t_max) {
  LvmConfig c;
  c.vocab = vocab;
  c.d_latent = 2;
  c.d_model = 8;
  c.d_filter = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.t_max = t_max;
  c.len_offset_max = 2;
  return c;
}

}  // namespace

double fd_max_rel_error(const std::function<double(const Tensor&)>& value, const Tensor& grad,
                        const Tensor& z, double h) {
  require_same_shape(grad, z, "fd_max_rel_error");
  double worst = 0.0;
  for (int64_t i = 0; i < z.numel(); ++i) {
    Tensor zp = z, zm = z;
    zp.data[static_cast<size_t>(i)] += h;
    zm.data[static_cast<size_t>(i)] -= h;
    const double fd = (value(zp) - value(zm)) / (2.0 * h);
    const double err = std::abs(grad.data[static_cast<size_t>(i)] - fd) / std::max(1.0, std::abs(fd));
    if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, err);
  }
  return worst;
}

std::vector<OracleCheck> op_gradient_suite(uint64_t seed, double tol) {
  Rng rng(seed);
  std::vector<OracleCheck> out;
  auto check = [&](const std::string& name, const Tensor& z, const std::function<Var(const Var&)>& op) {
    ScalarFn f = [&](Tape& tape, const Var& x) { return weighted_sum(tape, op(x)); };
    double err;
    try {
      err = finite_diff_check(f, z).max_rel_error;
    } catch (const Error& e) {
      out.push_back({"fd op " + name, std::numeric_limits<double>::infinity(), tol, false, e.what()});
      return;
    }
    out.push_back(below("fd op " + name, err, tol));
  };
  const Tensor m34 = rng.normal_like({3, 4});
  const Tensor m38 = rng.normal_like({3, 8});
  const Tensor pos34 = uniform_tensor(rng, {3, 4}, 0.5, 2.0);

  check("add", m38, [](const Var& x) { return add(slice_cols(x, 0, 4), slice_cols(x, 4, 4)); });
  check("sub", m38, [](const Var& x) { return sub(slice_cols(x, 0, 4), slice_cols(x, 4, 4)); });
  check("mul", m38, [](const Var& x) { return mul(slice_cols(x, 0, 4), slice_cols(x, 4, 4)); });
  check("mul_self", m34, [](const Var& x) { return mul(x, x); });
  check("neg", m34, [](const Var& x) { return neg(x); });
  check("scale", m34, [](const Var& x) { return scale(x, 1.7); });
  check("add_scalar", m34, [](const Var& x) { return add_scalar(x, 0.3); });
  check("matmul", rng.normal_like({7, 4}),
        [](const Var& x) { return matmul(slice_rows(x, 0, 3), slice_rows(x, 3, 4)); });
  check("transpose", m34, [](const Var& x) { return transpose(x); });
  check("reshape", m34, [](const Var& x) { return reshape(x, {4, 3}); });
  check("add_row", rng.normal_like({4, 4}), [](const Var& x) {
    return add_row(slice_rows(x, 0, 3), reshape(slice_rows(x, 3, 1), {4}));
  });
  check("mul_row", rng.normal_like({4, 4}), [](const Var& x) {
    return mul_row(slice_rows(x, 0, 3), reshape(slice_rows(x, 3, 1), {4}));
  });
  check("sum_rows", m34, [](const Var& x) { return sum_rows(x); });
  check("broadcast_rows", rng.normal_like({4}), [](const Var& x) { return broadcast_rows(x, 3); });
  check("row_sum", m34, [](const Var& x) { return row_sum(x); });
  check("broadcast_cols", rng.normal_like({3}), [](const Var& x) { return broadcast_cols(x, 4); });
  check("sum", m34, [](const Var& x) { return sum(x); });
  check("fill", Tensor::scalar(0.7), [](const Var& x) { return fill(x, {2, 3}); });
  check("exp", m34, [](const Var& x) { return exp(x); });
  check("log", pos34, [](const Var& x) { return log(x); });
  check("tanh", m34, [](const Var& x) { return tanh(x); });
  check("square", m34, [](const Var& x) { return square(x); });
  check("pow", pos34, [](const Var& x) { return pow(x, 1.5); });
  check("pow_negative", pos34, [](const Var& x) { return pow(x, -0.5); });
  check("clamp", away_from(rng, {3, 4}, {-0.5, 0.5}, 1e-3),
        [](const Var& x) { return clamp(x, -0.5, 0.5); });
  check("relu", away_from(rng, {3, 4}, {0.0}, 1e-3), [](const Var& x) { return relu(x); });
  check("concat_cols", m34, [](const Var& x) {
    std::vector<Var> parts{slice_cols(x, 2, 2), square(slice_cols(x, 0, 2))};
    return concat_cols(parts);
  });
  check("concat_rows", m34, [](const Var& x) {
    std::vector<Var> parts{slice_rows(x, 2, 1), square(slice_rows(x, 0, 2))};
    return concat_rows(parts);
  });
  check("slice_cols", m34, [](const Var& x) { return slice_cols(x, 1, 2); });
  check("slice_rows", m34, [](const Var& x) { return slice_rows(x, 1, 2); });
  check("pad_cols", m34, [](const Var& x) { return pad_cols(x, 1, 6); });
  check("pad_rows", m34, [](const Var& x) { return pad_rows(x, 1, 5); });
  check("mean", m34, [](const Var& x) { return mean(x); });
  check("mean_rows", m34, [](const Var& x) { return mean_rows(x); });
  check("sub_col", rng.normal_like({3, 5}), [](const Var& x) {
    return sub_col(slice_cols(x, 0, 4), reshape(slice_cols(x, 4, 1), {3}));
  });
  check("gelu", m34, [](const Var& x) { return gelu(x); });
  check("softmax", m34, [](const Var& x) { return softmax(x); });
  check("log_softmax", m34, [](const Var& x) { return log_softmax(x); });
  check("logsumexp_rows", m34, [](const Var& x) { return logsumexp_rows(x); });
  check("layer_norm", rng.normal_like({4, 4}), [](const Var& x) {
    return layer_norm(slice_rows(x, 0, 2), reshape(slice_rows(x, 2, 1), {4}),
                      reshape(slice_rows(x, 3, 1), {4}));
  });

  {
    // d/dz sum(detach(z) * z) is detach(z), not 2z.
    ScalarFn f = [](Tape&, const Var& x) { return sum(mul(detach(x), x)); };
    out.push_back(below("fd op detach", max_abs_diff(autodiff_grad(f, m34), m34), tol));
  }
  {
    // Second order: f(z) = sum(W * d/dz sum(tanh(z) * z)).
    ScalarFn f = [](Tape& tape, const Var& x) {
      Var inner = sum(mul(tanh(x), x));
      std::vector<Var> wrt{x};
      return weighted_sum(tape, tape.grad(inner, wrt, true)[0]);
    };
    auto value = [&](const Tensor& z) {
      Tape tape;
      return f(tape, tape.leaf(z)).value().item();
    };
    out.push_back(below("fd op second_order", fd_max_rel_error(value, autodiff_grad(f, m34), m34), tol));
  }
  return out;
}

std::vector<OracleCheck> net_gradient_suite(uint64_t seed, double tol) {
  Rng rng(seed);
  std::vector<OracleCheck> out;
  const Tensor h = rng.normal_like({4, 8});
  const LatentState z = rng.normal_like({3, 2});

  for (GradNetKind kind : {GradNetKind::kEnergy, GradNetKind::kScore}) {
    GradNet net(small_gradnet(kind), rng.next_u64());
    const std::string tag = "fd " + to_string(kind) + " net";
    if (kind == GradNetKind::kEnergy) {
      ScalarFn energy = [&](Tape& tape, const Var& x) {
        Binding p(tape, net.params(), false);
        return net.energy(p, x, tape.constant(h));
      };
      out.push_back(below(tag + " energy wrt z", finite_diff_check(energy, z).max_rel_error, tol));
    }
    // S(z) includes the double-backward path for the energy kind.
    ScalarFn field = [&](Tape& tape, const Var& x) {
      Binding p(tape, net.params(), false);
      if (kind == GradNetKind::kScore) return weighted_sum(tape, net.score(p, x, tape.constant(h)));
      std::vector<Var> wrt{x};
      return weighted_sum(tape, tape.grad(net.energy(p, x, tape.constant(h)), wrt, true)[0]);
    };
    auto field_value = [&](const Tensor& at) {
      Tape tape;
      return field(tape, tape.leaf(at)).value().item();
    };
    out.push_back(below(tag + " field wrt z",
                        fd_max_rel_error(field_value, autodiff_grad(field, z), z), tol));

    std::vector<GradNetExample> batch;
    for (int i = 0; i < 2; ++i) {
      batch.push_back({rng.normal_like({3, 2}), rng.normal_like({3, 2}), h, false});
    }
    const double err = param_fd_error(net.params(), [&](Binding& p) {
      return gradnet_loss(net, p, batch);
    });
    out.push_back(below(tag + " loss wrt params", err, tol));
  }

  {
    Lvm lvm(small_lvm(7, 6), rng.next_u64());
    const TokenSeq x{3, 5, 4}, y{6, 3, 4, 5};
    const Tensor eps = rng.normal_like({4, 2});
    for (double fn : {0.0, 0.05}) {
      const double err = param_fd_error(lvm.params(), [&](Binding& p) {
        return elbo_terms(lvm, p, x, y, eps, 1.0, fn).loss;
      });
      out.push_back(below(fn > 0.0 ? "fd lvm loss wrt params (kl floor)" : "fd lvm loss wrt params", err, tol));
    }
  }
  {
    ArConfig c;
    c.vocab = 7;
    c.d_model = 8;
    c.d_filter = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.t_max = 6;
    ArModel ar(c, rng.next_u64());
    const TokenSeq x{3, 5, 4}, y{6, 3, 4};
    const double err = param_fd_error(ar.params(), [&](Binding& p) { return ar.log_prob(p, y, x); });
    out.push_back(below("fd ar log_prob wrt params", err, tol));
  }
  return out;
}

std::vector<OracleCheck> objective_identity_suite(int64_t n, uint64_t seed, double tol) {
  Rng rng(seed);
  std::vector<OracleCheck> out;
  for (GradNetKind kind : {GradNetKind::kEnergy, GradNetKind::kScore}) {
    double identity_err = 0.0, minimizer_err = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      GradNet net(small_gradnet(kind), rng.next_u64());
      GradNetExample ex{rng.normal_like({3, 2}), rng.normal_like({3, 2}), rng.normal_like({4, 8}),
                        false};
      for (auto& v : ex.z.data) v *= 2.0;
      const double loss = gradnet_loss(net, std::span(&ex, 1));
      Tensor d = ex.z_tilde;
      for (size_t k = 0; k < d.data.size(); ++k) d.data[k] -= ex.z.data[k];
      Tensor s = kind == GradNetKind::kScore ? net.score(ex.z, ex.h_src) : net.energy_grad(ex.z, ex.h_src);
      if (kind == GradNetKind::kEnergy) {
        for (auto& v : s.data) v = -v;
      }
      double mse = 0.0;
      for (size_t k = 0; k < s.data.size(); ++k) mse += (s.data[k] - d.data[k]) * (s.data[k] - d.data[k]);
      identity_err = std::max(identity_err, std::abs(loss + squared_norm(d) - mse));

      // Newton step on the objective; gradient and Hessian by unit-step
      // central differences, exact for a quadratic.
      const int64_t m = d.numel();
      const Tensor s0 = rng.normal_like(d.shape);
      auto f = [&](const std::vector<std::pair<int64_t, double>>& moves) {
        Tensor at = s0;
        for (auto [k, step] : moves) at.data[static_cast<size_t>(k)] += step;
        return proxy_objective(at, d);
      };
      Eigen::MatrixXd hess(m, m);
      Eigen::VectorXd grad(m), x0(m);
      for (int64_t a = 0; a < m; ++a) {
        x0(a) = s0.data[static_cast<size_t>(a)];
        grad(a) = (f({{a, 1.0}}) - f({{a, -1.0}})) / 2.0;
        for (int64_t b = 0; b < m; ++b) {
          hess(a, b) = (f({{a, 1.0}, {b, 1.0}}) - f({{a, 1.0}, {b, -1.0}}) -
                        f({{a, -1.0}, {b, 1.0}}) + f({{a, -1.0}, {b, -1.0}})) / 4.0;
        }
      }
      const Eigen::VectorXd star = x0 - hess.ldlt().solve(grad);
      for (int64_t a = 0; a < m; ++a) {
        minimizer_err = std::max(minimizer_err, std::abs(star(a) - d.data[static_cast<size_t>(a)]));
      }
    }
    out.push_back(below("objective identity (" + to_string(kind) + ")", identity_err, tol));
    out.push_back(below("objective minimizer (" + to_string(kind) + ")", minimizer_err, tol));
  }
  return out;
}

TokenSeq enumerate_joint_argmax(const Tensor& log_probs) {
  const int64_t t_len = log_probs.rows(), v = log_probs.cols();
  TokenSeq cur(static_cast<size_t>(t_len), 0), best;
  double best_score = -std::numeric_limits<double>::infinity();
  while (true) {
    double s = 0.0;
    for (int64_t t = 0; t < t_len; ++t) s += log_probs(t, cur[static_cast<size_t>(t)]);
    if (best.empty() || s > best_score) {
      best_score = s;
      best = cur;
    }
    int64_t t = t_len - 1;
    while (t >= 0 && ++cur[static_cast<size_t>(t)] == v) cur[static_cast<size_t>(t--)] = 0;
    if (t < 0) break;
  }
  return best;
}

OracleCheck argmax_enumeration_check(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<Lvm> models;
  for (int i = 0; i < 5; ++i) models.emplace_back(small_lvm(5, 3), rng.next_u64());
  int64_t mismatches = 0;
  for (int64_t i = 0; i < n; ++i) {
    const Lvm& lvm = models[static_cast<size_t>(i % 5)];
    const int64_t t_len = 1 + i % 3;
    TokenSeq x;
    for (int64_t k = 0, len = 1 + static_cast<int64_t>(rng.below(3)); k < len; ++k) {
      x.push_back(static_cast<int>(kFirstContentToken + rng.below(2)));
    }
    LatentState z = rng.normal_like({t_len, 2});
    for (auto& v : z.data) v *= 3.0;
    const Tensor h = lvm.encode(x);
    if (argmax_tokens(lvm.decode_logits(z, h)) != enumerate_joint_argmax(lvm.decode_log_probs(z, h))) {
      ++mismatches;
    }
  }
  return {"argmax matches enumeration", static_cast<double>(mismatches), 0.5, mismatches == 0,
          std::to_string(n) + " cases"};
}

GaussHermite gauss_hermite(int n) {
  if (n < 1) throw Error("gauss_hermite: need at least one node");
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) jac(k - 1, k) = jac(k, k - 1) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  GaussHermite gh;
  for (int i = 0; i < n; ++i) {
    gh.nodes.push_back(es.eigenvalues()(i));
    const double v0 = es.eigenvectors()(0, i);
    gh.weights.push_back(std::sqrt(std::numbers::pi) * v0 * v0);
  }
  return gh;
}

namespace {

double toy_token_log_prob(const ToyMarginalInstance& toy, double z, int64_t y) {
  std::array<double, 3> logits{};
  for (int v = 0; v < 3; ++v) logits[static_cast<size_t>(v)] = toy.lin[static_cast<size_t>(v)] * z + toy.quad[static_cast<size_t>(v)] * z * z + toy.bias[static_cast<size_t>(v)];
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - mx);
  return logits[static_cast<size_t>(y)] - mx - std::log(s);
}

}  // namespace

double ToyMarginalInstance::log_likelihood(const LatentState& z) const {
  double s = 0.0;
  for (int64_t t = 0; t < 2; ++t) s += toy_token_log_prob(*this, z(t, 0), y[static_cast<size_t>(t)]);
  return s;
}

MarginalProblem ToyMarginalInstance::problem() const {
  MarginalProblem p;
  p.prior = {Tensor::mat(2, 1, {prior_mean[0], prior_mean[1]}),
             Tensor::mat(2, 1, {prior_log_std[0], prior_log_std[1]})};
  p.proposal = {Tensor::mat(2, 1, {proposal_mean[0], proposal_mean[1]}),
                Tensor::mat(2, 1, {proposal_log_std[0], proposal_log_std[1]})};
  p.log_likelihood = [this](std::span<const LatentState> zs) {
    std::vector<double> out;
    out.reserve(zs.size());
    for (const auto& z : zs) out.push_back(log_likelihood(z));
    return out;
  };
  return p;
}

double ToyMarginalInstance::quadrature_log_marginal(int n) const {
  const GaussHermite gh = gauss_hermite(n);
  double total = 0.0;
  for (size_t t = 0; t < 2; ++t) {
    const double sd = std::exp(prior_log_std[t]);
    double integral = 0.0;
    for (size_t i = 0; i < gh.nodes.size(); ++i) {
      const double z = prior_mean[t] + std::numbers::sqrt2 * sd * gh.nodes[i];
      integral += gh.weights[i] * std::exp(toy_token_log_prob(*this, z, y[t]));
    }
    total += std::log(integral / std::sqrt(std::numbers::pi));
  }
  return total;
}

std::vector<OracleCheck> importance_sampling_suite(int64_t n_large, std::vector<int64_t> ns,
                                                   int64_t seeds, uint64_t seed, double tol) {
  ToyMarginalInstance toy;
  const MarginalProblem prob = toy.problem();
  const double truth = toy.quadrature_log_marginal();
  std::vector<OracleCheck> out;
  const double est = importance_sample(prob, n_large, seed).value;
  out.push_back(below("is vs quadrature (N=" + std::to_string(n_large) + ")", std::abs(est - truth),
                      tol, "estimate " + std::to_string(est) + ", quadrature " + std::to_string(truth)));

  Rng root(seed);
  std::vector<double> medians;
  std::string detail;
  for (size_t k = 0; k < ns.size(); ++k) {
    std::vector<double> errs;
    for (int64_t r = 0; r < seeds; ++r) {
      const uint64_t s = root.split(k * 1000 + static_cast<uint64_t>(r)).next_u64();
      errs.push_back(std::abs(importance_sample(prob, ns[k], s).value - truth));
    }
    std::nth_element(errs.begin(), errs.begin() + static_cast<int64_t>(errs.size() / 2), errs.end());
    medians.push_back(errs[errs.size() / 2]);
    detail += (k ? ", " : "") + std::string("N=") + std::to_string(ns[k]) + ": " +
              std::to_string(medians.back());
  }
  bool decreasing = true;
  for (size_t k = 1; k < medians.size(); ++k) decreasing = decreasing && medians[k] < medians[k - 1];
  out.push_back({"is median error decreases in N", medians.empty() ? 0.0 : medians.back(), 0.0,
                 decreasing, detail});
  return out;
}

std::vector<OracleCheck> selftest_checks(uint64_t seed) {
  Rng root(seed);
  std::vector<OracleCheck> all;
  auto append = [&](std::vector<OracleCheck> v) {
    for (auto& c : v) all.push_back(std::move(c));
  };
  append(op_gradient_suite(root.split(1).next_u64()));
  append(net_gradient_suite(root.split(2).next_u64()));
  append(objective_identity_suite(100, root.split(3).next_u64()));
  all.push_back(argmax_enumeration_check(200, root.split(4).next_u64()));
  append(importance_sampling_suite(100000, {10, 100, 1000}, 20, root.split(5).next_u64()));
  return all;
}

}  // namespace latref
