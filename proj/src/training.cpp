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

#include "latref/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "latref/inference.hpp"

namespace latref {

namespace {

using Clock = std::chrono::steady_clock;

// Loss of one batch on a fresh tape, plus per-term diagnostics.
struct BatchLoss {
  Var loss;
  std::map<std::string, double> terms;
};

std::vector<size_t> draw_batch(Rng& rng, size_t n, int64_t batch_size) {
  if (n == 0) throw Error("training: empty dataset");
  if (batch_size < 1) throw Error("training: batch_size must be >= 1");
  std::vector<size_t> idx;
  for (int64_t i = 0; i < batch_size; ++i) idx.push_back(static_cast<size_t>(rng.below(n)));
  return idx;
}

// Accumulates per-step diagnostics and emits one JSON line per interval.
class MetricsWriter {
 public:
  MetricsWriter(std::ostream* out, int64_t every) : out_(out), every_(std::max<int64_t>(every, 1)) {}

  void add(int64_t step, const std::map<std::string, double>& terms, double lr, int64_t skipped) {
    for (const auto& [k, v] : terms) sums_[k] += v;
    ++count_;
    if (out_ == nullptr || step % every_ != 0) return;
    nlohmann::json rec;
    rec["step"] = step;
    for (const auto& [k, v] : sums_) rec[k] = v / static_cast<double>(count_);
    rec["lr"] = lr;
    rec["skipped"] = skipped;
    rec["wall_time"] = std::chrono::duration<double>(Clock::now() - start_).count();
    *out_ << rec.dump() << '\n';
    out_->flush();
    sums_.clear();
    count_ = 0;
  }

  // A standalone record, written immediately.
  void event(int64_t step, const std::string& key, double v) {
    if (out_ == nullptr) return;
    nlohmann::json rec;
    rec["step"] = step;
    rec[key] = v;
    *out_ << rec.dump() << '\n';
    out_->flush();
  }

 private:
  std::ostream* out_;
  int64_t every_;
  std::map<std::string, double> sums_;
  int64_t count_ = 0;
  Clock::time_point start_ = Clock::now();
};

// Central differences on a few random coordinates of the parameter store,
// compared against the autodiff gradient of the same deterministic loss.
double spot_grad_check(ParamStore& params, const std::map<std::string, Tensor>& grads,
                       const std::function<double()>& loss_fn, Rng rng, int n_coords = 3) {
  std::vector<std::string> names;
  for (const auto& [name, t] : params.tensors()) names.push_back(name);
  const double h = 1e-5;
  double worst = 0.0;
  for (int c = 0; c < n_coords; ++c) {
    const auto& name = names[rng.below(names.size())];
    Tensor& t = params.mut(name);
    const size_t i = rng.below(t.data.size());
    const double orig = t.data[i];
    t.data[i] = orig + h;
    const double up = loss_fn();
    t.data[i] = orig - h;
    const double down = loss_fn();
    t.data[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double ad = grads.at(name).data[i];
    worst = std::max(worst, std::abs(ad - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

// `prepare(rng)` draws the step's batch; `loss(binding, batch)` builds the
// differentiable batch loss. Keeping them apart lets the gradient spot check
// re-evaluate the exact same batch under perturbed parameters.
template <typename Model, typename Prepare, typename LossFn>
TrainSummary run_trainer(Model& model, AdamState& adam, int64_t start_step,
                         const OptimConfig& opt, uint64_t seed, const TrainHooks& hooks,
                         Prepare&& prepare, LossFn&& batch_loss) {
  TrainSummary summary;
  summary.last_step = start_step;
  MetricsWriter metrics(hooks.metrics, opt.log_every);
  const Rng root(seed);
  for (int64_t step = start_step + 1; step <= opt.steps; ++step) {
    adam.lr = inverse_sqrt_lr(opt.lr, step, opt.warmup);
    Rng rng = root.split(static_cast<uint64_t>(step));
    const auto batch = prepare(rng);
    Tape tape;
    Binding p(tape, model.params(), true);
    BatchLoss bl = batch_loss(p, batch);
    const double loss = bl.loss.value().item();
    summary.losses.push_back(loss);
    const bool ckpt_now = opt.checkpoint_every > 0 && step % opt.checkpoint_every == 0;
    bool applied = false;
    if (std::isfinite(loss)) {
      auto grads = p.gradients(bl.loss);
      if (ckpt_now && hooks.metrics != nullptr) {
        auto loss_fn = [&]() {
          // Recording stays on: the energy objective differentiates through dE/dz.
          Tape t2;
          Binding p2(t2, model.params(), false);
          return batch_loss(p2, batch).loss.value().item();
        };
        metrics.event(step, "gradcheck_rel_err",
                      spot_grad_check(model.params(), grads, loss_fn,
                                      root.split(~static_cast<uint64_t>(step))));
      }
      applied = adam_step(adam, model.params(), grads) == AdamResult::kApplied;
    } else {
      ++adam.skipped;
    }
    if (!applied) ++summary.skipped_steps;
    metrics.add(step, bl.terms, adam.lr, adam.skipped);
    summary.last_step = step;
    if (hooks.checkpoint && (ckpt_now || step == opt.steps)) hooks.checkpoint(step, adam);
  }
  return summary;
}

}  // namespace

// ---- ELBO ----------------------------------------------------------------

ElboTerms elbo_terms(const Lvm& lvm, Binding& p, const TokenSeq& x, const TokenSeq& y,
                     const Tensor& eps, double length_weight, double free_nats) {
  const auto& cfg = lvm.config();
  if (y.empty()) throw Error("elbo: empty target sequence");
  if (static_cast<int64_t>(y.size()) > cfg.t_max) {
    throw Error("elbo: target length " + std::to_string(y.size()) + " exceeds t_max " +
                std::to_string(cfg.t_max));
  }
  validate_tokens(y, static_cast<int>(cfg.vocab), cfg.t_max, "target");
  Tape& tape = p.tape();
  const int64_t t = static_cast<int64_t>(y.size());
  Var h = lvm.encode(p, x);
  GaussianVars q = lvm.posterior(p, h, y);
  GaussianVars pr = lvm.prior(p, h, t);
  require_same_shape(eps, Tensor::zeros({t, cfg.d_latent}), "elbo noise");
  Var z = add(q.mean, mul(exp(q.log_std), tape.constant(eps)));
  Var lp = log_softmax(lvm.decode_logits(p, z, h));
  Tensor pick = Tensor::zeros(lp.shape());
  for (int64_t i = 0; i < t; ++i) pick(i, y[static_cast<size_t>(i)]) = 1.0;
  Var recon = sum(mul(lp, tape.constant(std::move(pick))));
  Var kl = kl_divergence(q, pr);
  Var kl_train = kl;
  if (free_nats > 0.0) {
    Var per_pos = row_sum(kl_divergence_terms(q, pr));
    kl_train = add_scalar(sum(relu(add_scalar(per_pos, -free_nats))),
                          free_nats * static_cast<double>(t));
  }

  const int64_t r = cfg.len_offset_max;
  const int64_t offset = std::clamp<int64_t>(t - static_cast<int64_t>(x.size()), -r, r);
  Var llp = log_softmax(lvm.length_logits(p, h));
  Tensor lpick = Tensor::zeros(llp.shape());
  lpick(0, offset + r) = 1.0;
  Var length_ce = neg(sum(mul(llp, tape.constant(std::move(lpick)))));

  ElboTerms out;
  out.loss = add(sub(kl_train, recon), scale(length_ce, length_weight));
  out.recon = recon.value().item();
  out.kl = kl.value().item();
  out.length_ce = length_ce.value().item();
  return out;
}

ElboBatchStats elbo_loss(const Lvm& lvm, std::span<const Example> batch, uint64_t seed,
                         double length_weight) {
  if (batch.empty()) throw Error("elbo_loss: empty batch");
  ElboBatchStats s;
  int64_t used = 0;
  const Rng root(seed);
  for (size_t i = 0; i < batch.size(); ++i) {
    Tape tape;
    NoGradGuard ng(tape);
    Binding p(tape, lvm.params(), false);
    Rng rng = root.split(i);
    const Tensor eps =
        rng.normal_like({static_cast<int64_t>(batch[i].tgt.size()), lvm.config().d_latent});
    auto t = elbo_terms(lvm, p, batch[i].src, batch[i].tgt, eps, length_weight);
    const double loss = t.loss.value().item();
    if (!std::isfinite(loss)) {
      ++s.skipped;
      continue;
    }
    s.recon += t.recon;
    s.kl += t.kl;
    s.length_ce += t.length_ce;
    s.loss += loss;
    ++used;
  }
  if (used > 0) {
    const double inv = 1.0 / static_cast<double>(used);
    s.recon *= inv;
    s.kl *= inv;
    s.length_ce *= inv;
    s.loss *= inv;
  }
  return s;
}

TrainSummary train_lvm(Lvm& lvm, AdamState& adam, int64_t start_step,
                       std::span<const Example> data, const LvmTrainConfig& cfg, uint64_t seed,
                       const TrainHooks& hooks) {
  struct Batch {
    std::vector<size_t> idx;
    std::vector<Tensor> eps;
  };
  auto prepare = [&](Rng& rng) {
    Batch b;
    b.idx = draw_batch(rng, data.size(), cfg.optim.batch_size);
    for (size_t i : b.idx) {
      b.eps.push_back(rng.normal_like({static_cast<int64_t>(data[i].tgt.size()),
                                       lvm.config().d_latent}));
    }
    return b;
  };
  auto batch_loss = [&](Binding& p, const Batch& b) {
    std::vector<Var> losses;
    BatchLoss bl;
    const double inv = 1.0 / static_cast<double>(b.idx.size());
    for (size_t k = 0; k < b.idx.size(); ++k) {
      const auto& ex = data[b.idx[k]];
      auto t = elbo_terms(lvm, p, ex.src, ex.tgt, b.eps[k], cfg.length_loss_weight,
                          cfg.kl_free_nats);
      losses.push_back(reshape(t.loss, {1, 1}));
      bl.terms["recon"] += t.recon * inv;
      bl.terms["kl"] += t.kl * inv;
      bl.terms["length_ce"] += t.length_ce * inv;
    }
    bl.loss = scale(sum(concat_cols(losses)), inv);
    bl.terms["loss"] = bl.loss.value().item();
    return bl;
  };
  return run_trainer(lvm, adam, start_step, cfg.optim, seed, hooks, prepare, batch_loss);
}

// ---- Proxy-gradient objective -----------------------------------------------

double proxy_objective(const Tensor& s, const Tensor& d) {
  require_same_shape(s, d, "proxy_objective");
  return squared_norm(s) - 2.0 * dot(s, d);
}

std::optional<GradNetExample> make_gradnet_target(const Lvm& lvm, const LatentGradient* current,
                                                  const TokenSeq& x, int64_t length,
                                                  const GradNetTrainConfig& cfg, Rng& rng,
                                                  TargetStats* stats) {
  if (cfg.delta_steps < 1) throw Error("gradnet target: delta_steps must be >= 1");
  GradNetExample ex;
  ex.h_src = lvm.encode(x);
  const DiagGaussianSeq prior = lvm.prior(ex.h_src, length);
  ex.z = prior.sample(rng);
  const bool pre = rng.bernoulli(cfg.pre_update_prob);
  if (pre && current != nullptr) {
    DecodeConfig one;
    one.steps = 1;
    one.alpha = cfg.pre_update_alpha;
    ex.z = refine(lvm, *current, ex.z, ex.h_src, one).z;
    ex.pre_updated = true;
    if (stats) ++stats->pre_updated;
  }
  if (ex.z.all_finite()) ex.z_tilde = delta_infer(lvm, ex.z, ex.h_src, cfg.delta_steps).z;
  if (!ex.z.all_finite() || !ex.z_tilde.all_finite()) {
    if (stats) ++stats->dropped;
    return std::nullopt;
  }
  return ex;
}

Var gradnet_loss(const GradNet& net, Binding& p, std::span<const GradNetExample> batch) {
  if (batch.empty()) throw Error("gradnet_loss: empty batch");
  Tape& tape = p.tape();
  std::vector<Var> per;
  for (const auto& ex : batch) {
    require_same_shape(ex.z, ex.z_tilde, "gradnet_loss z vs z_tilde");
    Tensor d = ex.z_tilde;
    for (size_t i = 0; i < d.data.size(); ++i) d.data[i] -= ex.z.data[i];
    Var dv = tape.constant(std::move(d));
    Var h = tape.constant(ex.h_src);
    if (net.kind() == GradNetKind::kScore) {
      Var s = net.score(p, tape.constant(ex.z), h);
      per.push_back(reshape(sub(sum(square(s)), scale(sum(mul(s, dv)), 2.0)), {1, 1}));
    } else {
      Var z = tape.leaf(ex.z);
      Var e = net.energy(p, z, h);
      std::vector<Var> wrt{z};
      Var g = tape.grad(e, wrt, /*create_graph=*/tape.grad_enabled())[0];
      per.push_back(reshape(add(sum(square(g)), scale(sum(mul(g, dv)), 2.0)), {1, 1}));
    }
  }
  return scale(sum(concat_cols(per)), 1.0 / static_cast<double>(batch.size()));
}

double gradnet_loss(const GradNet& net, std::span<const GradNetExample> batch) {
  Tape tape;
  Binding p(tape, net.params(), false);
  return gradnet_loss(net, p, batch).value().item();
}

TrainSummary train_gradnet(GradNet& net, AdamState& adam, int64_t start_step, const Lvm& lvm,
                           std::span<const Example> data, const GradNetTrainConfig& cfg,
                           uint64_t seed, const TrainHooks& hooks) {
  if (net.config().d_latent != lvm.config().d_latent) {
    throw Error("train_gradnet: gradient net d_latent does not match the LVM");
  }
  if (net.config().d_source != lvm.config().d_model) {
    throw Error("train_gradnet: gradient net d_source does not match the LVM d_model");
  }
  if (cfg.samples_per_source < 1) throw Error("train_gradnet: samples_per_source must be >= 1");
  struct Batch {
    std::vector<GradNetExample> examples;
    TargetStats stats;
  };
  int64_t dropped_total = 0;
  auto prepare = [&](Rng& rng) {
    Batch b;
    const auto idx = draw_batch(rng, data.size(), cfg.optim.batch_size);
    for (size_t i : idx) {
      for (int64_t s = 0; s < cfg.samples_per_source; ++s) {
        auto ex = make_gradnet_target(lvm, &net, data[i].src,
                                      static_cast<int64_t>(data[i].tgt.size()), cfg, rng, &b.stats);
        if (ex) b.examples.push_back(std::move(*ex));
      }
    }
    dropped_total += b.stats.dropped;
    return b;
  };
  auto batch_loss = [&](Binding& p, const Batch& b) {
    BatchLoss bl;
    if (b.examples.empty()) {
      bl.loss = p.tape().constant(Tensor::scalar(std::numeric_limits<double>::quiet_NaN()));
      return bl;
    }
    bl.loss = gradnet_loss(net, p, b.examples);
    double floor = 0.0;
    for (const auto& ex : b.examples) {
      Tensor d = ex.z_tilde;
      for (size_t j = 0; j < d.data.size(); ++j) d.data[j] -= ex.z.data[j];
      floor -= squared_norm(d);
    }
    const double n = static_cast<double>(b.examples.size());
    bl.terms["loss"] = bl.loss.value().item();
    bl.terms["floor"] = floor / n;
    bl.terms["pre_updated"] = static_cast<double>(b.stats.pre_updated) / n;
    bl.terms["dropped"] = static_cast<double>(dropped_total);
    return bl;
  };
  return run_trainer(net, adam, start_step, cfg.optim, seed, hooks, prepare, batch_loss);
}

TrainSummary train_ar(ArModel& ar, AdamState& adam, int64_t start_step,
                      std::span<const Example> data, const ArTrainConfig& cfg, uint64_t seed,
                      const TrainHooks& hooks) {
  auto prepare = [&](Rng& rng) { return draw_batch(rng, data.size(), cfg.optim.batch_size); };
  auto batch_loss = [&](Binding& p, const std::vector<size_t>& idx) {
    std::vector<Var> nll;
    int64_t tokens = 0;
    for (size_t i : idx) {
      nll.push_back(reshape(neg(ar.log_prob(p, data[i].tgt, data[i].src)), {1, 1}));
      tokens += static_cast<int64_t>(data[i].tgt.size()) + 1;
    }
    BatchLoss bl;
    const double n = static_cast<double>(idx.size());
    bl.loss = scale(sum(concat_cols(nll)), 1.0 / n);
    bl.terms["loss"] = bl.loss.value().item();
    bl.terms["nll_per_token"] = bl.terms["loss"] * n / static_cast<double>(tokens);
    return bl;
  };
  return run_trainer(ar, adam, start_step, cfg.optim, seed, hooks, prepare, batch_loss);
}

std::vector<Example> distill_targets(const ArModel& ar, std::span<const Example> data) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    TokenSeq y = ar.generate(ex.src);
    if (y.empty()) y = ex.tgt;  // the LVM cannot model empty targets
    out.push_back({ex.src, std::move(y)});
  }
  return out;
}

// ---- Resumable checkpoints -----------------------------------------------

Checkpoint with_train_state(Checkpoint model, const AdamState& adam, int64_t step) {
  auto meta = nlohmann::json::parse(model.metadata);
  meta["step"] = step;
  meta["adam"] = {{"t", adam.t},         {"skipped", adam.skipped}, {"lr", adam.lr},
                  {"beta1", adam.beta1}, {"beta2", adam.beta2},     {"eps", adam.eps}};
  model.metadata = meta.dump();
  for (const auto& [name, t] : adam.m) model.tensors.emplace("adam.m." + name, t);
  for (const auto& [name, t] : adam.v) model.tensors.emplace("adam.v." + name, t);
  return model;
}

int64_t restore_train_state(const Checkpoint& ckpt, AdamState& adam) {
  auto meta = nlohmann::json::parse(ckpt.metadata);
  if (!meta.contains("step")) return 0;
  const auto& a = meta.at("adam");
  adam.t = a.at("t").get<int64_t>();
  adam.skipped = a.at("skipped").get<int64_t>();
  adam.lr = a.at("lr").get<double>();
  adam.beta1 = a.at("beta1").get<double>();
  adam.beta2 = a.at("beta2").get<double>();
  adam.eps = a.at("eps").get<double>();
  adam.m.clear();
  adam.v.clear();
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("adam.m.", 0) == 0) adam.m.emplace(name.substr(7), t);
    if (name.rfind("adam.v.", 0) == 0) adam.v.emplace(name.substr(7), t);
  }
  return meta.at("step").get<int64_t>();
}

}  // namespace latref
