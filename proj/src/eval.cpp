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

#include "latref/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "latref/inference.hpp"

namespace latref {

// ---- Importance sampling --------------------------------------------------

MarginalEstimate marginal_from_log_weights(std::span<const double> log_weights) {
  MarginalEstimate est;
  est.n_samples = static_cast<int64_t>(log_weights.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double w : log_weights) {
    if (std::isfinite(w)) {
      mx = std::max(mx, w);
    } else {
      ++est.dropped;
    }
  }
  const int64_t kept = est.n_samples - est.dropped;
  if (kept == 0) throw Error("importance sampling: every weight is non-finite");
  double s = 0.0, s2 = 0.0;
  for (double w : log_weights) {
    if (!std::isfinite(w)) continue;
    const double e = std::exp(w - mx);
    s += e;
    s2 += e * e;
  }
  est.value = mx + std::log(s) - std::log(static_cast<double>(kept));
  est.ess = s * s / s2;
  return est;
}

MarginalEstimate importance_sample(const MarginalProblem& problem, int64_t n, uint64_t seed,
                                   int64_t chunk) {
  if (n < 1) throw Error("importance sampling: need at least one sample");
  require_same_shape(problem.prior.mean, problem.proposal.mean, "importance sampling prior/proposal");
  chunk = std::max<int64_t>(chunk, 1);
  Rng rng(seed);
  std::vector<double> lw;
  lw.reserve(static_cast<size_t>(n));
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t m = std::min(chunk, n - start);
    std::vector<LatentState> zs;
    zs.reserve(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) zs.push_back(problem.proposal.sample(rng));
    const auto ll = problem.log_likelihood(zs);
    if (static_cast<int64_t>(ll.size()) != m) throw Error("importance sampling: likelihood batch size");
    for (int64_t i = 0; i < m; ++i) {
      const auto& z = zs[static_cast<size_t>(i)];
      lw.push_back(ll[static_cast<size_t>(i)] + problem.prior.log_density(z) -
                   problem.proposal.log_density(z));
    }
  }
  return marginal_from_log_weights(lw);
}

MarginalEstimate is_marginal(const Lvm& lvm, const TokenSeq& y, const Tensor& h_src, int64_t n,
                             uint64_t seed) {
  if (y.empty()) throw Error("is_marginal: empty sequence has no latent length");
  MarginalProblem prob;
  prob.prior = lvm.prior(h_src, static_cast<int64_t>(y.size()));
  prob.proposal = lvm.posterior(h_src, y);
  prob.log_likelihood = [&](std::span<const LatentState> zs) {
    std::vector<double> out;
    for (const auto& lp : lvm.decode_log_probs_batch(zs, h_src)) {
      out.push_back(sequence_log_prob(lp, y));
    }
    return out;
  };
  return importance_sample(prob, n, seed);
}

MarginalEstimate tau_estimate(const Lvm& lvm, const LatentState& z, const Tensor& h_src,
                              int64_t n, uint64_t seed) {
  return is_marginal(lvm, delta_mstep(lvm, z, h_src), h_src, n, seed);
}

double proxy_bound(const Lvm& lvm, const TokenSeq& y, const LatentState& mu,
                   const Tensor& h_src) {
  return lvm.decode_log_prob(y, mu, h_src) +
         lvm.prior(h_src, mu.rows()).log_density(mu);
}

// ---- Sequence metrics -----------------------------------------------------

int64_t edit_distance(const TokenSeq& a, const TokenSeq& b) {
  std::vector<int64_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

int64_t repetition_count(const TokenSeq& y) {
  int64_t n = 0;
  for (size_t t = 1; t < y.size(); ++t) n += y[t] == y[t - 1] ? 1 : 0;
  return n;
}

double token_accuracy(const TokenSeq& hyp, const TokenSeq& ref) {
  const size_t n = std::max(hyp.size(), ref.size());
  if (n == 0) return 1.0;
  size_t hit = 0;
  for (size_t t = 0; t < std::min(hyp.size(), ref.size()); ++t) hit += hyp[t] == ref[t] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(n);
}

double bleu(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs) {
  if (hyps.empty()) throw Error("bleu: empty corpus");
  if (hyps.size() != refs.size()) throw Error("bleu: hypothesis and reference counts differ");
  constexpr int kMaxOrder = 4;
  double match[kMaxOrder] = {}, total[kMaxOrder] = {};
  double hyp_len = 0, ref_len = 0;
  for (size_t k = 0; k < hyps.size(); ++k) {
    const auto& h = hyps[k];
    const auto& r = refs[k];
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      std::map<TokenSeq, int64_t> rc;
      for (size_t i = 0; i + n <= r.size(); ++i) ++rc[TokenSeq(r.begin() + i, r.begin() + i + n)];
      std::map<TokenSeq, int64_t> hc;
      for (size_t i = 0; i + n <= h.size(); ++i) ++hc[TokenSeq(h.begin() + i, h.begin() + i + n)];
      for (const auto& [g, c] : hc) {
        auto it = rc.find(g);
        match[n - 1] += static_cast<double>(std::min(c, it == rc.end() ? 0 : it->second));
        total[n - 1] += static_cast<double>(c);
      }
    }
  }
  if (hyp_len == 0 || match[0] == 0) return 0.0;
  double log_p = std::log(match[0] / total[0]);
  for (int n = 2; n <= kMaxOrder; ++n) log_p += std::log((match[n - 1] + 1) / (total[n - 1] + 1));
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return 100.0 * bp * std::exp(log_p / kMaxOrder);
}

// ---- Per-step reports -------------------------------------------------------

namespace {

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace

double StepReport::mean(DecodeProcedure procedure, int64_t steps, const std::string& metric) const {
  const auto name = to_string(procedure);
  for (const auto& r : rows) {
    if (r.procedure == name && r.steps == steps && r.metric == metric) return r.mean;
  }
  throw Error("step report has no row for " + name + " L=" + std::to_string(steps) + " " + metric);
}

StepReport step_report(std::span<const Example> test, const ReportModels& models,
                       const EvalConfig& cfg, const DecodeConfig& decode, uint64_t seed) {
  if (models.lvm == nullptr) throw Error("step_report: an LVM is required");
  const Lvm& lvm = *models.lvm;
  StepReport rep;
  rep.steps_list = cfg.steps_list;
  std::sort(rep.steps_list.begin(), rep.steps_list.end());
  rep.steps_list.erase(std::unique(rep.steps_list.begin(), rep.steps_list.end()),
                       rep.steps_list.end());
  if (rep.steps_list.empty() || rep.steps_list.front() < 0) {
    throw Error("step_report: steps_list must hold nonnegative step counts");
  }
  const int64_t l_max = rep.steps_list.back();
  for (auto proc : cfg.procedures) {
    if (proc == DecodeProcedure::kScore && models.score == nullptr) {
      throw Error("step_report: score procedure requested without a score network");
    }
    if (proc == DecodeProcedure::kEnergy && models.energy == nullptr) {
      throw Error("step_report: energy procedure requested without an energy network");
    }
  }
  size_t n_examples = test.size();
  if (cfg.max_examples > 0) n_examples = std::min(n_examples, static_cast<size_t>(cfg.max_examples));
  const Rng root(seed);

  for (size_t i = 0; i < n_examples; ++i) {
    const auto& ex = test[i];
    std::vector<StepRecord> recs;
    std::vector<double> series;
    std::map<std::string, std::vector<int64_t>> wall, calls;
    try {
      const Tensor h = lvm.encode(ex.src);
      const int64_t len = std::clamp<int64_t>(
          static_cast<int64_t>(ex.src.size()) + lvm.predict_length(h).argmax_offset(), 1,
          lvm.config().t_max);
      const LatentState z0 = lvm.prior(h, len).mean;
      const TokenSeq y0 = delta_mstep(lvm, z0, h);
      const uint64_t is_seed = root.split(i).next_u64();
      std::map<TokenSeq, MarginalEstimate> cache;
      auto marginal = [&](const TokenSeq& y) {
        const TokenSeq& target = cfg.score_references ? ex.tgt : y;
        auto it = cache.find(target);
        if (it == cache.end()) {
          it = cache.emplace(target, is_marginal(lvm, target, h, cfg.is_samples, is_seed)).first;
        }
        return it->second;
      };

      for (auto proc : cfg.procedures) {
        std::vector<LatentState> zs{z0};
        std::vector<TokenSeq> ys{y0};
        RefinementTrace trace;
        if (proc == DecodeProcedure::kDelta) {
          auto res = delta_infer(lvm, z0, h, l_max);
          trace = std::move(res.trace);
          for (const auto& s : trace.steps) {
            zs.push_back(s.z);
            ys.push_back(s.tokens);
          }
        } else {
          DecodeConfig dc = decode;
          dc.steps = l_max;
          const LatentGradient& field =
              proc == DecodeProcedure::kScore ? *models.score : *models.energy;
          auto res = refine(lvm, field, z0, h, dc);
          trace = std::move(res.trace);
          for (const auto& s : trace.steps) zs.push_back(s.z);
        }
        for (const auto& s : trace.steps) {
          wall[to_string(proc)].push_back(s.wall_ns);
          calls[to_string(proc)].push_back(s.decoder_calls);
        }
        for (int64_t l : rep.steps_list) {
          const size_t k = std::min(static_cast<size_t>(l), zs.size() - 1);
          if (k >= ys.size()) {
            for (size_t j = ys.size(); j <= k; ++j) ys.push_back(delta_mstep(lvm, zs[j], h));
          }
          StepRecord r;
          r.example = static_cast<int64_t>(i);
          r.procedure = proc;
          r.steps = l;
          r.raw = ys[k];
          r.output = remove_repetitions(r.raw);
          const auto m = marginal(r.raw);
          r.log_marginal = m.value;
          r.is_dropped = m.dropped;
          r.edit_from_initial = edit_distance(r.raw, y0);
          r.repetitions = repetition_count(r.raw);
          r.token_accuracy = token_accuracy(r.raw, ex.tgt);
          r.proxy_bound = proxy_bound(lvm, r.raw, zs[k], h);
          recs.push_back(std::move(r));
        }
        if (proc == DecodeProcedure::kDelta) {
          for (int64_t k = 0; k <= l_max; ++k) {
            const size_t j = std::min(static_cast<size_t>(k), zs.size() - 1);
            series.push_back(proxy_bound(lvm, ys[j], zs[j], h));
          }
        }
      }
    } catch (const Error& e) {
      rep.excluded.push_back("example " + std::to_string(i) + ": " + e.what());
      continue;
    }
    for (auto& r : recs) rep.records.push_back(std::move(r));
    if (!series.empty()) rep.delta_proxy_series.push_back(std::move(series));
    for (auto& [k, v] : wall) {
      auto& dst = rep.step_wall_ns[k];
      dst.insert(dst.end(), v.begin(), v.end());
    }
    for (auto& [k, v] : calls) {
      auto& dst = rep.step_decoder_calls[k];
      dst.insert(dst.end(), v.begin(), v.end());
    }
  }

  for (auto proc : cfg.procedures) {
    for (int64_t l : rep.steps_list) {
      std::map<std::string, std::vector<double>> vals;
      std::vector<TokenSeq> hyps, refs;
      for (const auto& r : rep.records) {
        if (r.procedure != proc || r.steps != l) continue;
        vals["log_marginal"].push_back(r.log_marginal);
        vals["edit_distance"].push_back(static_cast<double>(r.edit_from_initial));
        vals["repetitions"].push_back(static_cast<double>(r.repetitions));
        vals["token_accuracy"].push_back(r.token_accuracy);
        vals["proxy_bound"].push_back(r.proxy_bound);
        hyps.push_back(r.output);
        refs.push_back(test[static_cast<size_t>(r.example)].tgt);
      }
      for (const auto& [metric, v] : vals) {
        const auto s = summarize(v);
        rep.rows.push_back({to_string(proc), l, metric, s.mean, s.stddev,
                            static_cast<int64_t>(v.size())});
      }
      if (!hyps.empty()) {
        rep.rows.push_back(
            {to_string(proc), l, "bleu", bleu(hyps, refs), 0.0, static_cast<int64_t>(hyps.size())});
      }
    }
  }
  return rep;
}

std::string step_report_csv(const StepReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "procedure,L,metric,mean,stddev,n\n";
  for (const auto& r : report.rows) {
    os << r.procedure << ',' << r.steps << ',' << r.metric << ',' << r.mean << ',' << r.stddev
       << ',' << r.n << '\n';
  }
  return os.str();
}

std::string step_report_json(const StepReport& report) {
  nlohmann::json j;
  j["steps_list"] = report.steps_list;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"procedure", r.procedure}, {"L", r.steps}, {"metric", r.metric},
                    {"mean", r.mean}, {"stddev", r.stddev}, {"n", r.n}});
  }
  auto& recs = j["examples"] = nlohmann::json::array();
  for (const auto& r : report.records) {
    recs.push_back({{"example", r.example},
                    {"procedure", to_string(r.procedure)},
                    {"L", r.steps},
                    {"raw", r.raw},
                    {"output", r.output},
                    {"log_marginal", r.log_marginal},
                    {"is_dropped", r.is_dropped},
                    {"edit_distance", r.edit_from_initial},
                    {"repetitions", r.repetitions},
                    {"token_accuracy", r.token_accuracy},
                    {"proxy_bound", r.proxy_bound}});
  }
  j["delta_proxy_series"] = report.delta_proxy_series;
  j["excluded"] = report.excluded;
  return j.dump(1);
}

}  // namespace latref
