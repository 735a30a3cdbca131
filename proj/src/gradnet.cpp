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

#include "latref/gradnet.hpp"

#include "json.hpp"
#include "latref/nn.hpp"

namespace latref {

namespace {

nn::StackDims stack_dims(const GradNetConfig& c) {
  return {c.d_model, c.d_filter, c.n_heads, c.n_layers};
}

}  // namespace

GradNet::GradNet(const GradNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg_.d_model % cfg_.n_heads != 0) throw Error("gradnet: d_model must be divisible by n_heads");
  Rng rng = Rng(seed).split(0x6e7);
  params_.add_linear("gn.in", cfg_.d_latent, cfg_.d_model, rng);
  params_.add_linear("gn.mem", cfg_.d_source, cfg_.d_model, rng);
  nn::add_decoder_stack(params_, "gn", stack_dims(cfg_), rng);
  if (cfg_.kind == GradNetKind::kEnergy) {
    params_.add_linear("gn.energy", cfg_.d_model, 1, rng);
  } else {
    params_.add_linear("gn.score", cfg_.d_model, cfg_.d_latent, rng, 0.1);
  }
}

GradNet::GradNet(const GradNetConfig& cfg, ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {
  GradNet reference(cfg_, 0);
  for (const auto& [name, t] : reference.params_.tensors()) {
    if (!params_.contains(name)) throw Error("gradnet: checkpoint lacks parameter " + name);
    require_same_shape(params_.get(name), t, ("gradnet parameter " + name).c_str());
  }
  if (params_.size() != reference.params_.size()) throw Error("gradnet: unexpected extra parameters");
}

Var GradNet::trunk(Binding& p, const Var& z, const Var& h_src) const {
  if (z.cols() != cfg_.d_latent) {
    throw Error("gradnet: latent shape " + shape_str(z.shape()) + " does not match d_latent " +
                std::to_string(cfg_.d_latent));
  }
  Tape& tape = p.tape();
  Var in = add(nn::linear(p, "gn.in", z),
               tape.constant(nn::positional_encoding(z.rows(), cfg_.d_model)));
  Var memory = nn::linear(p, "gn.mem", h_src);
  return nn::decoder_stack(p, "gn", stack_dims(cfg_), in, memory);
}

Var GradNet::energy(Binding& p, const Var& z, const Var& h_src) const {
  if (cfg_.kind != GradNetKind::kEnergy) throw Error("gradnet: energy() called on a score net");
  Var pooled = reshape(mean_rows(trunk(p, z, h_src)), {1, cfg_.d_model});
  return reshape(nn::linear(p, "gn.energy", pooled), {});
}

Var GradNet::score(Binding& p, const Var& z, const Var& h_src) const {
  if (cfg_.kind != GradNetKind::kScore) throw Error("gradnet: score() called on an energy net");
  return nn::linear(p, "gn.score", trunk(p, z, h_src));
}

double GradNet::energy(const LatentState& z, const Tensor& h_src) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  return energy(p, tape.constant(z), tape.constant(h_src)).value().item();
}

std::vector<double> GradNet::energy_batch(std::span<const LatentState> zs,
                                          const Tensor& h_src) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  Var h = tape.constant(h_src);
  std::vector<double> out;
  out.reserve(zs.size());
  for (const auto& z : zs) out.push_back(energy(p, tape.constant(z), h).value().item());
  return out;
}

Tensor GradNet::energy_grad(const LatentState& z, const Tensor& h_src) const {
  Tape tape;
  Binding p(tape, params_, false);
  Var zv = tape.leaf(z);
  Var e = energy(p, zv, tape.constant(h_src));
  std::vector<Var> wrt{zv};
  return tape.gradients(e, wrt)[0];
}

Tensor GradNet::score(const LatentState& z, const Tensor& h_src) const {
  Tape tape;
  NoGradGuard ng(tape);
  Binding p(tape, params_, false);
  return score(p, tape.constant(z), tape.constant(h_src)).value();
}

Checkpoint GradNet::to_checkpoint(uint64_t seed) const {
  nlohmann::json meta;
  meta["kind"] = "gradnet";
  meta["config"] = nlohmann::json::parse(gradnet_config_json(cfg_));
  return Checkpoint{kCheckpointVersion, seed, meta.dump(), params_.tensors()};
}

GradNet GradNet::from_checkpoint(const Checkpoint& ckpt) {
  auto meta = nlohmann::json::parse(ckpt.metadata);
  if (meta.value("kind", "") != "gradnet") throw Error("checkpoint does not hold a gradient net");
  ParamStore ps;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;
    ps.add(name, t);
  }
  return GradNet(parse_gradnet_config(meta.at("config").dump()), std::move(ps));
}

Tensor ScoreFromEnergy::energy_grad(const LatentState& z, const Tensor& h_src) const {
  return energy_.energy_grad(z, h_src);
}

Tensor ScoreFromEnergy::score(const LatentState& z, const Tensor& h_src) const {
  Tensor g = energy_.energy_grad(z, h_src);
  for (auto& v : g.data) v = -v;
  return g;
}

}  // namespace latref
