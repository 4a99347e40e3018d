// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/gating.hpp"

#include <cmath>
#include <string>

#include "dgmoe/errors.hpp"
#include "dgmoe/smtx.hpp"

namespace dgmoe {

GateParams make_gate_params(std::size_t d, std::size_t n_experts, int p,
                            RngStream rng) {
  if (d < 1 || n_experts < 1)
    throw ConfigError("make_gate_params: d and N_e must be >= 1");
  if (p != 1 && p != 2)
    throw ConfigError("make_gate_params: unsupported norm order p=" +
                      std::to_string(p));
  GateParams params;
  params.p = p;
  params.w_gate = Tensor({d, n_experts});
  params.w_noise = Tensor({d, n_experts});
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < params.w_gate.numel(); ++i)
    params.w_gate.data[i] = std * rng.normal_at(i);
  return params;
}

Tensor make_routing_noise(const RngStream& rng, std::size_t tokens,
                          std::size_t n_experts) {
  Tensor eps({tokens, n_experts});
  for (std::size_t i = 0; i < tokens; ++i)
    for (std::size_t e = 0; e < n_experts; ++e)
      eps.at(i, e) = rng.normal_at(i * n_experts + e);
  return eps;
}

RoutedTape route_tape(Tape& tape, const DualPtr& tokens, const DualPtr& w_gate,
                      const DualPtr& w_noise, int p, std::size_t k,
                      Tensor eps) {
  DualPtr logits =
      tape.route_logits(tokens, w_gate, w_noise, std::move(eps), p);
  Tape::Routed routed = tape.topk_softmax_rows(logits, k);
  return RoutedTape{routed.gates, logits, std::move(routed.selected)};
}

GateOutput route(const GateParams& params, const Tensor& tokens, std::size_t k,
                 bool noise_enabled, const RngStream& rng) {
  require_rank(tokens, 2, "route");
  if (tokens.cols() != params.dim())
    throw DimensionError("route: token dim " + std::to_string(tokens.cols()) +
                         " vs gate dim " + std::to_string(params.dim()));
  if (k < 1 || k > params.num_experts())
    throw ConfigError("route: k=" + std::to_string(k) +
                      " out of range for N_e=" +
                      std::to_string(params.num_experts()));
  Tensor eps = noise_enabled
                   ? make_routing_noise(rng, tokens.rows(), params.num_experts())
                   : Tensor({tokens.rows(), params.num_experts()});
  Tape tape;
  RoutedTape routed =
      route_tape(tape, tape.constant(tokens), tape.constant(params.w_gate),
                 tape.constant(params.w_noise), params.p, k, std::move(eps));
  GateOutput out;
  out.gates = routed.gates->value;
  out.logits = routed.logits->value;
  out.selected = std::move(routed.selected);
  return out;
}

std::pair<GateOutput, GateOutput> route_dual(const DualGate& gate,
                                             const Tensor& visual_tokens,
                                             const Tensor& depth_tokens,
                                             const RngStream& rng) {
  if (visual_tokens.shape != depth_tokens.shape)
    throw DimensionError("route_dual: token shape mismatch " +
                         shape_string(visual_tokens) + " vs " +
                         shape_string(depth_tokens));
  GateOutput visual = route(gate.visual, visual_tokens, gate.k,
                            gate.noise_enabled, rng.child("visual"));
  GateOutput depth = route(gate.depth, depth_tokens, gate.k,
                           gate.noise_enabled, rng.child("depth"));
  return {std::move(visual), std::move(depth)};
}

void save_gate_params(const std::filesystem::path& dir,
                      const std::string& modality, const GateParams& params,
                      std::size_t k) {
  std::filesystem::create_directories(dir);
  save_smtx(dir / (modality + ".w_gate.smtx"), params.w_gate);
  save_smtx(dir / (modality + ".w_noise.smtx"), params.w_noise);
  Manifest m;
  m.emplace_back("modality", modality);
  m.emplace_back("d", std::to_string(params.dim()));
  m.emplace_back("N_e", std::to_string(params.num_experts()));
  m.emplace_back("p", std::to_string(params.p));
  m.emplace_back("k", std::to_string(k));
  save_manifest(dir / (modality + ".gate.manifest"), m);
}

GateParams load_gate_params(const std::filesystem::path& dir,
                            const std::string& modality) {
  Manifest m = load_manifest(dir / (modality + ".gate.manifest"));
  GateParams params;
  params.p = std::stoi(manifest_get(m, "p"));
  params.w_gate = load_smtx(dir / (modality + ".w_gate.smtx"));
  params.w_noise = load_smtx(dir / (modality + ".w_noise.smtx"));
  const auto d = static_cast<std::size_t>(std::stoull(manifest_get(m, "d")));
  const auto ne = static_cast<std::size_t>(std::stoull(manifest_get(m, "N_e")));
  if (params.w_gate.shape != std::vector<std::size_t>{d, ne})
    throw ConfigError("load_gate_params: manifest/tensor shape mismatch for " +
                      modality);
  return params;
}

}  // namespace dgmoe
