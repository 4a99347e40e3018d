// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dgmoe/rng.hpp"
#include "dgmoe/tape.hpp"
#include "dgmoe/tensor.hpp"

namespace dgmoe {

/// Per-modality gating parameters: one prototype column per expert in
/// w_gate, matching noise-scale columns in w_noise.
struct GateParams {
  Tensor w_gate;   // d x n_experts
  Tensor w_noise;  // d x n_experts
  int p = 1;       // norm order of the distance gate

  std::size_t dim() const { return w_gate.rows(); }
  std::size_t num_experts() const { return w_gate.cols(); }
};

/// Prototypes drawn from N(0, 1/d); noise weights start at zero so early
/// routing stays close to pure distance gating.
GateParams make_gate_params(std::size_t d, std::size_t n_experts, int p,
                            RngStream rng);

/// Independent routing pathways for the visual and depth streams. The two
/// parameter sets are distinct storage, never aliased.
struct DualGate {
  GateParams visual;
  GateParams depth;
  std::size_t k = 2;
  bool noise_enabled = true;
};

struct GateOutput {
  Tensor gates;                                     // T x n_experts, sparse
  std::vector<std::vector<std::size_t>> selected;   // ascending per token
  Tensor logits;                                    // T x n_experts
};

/// Noise realization for a T x n_experts routing call; entry (i, e) consumes
/// slot i*n_experts + e of the stream, so draws are per-(token, expert) and
/// schedule-independent.
Tensor make_routing_noise(const RngStream& rng, std::size_t tokens,
                          std::size_t n_experts);

struct RoutedTape {
  DualPtr gates;
  DualPtr logits;
  std::vector<std::vector<std::size_t>> selected;
};

/// Tape composition of the noisy distance logits and the sparse top-k
/// softmax gates.
RoutedTape route_tape(Tape& tape, const DualPtr& tokens, const DualPtr& w_gate,
                      const DualPtr& w_noise, int p, std::size_t k,
                      Tensor eps);

GateOutput route(const GateParams& params, const Tensor& tokens, std::size_t k,
                 bool noise_enabled, const RngStream& rng);

std::pair<GateOutput, GateOutput> route_dual(const DualGate& gate,
                                             const Tensor& visual_tokens,
                                             const Tensor& depth_tokens,
                                             const RngStream& rng);

/// SMTX pair plus plain-text sidecar manifest (modality, d, N_e, p, k).
void save_gate_params(const std::filesystem::path& dir,
                      const std::string& modality, const GateParams& params,
                      std::size_t k);
GateParams load_gate_params(const std::filesystem::path& dir,
                            const std::string& modality);

}  // namespace dgmoe
