// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dgmoe/experts.hpp"
#include "dgmoe/fusion.hpp"
#include "dgmoe/gating.hpp"
#include "dgmoe/losses.hpp"
#include "dgmoe/rng.hpp"
#include "dgmoe/smtx.hpp"
#include "dgmoe/tape.hpp"
#include "dgmoe/tensor.hpp"

namespace dgmoe {

enum class Variant { full, single_expert, shared_gate, no_structural, additive_fusion };

Variant parse_variant(const std::string& name);
const char* variant_name(Variant v);

struct ModelConfig {
  std::size_t d = 32;
  std::size_t layers = 2;
  std::size_t n_experts = 6;
  std::size_t k = 2;
  std::size_t m = 4;
  std::size_t r = 4;
  int p = 1;
  std::size_t patch = 8;
  std::size_t classes = 5;
  std::size_t channels = 8;
};

/// single_expert collapses routing to N_e = 1, k = 1; other variants leave
/// the dimensions untouched.
ModelConfig apply_variant(ModelConfig cfg, Variant v);

/// One per-layer plugin: dual gates, two expert banks, one fusion block.
struct AdapterLayer {
  DualGate gate;
  ExpertBank visual_bank;
  ExpertBank depth_bank;
  FusionBlock fusion;
};

AdapterLayer make_adapter_layer(const ModelConfig& cfg, RngStream rng);

/// Deterministic stand-in for a frozen pretrained feature extractor: linear
/// patch embeddings per stream plus L fixed residual mixing maps. Generated
/// from a seed; never receives gradients.
struct FrozenBackbone {
  Tensor embed_visual;      // (C*P*P) x d
  Tensor embed_structural;  // (P*P) x d
  std::vector<Tensor> blocks_visual;  // d x d
  std::vector<Tensor> blocks_depth;   // d x d
  double mix = 0.3;
  std::size_t patch = 8;
  std::size_t channels = 8;
  std::size_t d = 32;
  std::uint64_t seed = 0;
};

FrozenBackbone make_backbone(const ModelConfig& cfg, std::uint64_t seed);
bool backbone_bitwise_equal(const FrozenBackbone& a, const FrozenBackbone& b);

/// Frozen per-sample inputs to the adapter stack: the visual patch embedding
/// and the depth stream features after every frozen block. The depth stream
/// is never modified by adapters, so it is computed once per sample.
struct SampleFeatures {
  Tensor visual_tokens;              // T x d
  std::vector<Tensor> depth_tokens;  // layers x (T x d)
  std::vector<int> token_labels;     // filled by the caller; empty if unused
};

SampleFeatures extract_features(const FrozenBackbone& backbone,
                                const Tensor& image, const Tensor& structural);

struct AdapterStack {
  ModelConfig cfg;  // variant-adjusted
  Variant variant = Variant::full;
  std::vector<AdapterLayer> layers;
  Tensor head_weight;  // d x classes
  Tensor head_bias;    // classes
};

AdapterStack make_stack(const ModelConfig& cfg, Variant variant,
                        RngStream init);

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

/// All trainable tensors in a fixed, documented order. The shared_gate
/// variant routes both modalities through the visual gate, so the depth gate
/// tensors are excluded here (and from checkpoints).
std::vector<NamedParam> trainable_params(AdapterStack& stack);

// ---- tape bindings -------------------------------------------------------

struct LayerNodes {
  DualPtr wg_v, wn_v, wg_d, wn_d;
  BankTape visual_bank, depth_bank;
  DualPtr mlp_weight, mlp_bias, alpha;
};

struct StackNodes {
  std::vector<LayerNodes> layers;
  DualPtr head_weight, head_bias;
  std::vector<DualPtr> flat;  // aligned with trainable_params order
};

StackNodes bind_stack(Tape& tape, const AdapterStack& stack,
                      bool requires_grad);

struct LayerGateRecord {
  GateOutput visual;
  GateOutput depth;
  DualPtr visual_gates;
  DualPtr depth_gates;
};

/// Tape composition of one adapter layer: dual routing, expert adjustment of
/// both streams, fusion into the visual stream, residual integration.
DualPtr forward_layer_tape(Tape& tape, const AdapterStack& stack,
                           LayerNodes& nodes, const DualPtr& fv,
                           const Tensor& fd, bool noise_enabled,
                           const RngStream& noise_rng, LayerGateRecord& record);

struct StackForward {
  DualPtr logits;  // T x classes
  std::vector<LayerGateRecord> layer_gates;
};

StackForward forward_stack_tape(Tape& tape, const AdapterStack& stack,
                                StackNodes& nodes,
                                const FrozenBackbone& backbone,
                                const SampleFeatures& features,
                                bool noise_enabled, const RngStream& noise_rng);

// ---- plain forward wrappers ----------------------------------------------

struct ForwardLayerResult {
  Tensor f_out;
  GateOutput visual;
  GateOutput depth;
};

ForwardLayerResult forward_layer(const AdapterLayer& layer, const Tensor& fv,
                                 const Tensor& fd, bool noise_enabled,
                                 const RngStream& rng,
                                 bool additive_fusion = false);

struct ForwardFullResult {
  Tensor logits;
  std::vector<std::pair<GateOutput, GateOutput>> layer_gates;
};

ForwardFullResult forward_full(const AdapterStack& stack,
                               const FrozenBackbone& backbone,
                               const Tensor& image, const Tensor& structural,
                               bool noise_enabled, const RngStream& rng);

/// Frozen-path logits: backbone blocks plus head, no adapters. The cold-start
/// reference for the identity-at-initialization contract.
Tensor frozen_logits(const AdapterStack& stack, const FrozenBackbone& backbone,
                     const SampleFeatures& features);

// ---- parameter accounting -------------------------------------------------

struct ParamCount {
  std::size_t per_layer = 0;
  std::size_t head = 0;
  std::size_t total = 0;
};

/// Closed-form trainable parameter counts for the full variant:
/// per layer 4*d*N_e + 2*N_e*(m*r + r*d) + 2*(d^2+d) + (d^2+d) + 1,
/// head d*classes + classes.
ParamCount count_parameters(std::size_t d, std::size_t n_experts,
                            std::size_t m, std::size_t r, std::size_t layers,
                            std::size_t classes);

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, AdapterStack& stack,
                     std::uint64_t backbone_seed, const Manifest& extra = {});

struct LoadedCheckpoint {
  AdapterStack stack;
  std::uint64_t backbone_seed = 0;
  Manifest manifest;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace dgmoe
