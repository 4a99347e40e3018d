// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/adapter.hpp"

#include <cmath>
#include <cstring>

#include "dgmoe/errors.hpp"
#include "dgmoe/ops.hpp"

namespace dgmoe {

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "single_expert") return Variant::single_expert;
  if (name == "shared_gate") return Variant::shared_gate;
  if (name == "no_structural") return Variant::no_structural;
  if (name == "additive_fusion") return Variant::additive_fusion;
  throw ConfigError("unknown variant: " + name);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::single_expert: return "single_expert";
    case Variant::shared_gate: return "shared_gate";
    case Variant::no_structural: return "no_structural";
    case Variant::additive_fusion: return "additive_fusion";
  }
  return "full";
}

ModelConfig apply_variant(ModelConfig cfg, Variant v) {
  if (v == Variant::single_expert) {
    cfg.n_experts = 1;
    cfg.k = 1;
  }
  return cfg;
}

AdapterLayer make_adapter_layer(const ModelConfig& cfg, RngStream rng) {
  AdapterLayer layer;
  layer.gate.visual =
      make_gate_params(cfg.d, cfg.n_experts, cfg.p, rng.child("gate_visual"));
  layer.gate.depth =
      make_gate_params(cfg.d, cfg.n_experts, cfg.p, rng.child("gate_depth"));
  layer.gate.k = cfg.k;
  layer.visual_bank = make_expert_bank(cfg.n_experts, cfg.m, cfg.r, cfg.d,
                                       rng.child("visual_bank"));
  layer.depth_bank = make_expert_bank(cfg.n_experts, cfg.m, cfg.r, cfg.d,
                                      rng.child("depth_bank"));
  layer.fusion = make_fusion_block(cfg.d);
  return layer;
}

FrozenBackbone make_backbone(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.d < 1 || cfg.layers < 1 || cfg.patch < 1 || cfg.channels < 1)
    throw ConfigError("make_backbone: degenerate configuration");
  FrozenBackbone bb;
  bb.patch = cfg.patch;
  bb.channels = cfg.channels;
  bb.d = cfg.d;
  bb.seed = seed;
  RngStream root = RngStream(seed).child("backbone");
  const std::size_t pp = cfg.patch * cfg.patch;

  bb.embed_visual = Tensor({cfg.channels * pp, cfg.d});
  {
    RngStream s = root.child("embed_visual");
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg.channels * pp));
    for (std::size_t i = 0; i < bb.embed_visual.numel(); ++i)
      bb.embed_visual.data[i] = std * s.normal_at(i);
  }
  bb.embed_structural = Tensor({pp, cfg.d});
  {
    RngStream s = root.child("embed_structural");
    const double std = 1.0 / std::sqrt(static_cast<double>(pp));
    for (std::size_t i = 0; i < bb.embed_structural.numel(); ++i)
      bb.embed_structural.data[i] = std * s.normal_at(i);
  }
  const double block_std = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Tensor wv({cfg.d, cfg.d}), wd({cfg.d, cfg.d});
    RngStream sv = root.child("block_visual").child(l);
    RngStream sd = root.child("block_depth").child(l);
    for (std::size_t i = 0; i < wv.numel(); ++i) {
      wv.data[i] = block_std * sv.normal_at(i);
      wd.data[i] = block_std * sd.normal_at(i);
    }
    bb.blocks_visual.push_back(std::move(wv));
    bb.blocks_depth.push_back(std::move(wd));
  }
  return bb;
}

bool backbone_bitwise_equal(const FrozenBackbone& a, const FrozenBackbone& b) {
  if (!a.embed_visual.bitwise_equal(b.embed_visual)) return false;
  if (!a.embed_structural.bitwise_equal(b.embed_structural)) return false;
  if (a.blocks_visual.size() != b.blocks_visual.size()) return false;
  for (std::size_t l = 0; l < a.blocks_visual.size(); ++l) {
    if (!a.blocks_visual[l].bitwise_equal(b.blocks_visual[l])) return false;
    if (!a.blocks_depth[l].bitwise_equal(b.blocks_depth[l])) return false;
  }
  return a.mix == b.mix;
}

namespace {

// Patch grid tokenization, tokens row-major over (by, bx), each visual token
// the channel-major flattening of its C x P x P block.
Tensor patchify(const Tensor& planes, std::size_t patch) {
  if (planes.rank() != 3)
    throw DimensionError("patchify: expected C x H x W input, got " +
                         shape_string(planes));
  const std::size_t c = planes.shape[0], h = planes.shape[1], w = planes.shape[2];
  if (h % patch != 0 || w % patch != 0)
    throw ConfigError("patchify: spatial dims " + std::to_string(h) + "x" +
                      std::to_string(w) + " not divisible by patch " +
                      std::to_string(patch));
  const std::size_t gh = h / patch, gw = w / patch;
  Tensor out({gh * gw, c * patch * patch});
  for (std::size_t by = 0; by < gh; ++by)
    for (std::size_t bx = 0; bx < gw; ++bx) {
      double* dst = out.row_ptr(by * gw + bx);
      std::size_t idx = 0;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t py = 0; py < patch; ++py)
          for (std::size_t px = 0; px < patch; ++px)
            dst[idx++] =
                planes.data[(ch * h + by * patch + py) * w + bx * patch + px];
    }
  return out;
}

Tensor apply_block(const Tensor& tokens, const Tensor& weight, double mix) {
  return ops::add(tokens, ops::scale(ops::matmul(tokens, weight), mix));
}

}  // namespace

SampleFeatures extract_features(const FrozenBackbone& backbone,
                                const Tensor& image, const Tensor& structural) {
  if (image.rank() != 3 || image.shape[0] != backbone.channels)
    throw DimensionError("extract_features: image must be C x H x W with C=" +
                         std::to_string(backbone.channels) + ", got " +
                         shape_string(image));
  if (structural.rank() != 3 || structural.shape[0] != 1 ||
      structural.shape[1] != image.shape[1] ||
      structural.shape[2] != image.shape[2])
    throw DimensionError("extract_features: structural must be 1 x H x W");
  SampleFeatures out;
  out.visual_tokens =
      ops::matmul(patchify(image, backbone.patch), backbone.embed_visual);
  Tensor depth =
      ops::matmul(patchify(structural, backbone.patch), backbone.embed_structural);
  for (const Tensor& block : backbone.blocks_depth) {
    depth = apply_block(depth, block, backbone.mix);
    out.depth_tokens.push_back(depth);
  }
  return out;
}

AdapterStack make_stack(const ModelConfig& cfg, Variant variant,
                        RngStream init) {
  ModelConfig effective = apply_variant(cfg, variant);
  AdapterStack stack;
  stack.cfg = effective;
  stack.variant = variant;
  for (std::size_t l = 0; l < effective.layers; ++l)
    stack.layers.push_back(make_adapter_layer(effective, init.child(l)));
  stack.head_weight = Tensor({effective.d, effective.classes});
  RngStream head = init.child("head");
  const double std = 1.0 / std::sqrt(static_cast<double>(effective.d));
  for (std::size_t i = 0; i < stack.head_weight.numel(); ++i)
    stack.head_weight.data[i] = std * head.normal_at(i);
  stack.head_bias = Tensor({effective.classes});
  return stack;
}

std::vector<NamedParam> trainable_params(AdapterStack& stack) {
  std::vector<NamedParam> params;
  const bool shared = stack.variant == Variant::shared_gate;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    AdapterLayer& layer = stack.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    params.push_back({prefix + "gate_visual.w_gate", &layer.gate.visual.w_gate});
    params.push_back({prefix + "gate_visual.w_noise", &layer.gate.visual.w_noise});
    if (!shared) {
      params.push_back({prefix + "gate_depth.w_gate", &layer.gate.depth.w_gate});
      params.push_back({prefix + "gate_depth.w_noise", &layer.gate.depth.w_noise});
    }
    for (std::size_t e = 0; e < layer.visual_bank.num_experts(); ++e) {
      const std::string en = "expert" + std::to_string(e);
      params.push_back({prefix + "visual_bank." + en + ".a",
                        &layer.visual_bank.a_factors[e]});
      params.push_back({prefix + "visual_bank." + en + ".b",
                        &layer.visual_bank.b_factors[e]});
    }
    params.push_back({prefix + "visual_bank.w_t", &layer.visual_bank.w_t});
    params.push_back({prefix + "visual_bank.b_t", &layer.visual_bank.b_t});
    for (std::size_t e = 0; e < layer.depth_bank.num_experts(); ++e) {
      const std::string en = "expert" + std::to_string(e);
      params.push_back({prefix + "depth_bank." + en + ".a",
                        &layer.depth_bank.a_factors[e]});
      params.push_back({prefix + "depth_bank." + en + ".b",
                        &layer.depth_bank.b_factors[e]});
    }
    params.push_back({prefix + "depth_bank.w_t", &layer.depth_bank.w_t});
    params.push_back({prefix + "depth_bank.b_t", &layer.depth_bank.b_t});
    params.push_back({prefix + "fusion.mlp_weight", &layer.fusion.mlp_weight});
    params.push_back({prefix + "fusion.mlp_bias", &layer.fusion.mlp_bias});
    params.push_back({prefix + "fusion.alpha", &layer.fusion.alpha});
  }
  params.push_back({"head.weight", &stack.head_weight});
  params.push_back({"head.bias", &stack.head_bias});
  return params;
}

StackNodes bind_stack(Tape& tape, const AdapterStack& stack,
                      bool requires_grad) {
  StackNodes nodes;
  const bool shared = stack.variant == Variant::shared_gate;
  for (const AdapterLayer& layer : stack.layers) {
    LayerNodes ln;
    ln.wg_v = tape.leaf(layer.gate.visual.w_gate, requires_grad);
    ln.wn_v = tape.leaf(layer.gate.visual.w_noise, requires_grad);
    if (shared) {
      ln.wg_d = ln.wg_v;
      ln.wn_d = ln.wn_v;
    } else {
      ln.wg_d = tape.leaf(layer.gate.depth.w_gate, requires_grad);
      ln.wn_d = tape.leaf(layer.gate.depth.w_noise, requires_grad);
    }
    ln.visual_bank = bind_bank(tape, layer.visual_bank, requires_grad);
    ln.depth_bank = bind_bank(tape, layer.depth_bank, requires_grad);
    ln.mlp_weight = tape.leaf(layer.fusion.mlp_weight, requires_grad);
    ln.mlp_bias = tape.leaf(layer.fusion.mlp_bias, requires_grad);
    ln.alpha = tape.leaf(layer.fusion.alpha, requires_grad);

    nodes.flat.push_back(ln.wg_v);
    nodes.flat.push_back(ln.wn_v);
    if (!shared) {
      nodes.flat.push_back(ln.wg_d);
      nodes.flat.push_back(ln.wn_d);
    }
    for (std::size_t e = 0; e < ln.visual_bank.a.size(); ++e) {
      nodes.flat.push_back(ln.visual_bank.a[e]);
      nodes.flat.push_back(ln.visual_bank.b[e]);
    }
    nodes.flat.push_back(ln.visual_bank.w_t);
    nodes.flat.push_back(ln.visual_bank.b_t);
    for (std::size_t e = 0; e < ln.depth_bank.a.size(); ++e) {
      nodes.flat.push_back(ln.depth_bank.a[e]);
      nodes.flat.push_back(ln.depth_bank.b[e]);
    }
    nodes.flat.push_back(ln.depth_bank.w_t);
    nodes.flat.push_back(ln.depth_bank.b_t);
    nodes.flat.push_back(ln.mlp_weight);
    nodes.flat.push_back(ln.mlp_bias);
    nodes.flat.push_back(ln.alpha);

    nodes.layers.push_back(std::move(ln));
  }
  nodes.head_weight = tape.leaf(stack.head_weight, requires_grad);
  nodes.head_bias = tape.leaf(stack.head_bias, requires_grad);
  nodes.flat.push_back(nodes.head_weight);
  nodes.flat.push_back(nodes.head_bias);
  return nodes;
}

DualPtr forward_layer_tape(Tape& tape, const AdapterStack& stack,
                           LayerNodes& nodes, const DualPtr& fv,
                           const Tensor& fd, bool noise_enabled,
                           const RngStream& noise_rng,
                           LayerGateRecord& record) {
  const ModelConfig& cfg = stack.cfg;
  const std::size_t t = fv->value.rows();
  Tensor eps_v({t, cfg.n_experts});
  Tensor eps_d({t, cfg.n_experts});
  if (noise_enabled) {
    eps_v = make_routing_noise(noise_rng.child("visual"), t, cfg.n_experts);
    eps_d = make_routing_noise(noise_rng.child("depth"), t, cfg.n_experts);
  }
  DualPtr fd_node = tape.constant(fd);
  RoutedTape vis = route_tape(tape, fv, nodes.wg_v, nodes.wn_v, cfg.p, cfg.k,
                              std::move(eps_v));
  RoutedTape dep = route_tape(tape, fd_node, nodes.wg_d, nodes.wn_d, cfg.p,
                              cfg.k, std::move(eps_d));

  DualPtr dv = moe_adjust_tape(tape, fv, vis.gates, vis.selected,
                               nodes.visual_bank);
  DualPtr dd = moe_adjust_tape(tape, fd_node, dep.gates, dep.selected,
                               nodes.depth_bank);

  DualPtr fused = stack.variant == Variant::additive_fusion
                      ? tape.add(dv, dd)
                      : cross_attend_tape(tape, dv, dd);
  DualPtr out = integrate_tape(tape, fv, fused, nodes.mlp_weight,
                               nodes.mlp_bias, nodes.alpha);

  record.visual.gates = vis.gates->value;
  record.visual.logits = vis.logits->value;
  record.visual.selected = vis.selected;
  record.depth.gates = dep.gates->value;
  record.depth.logits = dep.logits->value;
  record.depth.selected = dep.selected;
  record.visual_gates = vis.gates;
  record.depth_gates = dep.gates;
  return out;
}

StackForward forward_stack_tape(Tape& tape, const AdapterStack& stack,
                                StackNodes& nodes,
                                const FrozenBackbone& backbone,
                                const SampleFeatures& features,
                                bool noise_enabled,
                                const RngStream& noise_rng) {
  if (features.depth_tokens.size() != stack.layers.size())
    throw DimensionError("forward_stack: features carry " +
                         std::to_string(features.depth_tokens.size()) +
                         " depth layers, stack has " +
                         std::to_string(stack.layers.size()));
  StackForward out;
  DualPtr v = tape.constant(features.visual_tokens);
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    DualPtr block = tape.constant(backbone.blocks_visual[l]);
    v = tape.add(v, tape.scale(tape.matmul(v, block), backbone.mix));
    LayerGateRecord record;
    v = forward_layer_tape(tape, stack, nodes.layers[l], v,
                           features.depth_tokens[l], noise_enabled,
                           noise_rng.child(l), record);
    out.layer_gates.push_back(std::move(record));
  }
  out.logits =
      tape.add_row_broadcast(tape.matmul(v, nodes.head_weight), nodes.head_bias);
  return out;
}

ForwardLayerResult forward_layer(const AdapterLayer& layer, const Tensor& fv,
                                 const Tensor& fd, bool noise_enabled,
                                 const RngStream& rng, bool additive_fusion) {
  if (fv.shape != fd.shape)
    throw DimensionError("forward_layer: stream shape mismatch " +
                         shape_string(fv) + " vs " + shape_string(fd));
  // Wrap the single layer in a one-layer stack view to reuse the tape path.
  AdapterStack view;
  view.cfg.d = fv.cols();
  view.cfg.n_experts = layer.gate.visual.num_experts();
  view.cfg.k = layer.gate.k;
  view.cfg.p = layer.gate.visual.p;
  view.variant = additive_fusion ? Variant::additive_fusion : Variant::full;

  Tape tape;
  LayerNodes nodes;
  nodes.wg_v = tape.constant(layer.gate.visual.w_gate);
  nodes.wn_v = tape.constant(layer.gate.visual.w_noise);
  nodes.wg_d = tape.constant(layer.gate.depth.w_gate);
  nodes.wn_d = tape.constant(layer.gate.depth.w_noise);
  nodes.visual_bank = bind_bank(tape, layer.visual_bank, false);
  nodes.depth_bank = bind_bank(tape, layer.depth_bank, false);
  nodes.mlp_weight = tape.constant(layer.fusion.mlp_weight);
  nodes.mlp_bias = tape.constant(layer.fusion.mlp_bias);
  nodes.alpha = tape.constant(layer.fusion.alpha);

  LayerGateRecord record;
  DualPtr out = forward_layer_tape(tape, view, nodes, tape.constant(fv), fd,
                                   noise_enabled, rng, record);
  return ForwardLayerResult{out->value, std::move(record.visual),
                            std::move(record.depth)};
}

ForwardFullResult forward_full(const AdapterStack& stack,
                               const FrozenBackbone& backbone,
                               const Tensor& image, const Tensor& structural,
                               bool noise_enabled, const RngStream& rng) {
  SampleFeatures features = extract_features(backbone, image, structural);
  Tape tape;
  StackNodes nodes = bind_stack(tape, stack, false);
  StackForward fwd = forward_stack_tape(tape, stack, nodes, backbone, features,
                                        noise_enabled, rng);
  ForwardFullResult out;
  out.logits = fwd.logits->value;
  for (LayerGateRecord& rec : fwd.layer_gates)
    out.layer_gates.emplace_back(std::move(rec.visual), std::move(rec.depth));
  return out;
}

Tensor frozen_logits(const AdapterStack& stack, const FrozenBackbone& backbone,
                     const SampleFeatures& features) {
  Tensor v = features.visual_tokens;
  for (const Tensor& block : backbone.blocks_visual)
    v = apply_block(v, block, backbone.mix);
  return ops::add_row_broadcast(ops::matmul(v, stack.head_weight),
                                stack.head_bias);
}

ParamCount count_parameters(std::size_t d, std::size_t n_experts,
                            std::size_t m, std::size_t r, std::size_t layers,
                            std::size_t classes) {
  if (d == 0 || n_experts == 0 || m == 0 || r == 0 || layers == 0 ||
      classes == 0)
    throw ConfigError("count_parameters: all dimensions must be positive");
  ParamCount count;
  const std::size_t affine = d * d + d;
  count.per_layer = 4 * d * n_experts            // dual gate + noise
                    + 2 * n_experts * (m * r + r * d)  // two banks' factors
                    + 2 * affine                 // shared projection per bank
                    + affine                     // fusion affine
                    + 1;                         // alpha
  count.head = d * classes + classes;
  count.total = layers * count.per_layer + count.head;
  return count;
}

void save_checkpoint(const std::filesystem::path& dir, AdapterStack& stack,
                     std::uint64_t backbone_seed, const Manifest& extra) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.emplace_back("d", std::to_string(stack.cfg.d));
  m.emplace_back("L", std::to_string(stack.cfg.layers));
  m.emplace_back("N_e", std::to_string(stack.cfg.n_experts));
  m.emplace_back("k", std::to_string(stack.cfg.k));
  m.emplace_back("m", std::to_string(stack.cfg.m));
  m.emplace_back("r", std::to_string(stack.cfg.r));
  m.emplace_back("p", std::to_string(stack.cfg.p));
  m.emplace_back("patch", std::to_string(stack.cfg.patch));
  m.emplace_back("classes", std::to_string(stack.cfg.classes));
  m.emplace_back("channels", std::to_string(stack.cfg.channels));
  m.emplace_back("variant", variant_name(stack.variant));
  m.emplace_back("backbone_seed", std::to_string(backbone_seed));
  for (const auto& kv : extra) m.push_back(kv);
  std::vector<NamedParam> params = trainable_params(stack);
  for (const NamedParam& p : params)
    save_smtx(dir / (p.name + ".smtx"), *p.tensor);
  save_manifest(dir / "checkpoint.manifest", m);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  Manifest m = load_manifest(dir / "checkpoint.manifest");
  ModelConfig cfg;
  cfg.d = std::stoull(manifest_get(m, "d"));
  cfg.layers = std::stoull(manifest_get(m, "L"));
  cfg.n_experts = std::stoull(manifest_get(m, "N_e"));
  cfg.k = std::stoull(manifest_get(m, "k"));
  cfg.m = std::stoull(manifest_get(m, "m"));
  cfg.r = std::stoull(manifest_get(m, "r"));
  cfg.p = std::stoi(manifest_get(m, "p"));
  cfg.patch = std::stoull(manifest_get(m, "patch"));
  cfg.classes = std::stoull(manifest_get(m, "classes"));
  cfg.channels = std::stoull(manifest_get(m, "channels"));
  const Variant variant = parse_variant(manifest_get(m, "variant"));
  LoadedCheckpoint out{make_stack(cfg, variant, RngStream(0)),
                       std::stoull(manifest_get(m, "backbone_seed")),
                       std::move(m)};
  for (const NamedParam& p : trainable_params(out.stack)) {
    Tensor stored = load_smtx(dir / (p.name + ".smtx"));
    if (stored.shape != p.tensor->shape)
      throw ConfigError("load_checkpoint: shape mismatch for " + p.name);
    *p.tensor = std::move(stored);
  }
  return out;
}

}  // namespace dgmoe
