// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "dgmoe/tape.hpp"
#include "dgmoe/tensor.hpp"

namespace dgmoe {

/// Residual integration block: one affine map d -> d plus a learnable scalar
/// shared by all tokens of the layer. alpha starts at zero, which together
/// with zero-initialized expert tokens makes a fresh adapter layer an exact
/// identity.
struct FusionBlock {
  Tensor mlp_weight;  // d x d
  Tensor mlp_bias;    // d
  Tensor alpha;       // 1-element

  double alpha_value() const { return alpha.data[0]; }
};

FusionBlock make_fusion_block(std::size_t d);

/// softmax_rows(dv . dd^T / sqrt(d)) . dd — visual adjustments query the
/// full depth adjustment map.
Tensor cross_attend(const Tensor& dv, const Tensor& dd);

/// fv + alpha * ((delta + fv) . mlp_weight + mlp_bias).
Tensor integrate(const Tensor& fv, const Tensor& delta,
                 const FusionBlock& block);

/// Elementwise dv + dd; the fusion ablation baseline.
Tensor additive_fuse(const Tensor& dv, const Tensor& dd);

DualPtr cross_attend_tape(Tape& tape, const DualPtr& dv, const DualPtr& dd);
DualPtr integrate_tape(Tape& tape, const DualPtr& fv, const DualPtr& delta,
                       const DualPtr& mlp_weight, const DualPtr& mlp_bias,
                       const DualPtr& alpha);

void save_fusion_block(const std::filesystem::path& dir,
                       const std::string& name, const FusionBlock& block);
FusionBlock load_fusion_block(const std::filesystem::path& dir,
                              const std::string& name);

}  // namespace dgmoe
