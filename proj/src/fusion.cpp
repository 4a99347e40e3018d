// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/fusion.hpp"

#include <cmath>

#include "dgmoe/errors.hpp"
#include "dgmoe/ops.hpp"
#include "dgmoe/smtx.hpp"

namespace dgmoe {

FusionBlock make_fusion_block(std::size_t d) {
  FusionBlock block;
  block.mlp_weight = Tensor({d, d});
  for (std::size_t i = 0; i < d; ++i) block.mlp_weight.at(i, i) = 1.0;
  block.mlp_bias = Tensor({d});
  block.alpha = Tensor::scalar(0.0);
  return block;
}

DualPtr cross_attend_tape(Tape& tape, const DualPtr& dv, const DualPtr& dd) {
  require_same_shape(dv->value, dd->value, "cross_attend");
  const double inv_sqrt_d =
      1.0 / std::sqrt(static_cast<double>(dv->value.cols()));
  DualPtr scores = tape.scale(tape.matmul_nt(dv, dd), inv_sqrt_d);
  DualPtr attn = tape.softmax_rows(scores);
  return tape.matmul(attn, dd);
}

DualPtr integrate_tape(Tape& tape, const DualPtr& fv, const DualPtr& delta,
                       const DualPtr& mlp_weight, const DualPtr& mlp_bias,
                       const DualPtr& alpha) {
  require_same_shape(fv->value, delta->value, "integrate");
  DualPtr pre = tape.add(delta, fv);
  DualPtr mlp = tape.add_row_broadcast(tape.matmul(pre, mlp_weight), mlp_bias);
  return tape.add(fv, tape.scale_param(mlp, alpha));
}

Tensor cross_attend(const Tensor& dv, const Tensor& dd) {
  Tape tape;
  return cross_attend_tape(tape, tape.constant(dv), tape.constant(dd))->value;
}

Tensor integrate(const Tensor& fv, const Tensor& delta,
                 const FusionBlock& block) {
  Tape tape;
  return integrate_tape(tape, tape.constant(fv), tape.constant(delta),
                        tape.constant(block.mlp_weight),
                        tape.constant(block.mlp_bias),
                        tape.constant(block.alpha))
      ->value;
}

Tensor additive_fuse(const Tensor& dv, const Tensor& dd) {
  require_same_shape(dv, dd, "additive_fuse");
  return ops::add(dv, dd);
}

void save_fusion_block(const std::filesystem::path& dir,
                       const std::string& name, const FusionBlock& block) {
  std::filesystem::create_directories(dir);
  save_smtx(dir / (name + ".mlp_weight.smtx"), block.mlp_weight);
  save_smtx(dir / (name + ".mlp_bias.smtx"), block.mlp_bias);
  save_smtx(dir / (name + ".alpha.smtx"), block.alpha);
}

FusionBlock load_fusion_block(const std::filesystem::path& dir,
                              const std::string& name) {
  FusionBlock block;
  block.mlp_weight = load_smtx(dir / (name + ".mlp_weight.smtx"));
  block.mlp_bias = load_smtx(dir / (name + ".mlp_bias.smtx"));
  block.alpha = load_smtx(dir / (name + ".alpha.smtx"));
  return block;
}

}  // namespace dgmoe
