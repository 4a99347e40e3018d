// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/optim.hpp"

#include <cmath>
#include <string>

#include "dgmoe/errors.hpp"

namespace dgmoe {

AdamW::AdamW(AdamWOptions options, const std::vector<NamedParam>& params)
    : options_(options) {
  for (const NamedParam& p : params) {
    m_.emplace_back(Tensor(p.tensor->shape));
    v_.emplace_back(Tensor(p.tensor->shape));
  }
}

void AdamW::step(const std::vector<NamedParam>& params,
                 const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw DimensionError("AdamW::step: parameter/gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i].tensor;
    const Tensor& g = grads[i];
    if (!theta.same_shape(g))
      throw DimensionError("AdamW::step: gradient shape mismatch for " +
                           params[i].name);
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < theta.numel(); ++j) {
      m.data[j] = options_.beta1 * m.data[j] + (1.0 - options_.beta1) * g.data[j];
      v.data[j] = options_.beta2 * v.data[j] +
                  (1.0 - options_.beta2) * g.data[j] * g.data[j];
      const double mhat = m.data[j] / bc1;
      const double vhat = v.data[j] / bc2;
      theta.data[j] -= options_.lr * (mhat / (std::sqrt(vhat) + options_.eps) +
                                      options_.weight_decay * theta.data[j]);
    }
  }
}

}  // namespace dgmoe
