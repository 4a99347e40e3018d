// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dgmoe/adapter.hpp"
#include "dgmoe/tensor.hpp"

namespace dgmoe {

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adaptive-moment update with decoupled weight decay. Moment buffers are
/// aligned with the parameter list handed to the constructor.
class AdamW {
 public:
  AdamW(AdamWOptions options, const std::vector<NamedParam>& params);

  void step(const std::vector<NamedParam>& params,
            const std::vector<Tensor>& grads);

  std::uint64_t steps_taken() const { return t_; }
  const AdamWOptions& options() const { return options_; }

 private:
  AdamWOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace dgmoe
