// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dgmoe/tensor.hpp"

namespace dgmoe {

struct LossReport {
  std::uint64_t step = 0;
  double task_loss = 0.0;
  double load_loss = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  Tensor importance_visual;  // N_e
  Tensor importance_depth;   // N_e
};

/// Per-expert importance: column sums of a gate matrix.
Tensor importance(const Tensor& gates);

/// Squared coefficient of variation of the importance vector, population
/// standard deviation; zero for a single expert.
double load_balance_loss(const Tensor& imp);

/// Mean of the two per-modality load losses.
double combined_load_loss(const Tensor& visual_gates,
                          const Tensor& depth_gates);

/// Mean per-token cross-entropy over non-ignored tokens.
double task_loss(const Tensor& logits, const std::vector<int>& labels,
                 int ignore_id);

LossReport total_loss(double task, double load, double lambda);

}  // namespace dgmoe
