// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/losses.hpp"

#include <cmath>
#include <string>

#include "dgmoe/errors.hpp"
#include "dgmoe/ops.hpp"

namespace dgmoe {

Tensor importance(const Tensor& gates) {
  require_rank(gates, 2, "importance");
  for (double g : gates.data)
    if (g < 0.0)
      throw InvariantError("importance: negative gate entry " +
                           std::to_string(g));
  return ops::column_sums(gates);
}

double load_balance_loss(const Tensor& imp) {
  require_rank(imp, 1, "load_balance_loss");
  bool any_positive = false;
  for (double v : imp.data) any_positive = any_positive || v > 0.0;
  if (!any_positive)
    throw DegenerateInputError("load_balance_loss: all-zero importance");
  return ops::cv_squared(imp).data[0];
}

double combined_load_loss(const Tensor& visual_gates,
                          const Tensor& depth_gates) {
  const double v = load_balance_loss(importance(visual_gates));
  const double d = load_balance_loss(importance(depth_gates));
  return 0.5 * (v + d);
}

double task_loss(const Tensor& logits, const std::vector<int>& labels,
                 int ignore_id) {
  return ops::cross_entropy_rows(logits, labels, ignore_id).data[0];
}

LossReport total_loss(double task, double load, double lambda) {
  if (!std::isfinite(task) || !std::isfinite(load))
    throw DivergenceError("total_loss: non-finite loss input");
  if (lambda < 0.0)
    throw ConfigError("total_loss: lambda must be non-negative");
  LossReport report;
  report.task_loss = task;
  report.load_loss = load;
  report.lambda = lambda;
  report.total = task + lambda * load;
  return report;
}

}  // namespace dgmoe
