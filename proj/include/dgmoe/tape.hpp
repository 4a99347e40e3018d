// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dgmoe/ops.hpp"
#include "dgmoe/tensor.hpp"

namespace dgmoe {

/// Value plus accumulated cotangent of identical shape. Gradient
/// accumulation is additive and single-writer.
struct Dual {
  Tensor value;
  Tensor grad;  // zeros until touched
  bool requires_grad = false;
  bool touched = false;
  std::function<void(Dual&)> backward_fn;
  std::vector<std::shared_ptr<Dual>> parents;
};

using DualPtr = std::shared_ptr<Dual>;

/// Record of the fixed operation set the adapter needs, in evaluation order.
/// backward() walks the record in reverse and accumulates exact
/// vector-Jacobian products. Not a general autodiff graph: only the listed
/// operations exist.
class Tape {
 public:
  DualPtr leaf(Tensor value, bool requires_grad);
  DualPtr constant(Tensor value) { return leaf(std::move(value), false); }

  DualPtr add(const DualPtr& a, const DualPtr& b);
  DualPtr scale(const DualPtr& a, double c);
  /// x scaled by a learnable 1-element tensor.
  DualPtr scale_param(const DualPtr& x, const DualPtr& s);
  DualPtr add_row_broadcast(const DualPtr& x, const DualPtr& b);
  DualPtr matmul(const DualPtr& a, const DualPtr& b);
  DualPtr matmul_nt(const DualPtr& a, const DualPtr& b);
  DualPtr softmax_rows(const DualPtr& x);
  DualPtr route_logits(const DualPtr& tokens, const DualPtr& w_gate,
                       const DualPtr& w_noise, Tensor eps, int p);

  struct Routed {
    DualPtr gates;
    std::vector<std::vector<std::size_t>> selected;
  };
  Routed topk_softmax_rows(const DualPtr& logits, std::size_t k);

  DualPtr gather_rows(const DualPtr& x, std::vector<std::size_t> idx);
  DualPtr scatter_rows(const DualPtr& x, std::vector<std::size_t> idx,
                       std::size_t total_rows);
  DualPtr scale_rows(const DualPtr& x, const DualPtr& v);
  DualPtr gather_column(const DualPtr& x, std::size_t col,
                        std::vector<std::size_t> rows);
  DualPtr column_sums(const DualPtr& x);
  DualPtr cv_squared(const DualPtr& v);
  DualPtr cross_entropy_rows(const DualPtr& logits, std::vector<int> labels,
                             int ignore_id);

  /// Seeds root.grad with 1 (root must be a 1-element tensor) and runs all
  /// recorded backward functions in reverse creation order.
  void backward(const DualPtr& root);

  std::size_t size() const { return nodes_.size(); }

 private:
  DualPtr make(Tensor value, std::vector<DualPtr> parents,
               std::function<void(Dual&)> backward_fn);
  static void accumulate(Dual& target, const Tensor& g);

  std::vector<DualPtr> nodes_;
};

}  // namespace dgmoe
