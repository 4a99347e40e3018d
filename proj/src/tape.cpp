// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/tape.hpp"

#include <string>

#include "dgmoe/errors.hpp"

namespace dgmoe {

void Tape::accumulate(Dual& target, const Tensor& g) {
  if (!target.requires_grad) return;
  if (!target.grad.same_shape(g))
    throw DimensionError("tape: cotangent shape " + shape_string(g) +
                         " does not match value " + shape_string(target.grad));
  for (std::size_t i = 0; i < g.data.size(); ++i)
    target.grad.data[i] += g.data[i];
  target.touched = true;
}

DualPtr Tape::make(Tensor value, std::vector<DualPtr> parents,
                   std::function<void(Dual&)> backward_fn) {
  auto node = std::make_shared<Dual>();
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  node->grad = Tensor(value.shape);
  node->value = std::move(value);
  node->requires_grad = needs;
  if (needs) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  nodes_.push_back(node);
  return node;
}

DualPtr Tape::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Dual>();
  node->grad = Tensor(value.shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  nodes_.push_back(node);
  return node;
}

DualPtr Tape::add(const DualPtr& a, const DualPtr& b) {
  Tensor v = ops::add(a->value, b->value);
  return make(std::move(v), {a, b}, [a, b](Dual& self) {
    accumulate(*a, self.grad);
    accumulate(*b, self.grad);
  });
}

DualPtr Tape::scale(const DualPtr& a, double c) {
  Tensor v = ops::scale(a->value, c);
  return make(std::move(v), {a}, [a, c](Dual& self) {
    accumulate(*a, ops::scale(self.grad, c));
  });
}

DualPtr Tape::scale_param(const DualPtr& x, const DualPtr& s) {
  if (s->value.numel() != 1)
    throw DimensionError("scale_param: scale must be a 1-element tensor");
  const double sv = s->value.data[0];
  Tensor v = ops::scale(x->value, sv);
  return make(std::move(v), {x, s}, [x, s, sv](Dual& self) {
    accumulate(*x, ops::scale(self.grad, sv));
    double acc = 0.0;
    for (std::size_t i = 0; i < self.grad.data.size(); ++i)
      acc += self.grad.data[i] * x->value.data[i];
    accumulate(*s, Tensor::scalar(acc));
  });
}

DualPtr Tape::add_row_broadcast(const DualPtr& x, const DualPtr& b) {
  Tensor v = ops::add_row_broadcast(x->value, b->value);
  return make(std::move(v), {x, b}, [x, b](Dual& self) {
    accumulate(*x, self.grad);
    accumulate(*b, ops::column_sums(self.grad));
  });
}

DualPtr Tape::matmul(const DualPtr& a, const DualPtr& b) {
  Tensor v = ops::matmul(a->value, b->value);
  return make(std::move(v), {a, b}, [a, b](Dual& self) {
    if (a->requires_grad) accumulate(*a, ops::matmul_nt(self.grad, b->value));
    if (b->requires_grad) accumulate(*b, ops::matmul_tn(a->value, self.grad));
  });
}

DualPtr Tape::matmul_nt(const DualPtr& a, const DualPtr& b) {
  Tensor v = ops::matmul_nt(a->value, b->value);
  return make(std::move(v), {a, b}, [a, b](Dual& self) {
    if (a->requires_grad) accumulate(*a, ops::matmul(self.grad, b->value));
    if (b->requires_grad) accumulate(*b, ops::matmul_tn(self.grad, a->value));
  });
}

DualPtr Tape::softmax_rows(const DualPtr& x) {
  Tensor v = ops::softmax_rows(x->value);
  return make(std::move(v), {x}, [x](Dual& self) {
    accumulate(*x, ops::softmax_rows_vjp(self.value, self.grad));
  });
}

DualPtr Tape::route_logits(const DualPtr& tokens, const DualPtr& w_gate,
                           const DualPtr& w_noise, Tensor eps, int p) {
  auto eps_ptr = std::make_shared<Tensor>(std::move(eps));
  Tensor v = ops::route_logits(tokens->value, w_gate->value, w_noise->value,
                               *eps_ptr, p);
  return make(std::move(v), {tokens, w_gate, w_noise},
              [tokens, w_gate, w_noise, eps_ptr, p](Dual& self) {
                Tensor dt, dg, dn;
                ops::route_logits_vjp(tokens->value, w_gate->value,
                                      w_noise->value, *eps_ptr, p, self.grad,
                                      dt, dg, dn);
                accumulate(*tokens, dt);
                accumulate(*w_gate, dg);
                accumulate(*w_noise, dn);
              });
}

Tape::Routed Tape::topk_softmax_rows(const DualPtr& logits, std::size_t k) {
  ops::TopkSoftmax fwd = ops::topk_softmax_rows(logits->value, k);
  auto selected = std::make_shared<std::vector<std::vector<std::size_t>>>(
      std::move(fwd.selected));
  DualPtr gates = make(std::move(fwd.gates), {logits},
                       [logits, selected](Dual& self) {
                         accumulate(*logits,
                                    ops::topk_softmax_rows_vjp(
                                        self.value, *selected, self.grad));
                       });
  return Routed{gates, *selected};
}

DualPtr Tape::gather_rows(const DualPtr& x, std::vector<std::size_t> idx) {
  auto idx_ptr = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  Tensor v = ops::gather_rows(x->value, *idx_ptr);
  return make(std::move(v), {x}, [x, idx_ptr](Dual& self) {
    Tensor dx(x->value.shape);
    const std::size_t c = self.grad.cols();
    for (std::size_t j = 0; j < idx_ptr->size(); ++j) {
      const double* src = self.grad.row_ptr(j);
      double* dst = dx.row_ptr((*idx_ptr)[j]);
      for (std::size_t t = 0; t < c; ++t) dst[t] += src[t];
    }
    accumulate(*x, dx);
  });
}

DualPtr Tape::scatter_rows(const DualPtr& x, std::vector<std::size_t> idx,
                           std::size_t total_rows) {
  auto idx_ptr = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  Tensor v = ops::scatter_rows(x->value, *idx_ptr, total_rows);
  return make(std::move(v), {x}, [x, idx_ptr](Dual& self) {
    accumulate(*x, ops::gather_rows(self.grad, *idx_ptr));
  });
}

DualPtr Tape::scale_rows(const DualPtr& x, const DualPtr& v) {
  Tensor out = ops::scale_rows(x->value, v->value);
  return make(std::move(out), {x, v}, [x, v](Dual& self) {
    Tensor dx, dv;
    ops::scale_rows_vjp(x->value, v->value, self.grad, dx, dv);
    accumulate(*x, dx);
    accumulate(*v, dv);
  });
}

DualPtr Tape::gather_column(const DualPtr& x, std::size_t col,
                            std::vector<std::size_t> rows) {
  auto rows_ptr = std::make_shared<std::vector<std::size_t>>(std::move(rows));
  Tensor v = ops::gather_column(x->value, col, *rows_ptr);
  return make(std::move(v), {x}, [x, col, rows_ptr](Dual& self) {
    Tensor dx(x->value.shape);
    for (std::size_t j = 0; j < rows_ptr->size(); ++j)
      dx.at((*rows_ptr)[j], col) += self.grad.data[j];
    accumulate(*x, dx);
  });
}

DualPtr Tape::column_sums(const DualPtr& x) {
  Tensor v = ops::column_sums(x->value);
  return make(std::move(v), {x}, [x](Dual& self) {
    Tensor dx(x->value.shape);
    for (std::size_t i = 0; i < dx.rows(); ++i) {
      double* row = dx.row_ptr(i);
      for (std::size_t j = 0; j < dx.cols(); ++j) row[j] = self.grad.data[j];
    }
    accumulate(*x, dx);
  });
}

DualPtr Tape::cv_squared(const DualPtr& v) {
  Tensor out = ops::cv_squared(v->value);
  return make(std::move(out), {v}, [v](Dual& self) {
    accumulate(*v, ops::cv_squared_vjp(v->value, self.grad.data[0]));
  });
}

DualPtr Tape::cross_entropy_rows(const DualPtr& logits, std::vector<int> labels,
                                 int ignore_id) {
  auto labels_ptr = std::make_shared<std::vector<int>>(std::move(labels));
  Tensor v = ops::cross_entropy_rows(logits->value, *labels_ptr, ignore_id);
  return make(std::move(v), {logits}, [logits, labels_ptr, ignore_id](Dual& self) {
    accumulate(*logits,
               ops::cross_entropy_rows_vjp(logits->value, *labels_ptr,
                                           ignore_id, self.grad.data[0]));
  });
}

void Tape::backward(const DualPtr& root) {
  if (root->value.numel() != 1)
    throw DimensionError("tape backward: root must be a 1-element tensor");
  root->grad.data[0] = 1.0;
  root->touched = true;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Dual& node = **it;
    if (node.touched && node.backward_fn) node.backward_fn(node);
  }
}

}  // namespace dgmoe
