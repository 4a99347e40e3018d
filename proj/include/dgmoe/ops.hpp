// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "dgmoe/tensor.hpp"

namespace dgmoe::ops {

// Forward operations. Each op that participates in training has a matching
// *_vjp companion returning the exact vector-Jacobian product of the forward
// map; gradient checks in the test suite hold every pair to finite-difference
// agreement. Reductions use a fixed summation order so repeated evaluation is
// bitwise identical.

/// Standard matrix product, summation left-to-right over the inner dimension.
Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& g,
                Tensor& da, Tensor& db);

/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
void matmul_nt_vjp(const Tensor& a, const Tensor& b, const Tensor& g,
                   Tensor& da, Tensor& db);

/// a^T * b (internal helper for the vjps above).
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// x + broadcast of row vector b over every row of x.
Tensor add_row_broadcast(const Tensor& x, const Tensor& b);

/// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& x);
/// vjp given the forward output y: dx = y * (g - sum(g * y, row)).
Tensor softmax_rows_vjp(const Tensor& y, const Tensor& g);

/// (sum_i |x_i - y_i|^p)^(1/p) for p in {1, 2}.
double lp_distance(const Tensor& x, const Tensor& y, int p);
void lp_distance_vjp(const Tensor& x, const Tensor& y, int p, double g,
                     Tensor& dx, Tensor& dy);

/// log(1 + exp(x)) in the overflow-safe branch form.
double softplus(double x);
/// Logistic function, the softplus derivative.
double sigmoid(double x);

/// Indices of the k largest entries; ties broken toward the lowest index;
/// result sorted ascending by index.
std::vector<std::size_t> topk_indices(const double* x, std::size_t n,
                                      std::size_t k);
std::vector<std::size_t> topk_indices(const Tensor& x, std::size_t k);

/// Routing logits h[i][e] = -||f_i - w_gate[:,e]||_p
///                          + eps[i][e] * softplus(f_i . w_noise[:,e]).
/// eps carries the externally drawn noise realization (all zeros when noise
/// is disabled).
Tensor route_logits(const Tensor& tokens, const Tensor& w_gate,
                    const Tensor& w_noise, const Tensor& eps, int p);
void route_logits_vjp(const Tensor& tokens, const Tensor& w_gate,
                      const Tensor& w_noise, const Tensor& eps, int p,
                      const Tensor& g, Tensor& d_tokens, Tensor& d_w_gate,
                      Tensor& d_w_noise);

/// Sparse gates: softmax over the per-row top-k logits, zeros elsewhere.
/// The denominator sums exponentials in ascending value order so that gates
/// are exactly invariant under expert permutation. The selection itself is
/// treated as constant by the vjp.
struct TopkSoftmax {
  Tensor gates;
  std::vector<std::vector<std::size_t>> selected;  // ascending per row
};
TopkSoftmax topk_softmax_rows(const Tensor& logits, std::size_t k);
Tensor topk_softmax_rows_vjp(const Tensor& gates,
                             const std::vector<std::vector<std::size_t>>& selected,
                             const Tensor& g);

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx);
/// Rows of x placed at positions idx of an otherwise-zero [total_rows x d]
/// tensor; idx entries must be unique.
Tensor scatter_rows(const Tensor& x, const std::vector<std::size_t>& idx,
                    std::size_t total_rows);

/// Row i multiplied by v[i].
Tensor scale_rows(const Tensor& x, const Tensor& v);
void scale_rows_vjp(const Tensor& x, const Tensor& v, const Tensor& g,
                    Tensor& dx, Tensor& dv);

/// Entries x[rows[j], col] as a 1-D tensor.
Tensor gather_column(const Tensor& x, std::size_t col,
                     const std::vector<std::size_t>& rows);

/// Column sums of a 2-D tensor, rows accumulated in ascending order.
Tensor column_sums(const Tensor& x);

/// Squared coefficient of variation (population std / mean)^2; zero for a
/// single-element input.
Tensor cv_squared(const Tensor& v);
Tensor cv_squared_vjp(const Tensor& v, double g);

/// Mean cross-entropy over rows whose label != ignore_id, with stable
/// log-sum-exp.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels,
                          int ignore_id);
Tensor cross_entropy_rows_vjp(const Tensor& logits,
                              const std::vector<int>& labels, int ignore_id,
                              double g);

}  // namespace dgmoe::ops
