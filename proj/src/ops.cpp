// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dgmoe/errors.hpp"

namespace dgmoe::ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_string(a) + " vs " + shape_string(b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  // i-k-j loop order: each output element accumulates over k ascending.
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b.row_ptr(kk);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: inner dimensions disagree, " +
                         shape_string(a) + " vs " + shape_string(b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.row_ptr(j);
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      orow[j] = acc;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  if (a.rows() != b.rows())
    throw DimensionError("matmul_tn: inner dimensions disagree, " +
                         shape_string(a) + " vs " + shape_string(b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({k, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row_ptr(i);
    const double* brow = b.row_ptr(i);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* orow = out.row_ptr(kk);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

void matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& g,
                Tensor& da, Tensor& db) {
  if (g.shape != std::vector<std::size_t>{a.rows(), b.cols()})
    throw DimensionError("matmul_vjp: cotangent shape " + shape_string(g) +
                         " does not match output " +
                         shape_string({a.rows(), b.cols()}));
  da = matmul_nt(g, b);
  db = matmul_tn(a, g);
}

void matmul_nt_vjp(const Tensor& a, const Tensor& b, const Tensor& g,
                   Tensor& da, Tensor& db) {
  if (g.shape != std::vector<std::size_t>{a.rows(), b.rows()})
    throw DimensionError("matmul_nt_vjp: cotangent shape " + shape_string(g) +
                         " does not match output " +
                         shape_string({a.rows(), b.rows()}));
  da = matmul(g, b);
  db = matmul_tn(g, a);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.data) v *= c;
  return out;
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& b) {
  require_rank(x, 2, "add_row_broadcast");
  require_rank(b, 1, "add_row_broadcast");
  if (x.cols() != b.numel())
    throw DimensionError("add_row_broadcast: row width " +
                         std::to_string(x.cols()) + " vs bias length " +
                         std::to_string(b.numel()));
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* row = out.row_ptr(i);
    for (std::size_t j = 0; j < x.cols(); ++j) row[j] += b.data[j];
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  Tensor out = x;
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* row = out.row_ptr(i);
    double m = row[0];
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - m);
      denom += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= denom;
  }
  return out;
}

Tensor softmax_rows_vjp(const Tensor& y, const Tensor& g) {
  require_same_shape(y, g, "softmax_rows_vjp");
  Tensor dx = y;
  const std::size_t n = y.cols();
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const double* yrow = y.row_ptr(i);
    const double* grow = g.row_ptr(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += grow[j] * yrow[j];
    double* drow = dx.row_ptr(i);
    for (std::size_t j = 0; j < n; ++j) drow[j] = yrow[j] * (grow[j] - dot);
  }
  return dx;
}

double lp_distance(const Tensor& x, const Tensor& y, int p) {
  if (x.numel() != y.numel())
    throw DimensionError("lp_distance: length mismatch " + shape_string(x) +
                         " vs " + shape_string(y));
  if (p != 1 && p != 2)
    throw ConfigError("lp_distance: unsupported norm order p=" +
                      std::to_string(p));
  double acc = 0.0;
  if (p == 1) {
    for (std::size_t i = 0; i < x.numel(); ++i)
      acc += std::fabs(x.data[i] - y.data[i]);
    return acc;
  }
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = x.data[i] - y.data[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

void lp_distance_vjp(const Tensor& x, const Tensor& y, int p, double g,
                     Tensor& dx, Tensor& dy) {
  const double dist = lp_distance(x, y, p);
  dx = Tensor(x.shape);
  dy = Tensor(y.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = x.data[i] - y.data[i];
    double s = 0.0;
    if (p == 1) {
      // Subgradient 0 where the difference is exactly 0.
      s = (d > 0.0) ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    } else if (dist > 0.0) {
      s = d / dist;
    }
    dx.data[i] = g * s;
    dy.data[i] = -g * s;
  }
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::size_t> topk_indices(const double* x, std::size_t n,
                                      std::size_t k) {
  if (k < 1 || k > n)
    throw ConfigError("topk_indices: k=" + std::to_string(k) +
                      " out of range for length " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Value descending, ties toward the lowest index.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> topk_indices(const Tensor& x, std::size_t k) {
  require_rank(x, 1, "topk_indices");
  return topk_indices(x.data.data(), x.numel(), k);
}

Tensor route_logits(const Tensor& tokens, const Tensor& w_gate,
                    const Tensor& w_noise, const Tensor& eps, int p) {
  require_rank(tokens, 2, "route_logits");
  require_rank(w_gate, 2, "route_logits");
  require_same_shape(w_gate, w_noise, "route_logits");
  if (p != 1 && p != 2)
    throw ConfigError("route_logits: unsupported norm order p=" +
                      std::to_string(p));
  const std::size_t t = tokens.rows(), d = tokens.cols();
  const std::size_t ne = w_gate.cols();
  if (w_gate.rows() != d)
    throw DimensionError("route_logits: token dim " + std::to_string(d) +
                         " vs prototype dim " + std::to_string(w_gate.rows()));
  if (eps.shape != std::vector<std::size_t>{t, ne})
    throw DimensionError("route_logits: noise shape " + shape_string(eps) +
                         " vs expected " + shape_string({t, ne}));
  Tensor h({t, ne});
  for (std::size_t i = 0; i < t; ++i) {
    const double* f = tokens.row_ptr(i);
    for (std::size_t e = 0; e < ne; ++e) {
      double dist = 0.0;
      if (p == 1) {
        for (std::size_t j = 0; j < d; ++j)
          dist += std::fabs(f[j] - w_gate.data[j * ne + e]);
      } else {
        for (std::size_t j = 0; j < d; ++j) {
          const double dd = f[j] - w_gate.data[j * ne + e];
          dist += dd * dd;
        }
        dist = std::sqrt(dist);
      }
      double noise = 0.0;
      const double ev = eps.at(i, e);
      if (ev != 0.0) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j)
          dot += f[j] * w_noise.data[j * ne + e];
        noise = ev * softplus(dot);
      }
      h.at(i, e) = -dist + noise;
    }
  }
  return h;
}

void route_logits_vjp(const Tensor& tokens, const Tensor& w_gate,
                      const Tensor& w_noise, const Tensor& eps, int p,
                      const Tensor& g, Tensor& d_tokens, Tensor& d_w_gate,
                      Tensor& d_w_noise) {
  const std::size_t t = tokens.rows(), d = tokens.cols();
  const std::size_t ne = w_gate.cols();
  if (g.shape != std::vector<std::size_t>{t, ne})
    throw DimensionError("route_logits_vjp: cotangent shape " +
                         shape_string(g));
  d_tokens = Tensor(tokens.shape);
  d_w_gate = Tensor(w_gate.shape);
  d_w_noise = Tensor(w_noise.shape);
  for (std::size_t i = 0; i < t; ++i) {
    const double* f = tokens.row_ptr(i);
    double* df = d_tokens.row_ptr(i);
    for (std::size_t e = 0; e < ne; ++e) {
      const double gv = g.at(i, e);
      if (gv == 0.0) continue;
      if (p == 1) {
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = f[j] - w_gate.data[j * ne + e];
          const double s = (diff > 0.0) ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
          df[j] += -gv * s;
          d_w_gate.data[j * ne + e] += gv * s;
        }
      } else {
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = f[j] - w_gate.data[j * ne + e];
          dist += diff * diff;
        }
        dist = std::sqrt(dist);
        if (dist > 0.0) {
          const double c = gv / dist;
          for (std::size_t j = 0; j < d; ++j) {
            const double diff = f[j] - w_gate.data[j * ne + e];
            df[j] += -c * diff;
            d_w_gate.data[j * ne + e] += c * diff;
          }
        }
      }
      const double ev = eps.at(i, e);
      if (ev != 0.0) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j)
          dot += f[j] * w_noise.data[j * ne + e];
        const double c = gv * ev * sigmoid(dot);
        for (std::size_t j = 0; j < d; ++j) {
          df[j] += c * w_noise.data[j * ne + e];
          d_w_noise.data[j * ne + e] += c * f[j];
        }
      }
    }
  }
}

TopkSoftmax topk_softmax_rows(const Tensor& logits, std::size_t k) {
  require_rank(logits, 2, "topk_softmax_rows");
  const std::size_t t = logits.rows(), ne = logits.cols();
  if (k < 1 || k > ne)
    throw ConfigError("topk_softmax_rows: k=" + std::to_string(k) +
                      " out of range for " + std::to_string(ne) + " experts");
  TopkSoftmax out;
  out.gates = Tensor({t, ne});
  out.selected.resize(t);
  std::vector<double> exps(k);
  for (std::size_t i = 0; i < t; ++i) {
    const double* row = logits.row_ptr(i);
    out.selected[i] = topk_indices(row, ne, k);
    const auto& sel = out.selected[i];
    double m = row[sel[0]];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[sel[j]]);
    for (std::size_t j = 0; j < k; ++j) exps[j] = std::exp(row[sel[j]] - m);
    // Ascending-value summation keeps gates exactly invariant under expert
    // permutation.
    std::vector<double> sorted = exps;
    std::sort(sorted.begin(), sorted.end());
    double denom = 0.0;
    for (double v : sorted) denom += v;
    for (std::size_t j = 0; j < k; ++j)
      out.gates.at(i, sel[j]) = exps[j] / denom;
  }
  return out;
}

Tensor topk_softmax_rows_vjp(const Tensor& gates,
                             const std::vector<std::vector<std::size_t>>& selected,
                             const Tensor& g) {
  require_same_shape(gates, g, "topk_softmax_rows_vjp");
  Tensor dh(gates.shape);
  for (std::size_t i = 0; i < gates.rows(); ++i) {
    const auto& sel = selected[i];
    double dot = 0.0;
    for (std::size_t e : sel) dot += g.at(i, e) * gates.at(i, e);
    for (std::size_t e : sel)
      dh.at(i, e) = gates.at(i, e) * (g.at(i, e) - dot);
  }
  return dh;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  require_rank(x, 2, "gather_rows");
  Tensor out({idx.size(), x.cols()});
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= x.rows())
      throw DimensionError("gather_rows: index " + std::to_string(idx[j]) +
                           " out of range for " + std::to_string(x.rows()) +
                           " rows");
    std::copy(x.row_ptr(idx[j]), x.row_ptr(idx[j]) + x.cols(), out.row_ptr(j));
  }
  return out;
}

Tensor scatter_rows(const Tensor& x, const std::vector<std::size_t>& idx,
                    std::size_t total_rows) {
  require_rank(x, 2, "scatter_rows");
  if (idx.size() != x.rows())
    throw DimensionError("scatter_rows: " + std::to_string(idx.size()) +
                         " indices vs " + std::to_string(x.rows()) + " rows");
  Tensor out({total_rows, x.cols()});
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= total_rows)
      throw DimensionError("scatter_rows: index " + std::to_string(idx[j]) +
                           " out of range for " + std::to_string(total_rows) +
                           " rows");
    std::copy(x.row_ptr(j), x.row_ptr(j) + x.cols(), out.row_ptr(idx[j]));
  }
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& v) {
  require_rank(x, 2, "scale_rows");
  require_rank(v, 1, "scale_rows");
  if (v.numel() != x.rows())
    throw DimensionError("scale_rows: " + std::to_string(v.numel()) +
                         " scales vs " + std::to_string(x.rows()) + " rows");
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* row = out.row_ptr(i);
    for (std::size_t j = 0; j < x.cols(); ++j) row[j] *= v.data[i];
  }
  return out;
}

void scale_rows_vjp(const Tensor& x, const Tensor& v, const Tensor& g,
                    Tensor& dx, Tensor& dv) {
  require_same_shape(x, g, "scale_rows_vjp");
  dx = scale_rows(g, v);
  dv = Tensor(v.shape);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* grow = g.row_ptr(i);
    const double* xrow = x.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) acc += grow[j] * xrow[j];
    dv.data[i] = acc;
  }
}

Tensor gather_column(const Tensor& x, std::size_t col,
                     const std::vector<std::size_t>& rows) {
  require_rank(x, 2, "gather_column");
  if (col >= x.cols())
    throw DimensionError("gather_column: column " + std::to_string(col) +
                         " out of range");
  Tensor out({rows.size()});
  for (std::size_t j = 0; j < rows.size(); ++j) out.data[j] = x.at(rows[j], col);
  return out;
}

Tensor column_sums(const Tensor& x) {
  require_rank(x, 2, "column_sums");
  Tensor out({x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* row = x.row_ptr(i);
    for (std::size_t j = 0; j < x.cols(); ++j) out.data[j] += row[j];
  }
  return out;
}

Tensor cv_squared(const Tensor& v) {
  require_rank(v, 1, "cv_squared");
  const std::size_t n = v.numel();
  if (n == 0) throw DimensionError("cv_squared: empty input");
  if (n == 1) return Tensor::scalar(0.0);
  double mean = 0.0;
  for (double x : v.data) mean += x;
  mean /= static_cast<double>(n);
  if (mean == 0.0)
    throw DegenerateInputError("cv_squared: zero mean importance");
  double var = 0.0;
  for (double x : v.data) {
    const double d = x - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  return Tensor::scalar(var / (mean * mean));
}

Tensor cv_squared_vjp(const Tensor& v, double g) {
  const std::size_t n = v.numel();
  Tensor dv(v.shape);
  if (n <= 1) return dv;
  double mean = 0.0;
  for (double x : v.data) mean += x;
  mean /= static_cast<double>(n);
  if (mean == 0.0)
    throw DegenerateInputError("cv_squared_vjp: zero mean importance");
  double var = 0.0;
  for (double x : v.data) {
    const double d = x - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double term = 2.0 * (v.data[i] - mean) / (nn * mean * mean) -
                        2.0 * var / (nn * mean * mean * mean);
    dv.data[i] = g * term;
  }
  return dv;
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels,
                          int ignore_id) {
  require_rank(logits, 2, "cross_entropy_rows");
  if (labels.size() != logits.rows())
    throw DimensionError("cross_entropy_rows: " +
                         std::to_string(labels.size()) + " labels vs " +
                         std::to_string(logits.rows()) + " rows");
  const std::size_t kclasses = logits.cols();
  double loss = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y == ignore_id) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= kclasses)
      throw InvariantError("cross_entropy_rows: label " + std::to_string(y) +
                           " outside [0, " + std::to_string(kclasses) + ")");
    const double* row = logits.row_ptr(i);
    double m = row[0];
    for (std::size_t j = 1; j < kclasses; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < kclasses; ++j) denom += std::exp(row[j] - m);
    loss += m + std::log(denom) - row[y];
    ++valid;
  }
  if (valid == 0)
    throw DegenerateInputError("cross_entropy_rows: all tokens ignored");
  return Tensor::scalar(loss / static_cast<double>(valid));
}

Tensor cross_entropy_rows_vjp(const Tensor& logits,
                              const std::vector<int>& labels, int ignore_id,
                              double g) {
  const std::size_t kclasses = logits.cols();
  std::size_t valid = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i)
    if (labels[i] != ignore_id) ++valid;
  if (valid == 0)
    throw DegenerateInputError("cross_entropy_rows_vjp: all tokens ignored");
  const double inv = g / static_cast<double>(valid);
  Tensor dl(logits.shape);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y == ignore_id) continue;
    const double* row = logits.row_ptr(i);
    double m = row[0];
    for (std::size_t j = 1; j < kclasses; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < kclasses; ++j) denom += std::exp(row[j] - m);
    double* drow = dl.row_ptr(i);
    for (std::size_t j = 0; j < kclasses; ++j) {
      const double p = std::exp(row[j] - m) / denom;
      drow[j] = inv * (p - (static_cast<int>(j) == y ? 1.0 : 0.0));
    }
  }
  return dl;
}

}  // namespace dgmoe::ops
