// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "dgmoe/errors.hpp"

namespace dgmoe {

namespace {
std::size_t product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), data(product(shape), fill) {}

Tensor Tensor::zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::row(std::initializer_list<double> v) {
  Tensor t({v.size()});
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

Tensor Tensor::from_vector(std::vector<double> v) {
  Tensor t;
  t.shape = {v.size()};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> v) {
  if (v.size() != rows * cols)
    throw DimensionError("matrix literal: expected " +
                         std::to_string(rows * cols) + " values, got " +
                         std::to_string(v.size()));
  Tensor t({rows, cols});
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows()");
  return shape[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols()");
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data[r * cols() + c];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::bitwise_equal(const Tensor& o) const {
  return shape == o.shape &&
         std::memcmp(data.data(), o.data.data(), data.size() * sizeof(double)) == 0;
}

std::string shape_string(const std::vector<std::size_t>& s) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << "x";
    out << s[i];
  }
  out << "]";
  return out.str();
}

std::string shape_string(const Tensor& t) { return shape_string(t.shape); }

void require_rank(const Tensor& t, std::size_t rank, const char* who) {
  if (t.shape.size() != rank)
    throw DimensionError(std::string(who) + ": expected rank " +
                         std::to_string(rank) + " tensor, got shape " +
                         shape_string(t));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(who) + ": shape mismatch " +
                         shape_string(a) + " vs " + shape_string(b));
}

}  // namespace dgmoe
