// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace dgmoe {

/// Dense row-major tensor of 64-bit floats with explicit shape metadata.
/// Immutable by convention once handed to an operation; all operations
/// return fresh tensors.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor scalar(double v);
  /// 1-D tensor from a literal list.
  static Tensor row(std::initializer_list<double> v);
  static Tensor from_vector(std::vector<double> v);
  /// 2-D tensor from a flat row-major literal list.
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> v);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double* row_ptr(std::size_t r) { return data.data() + r * cols(); }
  const double* row_ptr(std::size_t r) const { return data.data() + r * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  /// memcmp-level equality of shape and payload bits.
  bool bitwise_equal(const Tensor& o) const;
};

std::string shape_string(const std::vector<std::size_t>& s);
std::string shape_string(const Tensor& t);

void require_rank(const Tensor& t, std::size_t rank, const char* who);
void require_same_shape(const Tensor& a, const Tensor& b, const char* who);

}  // namespace dgmoe
