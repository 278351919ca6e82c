#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace strata {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 1 and rank 2 are the only ranks
/// the model uses; a rank-1 tensor of length n behaves as a 1 x n row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool all_finite() const noexcept;
  Tensor row_copy(std::size_t r) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Equality of shapes and of the raw bit patterns of every element.
bool bit_equal(const Tensor& a, const Tensor& b) noexcept;

double max_abs_diff(const Tensor& a, const Tensor& b);

/// Plain (non-differentiable) product used by oracles and benchmarks.
Tensor dense_matmul(const Tensor& a, const Tensor& b);

}  // namespace strata
