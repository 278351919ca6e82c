#include "strata/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "strata/error.hpp"

namespace strata {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const noexcept {
  return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : 1);
}

std::size_t Tensor::cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::row_copy(std::size_t r) const {
  const auto n = cols();
  return Tensor({1, n}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * n),
                                            data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)));
}

bool bit_equal(const Tensor& a, const Tensor& b) noexcept {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("max_abs_diff: size mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

Tensor dense_matmul(const Tensor& a, const Tensor& b) {
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  }
  return out;
}

}  // namespace strata
