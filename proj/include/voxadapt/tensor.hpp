// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxadapt/error.hpp"

namespace voxadapt {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array. Rank-2 tensors are the working currency of the
/// model; vectors are carried as 1 x n matrices.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(shape_size(shape_) == data_.size(), ErrorCode::kShapeMismatch,
            "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                shape_string(shape_));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T(0)) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor row(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor({1, n}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<T> row_span(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const T> row_span(std::size_t r) const {
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    for (const T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const std::string& what) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          what + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename T>
void require_rank2(const Tensor<T>& a, const std::string& what) {
  require(a.rank() == 2, ErrorCode::kShapeMismatch,
          what + ": expected a matrix, got shape " + shape_string(a.shape()));
}

template <typename T>
void require_finite(const Tensor<T>& a, const std::string& what) {
  require(a.all_finite(), ErrorCode::kNonFinite, what + " produced a non-finite value");
}

}  // namespace voxadapt
