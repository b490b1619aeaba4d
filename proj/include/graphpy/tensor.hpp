#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graphpy/error.hpp"

namespace graphpy {

// Row-major dense array of rank 1 to 3.  Axis 0 is always the row axis
// (vertices or edge slots); rank-3 tensors are laid out as (rows, heads,
// features).
template <typename T>
class DenseTensor {
 public:
  using value_type = T;

  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::size_t> shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(product(shape_), fill);
  }

  DenseTensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    require(data_.size() == product(shape_), ErrorCode::shape,
            "data length " + std::to_string(data_.size()) + " does not match shape " + shape_string());
  }

  static DenseTensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return DenseTensor({rows, cols}, std::vector<T>(values));
  }

  static DenseTensor column(std::initializer_list<T> values) {
    return DenseTensor({values.size(), 1}, std::vector<T>(values));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  // Elements per row (product of all trailing axes).
  std::size_t row_size() const noexcept { return rows() == 0 ? 0 : data_.size() / rows(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * row_size(), row_size()}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * row_size(), row_size()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * row_size() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * row_size() + c]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const DenseTensor& o) const noexcept { return shape_ == o.shape_; }

  // Reinterpret with a new shape of equal element count.
  DenseTensor reshaped(std::vector<std::size_t> shape) const {
    return DenseTensor(std::move(shape), data_);
  }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t product(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  static void check_shape(const std::vector<std::size_t>& s) {
    require(!s.empty() && s.size() <= 3, ErrorCode::shape, "tensor rank must be 1..3");
    for (auto d : s) require(d >= 1, ErrorCode::shape, "tensor dimensions must be >= 1");
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = DenseTensor<double>;
using TensorF = DenseTensor<float>;

}  // namespace graphpy
