#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sise/errors.hpp"

namespace sise {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor. Images are H x W x 3, feature-map stacks M x h x w,
/// masks and heatmaps H x W.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_extents();
    data_.assign(shape_volume(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_extents();
    if (shape_volume(shape_) != data_.size()) {
      throw ShapeMismatch("tensor shape " + shape_to_string(shape_) + " needs " +
                          std::to_string(shape_volume(shape_)) + " values, got " +
                          std::to_string(data_.size()));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }

  T& at(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Slice along the leading axis: plane k of an M x h x w stack.
  std::span<const T> plane(std::size_t k) const {
    const std::size_t stride = data_.size() / shape_.at(0);
    return std::span<const T>(data_).subspan(k * stride, stride);
  }
  std::span<T> plane(std::size_t k) {
    const std::size_t stride = data_.size() / shape_.at(0);
    return std::span<T>(data_).subspan(k * stride, stride);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw InvalidArgument("tensor extents must be positive, got " + shape_to_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace sise
