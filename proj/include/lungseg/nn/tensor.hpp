#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lungseg/error.hpp"

namespace lungseg::nn {

using Dims = std::vector<std::size_t>;

inline std::size_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string format_dims(const Dims& dims);

/// Dense row-major tensor. Activations are rank 4 (batch, channels, height, width).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T(0)) : dims_(std::move(dims)), data_(element_count(dims_), fill) {}
  Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != element_count(dims_)) {
      fail(ErrorCode::DimMismatch, "tensor payload does not match dims " + format_dims(dims_));
    }
  }

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // rank-4 accessors
  std::size_t batch() const { return dims_[0]; }
  std::size_t channels() const { return dims_[1]; }
  std::size_t height() const { return dims_[2]; }
  std::size_t width() const { return dims_[3]; }
  std::size_t plane() const { return dims_[2] * dims_[3]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
  }
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

}  // namespace lungseg::nn
