// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maskfill/error.hpp"

namespace maskfill {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_string(const Shape &shape);

/// Dense row-major array. Images are 4-d tensors laid out as [N, C, H, W].
template <typename T> class Tensor {
public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_extents();
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    expects(data_.size() == shape_numel(shape_),
            "tensor data length does not match shape " + shape_string(shape_));
  }

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T *data() { return data_.data(); }
  const T *data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }

  // 4-d accessors, [N, C, H, W]
  T &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  const T &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const Tensor &other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor &a, const Tensor &b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  template <typename U> Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    out.set_requires_grad(requires_grad_);
    return out;
  }

private:
  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  void check_extents() const {
    for (auto extent : shape_)
      expects(extent > 0, "tensor extents must be positive, got " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
  bool requires_grad_ = false;
};

/// Unit-interval intensities, [N, C, H, W]. A single picture has N == 1.
using Image = Tensor<float>;

inline Image make_image(std::size_t channels, std::size_t height, std::size_t width,
                        float fill = 0.0f) {
  return Image({1, channels, height, width}, fill);
}

template <typename T> void expect_image_shape(const Tensor<T> &t, const char *what) {
  expects(t.rank() == 4, std::string(what) + ": expected a [N,C,H,W] tensor, got " +
                             shape_string(t.shape()));
}

} // namespace maskfill
