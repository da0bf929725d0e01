#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

namespace uwhdn {

using Scalar = double;

// All arrays in the project are rank-4, NCHW. Images are n x 3 x h x w with
// values in [0, 1]; feature maps are n x c x h' x w'; convolution weights are
// out x in x kh x kw. Scalars live in 1x1x1x1 tensors.
struct Shape4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t numel() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape) : shape_(shape), data_(shape.numel(), 0.0) {}
  Tensor(Shape4 shape, Scalar fill) : shape_(shape), data_(shape.numel(), fill) {}

  static Tensor zeros(Shape4 shape) { return Tensor(shape); }
  static Tensor full(Shape4 shape, Scalar v) { return Tensor(shape, v); }
  static Tensor scalar(Scalar v) { return Tensor({1, 1, 1, 1}, v); }

  const Shape4& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    assert(n < shape_.n && c < shape_.c && y < shape_.h && x < shape_.w);
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    assert(n < shape_.n && c < shape_.c && y < shape_.h && x < shape_.w);
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  // Value of a 1-element tensor.
  Scalar item() const;

 private:
  Shape4 shape_;
  std::vector<Scalar> data_;
};

// Elementwise / reduction helpers.
Scalar mean(const Tensor& t);
Scalar mean_abs(const Tensor& t);
Scalar max_abs(const Tensor& t);
Scalar min_value(const Tensor& t);
Scalar max_value(const Tensor& t);
bool all_finite(const Tensor& t);
bool bitwise_equal(const Tensor& a, const Tensor& b);
void clamp_inplace(Tensor& t, Scalar lo, Scalar hi);
Tensor clamped(const Tensor& t, Scalar lo, Scalar hi);

// Single-sample view copies: slice batch element `n` to a 1xCxHxW tensor and back.
Tensor slice_sample(const Tensor& batch, std::size_t n);
void set_sample(Tensor& batch, std::size_t n, const Tensor& sample);

// Edge-replicate padding on the right/bottom so h and w become multiples of
// `multiple`; crop undoes it. Used to feed arbitrary-size images to the nets.
Tensor pad_to_multiple(const Tensor& t, std::size_t multiple);
Tensor crop_to(const Tensor& t, std::size_t h, std::size_t w);

}  // namespace uwhdn
