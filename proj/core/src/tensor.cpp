#include "uwhdn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "uwhdn/error.hpp"

namespace uwhdn {

std::string Shape4::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

Scalar Tensor::item() const {
  if (numel() != 1)
    throw ValidationError("Tensor::item on tensor of shape " + shape_.str());
  return data_[0];
}

Scalar mean(const Tensor& t) {
  if (t.empty()) return 0.0;
  Scalar s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i];
  return s / static_cast<Scalar>(t.numel());
}

Scalar mean_abs(const Tensor& t) {
  if (t.empty()) return 0.0;
  Scalar s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += std::abs(t[i]);
  return s / static_cast<Scalar>(t.numel());
}

Scalar max_abs(const Tensor& t) {
  Scalar m = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

Scalar min_value(const Tensor& t) {
  Scalar m = t.numel() ? t[0] : 0.0;
  for (std::size_t i = 1; i < t.numel(); ++i) m = std::min(m, t[i]);
  return m;
}

Scalar max_value(const Tensor& t) {
  Scalar m = t.numel() ? t[0] : 0.0;
  for (std::size_t i = 1; i < t.numel(); ++i) m = std::max(m, t[i]);
  return m;
}

bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  return a.numel() == 0 ||
         std::memcmp(a.data(), b.data(), a.numel() * sizeof(Scalar)) == 0;
}

void clamp_inplace(Tensor& t, Scalar lo, Scalar hi) {
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], lo, hi);
}

Tensor clamped(const Tensor& t, Scalar lo, Scalar hi) {
  Tensor out = t;
  clamp_inplace(out, lo, hi);
  return out;
}

Tensor slice_sample(const Tensor& batch, std::size_t n) {
  const Shape4& s = batch.shape();
  if (n >= s.n) throw ValidationError("slice_sample: index out of range");
  Tensor out({1, s.c, s.h, s.w});
  const std::size_t stride = s.c * s.h * s.w;
  std::memcpy(out.data(), batch.data() + n * stride, stride * sizeof(Scalar));
  return out;
}

void set_sample(Tensor& batch, std::size_t n, const Tensor& sample) {
  const Shape4& s = batch.shape();
  if (n >= s.n || sample.shape().c != s.c || sample.shape().h != s.h ||
      sample.shape().w != s.w || sample.shape().n != 1)
    throw ValidationError("set_sample: shape mismatch");
  const std::size_t stride = s.c * s.h * s.w;
  std::memcpy(batch.data() + n * stride, sample.data(), stride * sizeof(Scalar));
}

Tensor pad_to_multiple(const Tensor& t, std::size_t multiple) {
  const Shape4& s = t.shape();
  const std::size_t h = (s.h + multiple - 1) / multiple * multiple;
  const std::size_t w = (s.w + multiple - 1) / multiple * multiple;
  if (h == s.h && w == s.w) return t;
  Tensor out({s.n, s.c, h, w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          out.at(n, c, y, x) =
              t.at(n, c, std::min(y, s.h - 1), std::min(x, s.w - 1));
  return out;
}

Tensor crop_to(const Tensor& t, std::size_t h, std::size_t w) {
  const Shape4& s = t.shape();
  if (h > s.h || w > s.w) throw ValidationError("crop_to: target exceeds source");
  if (h == s.h && w == s.w) return t;
  Tensor out({s.n, s.c, h, w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < h; ++y)
        std::memcpy(out.data() + ((n * s.c + c) * h + y) * w,
                    t.data() + ((n * s.c + c) * s.h + y) * s.w,
                    w * sizeof(Scalar));
  return out;
}

}  // namespace uwhdn
