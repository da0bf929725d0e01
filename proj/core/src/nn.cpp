#include "uwhdn/nn.hpp"

#include <cmath>

namespace uwhdn::nn {

void init_conv_weight(Tensor& w, std::size_t fan_in, Rng& rng) {
  const Scalar bound = std::sqrt(1.0 / static_cast<Scalar>(fan_in));
  for (std::size_t i = 0; i < w.numel(); ++i)
    w[i] = rng.uniform(-bound, bound);
}

Conv2d::Conv2d(const std::string& name, std::size_t in_c, std::size_t out_c,
               std::size_t k, std::size_t stride_, std::size_t pad_, Rng& rng)
    : weight(name + ".weight", Tensor({out_c, in_c, k, k})),
      bias(name + ".bias", Tensor({1, out_c, 1, 1})),
      stride(stride_),
      pad(pad_) {
  init_conv_weight(weight.value, in_c * k * k, rng);
}

Value Conv2d::operator()(Graph& g, Value x) {
  return conv2d(x, g.use(weight), g.use(bias), stride, pad);
}

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Conv2d::zero_init() {
  weight.value = Tensor(weight.value.shape());
  bias.value = Tensor(bias.value.shape());
}

ConvTranspose2d::ConvTranspose2d(const std::string& name, std::size_t in_c,
                                 std::size_t out_c, std::size_t k,
                                 std::size_t stride_, std::size_t pad_,
                                 Rng& rng)
    : weight(name + ".weight", Tensor({in_c, out_c, k, k})),
      bias(name + ".bias", Tensor({1, out_c, 1, 1})),
      stride(stride_),
      pad(pad_) {
  init_conv_weight(weight.value, in_c * k * k, rng);
}

Value ConvTranspose2d::operator()(Graph& g, Value x) {
  return conv_transpose2d(x, g.use(weight), g.use(bias), stride, pad);
}

void ConvTranspose2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

ResidualBlock::ResidualBlock(const std::string& name, std::size_t channels,
                             Scalar slope_, Rng& rng)
    : c1(name + ".c1", channels, channels, 3, 1, 1, rng),
      c2(name + ".c2", channels, channels, 3, 1, 1, rng),
      slope(slope_) {}

Value ResidualBlock::operator()(Graph& g, Value x) {
  return add(x, c2(g, leaky_relu(c1(g, x), slope)));
}

void ResidualBlock::collect(std::vector<Parameter*>& out) {
  c1.collect(out);
  c2.collect(out);
}

}  // namespace uwhdn::nn
