#pragma once

#include <string>
#include <vector>

#include "uwhdn/autograd.hpp"
#include "uwhdn/rng.hpp"

namespace uwhdn::nn {

// Kaiming-style uniform init, bound = sqrt(1 / fan_in). Biases start at zero.
void init_conv_weight(Tensor& w, std::size_t fan_in, Rng& rng);

struct Conv2d {
  Parameter weight;  // [out_c, in_c, k, k]
  Parameter bias;    // [1, out_c, 1, 1]
  std::size_t stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_c, std::size_t out_c,
         std::size_t k, std::size_t stride, std::size_t pad, Rng& rng);
  Value operator()(Graph& g, Value x);
  void collect(std::vector<Parameter*>& out);
  void zero_init();
};

struct ConvTranspose2d {
  Parameter weight;  // [in_c, out_c, k, k]
  Parameter bias;    // [1, out_c, 1, 1]
  std::size_t stride = 2, pad = 1;

  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, std::size_t in_c, std::size_t out_c,
                  std::size_t k, std::size_t stride, std::size_t pad, Rng& rng);
  Value operator()(Graph& g, Value x);
  void collect(std::vector<Parameter*>& out);
};

// x + conv(lrelu(conv(x))), both convs 3x3 stride 1.
struct ResidualBlock {
  Conv2d c1, c2;
  Scalar slope = 0.2;

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, std::size_t channels, Scalar slope,
                Rng& rng);
  Value operator()(Graph& g, Value x);
  void collect(std::vector<Parameter*>& out);
};

}  // namespace uwhdn::nn
