#pragma once

#include <filesystem>

#include "uwhdn/tensor.hpp"

namespace uwhdn {

// 8-bit PNG/JPEG in, 1x3xHxW double tensor out, RGB, values k/255 in [0, 1].
Tensor load_image(const std::filesystem::path& path);

// Quantizes with round(v * 255) after clamping to [0, 1]; format by extension.
// Parent directories are created. decode(encode(x)) is exact for 8-bit data
// when the extension is lossless (PNG).
void save_image(const Tensor& image, const std::filesystem::path& path);

// Bicubic resize of a 1x3xHxW image; output clamped back to [0, 1].
Tensor resize_bicubic(const Tensor& image, std::size_t out_h, std::size_t out_w);

bool has_image_extension(const std::filesystem::path& path);

}  // namespace uwhdn
