#include "uwhdn/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "uwhdn/error.hpp"

namespace uwhdn {

namespace {

void require_image_tensor(const Tensor& t, const char* who) {
  const Shape4& s = t.shape();
  if (s.n != 1 || s.c != 3 || s.h == 0 || s.w == 0)
    throw ValidationError(std::string(who) + ": expected 1x3xHxW image, got " +
                          s.str());
}

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty())
    throw ValidationError("cannot decode image file: " + path.string());
  Tensor out({1, 3, static_cast<std::size_t>(bgr.rows),
              static_cast<std::size_t>(bgr.cols)});
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      out.at(0, 0, y, x) = row[x][2] / 255.0;
      out.at(0, 1, y, x) = row[x][1] / 255.0;
      out.at(0, 2, y, x) = row[x][0] / 255.0;
    }
  }
  return out;
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  require_image_tensor(image, "save_image");
  const Shape4& s = image.shape();
  cv::Mat bgr(static_cast<int>(s.h), static_cast<int>(s.w), CV_8UC3);
  for (std::size_t y = 0; y < s.h; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const Scalar v = std::clamp(image.at(0, c, y, x), 0.0, 1.0);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr))
    throw RuntimeFailure("cannot write image file: " + path.string());
}

Tensor resize_bicubic(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require_image_tensor(image, "resize_bicubic");
  const Shape4& s = image.shape();
  if (out_h == s.h && out_w == s.w) return image;
  cv::Mat src(static_cast<int>(s.h), static_cast<int>(s.w), CV_64FC3);
  for (std::size_t y = 0; y < s.h; ++y) {
    cv::Vec3d* row = src.ptr<cv::Vec3d>(static_cast<int>(y));
    for (std::size_t x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c) row[x][c] = image.at(0, c, y, x);
  }
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(static_cast<int>(out_w), static_cast<int>(out_h)),
             0, 0, cv::INTER_CUBIC);
  Tensor out({1, 3, out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    const cv::Vec3d* row = dst.ptr<cv::Vec3d>(static_cast<int>(y));
    for (std::size_t x = 0; x < out_w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(0, c, y, x) = std::clamp(row[x][c], 0.0, 1.0);
  }
  return out;
}

bool has_image_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace uwhdn
