#include "uwhdn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "uwhdn/error.hpp"
#include "uwhdn/image_io.hpp"

namespace uwhdn::evaluation {

namespace fs = std::filesystem;

Scalar psnr(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    throw ValidationError("psnr: shape mismatch " + a.shape().str() + " vs " +
                          b.shape().str());
  if (a.numel() == 0) throw ValidationError("psnr: empty input");
  Scalar sse = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const Scalar d = a[i] - b[i];
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<Scalar>::infinity();
  const Scalar mse = sse / static_cast<Scalar>(a.numel());
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr std::size_t kWindow = 11;

const std::array<Scalar, kWindow>& gaussian_window() {
  static const std::array<Scalar, kWindow> taps = [] {
    std::array<Scalar, kWindow> t{};
    const Scalar sigma = 1.5;
    Scalar sum = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
      const Scalar x = static_cast<Scalar>(i) - (kWindow - 1) / 2.0;
      t[i] = std::exp(-x * x / (2.0 * sigma * sigma));
      sum += t[i];
    }
    for (Scalar& v : t) v /= sum;
    return t;
  }();
  return taps;
}

// Valid-mode separable blur: (h, w) -> (h - 10, w - 10).
std::vector<Scalar> blur_valid(const std::vector<Scalar>& src, std::size_t h,
                               std::size_t w) {
  const auto& g = gaussian_window();
  const std::size_t ow = w - kWindow + 1;
  std::vector<Scalar> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      Scalar s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * src[y * w + x + k];
      tmp[y * ow + x] = s;
    }
  const std::size_t oh = h - kWindow + 1;
  std::vector<Scalar> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      Scalar s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k)
        s += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

Scalar ssim(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    throw ValidationError("ssim: shape mismatch " + a.shape().str() + " vs " +
                          b.shape().str());
  const Shape4& s = a.shape();
  if (s.h < kWindow || s.w < kWindow)
    throw ValidationError("ssim: minimum image dimension is " +
                          std::to_string(kWindow) + ", got " + s.str());
  constexpr Scalar c1 = 0.01 * 0.01;  // (k1 L)^2, L = 1
  constexpr Scalar c2 = 0.03 * 0.03;

  Scalar channel_sum = 0.0;
  std::size_t channel_count = 0;
  const std::size_t hw = s.h * s.w;
  std::vector<Scalar> x(hw), y(hw), xx(hw), yy(hw), xy(hw);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const Scalar* pa = a.data() + (n * s.c + c) * hw;
      const Scalar* pb = b.data() + (n * s.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        x[i] = pa[i];
        y[i] = pb[i];
        xx[i] = pa[i] * pa[i];
        yy[i] = pb[i] * pb[i];
        xy[i] = pa[i] * pb[i];
      }
      const auto mu_x = blur_valid(x, s.h, s.w);
      const auto mu_y = blur_valid(y, s.h, s.w);
      const auto s_xx = blur_valid(xx, s.h, s.w);
      const auto s_yy = blur_valid(yy, s.h, s.w);
      const auto s_xy = blur_valid(xy, s.h, s.w);
      Scalar sum = 0.0;
      for (std::size_t i = 0; i < mu_x.size(); ++i) {
        const Scalar mx = mu_x[i], my = mu_y[i];
        const Scalar var_x = s_xx[i] - mx * mx;
        const Scalar var_y = s_yy[i] - my * my;
        const Scalar cov = s_xy[i] - mx * my;
        sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
               ((mx * mx + my * my + c1) * (var_x + var_y + c2));
      }
      channel_sum += sum / static_cast<Scalar>(mu_x.size());
      ++channel_count;
    }
  return channel_sum / static_cast<Scalar>(channel_count);
}

DisentanglementDiagnostics disentanglement_diagnostics(
    hdn::Hdn& net, const datasets::DatasetManifest& manifest) {
  if (manifest.records.empty())
    throw ValidationError("disentanglement_diagnostics: empty manifest");
  Scalar clean_sum = 0.0, uw_sum = 0.0;
  for (const auto& rec : manifest.records) {
    for (bool underwater : {false, true}) {
      Tensor img = load_image(underwater ? rec.underwater_path
                                         : rec.clean_path);
      img = pad_to_multiple(img, hdn::kDownsample);
      const Scalar response = mean_abs(net.encode_haze(img).final());
      (underwater ? uw_sum : clean_sum) += response;
    }
  }
  DisentanglementDiagnostics d;
  const auto n = static_cast<Scalar>(manifest.records.size());
  d.mean_abs_haze_response_clean = clean_sum / n;
  d.mean_abs_haze_response_underwater = uw_sum / n;
  if (d.mean_abs_haze_response_underwater == 0.0) {
    d.degenerate = true;
    d.ratio = std::numeric_limits<Scalar>::quiet_NaN();
  } else {
    d.ratio = d.mean_abs_haze_response_clean /
              d.mean_abs_haze_response_underwater;
  }
  return d;
}

EvalResult evaluate(hdn::Hdn& hdn_net, restoration::Restoration& rest_net,
                    const datasets::DatasetManifest& manifest,
                    std::size_t grid_limit) {
  if (manifest.records.empty())
    throw ValidationError("evaluate: empty manifest");
  std::vector<const datasets::ManifestRecord*> order;
  for (const auto& r : manifest.records) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->id < b->id; });

  EvalResult result;
  std::vector<Scalar> psnrs, ssims;
  for (const auto* rec : order) {
    Tensor uw, clean;
    try {
      uw = load_image(rec->underwater_path);
      clean = load_image(rec->clean_path);
    } catch (const ValidationError&) {
      ++result.report.skipped;
      continue;
    }
    if (!(uw.shape() == clean.shape())) {
      ++result.report.skipped;
      continue;
    }
    const Shape4 orig = uw.shape();
    Tensor padded = pad_to_multiple(uw, hdn::kDownsample);
    Tensor content_full = hdn_net.content_image(padded);
    Tensor restored_full = rest_net.g_c().restore_eval(content_full);
    Tensor content = crop_to(content_full, orig.h, orig.w);
    Tensor restored = crop_to(restored_full, orig.h, orig.w);

    PerImageMetrics m;
    m.id = rec->id;
    m.psnr_db = psnr(restored, clean);
    m.ssim = ssim(restored, clean);
    if (std::isinf(m.psnr_db))
      ++result.report.infinite_psnr;
    else
      psnrs.push_back(m.psnr_db);
    ssims.push_back(m.ssim);
    result.report.rows.push_back(m);
    if (result.grid.size() < grid_limit)
      result.grid.push_back({rec->id, uw, content, restored, clean});
  }
  result.report.count = result.report.rows.size();

  auto mean_std = [](const std::vector<Scalar>& v, Scalar& mean, Scalar& sd) {
    if (v.empty()) {
      mean = sd = 0.0;
      return;
    }
    Scalar s = 0.0;
    for (Scalar x : v) s += x;
    mean = s / static_cast<Scalar>(v.size());
    Scalar q = 0.0;
    for (Scalar x : v) q += (x - mean) * (x - mean);
    sd = std::sqrt(q / static_cast<Scalar>(v.size()));
  };
  mean_std(psnrs, result.report.psnr_mean, result.report.psnr_std);
  mean_std(ssims, result.report.ssim_mean, result.report.ssim_std);
  return result;
}

void write_report_csv(const MetricReport& report, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot open for write: " + path.string());
  os << "id,psnr_db,ssim\n";
  os.precision(10);
  for (const auto& r : report.rows) {
    os << r.id << ",";
    if (std::isinf(r.psnr_db))
      os << "inf";
    else
      os << r.psnr_db;
    os << "," << r.ssim << "\n";
  }
}

std::string summary_text(const MetricReport& report,
                         const std::vector<training::LossRecord>& trace) {
  std::ostringstream os;
  os.precision(6);
  os << "images evaluated: " << report.count << "\n"
     << "images skipped:   " << report.skipped << "\n"
     << "psnr mean/std:    " << report.psnr_mean << " / " << report.psnr_std
     << " dB (" << report.infinite_psnr << " infinite, excluded)\n"
     << "ssim mean/std:    " << report.ssim_mean << " / " << report.ssim_std
     << "\n";
  if (trace.empty()) {
    os << "loss trace: absent\n";
  } else {
    const auto& last = trace.back();
    os << "loss trace: " << trace.size() << " records, final step "
       << last.step << ", L_total " << last.total << " (L_d " << last.total_d
       << ", L_r " << last.total_r << ")\n";
  }
  return os.str();
}

namespace {

cv::Mat tensor_to_mat8(const Tensor& t) {
  const Shape4& s = t.shape();
  cv::Mat m(static_cast<int>(s.h), static_cast<int>(s.w), CV_8UC3);
  for (std::size_t y = 0; y < s.h; ++y) {
    cv::Vec3b* row = m.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c)
        row[x][2 - c] = static_cast<unsigned char>(
            std::lround(std::clamp(t.at(0, c, y, x), 0.0, 1.0) * 255.0));
  }
  return m;
}

struct Series {
  const char* name;
  cv::Scalar color;  // BGR
  std::vector<Scalar> values;
};

void draw_loss_curves(const std::vector<training::LossRecord>& trace,
                      const fs::path& path) {
  std::vector<Series> series = {
      {"L_d1", {180, 119, 31}, {}},  {"L_d2", {14, 127, 255}, {}},
      {"L_d3", {44, 160, 44}, {}},   {"L_d4", {40, 39, 214}, {}},
      {"L_r1", {189, 103, 148}, {}}, {"L_r2", {75, 86, 140}, {}},
      {"L_r3", {194, 119, 227}, {}}, {"L_r4", {127, 127, 127}, {}},
      {"D_adv", {34, 189, 188}, {}}, {"D_C", {207, 190, 23}, {}},
      {"D_U", {0, 0, 0}, {}}};
  for (const auto& r : trace) {
    const Scalar vals[11] = {r.l_d1, r.l_d2, r.l_d3, r.l_d4, r.l_r1, r.l_r2,
                             r.l_r3, r.l_r4, r.d_adv, r.d_c, r.d_u};
    for (std::size_t i = 0; i < series.size(); ++i)
      series[i].values.push_back(vals[i]);
  }
  Scalar y_max = 1e-9;
  for (const auto& s : series)
    for (Scalar v : s.values) y_max = std::max(y_max, v);
  y_max *= 1.05;

  const int width = 1200, height = 700, margin = 70;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::rectangle(canvas, {margin, margin}, {width - margin, height - margin},
                cv::Scalar(90, 90, 90), 1);
  const int plot_w = width - 2 * margin, plot_h = height - 2 * margin;
  const std::size_t n = trace.size();
  auto to_px = [&](std::size_t i, Scalar v) {
    const int x = margin + static_cast<int>(
                               n <= 1 ? 0 : plot_w * i / (n - 1));
    const int y =
        height - margin - static_cast<int>(plot_h * std::min(v / y_max, 1.0));
    return cv::Point(x, y);
  };
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    for (std::size_t i = 1; i < s.values.size(); ++i)
      cv::line(canvas, to_px(i - 1, s.values[i - 1]), to_px(i, s.values[i]),
               s.color, 1, cv::LINE_AA);
    const int ly = margin + 18 * static_cast<int>(si) + 8;
    cv::line(canvas, {width - margin - 150, ly}, {width - margin - 120, ly},
             s.color, 2);
    cv::putText(canvas, s.name, {width - margin - 112, ly + 4},
                cv::FONT_HERSHEY_SIMPLEX, 0.42, cv::Scalar(40, 40, 40), 1,
                cv::LINE_AA);
  }
  std::ostringstream label;
  label << "steps " << trace.front().step << " .. " << trace.back().step
        << "   y-max " << y_max;
  cv::putText(canvas, label.str(), {margin, height - margin + 32},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(40, 40, 40), 1,
              cv::LINE_AA);
  if (!cv::imwrite(path.string(), canvas))
    throw RuntimeFailure("cannot write plot: " + path.string());
}

void draw_grid(const std::vector<GridRow>& grid, const fs::path& path) {
  const int pad = 2;
  std::vector<cv::Mat> rows;
  for (const auto& row : grid) {
    std::vector<cv::Mat> cells = {
        tensor_to_mat8(row.underwater), tensor_to_mat8(row.content),
        tensor_to_mat8(row.restored), tensor_to_mat8(row.reference)};
    cv::Mat line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == 0) {
        line = cells[i];
        continue;
      }
      cv::Mat sep(line.rows, pad, CV_8UC3, cv::Scalar(255, 255, 255));
      cv::hconcat(std::vector<cv::Mat>{line, sep, cells[i]}, line);
    }
    rows.push_back(line);
  }
  cv::Mat out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i == 0) {
      out = rows[i];
      continue;
    }
    cv::Mat sep(pad, out.cols, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::vconcat(std::vector<cv::Mat>{out, sep, rows[i]}, out);
  }
  if (!cv::imwrite(path.string(), out))
    throw RuntimeFailure("cannot write grid: " + path.string());
}

}  // namespace

void emit_artifacts(const std::vector<training::LossRecord>& trace,
                    const MetricReport& report,
                    const std::vector<GridRow>& grid,
                    const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw RuntimeFailure("cannot create output directory: " +
                         out_dir.string());
  if (!trace.empty()) draw_loss_curves(trace, out_dir / "loss_curves.png");
  if (!grid.empty()) draw_grid(grid, out_dir / "grid.png");
  std::ofstream os(out_dir / "summary.txt");
  if (!os) throw RuntimeFailure("cannot write summary under " +
                                out_dir.string());
  os << summary_text(report, trace);
}

}  // namespace uwhdn::evaluation
