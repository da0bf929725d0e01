#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uwhdn/datasets.hpp"
#include "uwhdn/hdn.hpp"
#include "uwhdn/restoration.hpp"
#include "uwhdn/training.hpp"

namespace uwhdn::evaluation {

// 10 log10(1 / MSE) over all channels, inputs in [0, 1]. Identical inputs
// return +infinity; aggregates exclude infinite entries and report their count.
Scalar psnr(const Tensor& a, const Tensor& b);

// Mean local SSIM over all valid 11x11 window positions and the three
// channels; Gaussian window sigma 1.5, k1 = 0.01, k2 = 0.03, dynamic range 1.
Scalar ssim(const Tensor& a, const Tensor& b);

struct PerImageMetrics {
  std::string id;
  Scalar psnr_db = 0.0;
  Scalar ssim = 0.0;
};

struct MetricReport {
  std::vector<PerImageMetrics> rows;  // ordered by id
  std::size_t count = 0;              // rows evaluated
  std::size_t skipped = 0;            // missing/mismatched references
  std::size_t infinite_psnr = 0;      // excluded from the psnr aggregates
  Scalar psnr_mean = 0.0, psnr_std = 0.0;
  Scalar ssim_mean = 0.0, ssim_std = 0.0;
};

struct DisentanglementDiagnostics {
  Scalar mean_abs_haze_response_clean = 0.0;
  Scalar mean_abs_haze_response_underwater = 0.0;
  Scalar ratio = 0.0;  // clean / underwater; NaN when degenerate
  bool degenerate = false;
};

// Mean absolute final-map response of the haze encoder per domain.
DisentanglementDiagnostics disentanglement_diagnostics(
    hdn::Hdn& net, const datasets::DatasetManifest& manifest);

struct GridRow {
  std::string id;
  Tensor underwater, content, restored, reference;
};

struct EvalResult {
  MetricReport report;
  std::vector<GridRow> grid;  // first grid_limit rows by id
};

// Content image then residual restoration per record; PSNR/SSIM against the
// clean reference on clamped outputs. Inputs whose sides are not multiples of
// 4 are edge-padded for the networks and cropped back before the metrics.
EvalResult evaluate(hdn::Hdn& hdn_net, restoration::Restoration& rest_net,
                    const datasets::DatasetManifest& manifest,
                    std::size_t grid_limit = 4);

void write_report_csv(const MetricReport& report,
                      const std::filesystem::path& path);
std::string summary_text(const MetricReport& report,
                         const std::vector<training::LossRecord>& trace);

// loss_curves.png (11 series), grid.png (one row per image: underwater,
// content, restored, reference) and summary.txt under out_dir. An empty trace
// writes no curve file and the summary says so.
void emit_artifacts(const std::vector<training::LossRecord>& trace,
                    const MetricReport& report,
                    const std::vector<GridRow>& grid,
                    const std::filesystem::path& out_dir);

}  // namespace uwhdn::evaluation
