#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lrc/blockio.hpp"
#include "lrc/model.hpp"

namespace lrc {

double mse(std::span<const float> a, std::span<const float> b);
double mse(const ResidualBlock& a, const ResidualBlock& b);
/// 10 log10(peak^2 / mse); +infinity when mse is 0.
double psnr_from_mse(double mse, double peak);
double psnr(const ResidualBlock& a, const ResidualBlock& b, double peak);

/// Mean local SSIM over all valid 11x11 Gaussian windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03). Throws kInvalidArgument for blocks under 11x11.
double ssim(const ResidualBlock& a, const ResidualBlock& b, double peak);
/// Peak used for signed residuals: 2 (2^bitdepth - 1).
double residual_peak(int bitdepth);

enum class QualityMetric { kPsnr, kSsim, kNegMse };
const char* to_string(QualityMetric metric);
QualityMetric parse_quality_metric(const std::string& name);

struct RDPoint {
  double lambda = 0.0;
  double rate = 0.0;  // bits per pixel
  double quality = 0.0;
};

struct RDCurve {
  std::string label;
  QualityMetric metric = QualityMetric::kPsnr;
  std::vector<RDPoint> points;
  std::vector<std::string> warnings;

  void sort_by_rate();
};

/// Bjontegaard delta rate in percent: cubic least-squares fits of
/// log10(rate) against quality, averaged over the shared quality range.
/// Negative means `test` needs less rate.
double bd_rate(const RDCurve& reference, const RDCurve& test);
/// Coefficients c0..c3 of the fitted log10(rate) polynomial.
std::array<double, 4> fit_log_rate(const RDCurve& curve);

struct RDResult {
  double lambda = 0.0;
  double rate_bpp = 0.0;       // measured, range-coded sections
  double estimated_bpp = 0.0;  // model rate of the same latents
  double mse = 0.0;            // mean over all pixels
  double psnr = 0.0;           // from the dataset mean MSE
  double ssim = 0.0;           // mean per block; NaN when blocks are under 11x11
  double loss = 0.0;           // measured rate per block + lambda * mse
};

/// Test-time encode of the dataset at lam (interpolated gains allowed).
RDResult rd_at_lambda(const ModelParams& model, const BlockDataset& dataset, double lam, int threads = 1);

/// One point per lambda, sorted by rate. Rates that do not increase with
/// lambda are annotated in `warnings`.
RDCurve rd_sweep(const ModelParams& model, const BlockDataset& dataset, const std::vector<double>& lambdas,
                 QualityMetric metric, const std::string& label, int threads = 1);
RDCurve curve_from_results(const std::vector<RDResult>& results, QualityMetric metric, const std::string& label);

// CSV interchange: header "label,lambda,rate_bpp,quality", one row per point.
std::string curve_to_csv(const RDCurve& curve);
/// All rows must share one label.
RDCurve curve_from_csv(const std::string& text, QualityMetric metric = QualityMetric::kPsnr);
RDCurve read_curve_csv(const std::filesystem::path& path, QualityMetric metric = QualityMetric::kPsnr);
std::string curves_to_svg(const std::vector<RDCurve>& curves);

/// One CSV per curve, a combined SVG plot and report.json metadata.
/// Returns the files written.
std::vector<std::filesystem::path> emit_report(const std::vector<RDCurve>& curves,
                                               const std::filesystem::path& out_dir);

}  // namespace lrc
