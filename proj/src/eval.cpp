#include "lrc/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "lrc/byteio.hpp"
#include "lrc/codec.hpp"
#include "lrc/error.hpp"

namespace lrc {

double mse(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::kShapeMismatch, "blocks differ in shape");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  return se / static_cast<double>(a.size());
}

double mse(const ResidualBlock& a, const ResidualBlock& b) {
  require(a.size == b.size, ErrorCode::kShapeMismatch, "blocks differ in shape");
  return mse(std::span<const float>(a.data), std::span<const float>(b.data));
}

double psnr_from_mse(double m, double peak) {
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

double psnr(const ResidualBlock& a, const ResidualBlock& b, double peak) { return psnr_from_mse(mse(a, b), peak); }

double residual_peak(int bitdepth) { return 2.0 * (std::ldexp(1.0, bitdepth) - 1.0); }

double ssim(const ResidualBlock& a, const ResidualBlock& b, double peak) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, kK1 = 0.01, kK2 = 0.03;
  require(a.size == b.size && a.data.size() == b.data.size(), ErrorCode::kShapeMismatch, "blocks differ in shape");
  require(a.size >= kWin, ErrorCode::kInvalidArgument, "SSIM needs blocks of at least 11x11");
  const int n = a.size, m = n - kWin + 1;

  std::array<double, kWin> w{};
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    wsum += w[i];
  }
  for (double& x : w) x /= wsum;

  // Separable filtering of a, b, a^2, b^2, ab over the valid region.
  auto filter = [&](auto value) {
    Eigen::MatrixXd h(n, m);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c) {
        double acc = 0.0;
        for (int k = 0; k < kWin; ++k) acc += w[k] * value(r, c + k);
        h(r, c) = acc;
      }
    Eigen::MatrixXd out(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) {
        double acc = 0.0;
        for (int k = 0; k < kWin; ++k) acc += w[k] * h(r + k, c);
        out(r, c) = acc;
      }
    return out;
  };
  auto av = [&](int r, int c) { return static_cast<double>(a.data[r * n + c]); };
  auto bv = [&](int r, int c) { return static_cast<double>(b.data[r * n + c]); };
  const Eigen::ArrayXXd mu_a = filter(av).array();
  const Eigen::ArrayXXd mu_b = filter(bv).array();
  const Eigen::ArrayXXd e_aa = filter([&](int r, int c) { return av(r, c) * av(r, c); }).array();
  const Eigen::ArrayXXd e_bb = filter([&](int r, int c) { return bv(r, c) * bv(r, c); }).array();
  const Eigen::ArrayXXd e_ab = filter([&](int r, int c) { return av(r, c) * bv(r, c); }).array();

  const double c1 = (kK1 * peak) * (kK1 * peak), c2 = (kK2 * peak) * (kK2 * peak);
  const Eigen::ArrayXXd var_a = e_aa - mu_a.square();
  const Eigen::ArrayXXd var_b = e_bb - mu_b.square();
  const Eigen::ArrayXXd cov = e_ab - mu_a * mu_b;
  const Eigen::ArrayXXd map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                              ((mu_a.square() + mu_b.square() + c1) * (var_a + var_b + c2));
  return map.mean();
}

const char* to_string(QualityMetric metric) {
  switch (metric) {
    case QualityMetric::kPsnr:
      return "psnr";
    case QualityMetric::kSsim:
      return "ssim";
    case QualityMetric::kNegMse:
      return "neg_mse";
  }
  return "?";
}

QualityMetric parse_quality_metric(const std::string& name) {
  if (name == "psnr") return QualityMetric::kPsnr;
  if (name == "ssim") return QualityMetric::kSsim;
  if (name == "neg_mse") return QualityMetric::kNegMse;
  fail(ErrorCode::kInvalidArgument, "unknown quality metric '" + name + "'");
}

void RDCurve::sort_by_rate() {
  std::stable_sort(points.begin(), points.end(), [](const RDPoint& a, const RDPoint& b) { return a.rate < b.rate; });
}

namespace {
void check_bd_curve(const RDCurve& c) {
  require(c.points.size() >= 4, ErrorCode::kInvalidArgument, "BD-rate needs at least 4 points per curve");
  for (const auto& p : c.points)
    require(std::isfinite(p.rate) && p.rate > 0.0 && std::isfinite(p.quality), ErrorCode::kInvalidArgument,
            "BD-rate needs positive finite rates and finite qualities");
}

double integrate_cubic(const std::array<double, 4>& c, double lo, double hi) {
  auto prim = [&](double q) { return q * (c[0] + q * (c[1] / 2.0 + q * (c[2] / 3.0 + q * c[3] / 4.0))); };
  return prim(hi) - prim(lo);
}
}  // namespace

std::array<double, 4> fit_log_rate(const RDCurve& curve) {
  check_bd_curve(curve);
  const Eigen::Index n = static_cast<Eigen::Index>(curve.points.size());
  Eigen::MatrixXd v(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double q = curve.points[i].quality;
    v(i, 0) = 1.0;
    v(i, 1) = q;
    v(i, 2) = q * q;
    v(i, 3) = q * q * q;
    y(i) = std::log10(curve.points[i].rate);
  }
  const Eigen::VectorXd c = v.colPivHouseholderQr().solve(y);
  return {c(0), c(1), c(2), c(3)};
}

double bd_rate(const RDCurve& reference, const RDCurve& test) {
  check_bd_curve(reference);
  check_bd_curve(test);
  auto range = [](const RDCurve& c) {
    auto [lo, hi] = std::minmax_element(c.points.begin(), c.points.end(),
                                        [](const RDPoint& a, const RDPoint& b) { return a.quality < b.quality; });
    return std::pair{lo->quality, hi->quality};
  };
  const auto [rlo, rhi] = range(reference);
  const auto [tlo, thi] = range(test);
  const double lo = std::max(rlo, tlo), hi = std::min(rhi, thi);
  require(hi > lo, ErrorCode::kInvalidArgument, "curves have no overlapping quality range");
  const double avg = (integrate_cubic(fit_log_rate(test), lo, hi) - integrate_cubic(fit_log_rate(reference), lo, hi)) /
                     (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

RDResult rd_at_lambda(const ModelParams& model, const BlockDataset& dataset, double lam, int threads) {
  require(!dataset.empty(), ErrorCode::kInvalidArgument, "dataset is empty");
  const EncodeResult enc = encode(model, dataset, lam, threads);
  const double pixels = static_cast<double>(dataset.size()) * dataset.block_size * dataset.block_size;
  RDResult r;
  r.lambda = lam;
  r.rate_bpp = static_cast<double>(enc.stream.coded_bits()) / pixels;
  r.estimated_bpp = enc.total_estimated_bits() / pixels;
  double se = 0.0, ssim_sum = 0.0;
  const bool with_ssim = dataset.block_size >= 11;
  const double peak = residual_peak(dataset.bitdepth);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    se += mse(dataset.blocks[i], enc.reconstruction.blocks[i]);
    if (with_ssim) ssim_sum += ssim(dataset.blocks[i], enc.reconstruction.blocks[i], peak);
  }
  r.mse = se / static_cast<double>(dataset.size());
  r.psnr = psnr_from_mse(r.mse, peak);
  r.ssim = with_ssim ? ssim_sum / static_cast<double>(dataset.size()) : std::numeric_limits<double>::quiet_NaN();
  r.loss = r.rate_bpp * dataset.block_size * dataset.block_size + lam * r.mse;
  return r;
}

RDCurve curve_from_results(const std::vector<RDResult>& results, QualityMetric metric, const std::string& label) {
  RDCurve c;
  c.label = label;
  c.metric = metric;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const double q = metric == QualityMetric::kPsnr ? r.psnr : metric == QualityMetric::kSsim ? r.ssim : -r.mse;
    c.points.push_back({r.lambda, r.rate_bpp, q});
    if (i > 0 && r.lambda > results[i - 1].lambda && r.rate_bpp <= results[i - 1].rate_bpp) {
      std::ostringstream os;
      os << "rate does not increase from lambda " << results[i - 1].lambda << " to " << r.lambda;
      c.warnings.push_back(os.str());
    }
  }
  c.sort_by_rate();
  return c;
}

RDCurve rd_sweep(const ModelParams& model, const BlockDataset& dataset, const std::vector<double>& lambdas,
                 QualityMetric metric, const std::string& label, int threads) {
  std::vector<double> sorted = lambdas;
  std::sort(sorted.begin(), sorted.end());
  std::vector<RDResult> results;
  for (double lam : sorted) results.push_back(rd_at_lambda(model, dataset, lam, threads));
  return curve_from_results(results, metric, label);
}

std::string curve_to_csv(const RDCurve& curve) {
  require(curve.label.find_first_of(",\n\r\"") == std::string::npos, ErrorCode::kInvalidArgument,
          "curve label may not contain commas, quotes or newlines");
  std::string out = "label,lambda,rate_bpp,quality\n";
  char buf[128];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", p.lambda, p.rate, p.quality);
    out += curve.label + buf;
  }
  return out;
}

RDCurve curve_from_csv(const std::string& text, QualityMetric metric) {
  std::stringstream ss(text);
  std::string line;
  require(static_cast<bool>(std::getline(ss, line)), ErrorCode::kMalformedHeader, "empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "label,lambda,rate_bpp,quality", ErrorCode::kMalformedHeader,
          "CSV header must be label,lambda,rate_bpp,quality");
  RDCurve c;
  c.metric = metric;
  bool first = true;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    require(cols.size() == 4, ErrorCode::kMalformedHeader, "CSV row must have 4 columns: " + line);
    if (first) c.label = cols[0];
    require(cols[0] == c.label, ErrorCode::kInvalidArgument, "CSV mixes curve labels");
    first = false;
    RDPoint p;
    try {
      p.lambda = std::stod(cols[1]);
      p.rate = std::stod(cols[2]);
      p.quality = std::stod(cols[3]);
    } catch (const std::exception&) {
      fail(ErrorCode::kMalformedHeader, "non-numeric CSV row: " + line);
    }
    c.points.push_back(p);
  }
  return c;
}

RDCurve read_curve_csv(const std::filesystem::path& path, QualityMetric metric) {
  const auto bytes = read_file(path);
  return curve_from_csv(std::string(bytes.begin(), bytes.end()), metric);
}

std::string curves_to_svg(const std::vector<RDCurve>& curves) {
  constexpr double kW = 720, kH = 480, kL = 80, kR = 170, kT = 30, kB = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      if (!std::isfinite(p.rate) || !std::isfinite(p.quality)) continue;
      xmin = std::min(xmin, p.rate);
      xmax = std::max(xmax, p.rate);
      ymin = std::min(ymin, p.quality);
      ymax = std::max(ymax, p.quality);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin <= 0) xmax = xmin + 1;
  if (ymax - ymin <= 0) ymax = ymin + 1;
  const double xpad = 0.05 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
  xmin -= xpad, xmax += xpad, ymin -= ypad, ymax += ypad;
  auto px = [&](double x) { return kL + (x - xmin) / (xmax - xmin) * (kW - kL - kR); };
  auto py = [&](double y) { return kH - kB - (y - ymin) / (ymax - ymin) * (kH - kT - kB); };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  const std::string metric = curves.empty() ? "quality" : to_string(curves.front().metric);
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0, yv = ymin + (ymax - ymin) * i / 5.0;
    s << "<text x=\"" << px(xv) << "\" y=\"" << kH - kB + 18 << "\" text-anchor=\"middle\">" << std::setprecision(3)
      << xv << "</text>\n";
    s << "<text x=\"" << kL - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
    s << std::setprecision(2);
  }
  s << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">rate (bits per pixel)</text>\n";
  s << "<text transform=\"translate(20," << (kT + kH - kB) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << metric
    << "</text>\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : curves[k].points)
      if (std::isfinite(p.rate) && std::isfinite(p.quality)) s << px(p.rate) << "," << py(p.quality) << " ";
    s << "\"/>\n";
    for (const auto& p : curves[k].points)
      if (std::isfinite(p.rate) && std::isfinite(p.quality))
        s << "<circle cx=\"" << px(p.rate) << "\" cy=\"" << py(p.quality) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = kT + 20.0 * static_cast<double>(k);
    s << "<rect x=\"" << kW - kR + 15 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    s << "<text x=\"" << kW - kR + 32 << "\" y=\"" << ly + 11 << "\">" << curves[k].label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> emit_report(const std::vector<RDCurve>& curves,
                                               const std::filesystem::path& out_dir) {
  require(!curves.empty(), ErrorCode::kInvalidArgument, "no curves to report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& p, const std::string& text) {
    write_file(p, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    written.push_back(p);
  };
  nlohmann::json meta;
  meta["bd_rate_fit"] = "cubic least-squares fit of log10(rate) against quality";
  meta["ssim"] = {{"window", 11}, {"sigma", 1.5}, {"k1", 0.01}, {"k2", 0.03}, {"peak", "2*(2^bitdepth-1)"}};
  meta["psnr_peak"] = "2*(2^bitdepth-1)";
  meta["curves"] = nlohmann::json::array();
  for (const auto& c : curves) {
    std::string stem = c.label;
    for (char& ch : stem)
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    put(out_dir / (stem + ".csv"), curve_to_csv(c));
    meta["curves"].push_back({{"label", c.label}, {"metric", to_string(c.metric)}, {"file", stem + ".csv"},
                              {"warnings", c.warnings}});
  }
  put(out_dir / "rd.svg", curves_to_svg(curves));
  put(out_dir / "report.json", meta.dump(2) + "\n");
  return written;
}

}  // namespace lrc
