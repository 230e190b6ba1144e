#pragma once

#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lrc/transforms.hpp"
#include "test_util.hpp"

namespace lrc::test {

struct GradientCheckResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;  // probes straddling a ReLU or clamp kink
  double worst = 0.0;       // largest relative error above the noise floor
  double worst_raw = 0.0;   // largest relative error, floor ignored
  std::vector<std::string> failures;
};

// Moves every parameter off its initial value so that gain entries differ
// and no symmetry hides an indexing mistake.
inline void jitter(ModelParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& view : param_views(p))
    for (double& v : view.values) v += 0.05 * u(rng) * (std::fabs(v) + 0.2);
}

namespace detail {

struct Probe {
  double loss;
  std::vector<bool> pattern;  // which side of every kink the pass landed on
};

inline void append_signs(std::vector<bool>& out, const Eigen::MatrixXd& m, double threshold) {
  for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > threshold);
}

inline Probe evaluate(const ModelParams& p, const Eigen::MatrixXd& x, double lam, const Eigen::MatrixXd& ny,
                      const Eigen::MatrixXd& nz) {
  const Tape t = forward_with_tape(p, x, lam, Quantization::fixed(ny, nz));
  Probe r{t.mean_loss(), {}};
  append_signs(r.pattern, t.ha_pre1, 0.0);
  append_signs(r.pattern, t.ha_pre2, 0.0);
  append_signs(r.pattern, t.hs_pre1, 0.0);
  append_signs(r.pattern, t.hs_pre2, 0.0);
  append_signs(r.pattern, t.log_scale, std::log(1e-3));
  return r;
}

}  // namespace detail

/// Compares backward() with central finite differences on every parameter,
/// one input block at a time, with fixed dither noise.
inline GradientCheckResult check_gradients(const ModelParams& params, const BlockDataset& inputs,
                                           const std::vector<double>& lambdas, double tolerance = 1e-4) {
  GradientCheckResult res;
  const auto& cfg = params.config;
  for (double lam : lambdas) {
    for (std::size_t b = 0; b < inputs.size(); ++b) {
      const Eigen::MatrixXd x = blocks_to_matrix(inputs, b, b + 1);
      const Eigen::MatrixXd ny = uniform_noise(100 + b, cfg.latent_size(), 1);
      const Eigen::MatrixXd nz = uniform_noise(200 + b, cfg.hyper_latent_size(), 1);
      const Tape tape = forward_with_tape(params, x, lam, Quantization::fixed(ny, nz));
      ModelParams grad = backward(tape, params);
      const detail::Probe base = detail::evaluate(params, x, lam, ny, nz);

      ModelParams probe = params;
      auto pv = param_views(probe);
      auto gv = param_views(grad);
      for (std::size_t k = 0; k < pv.size(); ++k) {
        for (std::size_t i = 0; i < pv[k].values.size(); ++i) {
          double& v = pv[k].values[i];
          const double saved = v;
          // Central differences at h and h/2, Richardson-extrapolated so the
          // O(h^2) truncation term does not mask the comparison.
          const double h = 1e-4 * std::max(1.0, std::fabs(saved));
          std::array<detail::Probe, 4> pr;
          const std::array<double, 4> steps{h, -h, h / 2, -h / 2};
          for (int s = 0; s < 4; ++s) {
            v = saved + steps[s];
            pr[s] = detail::evaluate(probe, x, lam, ny, nz);
          }
          v = saved;
          bool crosses_kink = false;
          for (const auto& q : pr) crosses_kink |= q.pattern != base.pattern;
          if (crosses_kink) {
            ++res.skipped;
            continue;
          }
          const double d_h = (pr[0].loss - pr[1].loss) / (2.0 * h);
          const double d_half = (pr[2].loss - pr[3].loss) / h;
          const double numeric = (4.0 * d_half - d_h) / 3.0;
          const double analytic = gv[k].values[i];
          const double diff = std::fabs(numeric - analytic);
          const double scale = std::max(std::fabs(numeric), std::fabs(analytic));
          // Rounding noise of the loss evaluations divided by the step.
          const double noise = 1e-14 * std::max(1.0, std::fabs(base.loss)) / h;
          ++res.checked;
          if (scale > 0.0) res.worst_raw = std::max(res.worst_raw, diff / scale);
          if (diff <= noise) continue;
          const double rel = diff / scale;
          res.worst = std::max(res.worst, rel);
          if (rel >= tolerance) {
            ++res.failed;
            if (res.failures.size() < 10) {
              std::ostringstream os;
              os << pv[k].name << "[" << i << "] lambda=" << lam << " block=" << b << " analytic=" << analytic
                 << " numeric=" << numeric;
              res.failures.push_back(os.str());
            }
          }
        }
      }
    }
  }
  return res;
}

}  // namespace lrc::test
