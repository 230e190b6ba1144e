// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
// LRC_ACCEPTANCE_WORKDIR, when set, keeps the trained models there and
// reuses them on the next run. LRC_ACCEPTANCE_EPOCHS overrides the epoch
// count (default 300).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gradient_check.hpp"
#include "lrc/blockio.hpp"
#include "lrc/codec.hpp"
#include "lrc/dct.hpp"
#include "lrc/entropy.hpp"
#include "lrc/eval.hpp"
#include "lrc/model.hpp"
#include "lrc/range_coder.hpp"
#include "lrc/training.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace lrc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::vector<std::pair<int, Verdict>> g_results;

void report(int id, const std::string& name, Verdict v) {
  std::printf("criterion %2d %-28s %s  %s\n", id, name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::fflush(stdout);
  g_results.emplace_back(id, std::move(v));
}

// Runs `check`, turning exceptions into a failure with the message.
void run_criterion(int id, const std::string& name, const std::function<Verdict()>& check) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " [%.1f s]", seconds_since(t0));
  v.detail += buf;
  report(id, name, std::move(v));
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- shared R-D experiment ---------------------------------------------

constexpr int kBlockSize = 16;
constexpr int kTrainBlocks = 8192;
constexpr int kValBlocks = 1024;
const std::vector<double> kGrid{16, 32, 64, 128, 256, 512};

int epochs_from_env() {
  if (const char* e = std::getenv("LRC_ACCEPTANCE_EPOCHS")) return std::max(1, std::atoi(e));
  return 300;
}

struct Job {
  std::string name;
  EntropyKind entropy;
  std::vector<double> grid;
  ModelParams result;
  double seconds = 0.0;
  int best_epoch = 0;
};

struct Experiment {
  BlockDataset train, val;
  int epochs = 0;
  Job hyper_multi, fact_multi;
  std::vector<Job> hyper_single;  // one per grid lambda
  double train_seconds = 0.0;
  bool ok = false;
  std::string error;

  std::vector<const Job*> all_jobs() const {
    std::vector<const Job*> v{&hyper_multi, &fact_multi};
    for (const auto& j : hyper_single) v.push_back(&j);
    return v;
  }
};

TrainConfig train_config(const std::vector<double>& grid, int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 512;
  tc.learning_rate = 3e-3;
  tc.lambda_grid = grid;
  tc.multi_rate = grid.size() > 1;
  tc.seed = 0;
  tc.validation_interval = 10;
  return tc;
}

void run_job(Job& job, const Experiment& ex, const fs::path& workdir) {
  const auto t0 = Clock::now();
  const fs::path cached = workdir.empty() ? fs::path() : workdir / (job.name + ".rcmp");
  if (!cached.empty() && fs::exists(cached)) {
    job.result = load_model(cached);
    job.best_epoch = -1;
    return;
  }
  ModelConfig mc;
  mc.kind = TransformKind::kLinearDct;
  mc.entropy = job.entropy;
  mc.block_size = kBlockSize;
  mc.lambda_grid = job.grid;
  const auto best = train(train_config(job.grid, ex.epochs), init_model(mc, 0), ex.train, ex.val);
  require(!best.diverged, ErrorCode::kNumeric, job.name + " diverged: " + best.message);
  job.result = best.params;
  job.best_epoch = best.epoch;
  job.seconds = seconds_since(t0);
  if (!cached.empty()) save_model(job.result, cached);
}

// Trains every model, spreading the runs over the available cores.
Experiment& experiment() {
  static Experiment ex;
  static bool done = false;
  if (done) return ex;
  done = true;
  try {
    const auto all = synth_residuals(0, kTrainBlocks + kValBlocks, kBlockSize, 0.9, 8.0);
    ex.train.block_size = ex.val.block_size = kBlockSize;
    ex.train.bitdepth = ex.val.bitdepth = all.bitdepth;
    ex.train.blocks.assign(all.blocks.begin(), all.blocks.begin() + kTrainBlocks);
    ex.val.blocks.assign(all.blocks.begin() + kTrainBlocks, all.blocks.end());
    ex.epochs = epochs_from_env();
    ex.hyper_multi = {"dct_hyper_multi", EntropyKind::kHyperprior, kGrid, {}, 0.0, 0};
    ex.fact_multi = {"dct_factorized_multi", EntropyKind::kFactorized, kGrid, {}, 0.0, 0};
    for (double lam : kGrid)
      ex.hyper_single.push_back({"dct_hyper_single_" + std::to_string(static_cast<int>(lam)),
                                 EntropyKind::kHyperprior, {lam}, {}, 0.0, 0});

    fs::path workdir;
    if (const char* w = std::getenv("LRC_ACCEPTANCE_WORKDIR")) {
      workdir = fs::path(w) / ("epochs_" + std::to_string(ex.epochs));
      fs::create_directories(workdir);
    }
    std::vector<Job*> jobs{&ex.fact_multi, &ex.hyper_multi};
    for (auto& j : ex.hyper_single) jobs.push_back(&j);
    const unsigned workers = std::clamp(std::thread::hardware_concurrency(), 1u, 8u);
    std::printf("training %zu DCT models, %d epochs each, on %u worker(s)\n", jobs.size(), ex.epochs, workers);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    auto worker = [&] {
      for (std::size_t i; (i = next++) < jobs.size();) {
        try {
          run_job(*jobs[i], ex, workdir);
          std::printf("  trained %-24s best epoch %d, %.0f s\n", jobs[i]->name.c_str(), jobs[i]->best_epoch,
                      jobs[i]->seconds);
          std::fflush(stdout);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(err_mu);
          ex.error += jobs[i]->name + ": " + e.what() + "; ";
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    ex.train_seconds = seconds_since(t0);
    ex.ok = ex.error.empty();
  } catch (const std::exception& e) {
    ex.error = e.what();
  }
  return ex;
}

const Experiment& trained() {
  const auto& ex = experiment();
  require(ex.ok, ErrorCode::kNumeric, "training failed: " + ex.error);
  return ex;
}

std::vector<double> midpoints(const std::vector<double>& grid) {
  std::vector<double> m;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) m.push_back(std::sqrt(grid[i] * grid[i + 1]));
  return m;
}

// ---- criteria -----------------------------------------------------------

Verdict reproducibility_statement() {
  return {true,
          "statement: headline BD-rates need codec-extracted residuals and 10000-epoch training and are not "
          "reproduced; criteria 2-10 are the stand-in property checks"};
}

Verdict rd_ordering() {
  const auto& ex = trained();
  const auto hyper = rd_sweep(ex.hyper_multi.result, ex.val, kGrid, QualityMetric::kPsnr, "dct_hyper");
  const auto fact = rd_sweep(ex.fact_multi.result, ex.val, kGrid, QualityMetric::kPsnr, "dct_factorized");
  for (const auto* c : {&hyper, &fact}) {
    std::printf("    %s:", c->label.c_str());
    for (const auto& p : c->points) std::printf(" (%.4f bpp, %.3f dB)", p.rate, p.quality);
    std::printf("\n");
  }
  const double bd = bd_rate(fact, hyper);
  std::ostringstream os;
  os << "BD-rate(hyper vs factorized) = " << fmt("%+.2f%%", bd) << " (need <= -5%), " << ex.epochs
     << " epochs, training " << fmt("%.0f s", ex.train_seconds);
  return {bd <= -5.0, os.str()};
}

Verdict multirate_fidelity() {
  const auto& ex = trained();
  const auto multi = evaluate_validation(ex.hyper_multi.result, ex.val, kGrid);
  bool pass = true;
  std::ostringstream os;
  double worst = 0.0;
  for (std::size_t i = 0; i < kGrid.size(); ++i) {
    const double lam = kGrid[i];
    const double single = evaluate_validation(ex.hyper_single[i].result, ex.val, {lam}).at(lam);
    const double rel = (multi.at(lam) - single) / single;
    std::printf("    lambda %4.0f: multi-rate loss %.3f, single-rate %.3f (%+.2f%%)\n", lam, multi.at(lam), single,
                100.0 * rel);
    worst = std::max(worst, std::fabs(rel));
    pass = pass && std::fabs(rel) <= 0.10;
  }
  os << "worst loss gap " << fmt("%.2f%%", 100.0 * worst) << " (<= 10%)";

  // Sandwich at every geometric midpoint: rate and MSE between the bracketing
  // grid points, with 1% slack.
  std::map<double, RDResult> rd;
  for (double lam : kGrid) rd[lam] = rd_at_lambda(ex.hyper_multi.result, ex.val, lam);
  int sandwiched = 0;
  const auto mids = midpoints(kGrid);
  for (std::size_t i = 0; i < mids.size(); ++i) {
    const auto r = rd_at_lambda(ex.hyper_multi.result, ex.val, mids[i]);
    const auto& lo = rd[kGrid[i]];
    const auto& hi = rd[kGrid[i + 1]];
    const bool ok = r.rate_bpp >= 0.99 * lo.rate_bpp && r.rate_bpp <= 1.01 * hi.rate_bpp &&
                    r.mse <= 1.01 * lo.mse && r.mse >= 0.99 * hi.mse;
    std::printf("    lambda %7.2f: %.4f bpp in [%.4f, %.4f], mse %.4f in [%.4f, %.4f] %s\n", mids[i], r.rate_bpp,
                lo.rate_bpp, hi.rate_bpp, r.mse, hi.mse, lo.mse, ok ? "ok" : "outside");
    sandwiched += ok;
  }
  pass = pass && sandwiched == static_cast<int>(mids.size());
  os << "; sandwich holds at " << sandwiched << "/" << mids.size() << " intermediate lambdas";
  return {pass, os.str()};
}

Verdict rate_fidelity() {
  const auto& ex = trained();
  bool pass = true;
  int checked = 0;
  double worst = 0.0;  // coded-vs-estimate gap as a fraction of the allowance
  const double n = static_cast<double>(ex.val.size());
  for (const Job* job : ex.all_jobs()) {
    std::vector<double> lams = job->grid;
    if (job->grid.size() > 1)
      for (double m : midpoints(job->grid)) lams.push_back(m);
    for (double lam : lams) {
      const auto enc = encode(job->result, ex.val, lam);
      const double coded = static_cast<double>(enc.stream.coded_bits());
      const double est = enc.total_estimated_bits();
      const double allowance = 0.02 * est + 64.0 * n;
      const double frac = std::fabs(coded - est) / allowance;
      worst = std::max(worst, frac);
      ++checked;
      if (frac > 1.0) {
        pass = false;
        std::printf("    %s lambda %.2f: coded %.0f bits, estimate %.0f bits\n", job->name.c_str(), lam, coded, est);
      }
    }
  }
  std::ostringstream os;
  os << checked << " (model, lambda) pairs, worst |coded - estimate| = " << fmt("%.3f", worst)
     << " of the 2% + 64 bits/block allowance";
  return {pass, os.str()};
}

Verdict lossless_coder() {
  std::mt19937_64 rng(2024);
  std::vector<DiscreteCdf> pool;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 64; ++i) {
    std::vector<double> p(2 + rng() % 300);
    double sum = 0.0;
    for (auto& v : p) sum += (v = std::pow(u(rng), 3.0) + 1e-9);
    for (auto& v : p) v /= sum;
    pool.push_back(DiscreteCdf::from_frequencies(quantize_pmf(p)));
  }
  int exact = 0;
  constexpr int kTrials = 100'000;
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t len = 1 + rng() % 24;
    std::vector<const DiscreteCdf*> cdfs(len);
    std::vector<int> symbols(len);
    for (std::size_t i = 0; i < len; ++i) {
      cdfs[i] = &pool[rng() % pool.size()];
      symbols[i] = static_cast<int>(rng() % cdfs[i]->size());
    }
    exact += range_decode(range_encode(symbols, cdfs), cdfs) == symbols;
  }
  const auto uniform = DiscreteCdf::uniform(256);
  std::vector<int> symbols(1000);
  for (auto& s : symbols) s = static_cast<int>(rng() % 256);
  std::vector<const DiscreteCdf*> cdfs(symbols.size(), &uniform);
  const auto bytes = range_encode(symbols, cdfs);
  const std::size_t bits = bytes.size() * 8;
  const bool uniform_ok = bits >= 8000 && bits <= 8040 && range_decode(bytes, cdfs) == symbols;
  std::ostringstream os;
  os << exact << "/" << kTrials << " round-trips exact; 1000 uniform 256-ary symbols -> " << bits
     << " bits (need [8000, 8040])";
  return {exact == kTrials && uniform_ok, os.str()};
}

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  const std::vector<double> grid{16.0, 32.0, 64.0};
  std::size_t checked = 0, failed = 0, skipped = 0;
  double worst = 0.0, worst_raw = 0.0;
  for (auto kind : {TransformKind::kLinearDct, TransformKind::kNonlinearAe})
    for (auto entropy : {EntropyKind::kFactorized, EntropyKind::kHyperprior}) {
      const auto cfg = miniature_config(kind, entropy, grid);
      ModelParams params = init_model(cfg, 7);
      test::jitter(params, 11);
      const auto inputs = test::random_blocks(3, 5, cfg.block_size, 8.0);
      const auto r = test::check_gradients(params, inputs, {16.0, 24.0, 64.0}, 1e-4);
      for (const auto& f : r.failures) std::printf("    %s\n", f.c_str());
      checked += r.checked;
      failed += r.failed;
      skipped += r.skipped;
      worst = std::max(worst, r.worst);
      worst_raw = std::max(worst_raw, r.worst_raw);
    }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << checked << " parameter derivatives over 4 miniature models, " << failed << " above 1e-4 (worst "
     << fmt("%.2e", worst) << " above the roundoff floor, " << fmt("%.2e", worst_raw) << " including it), "
     << skipped << " probes at kinks, " << fmt("%.0f s", secs) << " (< 300 s)";
  return {failed == 0 && secs < 300.0 && skipped * 100 < checked + skipped, os.str()};
}

Verdict transform_exactness() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 8.0);
  double worst_identity = 0.0, worst_parseval = 0.0;
  for (int n : {4, 8, 16, 32})
    for (int t = 0; t < 1000; ++t) {
      Eigen::MatrixXd x(n, n);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
      const Eigen::MatrixXd c = dct2(x);
      worst_identity = std::max(worst_identity, (idct2(c) - x).cwiseAbs().maxCoeff());
      worst_parseval = std::max(worst_parseval, std::fabs(c.squaredNorm() - x.squaredNorm()) / x.squaredNorm());
    }
  std::ostringstream os;
  os << "1000 blocks each for B = 4, 8, 16, 32: max |idct2(dct2(x)) - x| = " << fmt("%.1e", worst_identity)
     << ", max relative energy error = " << fmt("%.1e", worst_parseval) << " (<= 1e-10)";
  return {worst_identity <= 1e-10 && worst_parseval <= 1e-10, os.str()};
}

RDCurve curve_of(const std::string& label, std::vector<std::pair<double, double>> pts) {
  RDCurve c;
  c.label = label;
  for (auto [r, q] : pts) c.points.push_back({0.0, r, q});
  return c;
}

double lagrange(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double l = 1.0;
    for (std::size_t j = 0; j < xs.size(); ++j)
      if (j != i) l *= (x - xs[j]) / (xs[i] - xs[j]);
    s += ys[i] * l;
  }
  return s;
}

// Four-point curves: the cubic fit interpolates, so trapezoid integration of
// the Lagrange polynomial on a dense grid is an independent reference.
double dense_bd(const RDCurve& ref, const RDCurve& test) {
  auto unpack = [](const RDCurve& c, std::vector<double>& q, std::vector<double>& lr) {
    for (const auto& p : c.points) q.push_back(p.quality), lr.push_back(std::log10(p.rate));
  };
  std::vector<double> q1, r1, q2, r2;
  unpack(ref, q1, r1);
  unpack(test, q2, r2);
  const double lo = std::max(*std::min_element(q1.begin(), q1.end()), *std::min_element(q2.begin(), q2.end()));
  const double hi = std::min(*std::max_element(q1.begin(), q1.end()), *std::max_element(q2.begin(), q2.end()));
  const int n = 20'001;
  const double h = (hi - lo) / (n - 1);
  double i1 = 0.0, i2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = lo + k * h;
    const double w = (k == 0 || k == n - 1) ? 0.5 * h : h;
    i1 += w * lagrange(q1, r1, x);
    i2 += w * lagrange(q2, r2, x);
  }
  return (std::pow(10.0, (i2 - i1) / (hi - lo)) - 1.0) * 100.0;
}

Verdict bd_oracle() {
  const auto a = curve_of("a", {{0.10, 30.0}, {0.25, 33.5}, {0.60, 37.2}, {1.40, 41.0}});
  const auto b = curve_of("b", {{0.08, 30.6}, {0.21, 34.4}, {0.50, 38.1}, {1.10, 41.7}});
  auto scaled = a;
  for (auto& p : scaled.points) p.rate *= 0.9;
  const double self = bd_rate(a, a);
  const double scale = bd_rate(a, scaled);
  const double pair = bd_rate(a, b), oracle = dense_bd(a, b);
  std::ostringstream os;
  os << "bd(A,A) = " << self << ", 0.9x rate -> " << fmt("%.9f%%", scale) << ", pair " << fmt("%.9f", pair)
     << " vs dense oracle " << fmt("%.9f", oracle);
  return {self == 0.0 && std::fabs(scale + 10.0) <= 1e-6 && std::fabs(pair - oracle) <= 1e-6, os.str()};
}

Verdict decoder_symmetry() {
  const auto& ex = trained();
  BlockDataset blocks = ex.val;
  blocks.blocks.resize(1000);
  // Three grid points and two interpolated values.
  const std::vector<double> lams{16.0, 45.254834, 128.0, 362.038672, 512.0};
  std::size_t identical = 0, total = 0;
  for (const Job* job : {&ex.hyper_multi, &ex.fact_multi})
    for (double lam : lams) {
      const auto enc = encode(job->result, blocks, lam);
      const auto dec = decode(job->result, serialize_bitstream(enc.stream));
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& a = enc.reconstruction.blocks[i].data;
        const auto& b = dec.blocks[i].data;
        identical += a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
        ++total;
      }
    }
  std::ostringstream os;
  os << identical << "/" << total << " blocks bit-identical (1000 blocks x 5 lambdas incl. 2 interpolated x 2 models)";
  return {identical == total, os.str()};
}

// Every window evaluated on its own with the full 2D kernel and moments taken
// about the window mean.
double ssim_direct(const ResidualBlock& a, const ResidualBlock& b, double peak) {
  const int n = a.size, win = 11;
  double w[11][11], total = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
      total += w[i][j];
    }
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  double sum = 0.0;
  int count = 0;
  for (int r = 0; r + win <= n; ++r)
    for (int c = 0; c + win <= n; ++c) {
      double ma = 0.0, mb = 0.0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          ma += w[i][j] / total * a.at(r + i, c + j);
          mb += w[i][j] / total * b.at(r + i, c + j);
        }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double da = a.at(r + i, c + j) - ma, db = b.at(r + i, c + j) - mb;
          va += w[i][j] / total * da * da;
          vb += w[i][j] / total * db * db;
          cov += w[i][j] / total * da * db;
        }
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return sum / count;
}

Verdict ssim_oracle() {
  std::mt19937_64 rng(4);
  double worst = 0.0, worst_self = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = t % 2 ? 16 : 32;
    const auto a = test::random_blocks(rng(), 1, n, 20.0).blocks[0];
    auto b = test::random_blocks(rng(), 1, n, 10.0).blocks[0];
    for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += static_cast<float>((t % 5) * 0.25) * a.data[i];
    worst = std::max(worst, std::fabs(ssim(a, b, 510.0) - ssim_direct(a, b, 510.0)));
    worst_self = std::max(worst_self, std::fabs(ssim(a, a, 510.0) - 1.0));
  }
  std::ostringstream os;
  os << "100 pairs: max |separable - direct| = " << fmt("%.1e", worst) << " (<= 1e-9); max |ssim(a,a) - 1| = "
     << fmt("%.1e", worst_self);
  return {worst <= 1e-9 && worst_self <= 1e-12, os.str()};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  // Cheap criteria first so their verdicts appear before the long training run.
  run_criterion(1, "reproducibility statement", reproducibility_statement);
  run_criterion(5, "lossless range coder", lossless_coder);
  run_criterion(6, "gradient correctness", gradient_correctness);
  run_criterion(7, "transform exactness", transform_exactness);
  run_criterion(8, "BD-rate oracle", bd_oracle);
  run_criterion(10, "SSIM oracle", ssim_oracle);
  run_criterion(2, "directional R-D ordering", rd_ordering);
  run_criterion(3, "multi-rate fidelity", multirate_fidelity);
  run_criterion(4, "rate-estimate fidelity", rate_fidelity);
  run_criterion(9, "decoder symmetry", decoder_symmetry);

  std::sort(g_results.begin(), g_results.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  int failed = 0;
  std::printf("\nsummary (%.0f s):\n", seconds_since(t0));
  for (const auto& [id, v] : g_results) {
    std::printf("  criterion %2d: %s\n", id, v.pass ? "PASS" : "FAIL");
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
