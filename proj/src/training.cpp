#include "lrc/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lrc/error.hpp"
#include "lrc/transforms.hpp"

namespace lrc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long r = std::stoll(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kInvalidArgument, "expected an integer for " + key + ": '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kInvalidArgument, "expected a number for " + key + ": '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorCode::kInvalidArgument, "expected true/false for " + key + ": '" + v + "'");
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

bool all_finite(ModelParams& p) {
  for (const auto& view : param_views(p))
    for (double v : view.values)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorCode::kInvalidArgument, "epochs must be non-negative");
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be at least 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::kInvalidArgument,
          "learning_rate must be positive");
  require(!lambda_grid.empty(), ErrorCode::kInvalidArgument, "lambda grid is empty");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    require(lambda_grid[i] > 0.0 && std::isfinite(lambda_grid[i]), ErrorCode::kInvalidArgument,
            "lambda values must be positive");
    require(i == 0 || lambda_grid[i] > lambda_grid[i - 1], ErrorCode::kInvalidArgument,
            "lambda grid must be strictly increasing");
  }
  require(multi_rate || lambda_grid.size() == 1, ErrorCode::kInvalidArgument,
          "single-rate training takes exactly one lambda");
  require(validation_interval >= 1, ErrorCode::kInvalidArgument, "validation_interval must be at least 1");
}

std::vector<double> parse_lambda_list(const std::string& text) {
  const std::string t = trim(text);
  std::vector<double> out;
  if (t.rfind("log2:", 0) == 0) {
    const auto colon = t.find(':', 5);
    require(colon != std::string::npos, ErrorCode::kInvalidArgument, "lambda grid 'log2:LO:HI' expected");
    const auto lo = parse_int("lambda_grid", t.substr(5, colon - 5));
    const auto hi = parse_int("lambda_grid", t.substr(colon + 1));
    require(lo <= hi && hi - lo < 64, ErrorCode::kInvalidArgument, "lambda grid bounds out of order");
    return log2_lambda_grid(static_cast<int>(lo), static_cast<int>(hi));
  }
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real("lambda", trim(item)));
  require(!out.empty(), ErrorCode::kInvalidArgument, "empty lambda list");
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kInvalidArgument,
            "config line " + std::to_string(lineno) + " is not key = value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_train_option(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "epochs") {
    c.epochs = static_cast<int>(parse_int(key, value));
  } else if (key == "batch_size") {
    c.batch_size = static_cast<int>(parse_int(key, value));
  } else if (key == "learning_rate") {
    c.learning_rate = parse_real(key, value);
  } else if (key == "lambda_grid") {
    c.lambda_grid = parse_lambda_list(value);
  } else if (key == "lambda") {
    c.lambda_grid = {parse_real(key, value)};
    c.multi_rate = false;
  } else if (key == "multi_rate") {
    c.multi_rate = parse_bool(key, value);
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "checkpoint_dir") {
    c.checkpoint_dir = value;
  } else if (key == "validation_interval") {
    c.validation_interval = static_cast<int>(parse_int(key, value));
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown training option '" + key + "'");
  }
}

AdamState AdamState::for_params(const ModelParams& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.steps.assign(param_views(s.m).size(), 0);
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const std::vector<bool>* active) {
  ModelParams g = grads;
  auto pv = param_views(params);
  auto gv = param_views(g);
  auto mv = param_views(state.m);
  auto vv = param_views(state.v);
  require(gv.size() == pv.size() && mv.size() == pv.size() && state.steps.size() == pv.size(),
          ErrorCode::kShapeMismatch, "optimizer state does not match the parameters");
  require(!active || active->size() == pv.size(), ErrorCode::kShapeMismatch, "active mask has the wrong length");
  for (std::size_t k = 0; k < gv.size(); ++k) {
    require(gv[k].values.size() == pv[k].values.size(), ErrorCode::kShapeMismatch,
            "gradient shape mismatch in " + pv[k].name);
    if (active && !(*active)[k]) continue;
    for (double x : gv[k].values)
      if (!std::isfinite(x)) fail(ErrorCode::kNumeric, "non-finite gradient in " + pv[k].name);
  }
  for (std::size_t k = 0; k < pv.size(); ++k) {
    if (active && !(*active)[k]) continue;
    const std::uint64_t t = ++state.steps[k];
    const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(t));
    auto p = pv[k].values;
    auto gr = gv[k].values;
    auto m = mv[k].values;
    auto v = vv[k].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * gr[i];
      v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * gr[i] * gr[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + AdamState::kEps);
    }
  }
  ++params.revision;
}

double rd_loss(const ResidualBlock& x, const ResidualBlock& x_hat, double rate_main, double rate_hyper, double lam) {
  require(x.size == x_hat.size && x.data.size() == x_hat.data.size() && !x.data.empty(), ErrorCode::kShapeMismatch,
          "blocks differ in shape");
  double se = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = static_cast<double>(x.data[i]) - x_hat.data[i];
    se += d * d;
  }
  return rate_main + rate_hyper + lam * se / static_cast<double>(x.data.size());
}

std::vector<double> lambda_probabilities(int epoch, int total_epochs, std::size_t grid_size) {
  require(total_epochs >= 1 && epoch >= 0 && epoch <= total_epochs, ErrorCode::kInvalidArgument,
          "epoch outside the schedule");
  require(grid_size >= 1, ErrorCode::kInvalidArgument, "empty lambda grid");
  const double anneal = static_cast<double>(total_epochs - epoch) / total_epochs;
  std::vector<double> w(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) w[i] = std::exp(0.4 * static_cast<double>(i) * anneal);
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= sum;
  return w;
}

double sample_lambda(int epoch, int total_epochs, const std::vector<double>& grid, std::mt19937_64& rng) {
  const auto p = lambda_probabilities(epoch, total_epochs, grid.size());
  std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
  return grid[pick(rng)];
}

std::map<double, double> evaluate_validation(const ModelParams& model, const BlockDataset& dataset,
                                             const std::vector<double>& lambdas) {
  std::map<double, double> out;
  if (lambdas.empty()) return out;
  require(!dataset.empty(), ErrorCode::kInvalidArgument, "validation set is empty");
  constexpr std::size_t kChunk = 1024;
  for (double lam : lambdas) {
    double total = 0.0;
    for (std::size_t b = 0; b < dataset.size(); b += kChunk) {
      const std::size_t e = std::min(dataset.size(), b + kChunk);
      const Tape t = forward_with_tape(model, blocks_to_matrix(dataset, b, e), lam, Quantization::hard());
      total += t.loss.sum();
    }
    out[lam] = total / static_cast<double>(dataset.size());
  }
  return out;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  save_model(ck.params, dir / (name + ".rcmp"));
  nlohmann::json j;
  j["epoch"] = ck.epoch;
  j["train_loss"] = ck.train_loss;
  j["validation_total"] = ck.validation_total;
  j["model_hash"] = to_hex(model_hash(ck.params));
  j["diverged"] = ck.diverged;
  auto& v = j["validation_loss"];
  v = nlohmann::json::array();
  for (const auto& [lam, loss] : ck.validation_loss) v.push_back({{"lambda", lam}, {"loss", loss}});
  const std::string text = j.dump(2) + "\n";
  std::ofstream f(dir / (name + ".json"), std::ios::binary);
  if (!f || !(f << text)) fail(ErrorCode::kIo, "cannot write checkpoint sidecar in " + dir.string());
}

Checkpoint train(const TrainConfig& config, ModelParams model, const BlockDataset& train_set,
                 const BlockDataset& validation_set, const std::function<void(const EpochReport&)>& progress) {
  config.validate();
  require(!train_set.empty() && !validation_set.empty(), ErrorCode::kInvalidArgument, "datasets must be non-empty");
  require(train_set.block_size == model.config.block_size && validation_set.block_size == model.config.block_size,
          ErrorCode::kSizeMismatch, "dataset block size does not match the model");
  require(model.gains.grid == config.lambda_grid, ErrorCode::kInvalidArgument,
          "model gain grid differs from the training lambda grid");

  auto evaluate = [&](int epoch, double train_loss) {
    Checkpoint ck;
    ck.epoch = epoch;
    ck.params = model;
    round_to_float(ck.params);
    ck.train_loss = train_loss;
    ck.validation_loss = evaluate_validation(ck.params, validation_set, config.lambda_grid);
    for (const auto& [lam, loss] : ck.validation_loss) ck.validation_total += loss;
    return ck;
  };

  Checkpoint best = evaluate(0, std::numeric_limits<double>::quiet_NaN());
  if (!config.checkpoint_dir.empty()) save_checkpoint(best, config.checkpoint_dir, "epoch_0000");

  AdamState adam = AdamState::for_params(model);
  const auto names = param_views(model);
  std::vector<std::vector<bool>> masks(config.lambda_grid.size(), std::vector<bool>(names.size(), true));
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k].name.rfind("gain.", 0) == 0)
        masks[i][k] = names[k].name.rfind("gain." + std::to_string(i) + ".", 0) == 0;

  const std::size_t n = train_set.size();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = stream_rng(config.seed, static_cast<std::uint64_t>(epoch), 0, 1);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(model.config.block_size) * model.config.block_size,
                        static_cast<Eigen::Index>(end - start));
      for (std::size_t j = start; j < end; ++j) {
        const auto& data = train_set.blocks[order[j]].data;
        for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, static_cast<Eigen::Index>(j - start)) = data[i];
      }
      auto rng = stream_rng(config.seed, static_cast<std::uint64_t>(epoch), batches, 2);
      std::size_t lam_index = 0;
      if (config.multi_rate && config.lambda_grid.size() > 1) {
        const double lam = sample_lambda(epoch, config.epochs, config.lambda_grid, rng);
        lam_index = static_cast<std::size_t>(
            std::find(config.lambda_grid.begin(), config.lambda_grid.end(), lam) - config.lambda_grid.begin());
      }
      const double lam = config.lambda_grid[lam_index];

      const Tape tape = forward_with_tape(model, x, lam, Quantization::dither(rng));
      const double loss = tape.mean_loss();
      bool ok = std::isfinite(loss);
      if (ok) {
        try {
          adam_step(model, backward(tape, model), adam, config.learning_rate, &masks[lam_index]);
          ok = all_finite(model);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNumeric) throw;
          ok = false;
        }
      }
      if (!ok) {
        best.diverged = true;
        best.message = "training diverged in epoch " + std::to_string(epoch + 1) + "; returning epoch " +
                       std::to_string(best.epoch);
        return best;
      }
      loss_sum += loss;
      ++batches;
    }

    EpochReport report;
    report.epoch = epoch + 1;
    report.train_loss = loss_sum / static_cast<double>(batches);
    const bool last = epoch + 1 == config.epochs;
    if (last || (epoch + 1) % config.validation_interval == 0) {
      Checkpoint ck = evaluate(epoch + 1, report.train_loss);
      report.validated = true;
      report.validation_total = ck.validation_total;
      if (!config.checkpoint_dir.empty()) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d", epoch + 1);
        save_checkpoint(ck, config.checkpoint_dir, name);
      }
      if (!std::isfinite(ck.validation_total)) {
        best.diverged = true;
        best.message = "validation loss not finite in epoch " + std::to_string(epoch + 1);
        return best;
      }
      if (ck.validation_total < best.validation_total) {
        report.improved = true;
        best = std::move(ck);
      }
    }
    if (progress) progress(report);
  }
  if (!config.checkpoint_dir.empty()) save_checkpoint(best, config.checkpoint_dir, "best");
  return best;
}

}  // namespace lrc
