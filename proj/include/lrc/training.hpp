#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lrc/blockio.hpp"
#include "lrc/model.hpp"

namespace lrc {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 512;
  double learning_rate = 3e-4;
  std::vector<double> lambda_grid = default_lambda_grid();
  /// Single-rate runs train exactly one lambda (a one-entry grid).
  bool multi_rate = true;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no files written
  /// Validate every this many epochs (and always after the last one).
  int validation_interval = 1;

  void validate() const;
};

/// Applies one key=value setting; throws kInvalidArgument on unknown keys
/// or malformed values. lambda_grid accepts "a,b,c" or "log2:LO:HI".
void apply_train_option(TrainConfig& config, const std::string& key, const std::string& value);
/// Parses "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::vector<double> parse_lambda_list(const std::string& text);

/// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-7. Each parameter group
/// keeps its own step count so groups that sit out a step (gain entries of
/// other lambdas) are left exactly as they were.
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-7;

  ModelParams m, v;
  std::vector<std::uint64_t> steps;  // per parameter group

  static AdamState for_params(const ModelParams& params);
};

/// One bias-corrected Adam update. `active`, when given, selects the
/// parameter groups (in param_views order) to update. Throws kNumeric and
/// leaves everything unchanged if any gradient is not finite.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const std::vector<bool>* active = nullptr);

/// rate_main + rate_hyper + lam * MSE(x, x_hat).
double rd_loss(const ResidualBlock& x, const ResidualBlock& x_hat, double rate_main, double rate_hyper, double lam);

/// Grid index weights exp(0.4 i (N - n) / N), normalized; index 0 is the
/// smallest lambda.
std::vector<double> lambda_probabilities(int epoch, int total_epochs, std::size_t grid_size);
double sample_lambda(int epoch, int total_epochs, const std::vector<double>& grid, std::mt19937_64& rng);

/// Test-time loss (hard quantization, model rates) averaged over the
/// dataset, for each lambda.
std::map<double, double> evaluate_validation(const ModelParams& model, const BlockDataset& dataset,
                                             const std::vector<double>& lambdas);

struct Checkpoint {
  int epoch = 0;  // 0 = initial parameters
  ModelParams params;
  double train_loss = 0.0;
  std::map<double, double> validation_loss;
  double validation_total = 0.0;
  bool diverged = false;
  std::string message;
};

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  bool validated = false;
  double validation_total = 0.0;
  bool improved = false;
};

/// Runs config.epochs epochs and returns the minimum-validation checkpoint
/// (parameters rounded to binary32, as saved). On a non-finite loss the run
/// stops and the best checkpoint so far is returned with `diverged` set.
Checkpoint train(const TrainConfig& config, ModelParams model, const BlockDataset& train_set,
                 const BlockDataset& validation_set, const std::function<void(const EpochReport&)>& progress = {});

/// Writes NAME.rcmp and NAME.json (losses) into dir.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir, const std::string& name);

}  // namespace lrc
