#pragma once

#include <Eigen/Dense>
#include <vector>

namespace lrc {

/// Log-domain gains for one lambda: one vector per analysis layer and one
/// per synthesis layer (a single pair for the linear DCT path).
struct GainSet {
  std::vector<Eigen::VectorXd> analysis;
  std::vector<Eigen::VectorXd> synthesis;

  GainSet zeros_like() const;
  /// a * this + b * other, element-wise.
  GainSet blend(double a, const GainSet& other, double b) const;
  void add_scaled(const GainSet& other, double w);
};

/// Position of lambda on the grid: log2(lambda) is interpolated linearly
/// between grid[lower] and grid[upper] with weight `upper_weight`.
struct GridBracket {
  int lower = 0;
  int upper = 0;
  double upper_weight = 0.0;
};

struct GainTable {
  std::vector<double> grid;  // strictly increasing, positive
  std::vector<GainSet> entries;

  double min_lambda() const { return grid.front(); }
  double max_lambda() const { return grid.back(); }
  bool contains(double lam) const { return lam >= grid.front() && lam <= grid.back(); }
  /// Index of lam if it lies exactly on the grid, else -1.
  int grid_index(double lam) const;
  void validate() const;
};

/// Throws kLambdaOutOfRange outside [grid.front(), grid.back()].
GridBracket bracket(const std::vector<double>& grid, double lam);

/// Exact entry on the grid; otherwise log-gains interpolated linearly in
/// log2(lambda) between the bracketing grid points. No extrapolation.
GainSet gains_for_lambda(const GainTable& table, double lam);

/// Default training grid 2^4 ... 2^17.
std::vector<double> default_lambda_grid();
/// 2^lo ... 2^hi in unit log2 steps.
std::vector<double> log2_lambda_grid(int lo, int hi);

}  // namespace lrc
