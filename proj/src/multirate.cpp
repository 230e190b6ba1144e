#include "lrc/multirate.hpp"

#include <cmath>
#include <string>

#include "lrc/error.hpp"

namespace lrc {

GainSet GainSet::zeros_like() const {
  GainSet z = *this;
  for (auto& v : z.analysis) v.setZero();
  for (auto& v : z.synthesis) v.setZero();
  return z;
}

GainSet GainSet::blend(double a, const GainSet& other, double b) const {
  GainSet out = *this;
  for (std::size_t i = 0; i < analysis.size(); ++i) out.analysis[i] = a * analysis[i] + b * other.analysis[i];
  for (std::size_t i = 0; i < synthesis.size(); ++i) out.synthesis[i] = a * synthesis[i] + b * other.synthesis[i];
  return out;
}

void GainSet::add_scaled(const GainSet& other, double w) {
  for (std::size_t i = 0; i < analysis.size(); ++i) analysis[i] += w * other.analysis[i];
  for (std::size_t i = 0; i < synthesis.size(); ++i) synthesis[i] += w * other.synthesis[i];
}

int GainTable::grid_index(double lam) const {
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] == lam) return static_cast<int>(i);
  return -1;
}

void GainTable::validate() const {
  require(!grid.empty(), ErrorCode::kInvalidArgument, "lambda grid is empty");
  require(grid.size() == entries.size(), ErrorCode::kInvalidArgument, "gain table incomplete");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    require(grid[i] > 0.0 && std::isfinite(grid[i]), ErrorCode::kInvalidArgument, "lambda must be positive");
    if (i > 0) require(grid[i] > grid[i - 1], ErrorCode::kInvalidArgument, "lambda grid must be strictly increasing");
  }
}

GridBracket bracket(const std::vector<double>& grid, double lam) {
  if (grid.empty() || !(lam >= grid.front() && lam <= grid.back()))
    fail(ErrorCode::kLambdaOutOfRange, "lambda " + std::to_string(lam) + " outside trained range [" +
                                           std::to_string(grid.empty() ? 0.0 : grid.front()) + ", " +
                                           std::to_string(grid.empty() ? 0.0 : grid.back()) + "]");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] == lam) return {static_cast<int>(i), static_cast<int>(i), 0.0};
  std::size_t hi = 1;
  while (grid[hi] < lam) ++hi;
  const double t = (std::log2(lam) - std::log2(grid[hi - 1])) / (std::log2(grid[hi]) - std::log2(grid[hi - 1]));
  return {static_cast<int>(hi - 1), static_cast<int>(hi), t};
}

GainSet gains_for_lambda(const GainTable& table, double lam) {
  const auto b = bracket(table.grid, lam);
  if (b.lower == b.upper) return table.entries[b.lower];
  return table.entries[b.lower].blend(1.0 - b.upper_weight, table.entries[b.upper], b.upper_weight);
}

std::vector<double> log2_lambda_grid(int lo, int hi) {
  std::vector<double> g;
  for (int e = lo; e <= hi; ++e) g.push_back(std::ldexp(1.0, e));
  return g;
}

std::vector<double> default_lambda_grid() { return log2_lambda_grid(4, 17); }

}  // namespace lrc
