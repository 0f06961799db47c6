#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rlpm/market_data.hpp"
#include "rlpm/rcme.hpp"

namespace rlpm {

inline constexpr double kDailyStep = 1.0 / 252.0;

struct GbmParams {
  Eigen::VectorXd mu;     // annualized drift
  Eigen::VectorXd sigma;  // annualized volatility, > 0
  double dt = kDailyStep;
  Eigen::VectorXd s0;

  std::size_t assets() const { return static_cast<std::size_t>(mu.size()); }
  void validate() const;
};

/// Lower Cholesky factor of a (possibly jittered) correlation target.
struct CorrelationRoot {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;

  Eigen::MatrixXd reconstruct() const { return lower * lower.transpose(); }
};

struct SimulatedPanel {
  Eigen::MatrixXd prices;  // (H+1) x n, row 0 == s0
  std::uint64_t seed = 0;
  std::size_t source_representative = 0;

  std::size_t horizon() const { return prices.rows() > 0 ? static_cast<std::size_t>(prices.rows()) - 1 : 0; }
};

/// Regime-conditional moments: daily returns over the union of the member
/// anchor windows, annualized by 1/dt. Initial prices are 100.
GbmParams estimate_gbm_params(const ReturnPanel& rp, const std::vector<std::size_t>& member_times,
                              std::size_t window, double dt = kDailyStep);

/// Cholesky with escalating diagonal jitter (1e-8 .. 1e-4) and unit-diagonal rescaling.
CorrelationRoot correlation_root(const Eigen::MatrixXd& target);
inline CorrelationRoot correlation_root(const CorrelationMatrix& target) {
  return correlation_root(target.values);
}

/// Standard normal shock for (seed, step, asset). Streams are addressable so
/// any path can be regenerated independently of the others.
double shock_at(std::uint64_t seed, std::size_t step, std::size_t asset, std::size_t n_assets);

SimulatedPanel simulate_paths(const GbmParams& params, const CorrelationRoot& root,
                              std::size_t horizon, std::uint64_t seed);

struct SimulationConfig {
  std::size_t n_paths = 64;
  std::size_t horizon = 756;
  double dt = kDailyStep;
  std::uint64_t base_seed = 1;
};

std::vector<SimulatedPanel> generate_dataset(std::size_t representative, const RepresentativeSet& rs,
                                             const ReturnPanel& rp, const SimulationConfig& cfg,
                                             std::size_t jobs = 1);

/// Writes `sim_<rep>_<seed>.csv` under `dir` with synthetic weekday dates
/// starting 2000-01-03. Returns the written path.
std::filesystem::path dump_panel(const SimulatedPanel& panel,
                                 const std::vector<std::string>& asset_ids,
                                 const std::filesystem::path& dir);

}  // namespace rlpm
