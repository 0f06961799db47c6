#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <deque>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "rlpm/action_space.hpp"
#include "rlpm/market_data.hpp"

namespace rlpm {

enum class RewardMode { Trailing, Terminal };

struct EnvConfig {
  std::size_t obs_window = 60;
  std::size_t state_window = 120;
  std::size_t decision_stride = 1;
  std::size_t episode_horizon = 252;
  RewardMode reward_mode = RewardMode::Trailing;
  /// Proportional cost per unit of turnover, in basis points.
  double cost_bps = 0.0;

  void validate() const;
};

struct EnvState {
  std::size_t t = 0;
  std::vector<double> weights;
  std::deque<double> pr_history;  // oldest first, length state_window
  double portfolio_value = 1.0;
  bool done = false;
};

struct StepOutput {
  ReturnMatrix observation;  // n x obs_window, last column = returns at t
  Eigen::VectorXd state;     // state_window portfolio returns, last entry = pr_t
  double reward = 0.0;
  bool done = false;
};

/// Annualized Sharpe of a daily return window with zero risk-free rate.
/// A flat window yields 0 and sets *degenerate when provided.
double trailing_sharpe(std::span<const double> returns, bool* degenerate = nullptr);

/// Day-by-day portfolio simulation over a return matrix (rows = days).
/// Not thread-safe; use one instance per worker.
class PortfolioEnv {
 public:
  PortfolioEnv(std::shared_ptr<const Eigen::MatrixXd> returns, EnvConfig cfg,
               std::shared_ptr<const ActionSet> actions = nullptr);

  /// Starts an episode with the observation ending at return row `start`.
  StepOutput reset(std::size_t start);
  StepOutput step(std::size_t action);
  /// Same as step() with explicit weights (non-negative, summing to 1).
  StepOutput step_weights(std::span<const double> target);

  const EnvState& state() const { return state_; }
  const EnvConfig& config() const { return cfg_; }
  const std::vector<double>& episode_returns() const { return episode_returns_; }
  std::vector<double> value_path() const;
  std::size_t degenerate_rewards() const { return degenerate_rewards_; }
  std::size_t assets() const { return static_cast<std::size_t>(returns_->cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(returns_->rows()); }
  std::size_t steps_taken() const { return steps_; }

  /// Optional per-step trace rows: t,action,w_0..w_{n-1},pr,value,reward.
  void set_trace(std::ostream* out) { trace_ = out; }

 private:
  StepOutput emit(double reward) const;
  StepOutput advance(std::span<const double> target, long action);

  std::shared_ptr<const Eigen::MatrixXd> returns_;
  EnvConfig cfg_;
  std::shared_ptr<const ActionSet> actions_;
  EnvState state_;
  std::vector<double> episode_returns_;
  std::size_t steps_ = 0;
  std::size_t degenerate_rewards_ = 0;
  bool started_ = false;
  std::ostream* trace_ = nullptr;
};

}  // namespace rlpm
