#include "rlpm/portfolio_env.hpp"

#include <cmath>
#include <numeric>

#include "rlpm/error.hpp"
#include "rlpm/stats.hpp"

namespace rlpm {

void EnvConfig::validate() const {
  if (obs_window < 1 || state_window < 2) {
    throw Error(ErrorKind::InvalidArgument, "observation/state windows too small");
  }
  if (decision_stride < 1) {
    throw Error(ErrorKind::InvalidArgument, "decision stride must be at least 1");
  }
  if (episode_horizon < 1) {
    throw Error(ErrorKind::InvalidArgument, "episode horizon must be at least 1");
  }
  if (!(cost_bps >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "transaction cost must be non-negative");
  }
}

double trailing_sharpe(std::span<const double> returns, bool* degenerate) {
  if (returns.size() < 2) {
    throw Error(ErrorKind::TooShort, "Sharpe window needs at least 2 returns");
  }
  const double m = mean(returns);
  const double sd = sample_std(returns);
  const bool flat = is_degenerate_volatility(m, sd);
  if (degenerate) *degenerate = flat;
  if (flat) return 0.0;
  return (m * kTradingDaysPerYear) / (sd * std::sqrt(kTradingDaysPerYear));
}

PortfolioEnv::PortfolioEnv(std::shared_ptr<const Eigen::MatrixXd> returns, EnvConfig cfg,
                           std::shared_ptr<const ActionSet> actions)
    : returns_(std::move(returns)), cfg_(cfg), actions_(std::move(actions)) {
  if (!returns_ || returns_->cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "environment needs a return matrix with assets");
  }
  cfg_.validate();
  if (actions_ && actions_->assets() != assets()) {
    throw Error(ErrorKind::DimensionMismatch, "action set width does not match panel");
  }
}

StepOutput PortfolioEnv::reset(std::size_t start) {
  if (start + 1 < cfg_.obs_window || start + 1 >= rows()) {
    throw Error(ErrorKind::InsufficientHistory,
                "episode start " + std::to_string(start) + " needs " +
                    std::to_string(cfg_.obs_window) + " returns of history and one day ahead");
  }
  const std::size_t n = assets();
  state_ = EnvState{};
  state_.t = start;
  state_.weights.assign(n, 1.0 / static_cast<double>(n));
  state_.pr_history.assign(cfg_.state_window, 0.0);
  state_.portfolio_value = 1.0;
  state_.done = false;
  episode_returns_.clear();
  steps_ = 0;
  started_ = true;
  return emit(0.0);
}

StepOutput PortfolioEnv::step(std::size_t action) {
  if (!actions_) {
    throw Error(ErrorKind::InvalidActionIndex, "environment has no action set");
  }
  if (action >= actions_->size()) {
    throw Error(ErrorKind::InvalidActionIndex,
                "action " + std::to_string(action) + " outside action set of " +
                    std::to_string(actions_->size()));
  }
  const auto w = actions_->actions[action].fractions();
  return advance(w, static_cast<long>(action));
}

StepOutput PortfolioEnv::step_weights(std::span<const double> target) {
  return advance(target, -1);
}

StepOutput PortfolioEnv::advance(std::span<const double> target, long action) {
  if (!started_ || state_.done) {
    throw Error(ErrorKind::EpisodeFinished, "step() called on a finished or unstarted episode");
  }
  const std::size_t n = assets();
  if (target.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "weight vector length does not match panel");
  }
  double total = 0.0;
  for (double w : target) {
    if (!(w >= 0.0)) throw Error(ErrorKind::InvalidArgument, "weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, "weights must sum to 1");
  }

  double cost = 0.0;
  if (steps_ % cfg_.decision_stride == 0) {
    double turnover = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      turnover += std::abs(target[i] - state_.weights[i]);
      state_.weights[i] = target[i];
    }
    cost = cfg_.cost_bps * 1e-4 * turnover;
  }

  const std::size_t next = state_.t + 1;
  const auto r = returns_->row(static_cast<Eigen::Index>(next));
  double gross = 0.0;
  for (std::size_t i = 0; i < n; ++i) gross += state_.weights[i] * r(static_cast<Eigen::Index>(i));
  const double pr = gross - cost;

  // Weights drift with prices until the next decision boundary.
  for (std::size_t i = 0; i < n; ++i) {
    state_.weights[i] *= (1.0 + r(static_cast<Eigen::Index>(i))) / (1.0 + gross);
  }
  state_.portfolio_value *= 1.0 + pr;
  state_.pr_history.pop_front();
  state_.pr_history.push_back(pr);
  episode_returns_.push_back(pr);
  state_.t = next;
  ++steps_;
  state_.done = steps_ >= cfg_.episode_horizon || next + 1 >= rows();

  double reward = 0.0;
  bool flat = false;
  if (cfg_.reward_mode == RewardMode::Trailing) {
    const std::vector<double> window(state_.pr_history.begin(), state_.pr_history.end());
    reward = trailing_sharpe(window, &flat);
    if (flat) ++degenerate_rewards_;
  } else if (state_.done) {
    if (episode_returns_.size() >= 2) {
      reward = trailing_sharpe(episode_returns_, &flat);
      if (flat) ++degenerate_rewards_;
    }
  }

  if (trace_) {
    *trace_ << state_.t << ',' << action;
    for (double w : state_.weights) *trace_ << ',' << w;
    *trace_ << ',' << pr << ',' << state_.portfolio_value << ',' << reward << '\n';
  }
  return emit(reward);
}

StepOutput PortfolioEnv::emit(double reward) const {
  StepOutput out;
  out.observation = return_matrix(*returns_, state_.t, cfg_.obs_window);
  out.state.resize(static_cast<Eigen::Index>(cfg_.state_window));
  Eigen::Index k = 0;
  for (double pr : state_.pr_history) out.state(k++) = pr;
  out.reward = reward;
  out.done = state_.done;
  return out;
}

std::vector<double> PortfolioEnv::value_path() const {
  std::vector<double> values;
  values.reserve(episode_returns_.size() + 1);
  double v = 1.0;
  values.push_back(v);
  for (double pr : episode_returns_) {
    v *= 1.0 + pr;
    values.push_back(v);
  }
  return values;
}

}  // namespace rlpm
