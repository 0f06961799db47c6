#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rlpm/agent.hpp"
#include "rlpm/allocators.hpp"
#include "rlpm/date.hpp"
#include "rlpm/market_data.hpp"
#include "rlpm/portfolio_env.hpp"
#include "rlpm/rcme.hpp"

namespace rlpm {

/// mean * 252.
double annualized_return(std::span<const double> daily);
/// Sample standard deviation * sqrt(252).
double annualized_volatility(std::span<const double> daily);
/// annualized_return / annualized_volatility; throws DegenerateVolatility on a flat series.
double sharpe(std::span<const double> daily);
/// min_t (value_t / running_max_t - 1), always <= 0.
double max_drawdown(std::span<const double> values);
double cumulative_return(std::span<const double> values);

/// Value path 1, (1+r_1), (1+r_1)(1+r_2), ...
std::vector<double> value_path(std::span<const double> daily);

struct PerformanceReport {
  double annualized_return = 0.0;
  double annualized_volatility = 0.0;
  /// NaN when the series has fewer than two days or zero volatility.
  double sharpe = 0.0;
  double mdd = 0.0;
  double cumulative_return = 0.0;
  std::size_t n_days = 0;

  static PerformanceReport from_returns(std::span<const double> daily);
};

/// Arithmetic mean of each field.
PerformanceReport mean_report(std::span<const PerformanceReport> reports);

struct Period {
  Date start;
  Date end;
};

/// The seven two-year periods starting 2008-02-18 ... 2019-09-12.
std::vector<Period> default_periods();
Date add_years(Date d, int years);

struct ExperimentSpec {
  std::vector<Period> periods;
  /// Trading days managed per window.
  std::size_t management_horizon = 504;
  bool rolling = false;
  std::size_t decision_stride = 1;
  /// Worker cap for rolling windows.
  std::size_t jobs = 1;

  void validate() const;
};

struct DecisionContext {
  const ReturnPanel& rp;
  std::size_t t;  // last return row observed
  const StepOutput& current;
};

/// A rule mapping the information available at t to long-only weights.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> decide(const DecisionContext& ctx) const = 0;
  /// Earliest return row at which decide() has enough history.
  virtual std::size_t min_history() const { return 0; }
  /// Environment windows the strategy reads through DecisionContext::current.
  virtual std::size_t observation_window() const { return 1; }
  virtual std::size_t state_window() const { return EnvConfig{}.state_window; }
};

class EqualWeightStrategy final : public Strategy {
 public:
  std::string name() const override { return "Equal Weight"; }
  std::vector<double> decide(const DecisionContext& ctx) const override;
};

/// Markowitz or risk parity on trailing moments; weights are memoized per t
/// since overlapping rolling windows revisit the same days.
class MomentStrategy final : public Strategy {
 public:
  MomentStrategy(AllocatorId id, std::size_t moment_window);
  std::string name() const override;
  std::vector<double> decide(const DecisionContext& ctx) const override;
  std::size_t min_history() const override { return window_ - 1; }

 private:
  AllocatorId id_;
  std::size_t window_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::vector<double>> cache_;
};

/// Deterministic inference with the sub-pool of the nearest representative.
class ModelStrategy final : public Strategy {
 public:
  ModelStrategy(std::shared_ptr<const ModelPool> pool, std::shared_ptr<const RepresentativeSet> rs,
                std::shared_ptr<const ActionSet> actions);
  std::string name() const override { return "Model"; }
  std::vector<double> decide(const DecisionContext& ctx) const override;
  std::size_t min_history() const override;
  std::size_t observation_window() const override { return pool_->arch.obs_window; }
  std::size_t state_window() const override { return pool_->arch.state_window; }

 private:
  std::shared_ptr<const ModelPool> pool_;
  std::shared_ptr<const RepresentativeSet> rs_;
  std::shared_ptr<const ActionSet> actions_;
};

struct WindowResult {
  std::size_t start_row = 0;
  PerformanceReport report;
  std::vector<double> values;
};

/// Manages one window: decision at `start_row`, then `horizon` days of returns.
WindowResult run_window(const Strategy& strategy, const ReturnPanel& rp,
                        std::shared_ptr<const Eigen::MatrixXd> returns, std::size_t start_row,
                        std::size_t horizon, std::size_t decision_stride);

struct PeriodResult {
  Period period;
  bool ok = false;
  std::string error;
  std::size_t windows = 0;
  PerformanceReport report;  // single window, or mean over rolling windows
  std::vector<double> equity;  // value path of the single window (fixed mode)
};

struct StrategyTable {
  std::string strategy;
  std::vector<PeriodResult> periods;
  PerformanceReport mean;  // over successful periods
  std::size_t failed = 0;
};

/// First return row whose date is on or after `d`, or rp.days() if none.
std::size_t first_row_on_or_after(const ReturnPanel& rp, Date d);

StrategyTable run_backtest(const Strategy& strategy, const ReturnPanel& rp, const ExperimentSpec& spec);
StrategyTable run_daily_rolling(const Strategy& strategy, const ReturnPanel& rp,
                                const ExperimentSpec& spec);

/// Aligned table with one column group (R, Sigma, MDD, Sharpe) per strategy,
/// one row per period, then Mean.
void write_text_report(std::ostream& os, const std::string& title,
                       const std::vector<StrategyTable>& tables);
/// Long-format CSV, one row per (period, strategy) plus mean rows.
void write_csv_report(std::ostream& os, const std::vector<StrategyTable>& tables);
/// One CSV per (strategy, period) with the window's value path.
void write_equity_curves(const std::filesystem::path& dir, const std::vector<StrategyTable>& tables);

}  // namespace rlpm
