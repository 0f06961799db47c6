#include "rlpm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "rlpm/error.hpp"
#include "rlpm/parallel.hpp"
#include "rlpm/stats.hpp"

namespace rlpm {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double annualized_return(std::span<const double> daily) { return mean(daily) * kTradingDaysPerYear; }

double annualized_volatility(std::span<const double> daily) {
  return sample_std(daily) * std::sqrt(kTradingDaysPerYear);
}

double sharpe(std::span<const double> daily) {
  const double m = mean(daily);
  const double sd = sample_std(daily);
  if (is_degenerate_volatility(m, sd)) {
    throw Error(ErrorKind::DegenerateVolatility, "Sharpe ratio undefined for a zero-volatility series");
  }
  return (m * kTradingDaysPerYear) / (sd * std::sqrt(kTradingDaysPerYear));
}

double max_drawdown(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptySeries, "drawdown of an empty value path");
  double peak = values.front();
  double worst = 0.0;
  for (double v : values) {
    peak = std::max(peak, v);
    worst = std::min(worst, v / peak - 1.0);
  }
  return worst;
}

double cumulative_return(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptySeries, "cumulative return of an empty value path");
  return values.back() / values.front() - 1.0;
}

std::vector<double> value_path(std::span<const double> daily) {
  std::vector<double> v;
  v.reserve(daily.size() + 1);
  v.push_back(1.0);
  for (double r : daily) v.push_back(v.back() * (1.0 + r));
  return v;
}

PerformanceReport PerformanceReport::from_returns(std::span<const double> daily) {
  PerformanceReport r;
  r.n_days = daily.size();
  r.annualized_return = rlpm::annualized_return(daily);
  const auto values = value_path(daily);
  r.mdd = max_drawdown(values);
  r.cumulative_return = rlpm::cumulative_return(values);
  if (daily.size() >= 2) {
    r.annualized_volatility = rlpm::annualized_volatility(daily);
    r.sharpe = is_degenerate_volatility(mean(daily), sample_std(daily)) ? kNaN : rlpm::sharpe(daily);
  } else {
    r.annualized_volatility = kNaN;
    r.sharpe = kNaN;
  }
  return r;
}

PerformanceReport mean_report(std::span<const PerformanceReport> reports) {
  PerformanceReport out;
  if (reports.empty()) {
    out.annualized_return = out.annualized_volatility = out.sharpe = out.mdd = out.cumulative_return = kNaN;
    return out;
  }
  const double n = static_cast<double>(reports.size());
  std::size_t days = 0;
  for (const auto& r : reports) {
    out.annualized_return += r.annualized_return / n;
    out.annualized_volatility += r.annualized_volatility / n;
    out.sharpe += r.sharpe / n;
    out.mdd += r.mdd / n;
    out.cumulative_return += r.cumulative_return / n;
    days += r.n_days;
  }
  out.n_days = days / reports.size();
  return out;
}

Date add_years(Date d, int years) {
  using namespace std::chrono;
  year_month_day ymd{d.days()};
  ymd = ymd.year() / ymd.month() / ymd.day() + std::chrono::years(years);
  if (!ymd.ok()) ymd = ymd.year() / ymd.month() / last;  // Feb 29 -> Feb 28
  return Date(sys_days(ymd));
}

std::vector<Period> default_periods() {
  std::vector<Period> out;
  for (const char* s : {"2008-02-18", "2010-02-18", "2012-02-20", "2014-02-18", "2016-02-18",
                        "2018-02-19", "2019-09-12"}) {
    const Date start = *Date::parse(s);
    out.push_back({start, add_years(start, 2)});
  }
  return out;
}

void ExperimentSpec::validate() const {
  if (periods.empty()) throw Error(ErrorKind::InvalidArgument, "experiment has no periods");
  for (const auto& p : periods) {
    if (!(p.start < p.end)) {
      throw Error(ErrorKind::InvalidArgument,
                  "period " + p.start.iso() + " .. " + p.end.iso() + " is empty");
    }
  }
  if (management_horizon < 1) throw Error(ErrorKind::InvalidArgument, "management horizon must be positive");
  if (decision_stride < 1) throw Error(ErrorKind::InvalidArgument, "decision stride must be positive");
}

std::vector<double> EqualWeightStrategy::decide(const DecisionContext& ctx) const {
  const auto w = equal_weights(ctx.rp.assets()).weights;
  return {w.data(), w.data() + w.size()};
}

MomentStrategy::MomentStrategy(AllocatorId id, std::size_t moment_window)
    : id_(id), window_(moment_window) {
  if (id == AllocatorId::EqualWeight) {
    throw Error(ErrorKind::InvalidArgument, "equal weight does not use moments");
  }
  if (moment_window < 2) throw Error(ErrorKind::InvalidArgument, "moment window must be at least 2");
}

std::string MomentStrategy::name() const { return std::string(to_string(id_)); }

std::vector<double> MomentStrategy::decide(const DecisionContext& ctx) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(ctx.t); it != cache_.end()) return it->second;
  }
  const auto m = estimate_moments(ctx.rp.returns, ctx.t, window_);
  const auto w = id_ == AllocatorId::Markowitz ? markowitz_weights(m) : risk_parity_weights(m);
  std::vector<double> out(w.weights.data(), w.weights.data() + w.weights.size());
  std::lock_guard lock(mutex_);
  cache_.emplace(ctx.t, out);
  return out;
}

ModelStrategy::ModelStrategy(std::shared_ptr<const ModelPool> pool,
                             std::shared_ptr<const RepresentativeSet> rs,
                             std::shared_ptr<const ActionSet> actions)
    : pool_(std::move(pool)), rs_(std::move(rs)), actions_(std::move(actions)) {
  if (!pool_ || !rs_ || !actions_) throw Error(ErrorKind::InvalidArgument, "model strategy needs pool, regimes and actions");
  if (pool_->arch.n_actions != actions_->size() || pool_->arch.n_assets != actions_->assets()) {
    throw Error(ErrorKind::ShapeMismatch, "model pool does not match the action set");
  }
  if (pool_->representatives() != rs_->matrices.size()) {
    throw Error(ErrorKind::ShapeMismatch, "model pool does not match the representative set");
  }
}

std::size_t ModelStrategy::min_history() const {
  return std::max(pool_->arch.obs_window, rs_->window) - 1;
}

std::vector<double> ModelStrategy::decide(const DecisionContext& ctx) const {
  const auto corr = rolling_correlation(ctx.rp, ctx.t, rs_->window);
  const std::size_t a = infer(*pool_, *rs_, corr.values, ctx.current.observation.values, ctx.current.state);
  return actions_->actions[a].fractions();
}

WindowResult run_window(const Strategy& strategy, const ReturnPanel& rp,
                        std::shared_ptr<const Eigen::MatrixXd> returns, std::size_t start_row,
                        std::size_t horizon, std::size_t decision_stride) {
  if (start_row < strategy.min_history()) {
    throw Error(ErrorKind::InsufficientHistory,
                strategy.name() + " needs " + std::to_string(strategy.min_history() + 1) +
                    " days of returns before the first decision");
  }
  if (start_row + horizon >= rp.days()) {
    throw Error(ErrorKind::InsufficientHistory,
                "management horizon of " + std::to_string(horizon) + " days from " +
                    rp.dates[std::min(start_row, rp.days() - 1)].iso() + " runs past the panel end");
  }
  EnvConfig cfg;
  cfg.obs_window = strategy.observation_window();
  cfg.state_window = strategy.state_window();
  cfg.decision_stride = decision_stride;
  cfg.episode_horizon = horizon;
  PortfolioEnv env(std::move(returns), cfg);
  StepOutput current = env.reset(start_row);
  std::vector<double> weights;
  for (std::size_t step = 0; !env.state().done; ++step) {
    if (step % decision_stride == 0) {
      weights = strategy.decide(DecisionContext{rp, env.state().t, current});
    } else {
      weights = env.state().weights;
    }
    current = env.step_weights(weights);
  }
  WindowResult out;
  out.start_row = start_row;
  out.report = PerformanceReport::from_returns(env.episode_returns());
  out.values = value_path(env.episode_returns());
  return out;
}

std::size_t first_row_on_or_after(const ReturnPanel& rp, Date d) {
  return static_cast<std::size_t>(std::lower_bound(rp.dates.begin(), rp.dates.end(), d) - rp.dates.begin());
}

namespace {

std::string describe(const std::exception& e) { return e.what(); }

void finish(StrategyTable& table) {
  std::vector<PerformanceReport> ok;
  for (const auto& p : table.periods) {
    if (p.ok) ok.push_back(p.report);
    else ++table.failed;
  }
  table.mean = mean_report(ok);
}

}  // namespace

StrategyTable run_backtest(const Strategy& strategy, const ReturnPanel& rp, const ExperimentSpec& spec) {
  spec.validate();
  const auto returns = std::make_shared<const Eigen::MatrixXd>(rp.returns);
  StrategyTable table;
  table.strategy = strategy.name();
  for (const auto& period : spec.periods) {
    PeriodResult pr;
    pr.period = period;
    try {
      const std::size_t row = first_row_on_or_after(rp, period.start);
      if (row >= rp.days()) {
        throw Error(ErrorKind::InsufficientHistory, "period starts after the last panel date");
      }
      auto w = run_window(strategy, rp, returns, row, spec.management_horizon, spec.decision_stride);
      pr.report = w.report;
      pr.equity = std::move(w.values);
      pr.windows = 1;
      pr.ok = true;
    } catch (const std::exception& e) {
      pr.error = describe(e);
    }
    table.periods.push_back(std::move(pr));
  }
  finish(table);
  return table;
}

StrategyTable run_daily_rolling(const Strategy& strategy, const ReturnPanel& rp,
                                const ExperimentSpec& spec) {
  spec.validate();
  const auto returns = std::make_shared<const Eigen::MatrixXd>(rp.returns);
  StrategyTable table;
  table.strategy = strategy.name();
  for (const auto& period : spec.periods) {
    PeriodResult pr;
    pr.period = period;
    try {
      const std::size_t first = first_row_on_or_after(rp, period.start);
      const std::size_t last = first_row_on_or_after(rp, period.end);
      if (first >= last) {
        throw Error(ErrorKind::InsufficientHistory,
                    "no trading days in " + period.start.iso() + " .. " + period.end.iso());
      }
      std::vector<PerformanceReport> reports(last - first);
      parallel_for(reports.size(), spec.jobs, [&](std::size_t i) {
        reports[i] = run_window(strategy, rp, returns, first + i, spec.management_horizon,
                                spec.decision_stride)
                         .report;
      });
      pr.report = mean_report(reports);
      pr.windows = reports.size();
      pr.ok = true;
    } catch (const std::exception& e) {
      pr.error = describe(e);
    }
    table.periods.push_back(std::move(pr));
  }
  finish(table);
  return table;
}

namespace {

std::string percent(double x) {
  if (!std::isfinite(x)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << x * 100.0 << '%';
  return os.str();
}

std::string ratio(double x) {
  if (!std::isfinite(x)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << x;
  return os.str();
}

std::string full(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

constexpr int kLabelWidth = 18;
constexpr int kCell = 9;
constexpr int kGroupWidth = 4 * kCell;

std::string period_label(std::size_t i, const Period& p) {
  return "(" + std::to_string(i + 1) + ") " + p.start.iso();
}

void group_cells(std::ostream& os, const PerformanceReport& r) {
  os << " |" << std::setw(kCell) << percent(r.annualized_return) << std::setw(kCell)
     << percent(r.annualized_volatility) << std::setw(kCell) << percent(r.mdd) << std::setw(kCell)
     << ratio(r.sharpe);
}

}  // namespace

void write_text_report(std::ostream& os, const std::string& title,
                       const std::vector<StrategyTable>& tables) {
  os << title << '\n';
  os << std::left << std::setw(kLabelWidth) << "";
  for (const auto& t : tables) os << " | " << std::setw(kGroupWidth - 1) << t.strategy;
  os << '\n' << std::setw(kLabelWidth) << "Period" << std::right;
  for (std::size_t g = 0; g < tables.size(); ++g) {
    os << " |" << std::setw(kCell) << "R" << std::setw(kCell) << "Sigma" << std::setw(kCell) << "MDD"
       << std::setw(kCell) << "Sharpe";
  }
  os << '\n';
  const std::size_t rule = kLabelWidth + tables.size() * (kGroupWidth + 2);
  os << std::string(rule, '-') << '\n';
  const std::size_t rows = tables.empty() ? 0 : tables.front().periods.size();
  for (std::size_t i = 0; i < rows; ++i) {
    os << std::left << std::setw(kLabelWidth) << period_label(i, tables.front().periods[i].period)
       << std::right;
    for (const auto& t : tables) {
      const auto& p = t.periods[i];
      if (p.ok) {
        group_cells(os, p.report);
      } else {
        os << " |" << std::setw(kGroupWidth) << "failed";
      }
    }
    os << '\n';
  }
  os << std::string(rule, '-') << '\n';
  os << std::left << std::setw(kLabelWidth) << "Mean" << std::right;
  for (const auto& t : tables) group_cells(os, t.mean);
  os << '\n';
  for (const auto& t : tables) {
    for (std::size_t i = 0; i < t.periods.size(); ++i) {
      if (!t.periods[i].ok) {
        os << "failed: " << t.strategy << ' ' << period_label(i, t.periods[i].period) << ": "
           << t.periods[i].error << '\n';
      }
    }
  }
}

void write_csv_report(std::ostream& os, const std::vector<StrategyTable>& tables) {
  os << "period,start,end,strategy,status,windows,n_days,annualized_return,annualized_volatility,"
        "sharpe,mdd,cumulative_return,error\n";
  auto row = [&](const std::string& label, const std::string& start, const std::string& end,
                 const std::string& strategy, const std::string& status, std::size_t windows,
                 const PerformanceReport& r, std::string error) {
    // Last column, unquoted: keep it on one line and free of delimiters.
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    os << label << ',' << start << ',' << end << ',' << strategy << ',' << status << ',' << windows
       << ',' << r.n_days << ',' << full(r.annualized_return) << ',' << full(r.annualized_volatility)
       << ',' << full(r.sharpe) << ',' << full(r.mdd) << ',' << full(r.cumulative_return) << ','
       << error << '\n';
  };
  for (const auto& t : tables) {
    for (std::size_t i = 0; i < t.periods.size(); ++i) {
      const auto& p = t.periods[i];
      row(std::to_string(i + 1), p.period.start.iso(), p.period.end.iso(), t.strategy,
          p.ok ? "ok" : "failed", p.windows, p.ok ? p.report : PerformanceReport{}, p.error);
    }
    row("mean", "", "", t.strategy, t.failed == 0 ? "ok" : "partial", t.periods.size() - t.failed,
        t.mean, "");
  }
}

void write_equity_curves(const std::filesystem::path& dir, const std::vector<StrategyTable>& tables) {
  std::filesystem::create_directories(dir);
  for (const auto& t : tables) {
    std::string slug;
    for (char c : t.strategy) slug += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : '_';
    for (std::size_t i = 0; i < t.periods.size(); ++i) {
      const auto& p = t.periods[i];
      if (!p.ok || p.equity.empty()) continue;
      const auto path = dir / ("equity_" + slug + "_" + std::to_string(i + 1) + ".csv");
      std::ofstream os(path, std::ios::trunc);
      if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
      os << "day,value\n";
      for (std::size_t d = 0; d < p.equity.size(); ++d) os << d << ',' << full(p.equity[d]) << '\n';
    }
  }
}

}  // namespace rlpm
