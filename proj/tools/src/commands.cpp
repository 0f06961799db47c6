#include "rlpm_cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "rlpm/error.hpp"

namespace rlpm::cli {

namespace {

ReturnPanel load_returns(const ExperimentConfig& cfg) {
  if (!std::filesystem::exists(cfg.data.prices)) {
    throw Error(ErrorKind::Io, "price file not found: " + cfg.data.prices.string());
  }
  const auto panel = load_price_panel(cfg.data.prices, cfg.data.schema);
  return daily_returns(panel);
}

RepresentativeSet load_regimes(const Artifacts& a, const ReturnPanel& rp) {
  if (!std::filesystem::exists(a.representatives())) {
    throw Error(ErrorKind::Io, "missing " + a.representatives().string() + " (run analyze first)");
  }
  auto rs = load_representatives(a.representatives());
  if (rs.asset_ids != rp.asset_ids) {
    throw Error(ErrorKind::ArtifactFormat, a.representatives().string() + " was built for different assets");
  }
  return rs;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return os;
}

void write_curve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  auto os = open_out(path);
  os << "env_steps,episodes,loss,mean_episode_sharpe\n" << std::setprecision(17);
  for (const auto& p : curve) os << p.env_steps << ',' << p.episodes << ',' << p.loss << ',' << p.mean_episode_sharpe << '\n';
}

ActionSet extract_actions(const ExperimentConfig& cfg, const ReturnPanel& rp) {
  const auto labeling = updown_points(market_proxy_returns(rp), cfg.action_space.k_window, cfg.action_space.alpha);
  const auto intervals = updown_intervals(labeling, cfg.action_space.min_len);
  return extract_action_set(intervals, rp, cfg.action_space.extract);
}

std::string mode_name(bool rolling) { return rolling ? "rolling" : "fixed"; }

std::string csv_field(std::istringstream& row) {
  std::string cell;
  std::getline(row, cell, ',');
  return cell;
}

double csv_number(const std::string& s) {
  if (s.empty() || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

/// Inverse of write_csv_report, enough to re-render the text tables.
std::vector<StrategyTable> read_csv_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<StrategyTable> tables;
  std::map<std::string, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    const auto label = csv_field(row), start = csv_field(row), end = csv_field(row);
    const auto strategy = csv_field(row), status = csv_field(row);
    PerformanceReport r;
    std::size_t windows = 0;
    try {
      windows = std::stoul(csv_field(row));
      r.n_days = std::stoul(csv_field(row));
      r.annualized_return = csv_number(csv_field(row));
      r.annualized_volatility = csv_number(csv_field(row));
      r.sharpe = csv_number(csv_field(row));
      r.mdd = csv_number(csv_field(row));
      r.cumulative_return = csv_number(csv_field(row));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::ArtifactFormat, path.string() + ":" + std::to_string(lineno) + ": bad numeric field");
    }
    std::string error;
    std::getline(row, error);
    auto [it, fresh] = index.emplace(strategy, tables.size());
    if (fresh) tables.push_back(StrategyTable{strategy, {}, {}, 0});
    auto& t = tables[it->second];
    if (label == "mean") {
      t.mean = r;
      continue;
    }
    PeriodResult p;
    const auto a = Date::parse(start), b = Date::parse(end);
    if (!a || !b) throw Error(ErrorKind::ArtifactFormat, path.string() + ":" + std::to_string(lineno) + ": bad date");
    p.period = {*a, *b};
    p.ok = status == "ok";
    p.windows = windows;
    p.report = r;
    p.error = error;
    if (!p.ok) ++t.failed;
    t.periods.push_back(std::move(p));
  }
  return tables;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return kExitRuntime;
  switch (err->kind()) {
    case ErrorKind::MalformedFile:
    case ErrorKind::NonPositivePrice:
    case ErrorKind::TooFewAssets:
    case ErrorKind::TooShortHistory:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::InvalidK:
    case ErrorKind::InvalidArgument:
    case ErrorKind::GridTooFine:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::ArtifactFormat:
    case ErrorKind::Io:
    case ErrorKind::Config:
      return kExitInvalid;
    default:
      return kExitRuntime;
  }
}

int cmd_analyze(const ExperimentConfig& cfg, std::ostream& out) {
  const Artifacts a{cfg.output};
  const auto rp = load_returns(cfg);
  std::filesystem::create_directories(a.root);
  const auto cms = build_cms(rp, cfg.rcme.window, cfg.rcme.stride);
  const auto cmdm = build_cmdm(cms, cfg.jobs);
  const auto ca = cluster(cmdm, cfg.rcme.k, cfg.rcme.linkage, cms.anchor_times);
  auto rs = representative_matrices(ca, cms);
  rs.asset_ids = rp.asset_ids;
  save_representatives(rs, a.representatives());

  std::ostringstream report;
  report << "assets " << rp.assets() << ", return days " << rp.days() << ", rolling matrices " << cms.size()
         << " (window " << cfg.rcme.window << ", stride " << cfg.rcme.stride << ")\n";
  report << "linkage " << to_string(cfg.rcme.linkage) << ", K = " << cfg.rcme.k << '\n';
  for (std::size_t c = 0; c < rs.size(); ++c) {
    report << "regime " << c << ": " << rs.member_times[c].size() << " members, " << rp.dates[rs.member_times[c].front()].iso()
           << " .. " << rp.dates[rs.member_times[c].back()].iso() << '\n';
  }
  // The top merges are what a choice of K cuts through.
  const auto& h = ca.merge_heights;
  const std::size_t shown = std::min<std::size_t>(h.size(), 10);
  report << "dendrogram heights (last " << shown << " merges, clusters before merge):\n";
  report << std::fixed << std::setprecision(6);
  for (std::size_t j = h.size() - shown; j < h.size(); ++j) {
    const std::size_t before = h.size() + 1 - j;
    report << "  " << std::setw(3) << before << " -> " << std::setw(3) << before - 1 << "  " << h[j]
           << (before == cfg.rcme.k ? "   <- cut" : "") << '\n';
  }
  auto os = open_out(a.regimes_report());
  os << report.str();
  out << report.str() << "wrote " << a.representatives().string() << '\n';
  return kExitOk;
}

int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out) {
  const Artifacts a{cfg.output};
  const auto rp = load_returns(cfg);
  const auto rs = load_regimes(a, rp);
  std::filesystem::create_directories(a.simulated());
  std::size_t files = 0;
  for (std::size_t r = 0; r < rs.size(); ++r) {
    SimulationConfig sim = cfg.simulator;
    sim.base_seed = cfg.simulator.base_seed + r * cfg.simulator.n_paths;
    for (const auto& panel : generate_dataset(r, rs, rp, sim, cfg.jobs)) {
      dump_panel(panel, rp.asset_ids, a.simulated());
      ++files;
    }
  }
  out << "wrote " << files << " simulated panels to " << a.simulated().string() << '\n';
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  const Artifacts a{cfg.output};
  const auto rp = load_returns(cfg);
  const auto rs = load_regimes(a, rp);
  const auto actions = std::make_shared<const ActionSet>(extract_actions(cfg, rp));
  save_action_set(*actions, a.actions());
  out << "action set: " << actions->size() << " actions on a " << actions->grid_step_bp << " bp grid\n";

  PoolConfig pc;
  pc.models_per_representative = cfg.models_per_representative;
  pc.train = cfg.train;
  pc.simulation = cfg.simulator;
  pc.env = cfg.env;
  PoolBuildReport report;
  int code = kExitOk;
  try {
    const auto pool = build_model_pool(rs, rp, actions, pc, cfg.jobs, &report);
    save_model_pool(pool, a.pool());
    save_model_pool_metadata(pool, a.pool_metadata());
    std::filesystem::create_directories(a.curves());
    std::size_t j = 0;
    for (std::size_t r = 0; r < pool.representatives(); ++r) {
      out << "regime " << r << ": " << pool.sub_pools[r].size() << " of " << pool.models_per_representative
          << " models trained\n";
      for (const auto& m : pool.sub_pools[r]) {
        if (j < report.curves.size()) {
          write_curve(a.curves() / ("curve_r" + std::to_string(r) + "_m" + std::to_string(m.index) + ".csv"),
                      report.curves[j]);
        }
        ++j;
      }
    }
    out << "wrote " << a.pool().string() << '\n';
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyModelPool) throw;
    err << e.what() << '\n';
    code = kExitRuntime;
  }
  for (const auto& f : report.failures) err << "training failure: " << f << '\n';
  return code;
}

int cmd_backtest(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  const Artifacts a{cfg.output};
  const auto rp = load_returns(cfg);
  std::vector<std::string> ids = cfg.evaluation.strategies;
  if (ids.empty()) {
    ids = {"markowitz", "risk_budgeting", "equal_weight"};
    if (std::filesystem::exists(a.pool())) ids.push_back("model");
  }
  std::vector<std::unique_ptr<Strategy>> strategies;
  for (const auto& id : ids) {
    if (id == "markowitz") {
      strategies.push_back(std::make_unique<MomentStrategy>(AllocatorId::Markowitz, cfg.moment_window));
    } else if (id == "risk_budgeting") {
      strategies.push_back(std::make_unique<MomentStrategy>(AllocatorId::RiskParity, cfg.moment_window));
    } else if (id == "equal_weight") {
      strategies.push_back(std::make_unique<EqualWeightStrategy>());
    } else {
      auto rs = std::make_shared<const RepresentativeSet>(load_regimes(a, rp));
      if (!std::filesystem::exists(a.pool())) {
        throw Error(ErrorKind::Io, "missing " + a.pool().string() + " (run train first)");
      }
      auto actions = std::make_shared<const ActionSet>(load_action_set(a.actions()));
      auto pool = std::make_shared<const ModelPool>(load_model_pool(a.pool()));
      strategies.push_back(std::make_unique<ModelStrategy>(pool, rs, actions));
    }
  }

  ExperimentSpec spec;
  spec.periods = cfg.evaluation.periods;
  spec.management_horizon = cfg.evaluation.horizon;
  spec.decision_stride = cfg.env.decision_stride;
  spec.jobs = cfg.jobs;
  spec.validate();

  std::filesystem::create_directories(a.root);
  bool any_failed = false;
  for (bool rolling : {false, true}) {
    if (rolling && cfg.evaluation.mode == EvalMode::Fixed) continue;
    if (!rolling && cfg.evaluation.mode == EvalMode::Rolling) continue;
    spec.rolling = rolling;
    std::vector<StrategyTable> tables;
    for (const auto& s : strategies) {
      tables.push_back(rolling ? run_daily_rolling(*s, rp, spec) : run_backtest(*s, rp, spec));
      any_failed = any_failed || tables.back().failed > 0;
    }
    const std::string title = rolling ? "Experiment Result, Daily Rolling" : "Experiment Result, Not Rolling";
    std::ostringstream text;
    write_text_report(text, title, tables);
    open_out(a.report_text(mode_name(rolling))) << text.str();
    auto csv = open_out(a.report_csv(mode_name(rolling)));
    write_csv_report(csv, tables);
    if (!rolling) write_equity_curves(a.equity(), tables);
    out << text.str() << '\n';
  }
  if (any_failed) err << "some periods failed; see the failed: lines above\n";
  return any_failed ? kExitRuntime : kExitOk;
}

int cmd_report(const ExperimentConfig& cfg, std::ostream& out) {
  const Artifacts a{cfg.output};
  bool found = false;
  for (bool rolling : {false, true}) {
    const auto path = a.report_csv(mode_name(rolling));
    if (!std::filesystem::exists(path)) continue;
    found = true;
    write_text_report(out, rolling ? "Experiment Result, Daily Rolling" : "Experiment Result, Not Rolling",
                      read_csv_report(path));
    out << '\n';
  }
  if (!found) throw Error(ErrorKind::Io, "no reports under " + a.root.string() + " (run backtest first)");
  return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regime-aware reinforcement learning portfolio experiments", "rlpm"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs{
      {"analyze", "Extract correlation regimes and write the representative set"},
      {"simulate", "Dump the simulated training panels for every regime"},
      {"train", "Extract the action set and train the model pool"},
      {"backtest", "Run fixed and/or daily-rolling backtests and write reports"},
      {"report", "Re-render text tables from the CSV reports"},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "Experiment configuration (INI)")->required();
    sub->add_option("--jobs", jobs, "Worker thread cap");
    sub->add_option("--seed", seed, "Seed for simulation, action sampling and training");
    sub->add_option("--out", out_dir, "Output directory");
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto cfg = load_config(config_path);
    if (jobs) cfg.jobs = *jobs;
    if (seed) override_seed(cfg, *seed);
    if (out_dir) cfg.output = *out_dir;
    cfg.validate();
    if (command == "analyze") return cmd_analyze(cfg, out);
    if (command == "simulate") return cmd_simulate(cfg, out);
    if (command == "train") return cmd_train(cfg, out, err);
    if (command == "backtest") return cmd_backtest(cfg, out, err);
    return cmd_report(cfg, out);
  } catch (const std::exception& e) {
    err << "rlpm " << command << ": " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace rlpm::cli
