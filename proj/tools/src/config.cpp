#include "rlpm_cli/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "rlpm/error.hpp"

namespace rlpm::cli {

namespace pt = boost::property_tree;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw Error(ErrorKind::Config, field + ": " + what);
}

std::string trim(std::string s) {
  auto space = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), space));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"data", {"prices", "date_column", "assets", "delimiter"}},
      {"rcme", {"window", "stride", "linkage", "k"}},
      {"simulator", {"n_paths", "horizon", "dt", "seed"}},
      {"action_space",
       {"k_window", "alpha", "min_len", "grid_step_bp", "fraction", "floor", "k_control", "top_i", "seed"}},
      {"env", {"decision_stride", "episode_horizon", "reward_mode", "cost_bps"}},
      {"train",
       {"gamma", "learning_rate", "entropy_coef", "value_coef", "rollout", "workers", "total_steps",
        "grad_clip", "seed", "mode", "models_per_representative"}},
      {"benchmarks", {"moment_window"}},
      {"evaluation", {"periods", "horizon", "mode", "strategies"}},
      {"output", {"dir"}},
      {"run", {"jobs"}},
  };
  return keys;
}

class Fields {
 public:
  explicit Fields(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <class T>
  void read(const std::string& section, const std::string& key, T& out) const {
    const auto v = raw(section, key);
    if (!v) return;
    const std::string field = section + "." + key;
    if constexpr (std::is_same_v<T, double>) {
      double x = 0.0;
      const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
      if (ec != std::errc{} || p != v->data() + v->size()) fail(field, "expected a number, got '" + *v + "'");
      out = x;
    } else {
      std::uint64_t x = 0;
      const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
      if (ec != std::errc{} || p != v->data() + v->size()) {
        fail(field, "expected a non-negative integer, got '" + *v + "'");
      }
      if constexpr (std::is_same_v<T, std::int32_t>) {
        if (x > 10000) fail(field, "value " + *v + " out of range");
      }
      out = static_cast<T>(x);
    }
  }

 private:
  const pt::ptree& tree_;
};

Period parse_period(const std::string& text, const std::string& field) {
  const auto parts = split(text, ':');
  if (parts.size() != 2) fail(field, "period '" + text + "' is not START:END");
  const auto a = Date::parse(parts[0]);
  const auto b = Date::parse(parts[1]);
  if (!a || !b) fail(field, "period '" + text + "' has an invalid ISO date");
  return {*a, *b};
}

void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) fail(field, what);
}

}  // namespace

std::vector<std::string> strategy_ids() { return {"markowitz", "risk_budgeting", "equal_weight", "model"}; }

ExperimentConfig load_config(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    if (e.line() == 0) throw Error(ErrorKind::Io, "cannot read config " + path.string() + ": " + e.message());
    throw Error(ErrorKind::Config, path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (!body.data().empty() && body.empty()) fail(section, "key outside any section");
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) fail(section, "unknown section");
    for (const auto& [key, value] : body) {
      (void)value;
      if (!it->second.count(key)) fail(section + "." + key, "unknown key");
    }
  }

  const Fields f(tree);
  ExperimentConfig cfg;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  if (auto v = f.raw("data", "prices")) cfg.data.prices = resolve(*v);
  if (auto v = f.raw("data", "date_column")) cfg.data.schema.date_column = *v;
  if (auto v = f.raw("data", "assets")) cfg.data.schema.asset_columns = split(*v, ',');
  if (auto v = f.raw("data", "delimiter")) {
    const auto d = lower(*v);
    if (d == "tab" || d == "\\t") cfg.data.schema.delimiter = '\t';
    else if (d == "comma" || d == ",") cfg.data.schema.delimiter = ',';
    else if (d == "semicolon" || d == ";") cfg.data.schema.delimiter = ';';
    else if (d.size() == 1) cfg.data.schema.delimiter = d[0];
    else fail("data.delimiter", "expected a single character, 'tab' or 'comma'");
  }

  f.read("rcme", "window", cfg.rcme.window);
  f.read("rcme", "stride", cfg.rcme.stride);
  f.read("rcme", "k", cfg.rcme.k);
  if (auto v = f.raw("rcme", "linkage")) {
    try {
      cfg.rcme.linkage = parse_linkage(lower(*v));
    } catch (const Error&) {
      fail("rcme.linkage", "expected single, complete or average, got '" + *v + "'");
    }
  }

  f.read("simulator", "n_paths", cfg.simulator.n_paths);
  f.read("simulator", "horizon", cfg.simulator.horizon);
  f.read("simulator", "dt", cfg.simulator.dt);
  f.read("simulator", "seed", cfg.simulator.base_seed);

  auto& as = cfg.action_space;
  f.read("action_space", "k_window", as.k_window);
  f.read("action_space", "alpha", as.alpha);
  f.read("action_space", "min_len", as.min_len);
  f.read("action_space", "grid_step_bp", as.extract.grid_step_bp);
  f.read("action_space", "fraction", as.extract.sample.fraction);
  f.read("action_space", "floor", as.extract.sample.floor);
  f.read("action_space", "k_control", as.extract.k_control);
  f.read("action_space", "top_i", as.extract.top_i);
  f.read("action_space", "seed", as.extract.sample.seed);

  f.read("env", "decision_stride", cfg.env.decision_stride);
  f.read("env", "episode_horizon", cfg.env.episode_horizon);
  f.read("env", "cost_bps", cfg.env.cost_bps);
  if (auto v = f.raw("env", "reward_mode")) {
    const auto m = lower(*v);
    if (m == "trailing") cfg.env.reward_mode = RewardMode::Trailing;
    else if (m == "terminal") cfg.env.reward_mode = RewardMode::Terminal;
    else fail("env.reward_mode", "expected trailing or terminal, got '" + *v + "'");
  }

  auto& t = cfg.train;
  f.read("train", "gamma", t.gamma);
  f.read("train", "learning_rate", t.learning_rate);
  f.read("train", "entropy_coef", t.entropy_coef);
  f.read("train", "value_coef", t.value_coef);
  f.read("train", "rollout", t.rollout);
  f.read("train", "workers", t.workers);
  f.read("train", "total_steps", t.total_steps);
  f.read("train", "grad_clip", t.grad_clip);
  f.read("train", "seed", t.seed);
  f.read("train", "models_per_representative", cfg.models_per_representative);
  if (auto v = f.raw("train", "mode")) {
    const auto m = lower(*v);
    if (m == "sync" || m == "synchronous") t.mode = TrainMode::Synchronous;
    else if (m == "async" || m == "asynchronous") t.mode = TrainMode::Asynchronous;
    else fail("train.mode", "expected sync or async, got '" + *v + "'");
  }

  f.read("benchmarks", "moment_window", cfg.moment_window);

  auto& ev = cfg.evaluation;
  if (auto v = f.raw("evaluation", "periods")) {
    if (lower(*v) != "default") {
      ev.periods.clear();
      for (const auto& p : split(*v, ';')) ev.periods.push_back(parse_period(p, "evaluation.periods"));
    }
  }
  f.read("evaluation", "horizon", ev.horizon);
  if (auto v = f.raw("evaluation", "mode")) {
    const auto m = lower(*v);
    if (m == "fixed") ev.mode = EvalMode::Fixed;
    else if (m == "rolling") ev.mode = EvalMode::Rolling;
    else if (m == "both") ev.mode = EvalMode::Both;
    else fail("evaluation.mode", "expected fixed, rolling or both, got '" + *v + "'");
  }
  if (auto v = f.raw("evaluation", "strategies")) {
    for (const auto& s : split(*v, ',')) {
      const auto id = lower(s);
      const auto ids = strategy_ids();
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
        fail("evaluation.strategies", "unknown strategy '" + s + "'");
      }
      ev.strategies.push_back(id);
    }
  }

  if (auto v = f.raw("output", "dir")) cfg.output = resolve(*v);
  else cfg.output = resolve("out");
  f.read("run", "jobs", cfg.jobs);

  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  check(!data.prices.empty(), "data.prices", "missing price file path");
  check(rcme.window >= 2, "rcme.window", "must be at least 2");
  check(rcme.stride >= 1, "rcme.stride", "must be at least 1");
  check(rcme.k >= 1, "rcme.k", "must be at least 1");
  check(simulator.n_paths >= 1, "simulator.n_paths", "must be at least 1");
  check(simulator.horizon >= 1, "simulator.horizon", "must be at least 1");
  check(simulator.dt > 0.0 && simulator.dt <= 1.0, "simulator.dt", "must lie in (0, 1] years");
  check(action_space.k_window >= 1, "action_space.k_window", "must be at least 1");
  check(action_space.alpha >= 0.0, "action_space.alpha", "must be non-negative");
  check(action_space.min_len >= 1, "action_space.min_len", "must be at least 1");
  const auto step = action_space.extract.grid_step_bp;
  check(step >= 1 && step <= kBasisPointsPerUnit && kBasisPointsPerUnit % step == 0,
        "action_space.grid_step_bp", "must divide 10000");
  check(action_space.extract.sample.fraction > 0.0 && action_space.extract.sample.fraction <= 1.0,
        "action_space.fraction", "must lie in (0, 1]");
  check(action_space.extract.k_control >= 0.0, "action_space.k_control", "must be non-negative");
  check(action_space.extract.top_i >= 1, "action_space.top_i", "must be at least 1");
  check(env.decision_stride >= 1, "env.decision_stride", "must be at least 1");
  check(env.episode_horizon >= 1, "env.episode_horizon", "must be at least 1");
  check(env.cost_bps >= 0.0, "env.cost_bps", "must be non-negative");
  check(train.gamma > 0.0 && train.gamma <= 1.0, "train.gamma", "must lie in (0, 1]");
  check(train.learning_rate > 0.0, "train.learning_rate", "must be positive");
  check(train.entropy_coef >= 0.0, "train.entropy_coef", "must be non-negative");
  check(train.value_coef >= 0.0, "train.value_coef", "must be non-negative");
  check(train.rollout >= 1, "train.rollout", "must be at least 1");
  check(train.workers >= 1, "train.workers", "must be at least 1");
  check(train.grad_clip > 0.0, "train.grad_clip", "must be positive");
  check(models_per_representative >= 1, "train.models_per_representative", "must be at least 1");
  check(models_per_representative <= simulator.n_paths, "train.models_per_representative",
        "cannot exceed simulator.n_paths");
  check(moment_window >= 2, "benchmarks.moment_window", "must be at least 2");
  check(!evaluation.periods.empty(), "evaluation.periods", "at least one period is required");
  for (const auto& p : evaluation.periods) {
    check(p.start < p.end, "evaluation.periods", "period " + p.start.iso() + ":" + p.end.iso() + " is empty");
  }
  check(evaluation.horizon >= 1, "evaluation.horizon", "must be at least 1");
  check(jobs >= 1, "run.jobs", "must be at least 1");
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.simulator.base_seed = seed;
  cfg.action_space.extract.sample.seed = seed;
  cfg.train.seed = seed;
}

}  // namespace rlpm::cli
