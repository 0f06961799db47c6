#include "rlpm/action_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "rlpm/error.hpp"
#include "rlpm/rng.hpp"
#include "rlpm/stats.hpp"

namespace rlpm {

std::string to_string(Trend trend) {
  switch (trend) {
    case Trend::Up: return "up";
    case Trend::Down: return "down";
    case Trend::Neutral: return "neutral";
  }
  return "neutral";
}

std::vector<double> WeightVector::fractions() const {
  std::vector<double> out(bp.size());
  for (std::size_t i = 0; i < bp.size(); ++i) {
    out[i] = static_cast<double>(bp[i]) / kBasisPointsPerUnit;
  }
  return out;
}

std::uint64_t binomial(std::uint64_t a, std::uint64_t b) {
  if (b > a) return 0;
  b = std::min(b, a - b);
  constexpr unsigned __int128 kLimit = static_cast<unsigned __int128>(1) << 63;
  unsigned __int128 result = 1;
  for (std::uint64_t i = 1; i <= b; ++i) {
    result = result * (a - b + i) / i;  // exact: product of i consecutive integers / i!
    if (result >= kLimit) {
      throw Error(ErrorKind::GridTooFine, "weight grid size exceeds 2^63");
    }
  }
  return static_cast<std::uint64_t>(result);
}

namespace {

/// Compositions of `units` into `parts` non-negative parts.
std::uint64_t compositions(std::int64_t units, std::size_t parts) {
  if (units < 0) return 0;
  return binomial(static_cast<std::uint64_t>(units) + parts - 1, parts - 1);
}

}  // namespace

WeightGrid::WeightGrid(std::int32_t step_bp, std::size_t n_assets)
    : step_(step_bp), n_(n_assets) {
  if (step_bp <= 0 || step_bp > kBasisPointsPerUnit || kBasisPointsPerUnit % step_bp != 0) {
    throw Error(ErrorKind::InvalidArgument,
                "grid step " + std::to_string(step_bp) + " bp must divide 10000");
  }
  if (n_assets < 1) {
    throw Error(ErrorKind::InvalidArgument, "weight grid needs at least one asset");
  }
  units_ = kBasisPointsPerUnit / step_bp;
  size_ = compositions(units_, n_);
}

WeightVector WeightGrid::at(std::uint64_t rank) const {
  if (rank >= size_) {
    throw Error(ErrorKind::InvalidArgument, "grid rank out of range");
  }
  WeightVector w;
  w.bp.resize(n_);
  std::int64_t rem = units_;
  for (std::size_t i = 0; i + 1 < n_; ++i) {
    const std::size_t tail = n_ - i - 1;
    // Vectors with w_i < a number total(rem) - compositions(rem - a, tail + 1).
    const std::uint64_t total = compositions(rem, tail + 1);
    std::int64_t lo = 0;
    std::int64_t hi = rem;
    while (lo < hi) {
      const std::int64_t mid = lo + (hi - lo + 1) / 2;
      const std::uint64_t below = total - compositions(rem - mid, tail + 1);
      if (below <= rank) {
        lo = mid;
      } else {
        hi = mid - 1;
      }
    }
    rank -= total - compositions(rem - lo, tail + 1);
    w.bp[i] = static_cast<std::int32_t>(lo) * step_;
    rem -= lo;
  }
  w.bp[n_ - 1] = static_cast<std::int32_t>(rem) * step_;
  return w;
}

std::uint64_t WeightGrid::rank_of(const WeightVector& w) const {
  if (w.bp.size() != n_) {
    throw Error(ErrorKind::DimensionMismatch, "weight vector length does not match grid");
  }
  std::uint64_t rank = 0;
  std::int64_t rem = units_;
  for (std::size_t i = 0; i + 1 < n_; ++i) {
    if (w.bp[i] < 0 || w.bp[i] % step_ != 0) {
      throw Error(ErrorKind::InvalidArgument, "weight not on grid");
    }
    const std::int64_t a = w.bp[i] / step_;
    const std::size_t tail = n_ - i - 1;
    rank += compositions(rem, tail + 1) - compositions(rem - a, tail + 1);
    rem -= a;
  }
  if (rem < 0 || static_cast<std::int64_t>(w.bp[n_ - 1]) != rem * step_) {
    throw Error(ErrorKind::InvalidArgument, "weights do not sum to 10000 bp");
  }
  return rank;
}

UpDownLabeling updown_points(const std::vector<double>& ref_returns, std::size_t k_window,
                             double alpha) {
  if (k_window < 1 || ref_returns.size() < k_window) {
    throw Error(ErrorKind::InsufficientHistory,
                "reference series of " + std::to_string(ref_returns.size()) +
                    " returns is shorter than k_window " + std::to_string(k_window));
  }
  UpDownLabeling out;
  out.k_window = k_window;
  out.alpha = alpha;
  out.labels.assign(ref_returns.size(), Trend::Neutral);
  for (std::size_t t = k_window - 1; t < ref_returns.size(); ++t) {
    double sum = 0.0;
    for (std::size_t s = t + 1 - k_window; s <= t; ++s) sum += ref_returns[s];
    const double avg = sum / static_cast<double>(k_window);
    if (avg >= alpha) {
      out.labels[t] = Trend::Up;
    } else if (avg <= -alpha) {
      out.labels[t] = Trend::Down;
    }
  }
  return out;
}

std::vector<MarketInterval> updown_intervals(const UpDownLabeling& labeling, std::size_t min_len) {
  std::vector<MarketInterval> out;
  const auto& labels = labeling.labels;
  std::size_t t = 0;
  while (t < labels.size()) {
    std::size_t end = t;
    while (end + 1 < labels.size() && labels[end + 1] == labels[t]) ++end;
    if (labels[t] != Trend::Neutral && end - t + 1 >= min_len) {
      out.push_back({t, end, labels[t]});
    }
    t = end + 1;
  }
  if (out.empty()) {
    throw Error(ErrorKind::NoIntervalsFound,
                "no up/down run of at least " + std::to_string(min_len) +
                    " days; consider a smaller alpha or min_len");
  }
  return out;
}

std::vector<double> market_proxy_returns(const ReturnPanel& rp) {
  std::vector<double> out(rp.days());
  for (std::size_t t = 0; t < rp.days(); ++t) {
    out[t] = rp.returns.row(static_cast<Eigen::Index>(t)).mean();
  }
  return out;
}

std::vector<std::uint64_t> sample_ranks(std::uint64_t population, const SampleSpec& spec) {
  if (!(spec.fraction > 0.0 && spec.fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "sample fraction must lie in (0, 1]");
  }
  // Snap products that are integers up to representation error (0.01 * 1e6).
  const long double exact = static_cast<long double>(spec.fraction) * static_cast<long double>(population);
  const long double nearest = std::round(exact);
  const long double wanted = std::abs(exact - nearest) <= 1e-9L * std::max(1.0L, exact) ? nearest : std::ceil(exact);
  std::uint64_t count = std::max<std::uint64_t>(spec.floor, static_cast<std::uint64_t>(wanted));
  count = std::min(count, population);

  std::vector<std::uint64_t> ranks;
  if (count == population) {
    ranks.resize(count);
    std::iota(ranks.begin(), ranks.end(), std::uint64_t{0});
    return ranks;
  }
  // Floyd's algorithm: exactly `count` draws, uniform over all subsets.
  CounterRng rng(spec.seed, 0x5eed);
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(count * 2);
  for (std::uint64_t j = population - count; j < population; ++j) {
    const std::uint64_t t = rng.uniform_int(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  ranks.assign(chosen.begin(), chosen.end());
  std::sort(ranks.begin(), ranks.end());
  return ranks;
}

std::vector<WeightVector> sample_vectors(const WeightGrid& grid, const SampleSpec& spec) {
  const auto ranks = sample_ranks(grid.size(), spec);
  std::vector<WeightVector> out;
  out.reserve(ranks.size());
  for (auto r : ranks) out.push_back(grid.at(r));
  return out;
}

IntervalMoments interval_moments(const ReturnPanel& rp, const MarketInterval& interval,
                                 const WeightVector& w) {
  if (interval.end >= rp.days() || interval.start > interval.end) {
    throw Error(ErrorKind::InvalidArgument, "interval outside the return panel");
  }
  if (w.bp.size() != rp.assets()) {
    throw Error(ErrorKind::DimensionMismatch, "weight vector length does not match panel");
  }
  std::vector<double> pr(interval.length());
  const auto f = w.fractions();
  for (std::size_t t = interval.start; t <= interval.end; ++t) {
    double r = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      r += f[i] * rp.returns(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
    }
    pr[t - interval.start] = r;
  }
  return {mean(pr) * kTradingDaysPerYear, sample_std(pr) * std::sqrt(kTradingDaysPerYear)};
}

ActionSet extract_action_set(const std::vector<MarketInterval>& intervals, const ReturnPanel& rp,
                             const ActionSpaceConfig& cfg) {
  if (intervals.empty()) {
    throw Error(ErrorKind::NoIntervalsFound, "no intervals to extract actions from");
  }
  if (cfg.top_i < 1) {
    throw Error(ErrorKind::InvalidArgument, "top_i must be at least 1");
  }
  const WeightGrid grid(cfg.grid_step_bp, rp.assets());
  ActionSet out;
  out.grid_step_bp = cfg.grid_step_bp;

  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const auto& iv = intervals[k];
    if (iv.end >= rp.days() || iv.length() < 2) {
      throw Error(ErrorKind::InvalidArgument,
                  "interval " + std::to_string(iv.start) + ".." + std::to_string(iv.end) +
                      " must lie inside the panel and span at least 2 days");
    }
    SampleSpec spec = cfg.sample;
    spec.seed = derive_seed(cfg.sample.seed, k);
    const auto ranks = sample_ranks(grid.size(), spec);

    // Constant-weight portfolio returns of every sampled vector at once.
    const Eigen::Index len = static_cast<Eigen::Index>(iv.length());
    const Eigen::MatrixXd r = rp.returns.middleRows(static_cast<Eigen::Index>(iv.start), len);
    Eigen::MatrixXd weights(r.cols(), static_cast<Eigen::Index>(ranks.size()));
    for (std::size_t s = 0; s < ranks.size(); ++s) {
      const auto w = grid.at(ranks[s]);
      for (std::size_t i = 0; i < w.bp.size(); ++i) {
        weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) =
            static_cast<double>(w.bp[i]) / kBasisPointsPerUnit;
      }
    }
    const Eigen::MatrixXd pr = r * weights;
    std::vector<double> scores(ranks.size());
    std::vector<double> column(static_cast<std::size_t>(len));
    for (std::size_t s = 0; s < ranks.size(); ++s) {
      for (Eigen::Index t = 0; t < len; ++t) {
        column[static_cast<std::size_t>(t)] = pr(t, static_cast<Eigen::Index>(s));
      }
      scores[s] = action_evaluation(mean(column) * kTradingDaysPerYear,
                                    sample_std(column) * std::sqrt(kTradingDaysPerYear),
                                    cfg.k_control);
    }

    std::vector<std::size_t> order(ranks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t keep = std::min(cfg.top_i, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (scores[a] != scores[b]) return scores[a] > scores[b];
                        return ranks[a] < ranks[b];
                      });
    for (std::size_t j = 0; j < keep; ++j) {
      auto w = grid.at(ranks[order[j]]);
      if (std::find(out.actions.begin(), out.actions.end(), w) != out.actions.end()) continue;
      out.actions.push_back(std::move(w));
      out.provenance.push_back({iv, scores[order[j]], ranks[order[j]]});
    }
  }
  return out;
}

namespace {
constexpr const char* kActionFormat = "rlpm-actions";
constexpr int kActionVersion = 1;
}  // namespace

void save_action_set(const ActionSet& actions, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "# one weight vector per line in basis points; '#' fields are provenance\n";
  out << "format " << kActionFormat << ' ' << kActionVersion << '\n';
  out << "n " << actions.assets() << '\n';
  out << "grid_step " << actions.grid_step_bp << '\n';
  out << "count " << actions.size() << '\n';
  for (std::size_t a = 0; a < actions.size(); ++a) {
    const auto& w = actions.actions[a];
    for (std::size_t i = 0; i < w.bp.size(); ++i) out << (i ? " " : "") << w.bp[i];
    if (a < actions.provenance.size()) {
      const auto& p = actions.provenance[a];
      out << " # interval=" << p.interval.start << '-' << p.interval.end
          << " direction=" << to_string(p.interval.direction) << " rank=" << p.rank
          << " score=" << std::setprecision(17) << p.score;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

ActionSet load_action_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::ArtifactFormat, path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  std::string line;
  auto next = [&]() -> std::string {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line[0] != '#') return line;
    }
    fail("unexpected end of file");
    return {};
  };
  auto header = [&](const std::string& key) {
    std::istringstream ss(next());
    std::string k;
    long long v = 0;
    if (!(ss >> k) || k != key || !(ss >> v) || v < 0) fail("expected '" + key + " <value>'");
    return v;
  };
  {
    std::istringstream ss(next());
    std::string k, name;
    int version = 0;
    if (!(ss >> k >> name >> version) || k != "format" || name != kActionFormat ||
        version != kActionVersion) {
      fail("not an " + std::string(kActionFormat) + " v1 file");
    }
  }
  ActionSet set;
  const auto n = static_cast<std::size_t>(header("n"));
  set.grid_step_bp = static_cast<std::int32_t>(header("grid_step"));
  const auto count = static_cast<std::size_t>(header("count"));
  if (n == 0 || count == 0) fail("empty action set");
  for (std::size_t a = 0; a < count; ++a) {
    std::string body = next();
    const auto hash = body.find('#');
    if (hash != std::string::npos) body.resize(hash);
    std::istringstream ss(body);
    WeightVector w;
    std::int32_t v = 0;
    while (ss >> v) w.bp.push_back(v);
    if (w.bp.size() != n) fail("expected " + std::to_string(n) + " weights");
    if (std::any_of(w.bp.begin(), w.bp.end(), [](std::int32_t x) { return x < 0; }) ||
        std::accumulate(w.bp.begin(), w.bp.end(), 0) != kBasisPointsPerUnit) {
      fail("weights must be non-negative and sum to 10000 bp");
    }
    if (std::find(set.actions.begin(), set.actions.end(), w) != set.actions.end()) {
      fail("duplicate action");
    }
    set.actions.push_back(std::move(w));
  }
  return set;
}

}  // namespace rlpm
