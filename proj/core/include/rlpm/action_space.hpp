#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rlpm/market_data.hpp"

namespace rlpm {

inline constexpr std::int32_t kBasisPointsPerUnit = 10000;

enum class Trend { Up, Down, Neutral };

std::string to_string(Trend trend);

struct UpDownLabeling {
  std::vector<Trend> labels;  // one per input return; Neutral before k_window-1
  std::size_t k_window = 20;
  double alpha = 0.001;

  std::size_t first_labeled() const { return k_window - 1; }
};

struct MarketInterval {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive
  Trend direction = Trend::Up;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const MarketInterval&, const MarketInterval&) = default;
};

/// Long-only allocation on a basis-point grid; the entries always sum to 10000.
struct WeightVector {
  std::vector<std::int32_t> bp;

  std::vector<double> fractions() const;
  friend bool operator==(const WeightVector&, const WeightVector&) = default;
  friend auto operator<=>(const WeightVector&, const WeightVector&) = default;
};

/// All grid vectors {w : w_i in {0, step, .., 10000} bp, sum w = 10000 bp}
/// in lexicographic order of (w_0, w_1, ...). Nothing is materialized;
/// `at(rank)` decodes a rank with O(n log(10000/step)) binomial evaluations.
class WeightGrid {
 public:
  WeightGrid(std::int32_t step_bp, std::size_t n_assets);

  std::uint64_t size() const { return size_; }
  std::size_t assets() const { return n_; }
  std::int32_t step_bp() const { return step_; }

  WeightVector at(std::uint64_t rank) const;
  std::uint64_t rank_of(const WeightVector& w) const;

 private:
  std::int32_t step_;
  std::size_t n_;
  std::int64_t units_;
  std::uint64_t size_;
};

/// C(a, b); throws GridTooFine when the value does not fit in 63 bits.
std::uint64_t binomial(std::uint64_t a, std::uint64_t b);

/// Up when the trailing k-day mean return is >= alpha, Down when <= -alpha.
UpDownLabeling updown_points(const std::vector<double>& ref_returns, std::size_t k_window,
                             double alpha);

/// Maximal runs of equal non-Neutral labels at least `min_len` long.
std::vector<MarketInterval> updown_intervals(const UpDownLabeling& labeling, std::size_t min_len);

/// Equal-weight average of the asset returns, the default labeling reference.
std::vector<double> market_proxy_returns(const ReturnPanel& rp);

struct SampleSpec {
  double fraction = 0.0001;
  std::uint64_t floor = 1000;
  std::uint64_t seed = 1;
};

/// min(|grid|, max(floor, ceil(fraction * |grid|))) distinct ranks drawn
/// uniformly without replacement, returned in ascending rank order.
std::vector<std::uint64_t> sample_ranks(std::uint64_t population, const SampleSpec& spec);
std::vector<WeightVector> sample_vectors(const WeightGrid& grid, const SampleSpec& spec);

/// Score of a candidate allocation: mean - k_control * volatility.
constexpr double action_evaluation(double mu, double sigma, double k_control) {
  return mu - k_control * sigma;
}

struct ActionProvenance {
  MarketInterval interval;
  double score = 0.0;
  std::uint64_t rank = 0;
};

struct ActionSet {
  std::int32_t grid_step_bp = 0;
  std::vector<WeightVector> actions;
  std::vector<ActionProvenance> provenance;

  std::size_t size() const { return actions.size(); }
  std::size_t assets() const { return actions.empty() ? 0 : actions.front().bp.size(); }
};

struct ActionSpaceConfig {
  std::int32_t grid_step_bp = 1000;
  SampleSpec sample{};
  double k_control = 1.0;
  std::size_t top_i = 3;
};

/// Annualized mean and volatility of the constant-weight portfolio over an interval.
struct IntervalMoments {
  double mu = 0.0;
  double sigma = 0.0;
};
IntervalMoments interval_moments(const ReturnPanel& rp, const MarketInterval& interval,
                                 const WeightVector& w);

ActionSet extract_action_set(const std::vector<MarketInterval>& intervals, const ReturnPanel& rp,
                             const ActionSpaceConfig& cfg);

void save_action_set(const ActionSet& actions, const std::filesystem::path& path);
ActionSet load_action_set(const std::filesystem::path& path);

}  // namespace rlpm
