#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "rlpm/date.hpp"

namespace rlpm {

inline constexpr std::size_t kMinHistoryDays = 121;
inline constexpr std::size_t kObservationWindow = 60;

/// Aligned daily close prices: rows are dates, columns are assets.
struct AssetPanel {
  std::vector<Date> dates;
  std::vector<std::string> asset_ids;
  Eigen::MatrixXd prices;  // T x n, all > 0

  std::size_t days() const { return dates.size(); }
  std::size_t assets() const { return asset_ids.size(); }
};

/// Simple daily returns. Row t is prices[t+1] / prices[t] - 1 and carries
/// the date of prices[t+1].
struct ReturnPanel {
  std::vector<Date> dates;
  std::vector<std::string> asset_ids;
  Eigen::MatrixXd returns;  // (T-1) x n

  std::size_t days() const { return static_cast<std::size_t>(returns.rows()); }
  std::size_t assets() const { return static_cast<std::size_t>(returns.cols()); }
};

/// Observation matrix: row i is asset i's trailing window of returns ending at `t`.
struct ReturnMatrix {
  std::size_t anchor_time = 0;
  Eigen::MatrixXd values;  // n x window
};

struct CorrelationMatrix {
  Eigen::MatrixXd values;
  std::size_t window = 0;
  std::size_t anchor_time = 0;

  std::size_t dim() const { return static_cast<std::size_t>(values.rows()); }
};

struct PanelSchema {
  std::string date_column = "date";
  /// Empty selects every non-date column in file order.
  std::vector<std::string> asset_columns;
  char delimiter = ',';
};

AssetPanel load_price_panel(const std::filesystem::path& path, const PanelSchema& schema = {});

/// Writes a panel in the same layout `load_price_panel` reads.
void write_price_panel(const std::filesystem::path& path, const std::vector<Date>& dates,
                       const std::vector<std::string>& asset_ids, const Eigen::MatrixXd& prices,
                       char delimiter = ',');

/// Validates the panel invariants; throws on the first violation.
void validate_panel(const AssetPanel& panel);

ReturnPanel daily_returns(const AssetPanel& panel);

/// Returns of a bare (T x n) price matrix; shared by historical and simulated panels.
Eigen::MatrixXd returns_from_prices(const Eigen::MatrixXd& prices);

CorrelationMatrix rolling_correlation(const ReturnPanel& rp, std::size_t t, std::size_t window);
CorrelationMatrix rolling_correlation(const Eigen::MatrixXd& returns, std::size_t t,
                                      std::size_t window);

ReturnMatrix return_matrix(const ReturnPanel& rp, std::size_t t,
                           std::size_t window = kObservationWindow);
ReturnMatrix return_matrix(const Eigen::MatrixXd& returns, std::size_t t,
                           std::size_t window = kObservationWindow);

}  // namespace rlpm
