#include "rlpm/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "rlpm/error.hpp"

namespace rlpm {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null" ||
         cell == "N/A";
}

std::optional<double> parse_number(std::string_view cell) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    return std::nullopt;
  }
  return value;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

}  // namespace

AssetPanel load_price_panel(const std::filesystem::path& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open price file " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::MalformedFile, path.string() + ": missing header row");
  }
  const auto header = split(line, schema.delimiter);

  std::optional<std::size_t> date_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == schema.date_column) date_col = c;
  }
  if (!date_col) {
    throw Error(ErrorKind::MalformedFile,
                path.string() + ": no date column named '" + schema.date_column + "'");
  }

  std::vector<std::size_t> cols;
  std::vector<std::string> ids;
  if (schema.asset_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != *date_col) {
        cols.push_back(c);
        ids.emplace_back(header[c]);
      }
    }
  } else {
    for (const auto& name : schema.asset_columns) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) {
        throw Error(ErrorKind::MalformedFile, path.string() + ": no column named '" + name + "'");
      }
      cols.push_back(static_cast<std::size_t>(it - header.begin()));
      ids.push_back(name);
    }
  }
  if (cols.size() < 2) {
    throw Error(ErrorKind::TooFewAssets,
                path.string() + ": need at least 2 price columns, found " +
                    std::to_string(cols.size()));
  }

  std::map<Date, std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, schema.delimiter);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::MalformedFile, where(path, line_no) + ": expected " +
                                                std::to_string(header.size()) + " fields, got " +
                                                std::to_string(cells.size()));
    }
    const auto date = Date::parse(cells[*date_col]);
    if (!date) {
      throw Error(ErrorKind::MalformedFile,
                  where(path, line_no) + ": unparseable date '" + std::string(cells[*date_col]) + "'");
    }
    std::vector<double> prices;
    prices.reserve(cols.size());
    bool complete = true;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto cell = cells[cols[k]];
      if (is_missing(cell)) {
        complete = false;
        continue;
      }
      const auto value = parse_number(cell);
      if (!value || !std::isfinite(*value)) {
        throw Error(ErrorKind::MalformedFile,
                    where(path, line_no) + ": unparseable price '" + std::string(cell) + "'");
      }
      if (*value <= 0.0) {
        throw Error(ErrorKind::NonPositivePrice,
                    where(path, line_no) + ": price " + std::string(cell) + " for " + ids[k]);
      }
      prices.push_back(*value);
    }
    if (!complete) continue;  // inner join across assets
    if (!rows.emplace(*date, std::move(prices)).second) {
      throw Error(ErrorKind::MalformedFile,
                  where(path, line_no) + ": duplicate date " + date->iso());
    }
  }

  AssetPanel panel;
  panel.asset_ids = std::move(ids);
  panel.dates.reserve(rows.size());
  panel.prices.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(panel.asset_ids.size()));
  Eigen::Index r = 0;
  for (const auto& [date, prices] : rows) {
    panel.dates.push_back(date);
    for (std::size_t k = 0; k < prices.size(); ++k) {
      panel.prices(r, static_cast<Eigen::Index>(k)) = prices[k];
    }
    ++r;
  }
  validate_panel(panel);
  return panel;
}

void write_price_panel(const std::filesystem::path& path, const std::vector<Date>& dates,
                       const std::vector<std::string>& asset_ids, const Eigen::MatrixXd& prices,
                       char delimiter) {
  if (static_cast<std::size_t>(prices.rows()) != dates.size() ||
      static_cast<std::size_t>(prices.cols()) != asset_ids.size()) {
    throw Error(ErrorKind::DimensionMismatch, "price matrix does not match dates/asset ids");
  }
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorKind::Io, "cannot write " + path.string());
  }
  out << "date";
  for (const auto& id : asset_ids) out << delimiter << id;
  out << '\n';
  char buf[32];
  for (std::size_t t = 0; t < dates.size(); ++t) {
    out << dates[t].iso();
    for (Eigen::Index i = 0; i < prices.cols(); ++i) {
      const auto res = std::to_chars(buf, buf + sizeof buf, prices(static_cast<Eigen::Index>(t), i));
      out << delimiter << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
  if (!out) {
    throw Error(ErrorKind::Io, "write failed for " + path.string());
  }
}

void validate_panel(const AssetPanel& panel) {
  if (panel.assets() < 2) {
    throw Error(ErrorKind::TooFewAssets, "panel needs at least 2 assets");
  }
  if (static_cast<std::size_t>(panel.prices.rows()) != panel.days() ||
      static_cast<std::size_t>(panel.prices.cols()) != panel.assets()) {
    throw Error(ErrorKind::DimensionMismatch, "price matrix shape disagrees with dates/assets");
  }
  if (panel.days() < kMinHistoryDays) {
    throw Error(ErrorKind::TooShortHistory,
                "panel has " + std::to_string(panel.days()) + " complete dates, need at least " +
                    std::to_string(kMinHistoryDays));
  }
  for (std::size_t t = 1; t < panel.days(); ++t) {
    if (!(panel.dates[t - 1] < panel.dates[t])) {
      throw Error(ErrorKind::MalformedFile, "dates are not strictly increasing at " +
                                                panel.dates[t].iso());
    }
  }
  if (!(panel.prices.array() > 0.0).all()) {
    throw Error(ErrorKind::NonPositivePrice, "panel contains a non-positive price");
  }
}

Eigen::MatrixXd returns_from_prices(const Eigen::MatrixXd& prices) {
  const Eigen::Index rows = prices.rows() > 0 ? prices.rows() - 1 : 0;
  Eigen::MatrixXd out(rows, prices.cols());
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (Eigen::Index i = 0; i < prices.cols(); ++i) {
      out(t, i) = prices(t + 1, i) / prices(t, i) - 1.0;
    }
  }
  return out;
}

ReturnPanel daily_returns(const AssetPanel& panel) {
  ReturnPanel rp;
  rp.asset_ids = panel.asset_ids;
  rp.returns = returns_from_prices(panel.prices);
  if (panel.dates.size() > 1) {
    rp.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  }
  return rp;
}

CorrelationMatrix rolling_correlation(const Eigen::MatrixXd& returns, std::size_t t,
                                      std::size_t window) {
  if (window < 2) {
    throw Error(ErrorKind::InvalidArgument, "correlation window must be at least 2");
  }
  if (t + 1 < window || t >= static_cast<std::size_t>(returns.rows())) {
    throw Error(ErrorKind::InsufficientHistory,
                "correlation at t=" + std::to_string(t) + " needs " + std::to_string(window) +
                    " returns ending at t within " + std::to_string(returns.rows()) + " rows");
  }
  const Eigen::Index n = returns.cols();
  const Eigen::Index w = static_cast<Eigen::Index>(window);
  const Eigen::Index first = static_cast<Eigen::Index>(t) - w + 1;
  Eigen::MatrixXd centered = returns.middleRows(first, w);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto col = centered.col(i);
    if (col.maxCoeff() == col.minCoeff()) {
      throw Error(ErrorKind::ZeroVarianceAsset,
                  "asset " + std::to_string(i) + " has constant returns in the window ending at t=" +
                      std::to_string(t));
    }
  }
  centered.rowwise() -= centered.colwise().mean();
  const Eigen::VectorXd norms = centered.colwise().norm();

  CorrelationMatrix cm;
  cm.window = window;
  cm.anchor_time = t;
  cm.values = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double rho = centered.col(i).dot(centered.col(j)) / (norms(i) * norms(j));
      cm.values(i, j) = cm.values(j, i) = std::clamp(rho, -1.0, 1.0);
    }
  }
  return cm;
}

CorrelationMatrix rolling_correlation(const ReturnPanel& rp, std::size_t t, std::size_t window) {
  return rolling_correlation(rp.returns, t, window);
}

ReturnMatrix return_matrix(const Eigen::MatrixXd& returns, std::size_t t, std::size_t window) {
  if (window == 0 || t + 1 < window || t >= static_cast<std::size_t>(returns.rows())) {
    throw Error(ErrorKind::InsufficientHistory,
                "return matrix at t=" + std::to_string(t) + " needs " + std::to_string(window) +
                    " returns");
  }
  const Eigen::Index w = static_cast<Eigen::Index>(window);
  ReturnMatrix rm;
  rm.anchor_time = t;
  rm.values = returns.middleRows(static_cast<Eigen::Index>(t) - w + 1, w).transpose();
  return rm;
}

ReturnMatrix return_matrix(const ReturnPanel& rp, std::size_t t, std::size_t window) {
  return return_matrix(rp.returns, t, window);
}

}  // namespace rlpm
