#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rlpm/date.hpp"
#include "rlpm/market_data.hpp"
#include "rlpm/rng.hpp"

namespace rlpm::testing {

inline std::vector<Date> weekdays(Date first, std::size_t count) {
  std::vector<Date> out;
  for (Date d = first; out.size() < count; d = d.plus_days(1)) {
    if (!d.is_weekend()) out.push_back(d);
  }
  return out;
}

inline ReturnPanel make_return_panel(const Eigen::MatrixXd& returns, Date first = Date(2000, 1, 4)) {
  ReturnPanel rp;
  rp.returns = returns;
  rp.dates = weekdays(first, static_cast<std::size_t>(returns.rows()));
  for (Eigen::Index i = 0; i < returns.cols(); ++i) rp.asset_ids.push_back("A" + std::to_string(i));
  return rp;
}

inline Eigen::MatrixXd normal_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                     double scale = 1.0, double shift = 0.0) {
  CounterRng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = shift + scale * rng.normal();
  return m;
}

/// Random correlation matrix from a random factor loading.
inline Eigen::MatrixXd random_correlation(std::size_t n, std::uint64_t seed) {
  const Eigen::MatrixXd f = normal_matrix(n, n + 2, seed);
  Eigen::MatrixXd c = f * f.transpose();
  const Eigen::VectorXd d = c.diagonal().cwiseSqrt().cwiseInverse();
  c = d.asDiagonal() * c * d.asDiagonal();
  c.diagonal().setOnes();
  return 0.5 * (c + c.transpose());
}

inline Eigen::MatrixXd random_covariance(std::size_t n, std::uint64_t seed) {
  const Eigen::MatrixXd f = normal_matrix(n, n + 3, seed, 0.1);
  return f * f.transpose() / static_cast<double>(n + 3) + 1e-4 * Eigen::MatrixXd::Identity(n, n);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("rlpm_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace rlpm::testing
