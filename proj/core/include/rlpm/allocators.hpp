#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string_view>

namespace rlpm {

struct MomentEstimates {
  Eigen::VectorXd mu_hat;   // annualized mean returns
  Eigen::MatrixXd cov_hat;  // annualized covariance
  std::size_t window = 0;

  /// Checks shapes, finiteness, symmetry and PSD up to a 1e-10 eigenvalue floor.
  void validate() const;
};

/// Annualized sample moments of the return rows ending at `t` (inclusive).
MomentEstimates estimate_moments(const Eigen::MatrixXd& returns, std::size_t t, std::size_t window);

enum class AllocatorId { Markowitz, RiskParity, EqualWeight };
std::string_view to_string(AllocatorId id);

struct AllocatorDiagnostics {
  std::size_t iterations = 0;
  double residual = 0.0;
  double ridge = 0.0;
  /// Markowitz only: every expected return was non-positive, so minimum variance was used.
  bool min_variance_fallback = false;
};

struct AllocatorWeights {
  Eigen::VectorXd weights;
  AllocatorId id = AllocatorId::EqualWeight;
  AllocatorDiagnostics diagnostics;
};

/// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

AllocatorWeights equal_weights(std::size_t n);

/// Long-only maximum-Sharpe portfolio (zero risk-free rate) by projected
/// gradient ascent from 16 starts.
AllocatorWeights markowitz_weights(const MomentEstimates& m);

/// Equal risk contributions by cyclical coordinate descent.
AllocatorWeights risk_parity_weights(const MomentEstimates& m);

double portfolio_sharpe(const Eigen::VectorXd& w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov);
/// RC_i = w_i (cov w)_i / (w' cov w).
Eigen::VectorXd risk_contributions(const Eigen::VectorXd& w, const Eigen::MatrixXd& cov);

}  // namespace rlpm
