#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "rlpm/allocators.hpp"
#include "rlpm/error.hpp"

using namespace rlpm;
using namespace rlpm::testing;

namespace {

MomentEstimates moments(Eigen::VectorXd mu, Eigen::MatrixXd cov) {
  MomentEstimates m;
  m.mu_hat = std::move(mu);
  m.cov_hat = std::move(cov);
  m.window = 252;
  return m;
}

Eigen::MatrixXd cov_from(const Eigen::VectorXd& sigma, const Eigen::MatrixXd& corr) {
  return sigma.asDiagonal() * corr * sigma.asDiagonal();
}

void expect_simplex(const Eigen::VectorXd& w) {
  EXPECT_GE(w.minCoeff(), 0.0);
  EXPECT_NEAR(w.sum(), 1.0, 1e-10);
  EXPECT_LT((project_to_simplex(w) - w).cwiseAbs().maxCoeff(), 1e-10);
}

// Best Sharpe over every simplex point on a grid of resolution 1/steps.
double grid_best_sharpe(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov, int steps) {
  double best = -1e300;
  Eigen::VectorXd w(3);
  for (int a = 0; a <= steps; ++a) {
    for (int b = 0; a + b <= steps; ++b) {
      w << a, b, steps - a - b;
      w /= steps;
      best = std::max(best, mu.dot(w) / std::sqrt(w.dot(cov * w)));
    }
  }
  return best;
}

}  // namespace

TEST(EqualWeights, Definition) {
  for (std::size_t n : {1u, 4u, 13u}) {
    const auto w = equal_weights(n);
    ASSERT_EQ(w.weights.size(), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i + 1 < w.weights.size(); ++i) EXPECT_EQ(w.weights(i), 1.0 / static_cast<double>(n));
    EXPECT_NEAR(w.weights(w.weights.size() - 1), 1.0 / static_cast<double>(n), 1e-15);
    EXPECT_NEAR(w.weights.sum(), 1.0, 1e-15);
    EXPECT_EQ(w.id, AllocatorId::EqualWeight);
  }
  EXPECT_THROW(equal_weights(0), Error);
}

TEST(SimplexProjection, KnownCases) {
  Eigen::VectorXd v(3);
  v << 0.2, 0.3, 0.5;
  EXPECT_LT((project_to_simplex(v) - v).norm(), 1e-15);
  v << 2.0, 0.0, 0.0;
  EXPECT_LT((project_to_simplex(v) - Eigen::Vector3d(1, 0, 0)).norm(), 1e-15);
  v << 1.0, 1.0, -5.0;
  EXPECT_LT((project_to_simplex(v) - Eigen::Vector3d(0.5, 0.5, 0)).norm(), 1e-15);
}

TEST(Markowitz, UncorrelatedTangency) {
  const auto m = moments(Eigen::Vector2d(0.10, 0.05), Eigen::Vector2d(0.04, 0.04).asDiagonal());
  const auto w = markowitz_weights(m);
  EXPECT_NEAR(w.weights(0), 2.0 / 3.0, 1e-4);
  EXPECT_NEAR(w.weights(1), 1.0 / 3.0, 1e-4);
  EXPECT_EQ(w.id, AllocatorId::Markowitz);
  EXPECT_FALSE(w.diagnostics.min_variance_fallback);
  expect_simplex(w.weights);
}

TEST(Markowitz, InteriorTangencyMatchesClosedForm) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Eigen::MatrixXd cov = random_covariance(4, 500 + s);
    // Choose mu so that the unconstrained tangency is strictly interior.
    Eigen::VectorXd target(4);
    CounterRng rng(600 + s);
    for (auto& x : target) x = 0.1 + rng.uniform();
    target /= target.sum();
    const Eigen::VectorXd mu = cov * target;
    const auto w = markowitz_weights(moments(mu, cov));
    EXPECT_LT((w.weights - target).cwiseAbs().maxCoeff(), 1e-4) << s;
  }
}

TEST(Markowitz, IdenticalAssetsGiveTheSingleAssetSharpe) {
  Eigen::MatrixXd corr(3, 3);
  corr << 1, 1 - 1e-9, 1 - 2e-9, 1 - 1e-9, 1, 1 - 1e-9, 1 - 2e-9, 1 - 1e-9, 1;
  const Eigen::VectorXd mu = Eigen::VectorXd::Constant(3, 0.08);
  const Eigen::MatrixXd cov = cov_from(Eigen::VectorXd::Constant(3, 0.2), corr);
  const auto w = markowitz_weights(moments(mu, cov));
  expect_simplex(w.weights);
  EXPECT_NEAR(portfolio_sharpe(w.weights, mu, cov), 0.4, 1e-6);
}

TEST(Markowitz, GridBruteForceOnThreeAssets) {
  for (std::uint64_t s = 0; s < 15; ++s) {
    // Equity-like scale: vols around 20%, drifts around 5%.
    const Eigen::MatrixXd cov = 4.0 * random_covariance(3, 700 + s);
    Eigen::VectorXd mu = normal_matrix(3, 1, 800 + s, 0.05, 0.03).col(0);
    if (mu.maxCoeff() <= 0) mu = -mu;
    const auto w = markowitz_weights(moments(mu, cov));
    expect_simplex(w.weights);
    const double got = portfolio_sharpe(w.weights, mu, cov);
    const double grid = grid_best_sharpe(mu, cov, 200);
    EXPECT_GE(got, grid - 1e-4) << s;
    EXPECT_LE(got, grid + 1e-4) << s;
  }
}

TEST(Markowitz, ScalingMuLeavesWeightsUnchanged) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Eigen::MatrixXd cov = random_covariance(5, 900 + s);
    Eigen::VectorXd mu = normal_matrix(5, 1, 950 + s, 0.1, 0.05).col(0);
    const auto a = markowitz_weights(moments(mu, cov));
    for (double c : {0.1, 3.0, 250.0}) {
      const auto b = markowitz_weights(moments(c * mu, cov));
      EXPECT_LT((a.weights - b.weights).cwiseAbs().maxCoeff(), 1e-6) << s << " c=" << c;
    }
  }
}

TEST(Markowitz, NonPositiveMeansFallBackToMinimumVariance) {
  const Eigen::Vector2d mu(-0.05, -0.01);
  const Eigen::MatrixXd cov = Eigen::Vector2d(0.04, 0.01).asDiagonal();
  const auto w = markowitz_weights(moments(mu, cov));
  EXPECT_TRUE(w.diagnostics.min_variance_fallback);
  // Minimum variance of two uncorrelated assets: w proportional to 1/sigma^2.
  EXPECT_NEAR(w.weights(0), 0.2, 1e-6);
  EXPECT_NEAR(w.weights(1), 0.8, 1e-6);
}

TEST(Markowitz, SingularCovarianceRejected) {
  // Passes the PSD floor but the ridge brings the eigenvalue to exactly zero.
  const Eigen::MatrixXd cov = Eigen::Vector2d(1.0, -1e-10).asDiagonal();
  try {
    markowitz_weights(moments(Eigen::Vector2d(0.1, 0.1), cov));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularCovariance);
  }
  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  EXPECT_THROW(markowitz_weights(moments(Eigen::Vector2d(0.1, 0.1), indefinite)), Error);
}

TEST(RiskParity, TwoAssetInverseVolatility) {
  for (double rho : {-0.9, -0.3, 0.0, 0.5, 0.95}) {
    Eigen::Matrix2d corr;
    corr << 1, rho, rho, 1;
    const auto w = risk_parity_weights(moments(Eigen::Vector2d::Zero(), cov_from(Eigen::Vector2d(0.2, 0.1), corr)));
    EXPECT_NEAR(w.weights(0), 1.0 / 3.0, 1e-6) << rho;
    EXPECT_NEAR(w.weights(1), 2.0 / 3.0, 1e-6) << rho;
    EXPECT_EQ(w.id, AllocatorId::RiskParity);
  }
}

TEST(RiskParity, DiagonalAndIdentity) {
  const auto w = risk_parity_weights(
      moments(Eigen::Vector3d::Zero(), Eigen::Vector3d(0.01, 0.04, 0.16).asDiagonal()));
  EXPECT_NEAR(w.weights(0), 4.0 / 7.0, 1e-6);
  EXPECT_NEAR(w.weights(1), 2.0 / 7.0, 1e-6);
  EXPECT_NEAR(w.weights(2), 1.0 / 7.0, 1e-6);
  for (std::size_t n : {1u, 2u, 7u}) {
    const auto e = risk_parity_weights(moments(Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n)));
    EXPECT_LT((e.weights.array() - 1.0 / static_cast<double>(n)).abs().maxCoeff(), 1e-12);
  }
}

TEST(RiskParity, EqualContributionsOnRandomCovariances) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const std::size_t n = 2 + s % 12;
    const Eigen::MatrixXd cov = random_covariance(n, 1000 + s);
    const auto w = risk_parity_weights(moments(Eigen::VectorXd::Zero(n), cov));
    expect_simplex(w.weights);
    // Recompute contributions directly rather than trusting risk_contributions().
    const Eigen::VectorXd sw = cov * w.weights;
    const double var = w.weights.dot(sw);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(w.weights(i) * sw(i) / var - 1.0 / static_cast<double>(n)));
    }
    EXPECT_LE(worst, 1e-8) << s;
    EXPECT_LE(w.diagnostics.residual, 1e-8);
  }
}

TEST(RiskParity, PermutationEquivariance) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::size_t n = 6;
    const Eigen::MatrixXd cov = random_covariance(n, 1200 + s);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::rotate(perm.begin(), perm.begin() + static_cast<long>(1 + s % 5), perm.end());
    std::swap(perm[0], perm[3]);
    Eigen::PermutationMatrix<Eigen::Dynamic> P(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) P.indices()(static_cast<Eigen::Index>(i)) = perm[i];
    const Eigen::MatrixXd pcov = P * cov * P.transpose();
    const auto a = risk_parity_weights(moments(Eigen::VectorXd::Zero(n), cov));
    const auto b = risk_parity_weights(moments(Eigen::VectorXd::Zero(n), pcov));
    EXPECT_LT((P * a.weights - b.weights).cwiseAbs().maxCoeff(), 1e-7) << s;
  }
}

TEST(RiskParity, NonPositiveDiagonalRejected) {
  Eigen::Matrix2d cov;
  cov << 0.0, 0.0, 0.0, 1.0;
  EXPECT_THROW(risk_parity_weights(moments(Eigen::Vector2d::Zero(), cov)), Error);
}

TEST(Moments, AnnualizedSampleEstimates) {
  const Eigen::MatrixXd r = normal_matrix(300, 3, 77, 0.01, 0.0005);
  const auto m = estimate_moments(r, 299, 252);
  const auto block = r.bottomRows(252);
  for (Eigen::Index i = 0; i < 3; ++i) {
    double mean = 0.0;
    for (Eigen::Index k = 0; k < 252; ++k) mean += block(k, i);
    mean /= 252.0;
    EXPECT_NEAR(m.mu_hat(i), mean * 252.0, 1e-12);
    for (Eigen::Index j = 0; j < 3; ++j) {
      double mj = block.col(j).mean(), c = 0.0;
      for (Eigen::Index k = 0; k < 252; ++k) c += (block(k, i) - mean) * (block(k, j) - mj);
      EXPECT_NEAR(m.cov_hat(i, j), c / 251.0 * 252.0, 1e-12);
    }
  }
  EXPECT_NO_THROW(m.validate());
  try {
    estimate_moments(r, 100, 252);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientHistory);
  }
}

TEST(Moments, ValidateRejectsBadInputs) {
  auto m = moments(Eigen::Vector2d(0.1, 0.1), Eigen::Matrix2d::Identity());
  EXPECT_NO_THROW(m.validate());
  m.cov_hat(0, 1) = 0.5;
  EXPECT_THROW(m.validate(), Error);  // asymmetric
  m = moments(Eigen::Vector3d(0.1, 0.1, 0.1), Eigen::Matrix2d::Identity());
  EXPECT_THROW(m.validate(), Error);
  m = moments(Eigen::Vector2d(NAN, 0.1), Eigen::Matrix2d::Identity());
  EXPECT_THROW(m.validate(), Error);
}
