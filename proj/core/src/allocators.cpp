#include "rlpm/allocators.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rlpm/error.hpp"
#include "rlpm/rng.hpp"
#include "rlpm/stats.hpp"

namespace rlpm {

namespace {

constexpr double kRidge = 1e-10;
constexpr double kStationarityTol = 1e-8;
constexpr std::size_t kStarts = 16;
constexpr std::size_t kMaxAscentIterations = 20000;
constexpr double kRiskParityTol = 1e-8;
constexpr std::size_t kMaxSweeps = 10000;

// Clears projection round-off so the result lies exactly on the simplex.
Eigen::VectorXd tidy_simplex(Eigen::VectorXd w) {
  w = w.cwiseMax(0.0);
  w /= w.sum();
  return w;
}

Eigen::MatrixXd ridged(const Eigen::MatrixXd& cov) {
  Eigen::MatrixXd c = cov;
  c.diagonal().array() += kRidge;
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCovariance, "covariance is not positive definite after a 1e-10 ridge");
  }
  return c;
}

struct Ascent {
  Eigen::VectorXd w;
  double value = 0.0;
  std::size_t iterations = 0;
  double stationarity = 0.0;
};

// Projected gradient ascent with adaptive step (halve on failure, double on success).
template <class F, class G>
Ascent ascend(Eigen::VectorXd w, F&& f, G&& grad) {
  Ascent out;
  double fw = f(w);
  double step = 1.0;
  std::size_t it = 0;
  double stat = 0.0;
  for (; it < kMaxAscentIterations; ++it) {
    const Eigen::VectorXd g = grad(w);
    stat = (project_to_simplex(w + g) - w).norm();
    if (stat <= kStationarityTol) break;
    bool moved = false;
    while (step > 1e-300) {
      const Eigen::VectorXd cand = project_to_simplex(w + step * g);
      const double fc = f(cand);
      if (fc > fw) {
        w = cand;
        fw = fc;
        step *= 2.0;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  out.w = std::move(w);
  out.value = fw;
  out.iterations = it;
  out.stationarity = stat;
  return out;
}

}  // namespace

void MomentEstimates::validate() const {
  const auto n = mu_hat.size();
  if (n < 1 || cov_hat.rows() != n || cov_hat.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "moment estimates have inconsistent dimensions");
  }
  if (!mu_hat.allFinite() || !cov_hat.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "moment estimates must be finite");
  }
  if ((cov_hat - cov_hat.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov_hat.cwiseAbs().maxCoeff())) {
    throw Error(ErrorKind::InvalidArgument, "covariance estimate is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_hat, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    throw Error(ErrorKind::InvalidArgument, "covariance estimate is not positive semi-definite");
  }
}

MomentEstimates estimate_moments(const Eigen::MatrixXd& returns, std::size_t t, std::size_t window) {
  if (window < 2) {
    throw Error(ErrorKind::InvalidArgument, "moment window must be at least 2 days");
  }
  if (t + 1 < window || t >= static_cast<std::size_t>(returns.rows())) {
    throw Error(ErrorKind::InsufficientHistory,
                "moment window of " + std::to_string(window) + " days does not fit before row " +
                    std::to_string(t));
  }
  const auto block = returns.middleRows(static_cast<Eigen::Index>(t + 1 - window),
                                        static_cast<Eigen::Index>(window));
  MomentEstimates m;
  m.window = window;
  const Eigen::RowVectorXd mean = block.colwise().mean();
  const Eigen::MatrixXd centered = block.rowwise() - mean;
  m.mu_hat = mean.transpose() * kTradingDaysPerYear;
  m.cov_hat = (centered.transpose() * centered) / static_cast<double>(window - 1) * kTradingDaysPerYear;
  m.cov_hat = 0.5 * (m.cov_hat + m.cov_hat.transpose());
  return m;
}

std::string_view to_string(AllocatorId id) {
  switch (id) {
    case AllocatorId::Markowitz: return "Markowitz";
    case AllocatorId::RiskParity: return "Risk Budgeting";
    case AllocatorId::EqualWeight: return "Equal Weight";
  }
  return "?";
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const auto n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumulative += u[static_cast<std::size_t>(j)];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

AllocatorWeights equal_weights(std::size_t n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "equal weight needs at least one asset");
  AllocatorWeights out;
  out.id = AllocatorId::EqualWeight;
  out.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  out.weights(static_cast<Eigen::Index>(n - 1)) =
      1.0 - out.weights.head(static_cast<Eigen::Index>(n - 1)).sum();
  return out;
}

double portfolio_sharpe(const Eigen::VectorXd& w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  return w.dot(mu) / std::sqrt(w.dot(cov * w));
}

Eigen::VectorXd risk_contributions(const Eigen::VectorXd& w, const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd cw = cov * w;
  return w.cwiseProduct(cw) / w.dot(cw);
}

AllocatorWeights markowitz_weights(const MomentEstimates& m) {
  m.validate();
  const auto n = m.mu_hat.size();
  const Eigen::MatrixXd cov = ridged(m.cov_hat);
  AllocatorWeights out;
  out.id = AllocatorId::Markowitz;
  out.diagnostics.ridge = kRidge;

  std::vector<Eigen::VectorXd> starts;
  for (Eigen::Index i = 0; i < n && starts.size() < kStarts; ++i) {
    starts.push_back(Eigen::VectorXd::Unit(n, i));
  }
  CounterRng rng(0x3A4C0, static_cast<std::uint64_t>(n));
  while (starts.size() < kStarts) {
    // Uniform on the simplex: normalized exponentials.
    Eigen::VectorXd e(n);
    for (Eigen::Index i = 0; i < n; ++i) e(i) = -std::log(rng.uniform());
    starts.push_back(e / e.sum());
  }

  const bool fallback = (m.mu_hat.array() <= 0.0).all();
  out.diagnostics.min_variance_fallback = fallback;
  Ascent best;
  bool have = false;
  for (const auto& s : starts) {
    Ascent a;
    if (fallback) {
      const double lip = 2.0 * cov.diagonal().maxCoeff() * static_cast<double>(n);
      a = ascend(
          s, [&](const Eigen::VectorXd& w) { return -w.dot(cov * w); },
          [&](const Eigen::VectorXd& w) -> Eigen::VectorXd { return -2.0 * (cov * w) / lip; });
    } else {
      a = ascend(
          s, [&](const Eigen::VectorXd& w) { return portfolio_sharpe(w, m.mu_hat, cov); },
          [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
            const Eigen::VectorXd cw = cov * w;
            const double var = w.dot(cw);
            const double sd = std::sqrt(var);
            return m.mu_hat / sd - (w.dot(m.mu_hat) / (var * sd)) * cw;
          });
    }
    out.diagnostics.iterations += a.iterations;
    if (!have || a.value > best.value) {
      best = std::move(a);
      have = true;
    }
  }
  out.weights = tidy_simplex(best.w);
  out.diagnostics.residual = best.stationarity;
  return out;
}

AllocatorWeights risk_parity_weights(const MomentEstimates& m) {
  m.validate();
  const auto n = m.mu_hat.size();
  const Eigen::MatrixXd& cov = m.cov_hat;
  if ((cov.diagonal().array() <= 0.0).any()) {
    throw Error(ErrorKind::InvalidArgument, "risk parity needs strictly positive variances");
  }
  const double b = 1.0 / static_cast<double>(n);
  const double target = 1.0 / static_cast<double>(n);
  // Start at equal weights scaled so the portfolio variance is O(1).
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(cov.sum() / static_cast<double>(n * n)) / static_cast<double>(n));
  AllocatorWeights out;
  out.id = AllocatorId::RiskParity;
  double residual = 0.0;
  std::size_t sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    const Eigen::VectorXd w = x / x.sum();
    residual = (risk_contributions(w, cov).array() - target).abs().maxCoeff();
    if (residual <= kRiskParityTol) break;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sii = cov(i, i);
      const double a = cov.row(i).dot(x) - sii * x(i);
      x(i) = (-a + std::sqrt(a * a + 4.0 * sii * b)) / (2.0 * sii);
    }
  }
  out.weights = tidy_simplex(x);
  residual = (risk_contributions(out.weights, cov).array() - target).abs().maxCoeff();
  out.diagnostics.iterations = sweep;
  out.diagnostics.residual = residual;
  if (residual > kRiskParityTol) {
    throw Error(ErrorKind::NoConvergence,
                "risk parity did not converge: residual " + std::to_string(residual));
  }
  return out;
}

}  // namespace rlpm
