#include "rlpm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rlpm/error.hpp"
#include "rlpm/parallel.hpp"
#include "rlpm/rng.hpp"

namespace rlpm {

void GbmParams::validate() const {
  const auto n = mu.size();
  if (sigma.size() != n || s0.size() != n || n == 0) {
    throw Error(ErrorKind::DimensionMismatch, "GBM parameter vectors differ in length");
  }
  if (!(dt > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "GBM time step must be positive");
  }
  if (!(sigma.array() > 0.0).all()) {
    throw Error(ErrorKind::ZeroVolatility, "GBM volatilities must be positive");
  }
  if (!(s0.array() > 0.0).all()) {
    throw Error(ErrorKind::InvalidArgument, "GBM initial prices must be positive");
  }
}

GbmParams estimate_gbm_params(const ReturnPanel& rp, const std::vector<std::size_t>& member_times,
                              std::size_t window, double dt) {
  if (!(dt > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "time step must be positive");
  }
  std::set<std::size_t> days;
  for (std::size_t t : member_times) {
    if (t >= rp.days() || t + 1 < window) {
      throw Error(ErrorKind::InsufficientHistory,
                  "member anchor time " + std::to_string(t) + " outside the return panel");
    }
    for (std::size_t d = t + 1 - window; d <= t; ++d) days.insert(d);
  }
  if (days.size() < 30) {
    throw Error(ErrorKind::InsufficientSamples,
                "only " + std::to_string(days.size()) + " daily returns in the member windows");
  }
  const std::size_t n = rp.assets();
  const double count = static_cast<double>(days.size());
  GbmParams p;
  p.dt = dt;
  p.mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  p.sigma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  p.s0 = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 100.0);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    double sum = 0.0;
    for (std::size_t d : days) sum += rp.returns(static_cast<Eigen::Index>(d), i);
    const double m = sum / count;
    double ss = 0.0;
    for (std::size_t d : days) {
      const double x = rp.returns(static_cast<Eigen::Index>(d), i) - m;
      ss += x * x;
    }
    const double sd = std::sqrt(ss / (count - 1.0));
    p.mu(i) = m / dt;
    p.sigma(i) = sd / std::sqrt(dt);
    // Constant series leave only rounding residue in the deviation.
    if (sd <= 1e-12 * std::max(std::abs(m), 1e-12)) {
      throw Error(ErrorKind::ZeroVolatility,
                  "asset " + rp.asset_ids.at(static_cast<std::size_t>(i)) +
                      " has zero volatility in the member windows");
    }
  }
  return p;
}

CorrelationRoot correlation_root(const Eigen::MatrixXd& target) {
  if (target.rows() != target.cols() || target.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "correlation target must be square");
  }
  if (!target.isApprox(target.transpose(), 1e-12) ||
      ((target.diagonal().array() - 1.0).abs() > 1e-12).any()) {
    throw Error(ErrorKind::InvalidArgument, "correlation target must be symmetric with unit diagonal");
  }
  const Eigen::Index n = target.rows();
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd m = target;
    if (jitter > 0.0) {
      m += jitter * Eigen::MatrixXd::Identity(n, n);
      m /= 1.0 + jitter;  // back to a unit diagonal
      m.diagonal().setOnes();
    }
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
      CorrelationRoot root;
      root.lower = llt.matrixL();
      root.jitter_used = jitter;
      return root;
    }
    if (jitter >= 1e-4) break;
    jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0;
  }
  throw Error(ErrorKind::NotFactorizable, "correlation target is not positive definite even with 1e-4 jitter");
}

double shock_at(std::uint64_t seed, std::size_t step, std::size_t asset, std::size_t n_assets) {
  const std::uint64_t index = static_cast<std::uint64_t>(step) * n_assets + asset;
  return normal_quantile(to_open_unit(CounterRng::word_at(seed, 0, index)));
}

SimulatedPanel simulate_paths(const GbmParams& params, const CorrelationRoot& root,
                              std::size_t horizon, std::uint64_t seed) {
  params.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(params.assets());
  if (root.lower.rows() != n || root.lower.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "correlation root does not match GBM parameters");
  }
  if (horizon < 1) {
    throw Error(ErrorKind::InvalidArgument, "simulation horizon must be at least 1 step");
  }
  const double sqrt_dt = std::sqrt(params.dt);
  const Eigen::ArrayXd drift =
      (params.mu.array() - 0.5 * params.sigma.array().square()) * params.dt;

  SimulatedPanel panel;
  panel.seed = seed;
  panel.prices.resize(static_cast<Eigen::Index>(horizon) + 1, n);
  panel.prices.row(0) = params.s0.transpose();
  Eigen::VectorXd z(n);
  for (std::size_t step = 0; step < horizon; ++step) {
    for (Eigen::Index i = 0; i < n; ++i) {
      z(i) = shock_at(seed, step, static_cast<std::size_t>(i), static_cast<std::size_t>(n));
    }
    const Eigen::VectorXd eps = root.lower.triangularView<Eigen::Lower>() * z;
    const Eigen::Index r = static_cast<Eigen::Index>(step);
    for (Eigen::Index i = 0; i < n; ++i) {
      panel.prices(r + 1, i) =
          panel.prices(r, i) * std::exp(drift(i) + params.sigma(i) * eps(i) * sqrt_dt);
    }
  }
  return panel;
}

std::vector<SimulatedPanel> generate_dataset(std::size_t representative, const RepresentativeSet& rs,
                                             const ReturnPanel& rp, const SimulationConfig& cfg,
                                             std::size_t jobs) {
  if (representative >= rs.size()) {
    throw Error(ErrorKind::InvalidArgument,
                "representative index " + std::to_string(representative) + " out of range");
  }
  const GbmParams params =
      estimate_gbm_params(rp, rs.member_times[representative], rs.window, cfg.dt);
  const CorrelationRoot root = correlation_root(rs.matrices[representative]);
  std::vector<SimulatedPanel> out(cfg.n_paths);
  parallel_for(cfg.n_paths, jobs, [&](std::size_t p) {
    out[p] = simulate_paths(params, root, cfg.horizon, cfg.base_seed + p);
    out[p].source_representative = representative;
  });
  return out;
}

std::filesystem::path dump_panel(const SimulatedPanel& panel,
                                 const std::vector<std::string>& asset_ids,
                                 const std::filesystem::path& dir) {
  std::vector<Date> dates;
  dates.reserve(static_cast<std::size_t>(panel.prices.rows()));
  Date d(2000, 1, 3);
  while (dates.size() < static_cast<std::size_t>(panel.prices.rows())) {
    if (!d.is_weekend()) dates.push_back(d);
    d = d.plus_days(1);
  }
  const auto path = dir / ("sim_" + std::to_string(panel.source_representative) + "_" +
                           std::to_string(panel.seed) + ".csv");
  write_price_panel(path, dates, asset_ids, panel.prices);
  return path;
}

}  // namespace rlpm
