#pragma once

#include <algorithm>
#include <cmath>

#include "rlpm/agent.hpp"
#include "rlpm/network.hpp"
#include "fixtures.hpp"

namespace rlpm::testing {

/// A network small enough (132 parameters) for finite-difference checks.
inline NetArchitecture micro_arch() {
  NetArchitecture a;
  a.n_assets = 2;
  a.n_actions = 3;
  a.obs_window = 10;
  a.state_window = 10;
  a.obs_conv1 = {2, 3, 2};
  a.obs_conv2 = {2, 2, 1};
  a.state_conv1 = {2, 3, 2};
  a.state_conv2 = {2, 2, 1};
  a.fc_width = 4;
  a.input_scale = 1.0;
  return a;
}

/// Every parameter drawn uniformly from [-scale, scale].
inline PolicyValueParams random_params(const NetArchitecture& arch, std::uint64_t seed, double scale = 0.5) {
  auto p = PolicyValueParams::initialize(arch, seed);
  CounterRng rng(seed, 99);
  for (auto& v : p.values) v = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

inline Trajectory random_trajectory(const NetArchitecture& arch, std::size_t len, std::uint64_t seed,
                                    bool done) {
  CounterRng rng(seed, 7);
  Trajectory t;
  for (std::size_t s = 0; s < len; ++s) {
    Transition tr;
    tr.observation = normal_matrix(arch.n_assets, arch.obs_window, derive_seed(seed, s, 1));
    tr.state = normal_matrix(arch.state_window, 1, derive_seed(seed, s, 2)).col(0);
    tr.action = rng.uniform_int(arch.n_actions);
    tr.reward = rng.normal();
    tr.done = done && s + 1 == len;
    t.steps.push_back(std::move(tr));
  }
  t.next_observation = normal_matrix(arch.n_assets, arch.obs_window, derive_seed(seed, len, 1));
  t.next_state = normal_matrix(arch.state_window, 1, derive_seed(seed, len, 2)).col(0);
  return t;
}

// The objective with returns and advantages frozen at `base`, as an
// independent re-derivation of what loss_and_gradients differentiates.
inline double frozen_surrogate(const PolicyValueParams& p, const PolicyValueParams& base,
                               const Trajectory& tr, const TrainConfig& cfg) {
  const std::size_t n = tr.steps.size();
  double boot = 0.0;
  if (!tr.steps.back().done) boot = forward(base, tr.next_observation, tr.next_state).value;
  std::vector<double> R(n);
  double run = boot;
  for (std::size_t k = n; k-- > 0;) {
    run = tr.steps[k].reward + cfg.gamma * (tr.steps[k].done ? 0.0 : run);
    R[k] = run;
  }
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto b = forward(base, tr.steps[t].observation, tr.steps[t].state);
    const auto c = forward(p, tr.steps[t].observation, tr.steps[t].state);
    const double adv = R[t] - b.value;
    double entropy = 0.0;
    for (Eigen::Index a = 0; a < c.policy.size(); ++a) entropy -= c.policy(a) * std::log(c.policy(a));
    total += -std::log(c.policy(static_cast<Eigen::Index>(tr.steps[t].action))) * adv +
             cfg.value_coef * 0.5 * (R[t] - c.value) * (R[t] - c.value) - cfg.entropy_coef * entropy;
  }
  return total / static_cast<double>(n);
}

/// Largest relative error between loss_and_gradients and central differences
/// (step h) of the frozen surrogate; rel = |a - b| / max(1e-6, |a|, |b|).
inline double max_gradient_error(const PolicyValueParams& p, const Trajectory& tr, const TrainConfig& cfg,
                                 double h = 1e-5) {
  const auto lg = loss_and_gradients(p, tr, cfg);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.values.size(); ++i) {
    auto hi = p, lo = p;
    hi.values(i) += h;
    lo.values(i) -= h;
    const double fd = (frozen_surrogate(hi, p, tr, cfg) - frozen_surrogate(lo, p, tr, cfg)) / (2 * h);
    const double a = lg.gradient(i);
    worst = std::max(worst, std::abs(a - fd) / std::max({1e-6, std::abs(a), std::abs(fd)}));
  }
  return worst;
}

}  // namespace rlpm::testing
