#include <benchmark/benchmark.h>

#include <cmath>

#include "rlpm/agent.hpp"
#include "rlpm/allocators.hpp"
#include "rlpm/rcme.hpp"
#include "rlpm/simulator.hpp"

using namespace rlpm;

namespace {

GbmParams flat_params(std::size_t n) {
  GbmParams p;
  p.mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 0.05);
  p.sigma = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 0.2);
  p.s0 = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 100.0);
  return p;
}

Eigen::MatrixXd equicorrelated(std::size_t n, double rho) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), rho);
  c.diagonal().setOnes();
  return c;
}

ReturnPanel synthetic_panel(std::size_t rows, std::size_t n) {
  const auto sim = simulate_paths(flat_params(n), correlation_root(equicorrelated(n, 0.3)), rows, 11);
  ReturnPanel rp;
  rp.returns = returns_from_prices(sim.prices);
  for (std::size_t i = 0; i < rows; ++i) rp.dates.push_back(Date(2000, 1, 3).plus_days(static_cast<int>(i)));
  for (std::size_t i = 0; i < n; ++i) rp.asset_ids.push_back("A" + std::to_string(i));
  return rp;
}

}  // namespace

static void BM_SimulatePaths(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = flat_params(n);
  const auto root = correlation_root(equicorrelated(n, 0.3));
  for (auto _ : state) benchmark::DoNotOptimize(simulate_paths(p, root, 2520, 7));
  state.SetItemsProcessed(state.iterations() * 2520 * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_SimulatePaths)->Arg(2)->Arg(5)->Arg(10);

static void BM_BuildCmdm(benchmark::State& state) {
  const auto rp = synthetic_panel(static_cast<std::size_t>(state.range(0)), 5);
  const auto cms = build_cms(rp, 60);
  for (auto _ : state) benchmark::DoNotOptimize(build_cmdm(cms));
}
BENCHMARK(BM_BuildCmdm)->Arg(500)->Arg(1500)->Unit(benchmark::kMillisecond);

static void BM_Cluster(benchmark::State& state) {
  const auto rp = synthetic_panel(static_cast<std::size_t>(state.range(0)), 5);
  const auto cms = build_cms(rp, 60);
  const auto cmdm = build_cmdm(cms);
  for (auto _ : state) benchmark::DoNotOptimize(cluster(cmdm, 5, Linkage::Average, cms.anchor_times));
}
BENCHMARK(BM_Cluster)->Arg(500)->Arg(1500)->Unit(benchmark::kMillisecond);

static void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto params = PolicyValueParams::initialize(NetArchitecture::reference(n, 30), 3);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), 60, 0.001);
  const Eigen::VectorXd st = Eigen::VectorXd::Constant(120, 0.0005);
  ForwardCache cache;
  for (auto _ : state) {
    forward(params, obs, st, cache);
    benchmark::DoNotOptimize(cache.value);
  }
}
BENCHMARK(BM_Forward)->Arg(2)->Arg(5)->Arg(10)->Unit(benchmark::kMicrosecond);

static void BM_ForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto params = PolicyValueParams::initialize(NetArchitecture::reference(n, 30), 3);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), 60, 0.001);
  const Eigen::VectorXd st = Eigen::VectorXd::Constant(120, 0.0005);
  const Eigen::VectorXd dlogits = Eigen::VectorXd::Constant(30, 0.01);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.values.size());
  ForwardCache cache;
  for (auto _ : state) {
    forward(params, obs, st, cache);
    backward(params, cache, dlogits, 0.1, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(2)->Arg(5)->Arg(10)->Unit(benchmark::kMicrosecond);

static void BM_Markowitz(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto rp = synthetic_panel(300, n);
  const auto m = estimate_moments(rp.returns, 299, 252);
  for (auto _ : state) benchmark::DoNotOptimize(markowitz_weights(m));
}
BENCHMARK(BM_Markowitz)->Arg(3)->Arg(10)->Arg(30)->Unit(benchmark::kMicrosecond);

static void BM_RiskParity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto rp = synthetic_panel(300, n);
  const auto m = estimate_moments(rp.returns, 299, 252);
  for (auto _ : state) benchmark::DoNotOptimize(risk_parity_weights(m));
}
BENCHMARK(BM_RiskParity)->Arg(3)->Arg(10)->Arg(30)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
