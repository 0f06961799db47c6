#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "rlpm/error.hpp"
#include "rlpm/rcme.hpp"
#include "rlpm/simulator.hpp"

using namespace rlpm;
using namespace rlpm::testing;

namespace {

GbmParams params3() {
  GbmParams p;
  p.mu = Eigen::Vector3d(0.08, -0.02, 0.15);
  p.sigma = Eigen::Vector3d(0.2, 0.1, 0.35);
  p.s0 = Eigen::Vector3d(100, 50, 10);
  return p;
}

Eigen::MatrixXd corr3() {
  Eigen::Matrix3d c;
  c << 1, 0.8, -0.3,  //
      0.8, 1, 0.1,    //
      -0.3, 0.1, 1;
  return c;
}

}  // namespace

TEST(CorrelationRoot, ReconstructsTarget) {
  const auto root = correlation_root(corr3());
  EXPECT_EQ(root.jitter_used, 0.0);
  EXPECT_LT((root.reconstruct() - corr3()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CorrelationRoot, JittersSingularTargets) {
  Eigen::Matrix3d c = Eigen::Matrix3d::Ones();  // rank one
  const auto root = correlation_root(c);
  EXPECT_GT(root.jitter_used, 0.0);
  EXPECT_LE(root.jitter_used, 1e-4);
  EXPECT_LT((root.reconstruct().diagonal().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(CorrelationRoot, RejectsIndefiniteTargets) {
  Eigen::Matrix3d c;
  c << 1, 0.9, -0.9,  //
      0.9, 1, 0.9,    //
      -0.9, 0.9, 1;
  try {
    correlation_root(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotFactorizable);
  }
}

TEST(SimulatePaths, ShapeSeedAndDeterminism) {
  const auto root = correlation_root(corr3());
  const auto a = simulate_paths(params3(), root, 50, 9);
  const auto b = simulate_paths(params3(), root, 50, 9);
  const auto c = simulate_paths(params3(), root, 50, 10);
  EXPECT_EQ(a.prices.rows(), 51);
  EXPECT_EQ(a.horizon(), 50u);
  EXPECT_EQ(a.prices.row(0), params3().s0.transpose());
  EXPECT_EQ(a.prices, b.prices);
  EXPECT_NE(a.prices, c.prices);
  EXPECT_GT(a.prices.minCoeff(), 0.0);
}

TEST(SimulatePaths, IteratedStepsEqualClosedForm) {
  const auto p = params3();
  const auto root = correlation_root(corr3());
  const std::size_t h = 200;
  const auto sim = simulate_paths(p, root, h, 31);
  Eigen::Vector3d sum_eps = Eigen::Vector3d::Zero();
  for (std::size_t s = 0; s < h; ++s) {
    Eigen::Vector3d z;
    for (int i = 0; i < 3; ++i) z(i) = shock_at(31, s, static_cast<std::size_t>(i), 3);
    sum_eps += root.lower * z;
  }
  for (int i = 0; i < 3; ++i) {
    const double closed = p.s0(i) * std::exp((p.mu(i) - 0.5 * p.sigma(i) * p.sigma(i)) * p.dt * h +
                                             p.sigma(i) * std::sqrt(p.dt) * sum_eps(i));
    EXPECT_NEAR(sim.prices(static_cast<Eigen::Index>(h), i) / closed, 1.0, 1e-10);
  }
}

TEST(SimulatePaths, RejectsBadInput) {
  auto p = params3();
  const auto root = correlation_root(corr3());
  EXPECT_THROW(simulate_paths(p, root, 0, 1), Error);
  p.sigma(1) = 0;
  EXPECT_THROW(simulate_paths(p, root, 5, 1), Error);
  EXPECT_THROW(simulate_paths(params3(), correlation_root(Eigen::Matrix2d::Identity().eval()), 5, 1), Error);
}

TEST(EstimateGbmParams, UsesUnionOfMemberWindows) {
  const Eigen::MatrixXd r = normal_matrix(300, 2, 5, 0.01, 0.0004);
  const auto rp = make_return_panel(r);
  // Overlapping windows ending at 99 and 109 cover rows 40..109.
  const auto p = estimate_gbm_params(rp, {99, 109}, 60);
  for (int i = 0; i < 2; ++i) {
    const Eigen::VectorXd col = r.col(i).segment(40, 70);
    const double m = col.mean();
    const double sd = std::sqrt((col.array() - m).square().sum() / 69.0);
    EXPECT_NEAR(p.mu(i), m * 252, 1e-12);
    EXPECT_NEAR(p.sigma(i), sd * std::sqrt(252.0), 1e-12);
    EXPECT_EQ(p.s0(i), 100.0);
  }
}

TEST(EstimateGbmParams, Errors) {
  Eigen::MatrixXd r = normal_matrix(100, 2, 6, 0.01);
  auto rp = make_return_panel(r);
  EXPECT_THROW(estimate_gbm_params(rp, {20}, 20), Error);  // 20 < 30 samples
  EXPECT_THROW(estimate_gbm_params(rp, {200}, 60), Error);
  r.col(1).setConstant(0.0005);
  rp = make_return_panel(r);
  try {
    estimate_gbm_params(rp, {80}, 60);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroVolatility);
  }
}

TEST(GenerateDataset, SeedsAndSources) {
  const auto rp = make_return_panel(normal_matrix(200, 2, 7, 0.01));
  const auto cms = build_cms(rp, 60, 5);
  const auto rs = representative_matrices(cluster(build_cmdm(cms), 2, Linkage::Average, cms.anchor_times), cms);
  SimulationConfig cfg;
  cfg.n_paths = 5;
  cfg.horizon = 30;
  cfg.base_seed = 100;
  const auto a = generate_dataset(1, rs, rp, cfg, 1);
  const auto b = generate_dataset(1, rs, rp, cfg, 3);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seed, 100 + i);
    EXPECT_EQ(a[i].source_representative, 1u);
    EXPECT_EQ(a[i].prices, b[i].prices);
  }
  EXPECT_THROW(generate_dataset(2, rs, rp, cfg), Error);
}

TEST(DumpPanel, WritesLoadableFile) {
  TempDir dir("sim");
  const auto root = correlation_root(corr3());
  const auto sim = simulate_paths(params3(), root, 150, 3);
  const auto path = dump_panel(sim, {"a", "b", "c"}, dir.path());
  EXPECT_EQ(path.filename().string(), "sim_0_3.csv");
  const auto panel = load_price_panel(path);
  EXPECT_EQ(panel.days(), 151u);
  EXPECT_LT((panel.prices - sim.prices).cwiseAbs().maxCoeff(), 1e-9);
}
