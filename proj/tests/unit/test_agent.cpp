#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "micro_net.hpp"
#include "rlpm/agent.hpp"
#include "rlpm/error.hpp"
#include "rlpm/rcme.hpp"

using namespace rlpm;
using namespace rlpm::testing;

namespace {

std::size_t block_offset(const NetArchitecture& a, const std::string& name) {
  for (const auto& b : parameter_layout(a))
    if (b.name == name) return b.offset;
  throw std::runtime_error("no block " + name);
}

std::shared_ptr<const ActionSet> actions2() {
  auto set = std::make_shared<ActionSet>();
  set->grid_step_bp = 5000;
  set->actions = {{{10000, 0}}, {{5000, 5000}}, {{0, 10000}}};
  return set;
}

EnvFactory trend_factory(std::size_t horizon) {
  Eigen::MatrixXd r(400, 2);
  r.col(0).setConstant(0.001);
  r.col(1).setConstant(-0.001);
  EnvConfig env;
  env.episode_horizon = horizon;
  return dataset_env_factory({std::make_shared<const Eigen::MatrixXd>(r)}, env, actions2());
}

struct PoolFixture {
  ReturnPanel rp;
  RepresentativeSet rs;
  PoolConfig cfg;

  PoolFixture() {
    rp = make_return_panel(normal_matrix(400, 2, 3, 0.01, 0.0003));
    const auto cms = build_cms(rp, 60, 5);
    rs = representative_matrices(cluster(build_cmdm(cms), 2, Linkage::Average, cms.anchor_times), cms);
    rs.asset_ids = rp.asset_ids;
    cfg.models_per_representative = 2;
    cfg.simulation.n_paths = 4;
    cfg.simulation.horizon = 120;
    cfg.env.episode_horizon = 20;
    cfg.train.total_steps = 40;
    cfg.train.workers = 2;
    cfg.train.rollout = 5;
  }
};

}  // namespace

TEST(Loss, GradientMatchesFiniteDifferencesOnMicroNets) {
  const auto arch = micro_arch();
  TrainConfig cfg;
  cfg.gamma = 0.9;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = random_params(arch, 1000 + s);
    const auto tr = random_trajectory(arch, 1 + s % 5, 2000 + s, s % 2 == 0);
    EXPECT_NEAR(loss_and_gradients(p, tr, cfg).loss.total, frozen_surrogate(p, p, tr, cfg), 1e-12);
    const double worst = max_gradient_error(p, tr, cfg);
    EXPECT_LE(worst, 1e-4) << "net " << s;
  }
}

TEST(Loss, OneStepClosedForm) {
  const auto arch = NetArchitecture::reference(2, 4);
  const auto p = PolicyValueParams::initialize(arch, 3);  // uniform policy, V = 0
  Trajectory tr;
  tr.steps.push_back({normal_matrix(2, 60, 1, 0.01), normal_matrix(120, 1, 2, 0.01).col(0), 2, 0.7, true});
  TrainConfig cfg;
  cfg.gamma = 0.37;
  const auto lg = loss_and_gradients(p, tr, cfg);
  EXPECT_NEAR(lg.loss.policy, std::log(4.0) * 0.7, 1e-12);
  EXPECT_NEAR(lg.loss.value, 0.5 * 0.49, 1e-12);
  EXPECT_NEAR(lg.loss.entropy, std::log(4.0), 1e-12);
  const auto pb = static_cast<Eigen::Index>(block_offset(arch, "policy.bias"));
  const auto vb = static_cast<Eigen::Index>(block_offset(arch, "value.bias"));
  for (Eigen::Index a = 0; a < 4; ++a) {
    EXPECT_NEAR(lg.gradient(pb + a), (0.25 - (a == 2 ? 1.0 : 0.0)) * 0.7, 1e-12);
  }
  EXPECT_NEAR(lg.gradient(vb), -cfg.value_coef * 0.7, 1e-12);
}

TEST(Loss, ZeroRewardsLeaveOnlyTheEntropyGradient) {
  const auto arch = micro_arch();
  auto p = random_params(arch, 44);
  // Zero value head: V = 0 exactly.
  const auto vw = block_offset(arch, "value.weight");
  for (std::size_t i = vw; i < vw + arch.fc_width + 1; ++i) p.values(static_cast<Eigen::Index>(i)) = 0.0;
  auto tr = random_trajectory(arch, 4, 45, true);
  for (auto& s : tr.steps) s.reward = 0.0;
  TrainConfig cfg;
  const auto lg = loss_and_gradients(p, tr, cfg);
  EXPECT_EQ(lg.loss.value, 0.0);
  EXPECT_EQ(lg.loss.policy, 0.0);
  auto mean_entropy = [&](const PolicyValueParams& q) {
    double h = 0.0;
    for (const auto& s : tr.steps) {
      const auto pi = forward(q, s.observation, s.state).policy;
      for (Eigen::Index a = 0; a < pi.size(); ++a) h -= pi(a) * std::log(pi(a));
    }
    return h / static_cast<double>(tr.steps.size());
  };
  for (Eigen::Index i = 0; i < p.values.size(); ++i) {
    auto hi = p, lo = p;
    hi.values(i) += 1e-5;
    lo.values(i) -= 1e-5;
    const double dh = (mean_entropy(hi) - mean_entropy(lo)) / 2e-5;
    EXPECT_NEAR(lg.gradient(i), -cfg.entropy_coef * dh, 1e-9) << i;
  }
}

TEST(Loss, EmptyTrajectoryRejected) {
  EXPECT_THROW(loss_and_gradients(random_params(micro_arch(), 1), Trajectory{}, TrainConfig{}), Error);
}

TEST(Adam, MatchesHandComputedSteps) {
  Adam adam(1, 0.1, 0.9, 0.999, 1e-8);
  Eigen::VectorXd x(1);
  x << 1.0;
  Eigen::VectorXd g(1);
  g << 2.0;
  adam.apply(x, g);
  // First step moves by lr * sign(g) up to eps.
  EXPECT_NEAR(x(0), 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  g << -1.0;
  adam.apply(x, g);
  const double m = 0.9 * 0.2 + 0.1 * -1.0;
  const double v = 0.999 * 0.004 + 0.001 * 1.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(x(0), 1.0 - 0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-12);
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.gamma = 1.0;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.workers = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, ZeroStepsReturnsInitialParams) {
  TrainConfig cfg;
  cfg.total_steps = 0;
  const auto arch = NetArchitecture::reference(2, 3);
  const auto res = train(trend_factory(50), arch, cfg);
  EXPECT_EQ(res.params.values, PolicyValueParams::initialize(arch, res.params.init_seed).values);
  EXPECT_EQ(res.env_steps, 0u);
  EXPECT_EQ(res.updates, 0u);
}

TEST(Train, SynchronousRunsAreBitReproducible) {
  TrainConfig cfg;
  cfg.total_steps = 300;
  cfg.workers = 3;
  cfg.rollout = 7;
  cfg.seed = 11;
  const auto arch = NetArchitecture::reference(2, 3);
  const auto a = train(trend_factory(30), arch, cfg, 1);
  const auto b = train(trend_factory(30), arch, cfg, 3);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(a.env_steps, 300u);
  EXPECT_EQ(a.episodes, b.episodes);
  EXPECT_GT(a.episodes, 0u);
  EXPECT_NE(a.params.values, PolicyValueParams::initialize(arch, a.params.init_seed).values);
  cfg.seed = 12;
  EXPECT_NE(train(trend_factory(30), arch, cfg).params.values, a.params.values);
}

TEST(Train, PolicyStaysAValidDistribution) {
  TrainConfig cfg;
  cfg.total_steps = 200;
  cfg.learning_rate = 1e-2;
  const auto arch = NetArchitecture::reference(2, 3);
  const auto res = train(trend_factory(25), arch, cfg);
  auto factory = trend_factory(25);
  auto ep = factory(1);
  const auto pi = forward(res.params, ep.current.observation.values, ep.current.state).policy;
  EXPECT_TRUE(pi.allFinite());
  EXPECT_GE(pi.minCoeff(), 0.0);
  EXPECT_NEAR(pi.sum(), 1.0, 1e-12);
  ASSERT_FALSE(res.curve.empty());
  EXPECT_EQ(res.curve.back().env_steps, 200u);
}

TEST(Train, AsynchronousModeConsumesTheBudget) {
  TrainConfig cfg;
  cfg.total_steps = 200;
  cfg.mode = TrainMode::Asynchronous;
  cfg.workers = 4;
  const auto res = train(trend_factory(25), NetArchitecture::reference(2, 3), cfg, 2);
  EXPECT_EQ(res.env_steps, 200u);
  EXPECT_TRUE(res.params.values.allFinite());
}

TEST(DatasetEnvFactory, SeededStarts) {
  auto f = trend_factory(50);
  const auto a = f(3), b = f(3);
  EXPECT_EQ(a.env.state().t, b.env.state().t);
  std::set<std::size_t> starts;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto e = f(s);
    EXPECT_GE(e.env.state().t, 59u);
    EXPECT_LE(e.env.state().t + 50, 399u);
    starts.insert(e.env.state().t);
  }
  EXPECT_GT(starts.size(), 10u);
  EXPECT_THROW(dataset_env_factory({}, EnvConfig{}, actions2()), Error);
}

TEST(ModelPool, CountsSeedsAndMetadata) {
  PoolFixture fx;
  fx.cfg.models_per_representative = 1;
  PoolBuildReport report;
  const auto pool1 = build_model_pool(fx.rs, fx.rp, actions2(), fx.cfg, 2, &report);
  EXPECT_EQ(pool1.representatives(), 2u);
  for (const auto& sub : pool1.sub_pools) EXPECT_EQ(sub.size(), 1u);
  EXPECT_TRUE(report.failures.empty());
  EXPECT_EQ(report.curves.size(), 2u);

  fx.cfg.models_per_representative = 4;
  const auto pool4 = build_model_pool(fx.rs, fx.rp, actions2(), fx.cfg, 2);
  std::set<std::uint64_t> seeds;
  for (std::size_t r = 0; r < 2; ++r) {
    ASSERT_EQ(pool4.sub_pools[r].size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& m = pool4.sub_pools[r][i];
      EXPECT_EQ(m.representative, r);
      EXPECT_EQ(m.index, i);
      EXPECT_EQ(m.env_steps, 40u);
      seeds.insert(m.seed);
    }
  }
  EXPECT_EQ(seeds.size(), 8u);
}

TEST(ModelPool, SerializationRoundTripsBitExactly) {
  PoolFixture fx;
  TempDir dir("pool");
  const auto pool = build_model_pool(fx.rs, fx.rp, actions2(), fx.cfg);
  save_model_pool(pool, dir / "pool.bin");
  const auto back = load_model_pool(dir / "pool.bin", &pool.arch);
  EXPECT_EQ(back.arch, pool.arch);
  EXPECT_EQ(back.models_per_representative, pool.models_per_representative);
  ASSERT_EQ(back.sub_pools.size(), pool.sub_pools.size());
  for (std::size_t r = 0; r < pool.sub_pools.size(); ++r) {
    ASSERT_EQ(back.sub_pools[r].size(), pool.sub_pools[r].size());
    for (std::size_t i = 0; i < pool.sub_pools[r].size(); ++i) {
      const auto& a = pool.sub_pools[r][i];
      const auto& b = back.sub_pools[r][i];
      EXPECT_EQ(a.seed, b.seed);
      EXPECT_EQ(a.env_steps, b.env_steps);
      EXPECT_EQ(std::bit_cast<std::uint64_t>(a.final_training_sharpe), std::bit_cast<std::uint64_t>(b.final_training_sharpe));
      EXPECT_EQ(a.params.init_seed, b.params.init_seed);
      EXPECT_EQ(a.params.values, b.params.values);
    }
  }
  save_model_pool(back, dir / "again.bin");
  std::ifstream x(dir / "pool.bin", std::ios::binary), y(dir / "again.bin", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(x), {}), std::string(std::istreambuf_iterator<char>(y), {}));
  save_model_pool_metadata(pool, dir / "pool.meta");
  EXPECT_TRUE(std::filesystem::exists(dir / "pool.meta"));
}

TEST(ModelPool, LoadRejectsMismatchesAndCorruption) {
  PoolFixture fx;
  fx.cfg.models_per_representative = 1;
  TempDir dir("pool");
  const auto pool = build_model_pool(fx.rs, fx.rp, actions2(), fx.cfg);
  save_model_pool(pool, dir / "pool.bin");
  auto other = pool.arch;
  other.n_actions = 5;
  try {
    load_model_pool(dir / "pool.bin", &other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
  // Flip a byte inside the stored architecture fields: hash check fails.
  {
    std::fstream f(dir / "pool.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8 + 4 + 8 + 16 + 8);
    f.put(static_cast<char>(99));
  }
  try {
    load_model_pool(dir / "pool.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ArtifactFormat);
  }
  {
    std::ofstream f(dir / "short.bin", std::ios::binary);
    f << "RLPMPOOL";
  }
  EXPECT_THROW(load_model_pool(dir / "short.bin"), Error);
}

TEST(ModelPool, EmptySubPoolFails) {
  PoolFixture fx;
  fx.cfg.train.learning_rate = 1e300;  // diverges immediately
  fx.cfg.train.grad_clip = 1e300;
  PoolBuildReport report;
  try {
    build_model_pool(fx.rs, fx.rp, actions2(), fx.cfg, 1, &report);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyModelPool);
  }
}

TEST(Infer, SingletonAgreementAndAveraging) {
  const auto arch = NetArchitecture::reference(2, 5);
  RepresentativeSet rs;
  rs.window = 60;
  for (double rho : {0.6, -0.6}) {
    CorrelationMatrix c;
    c.values = Eigen::Matrix2d{{1, rho}, {rho, 1}};
    rs.matrices.push_back(c);
    rs.member_times.push_back({});
  }
  auto model = [&](std::uint64_t seed) {
    PoolModel m;
    m.params = random_params(arch, seed, 0.05);
    return m;
  };
  ModelPool pool;
  pool.arch = arch;
  pool.sub_pools = {{model(1)}, {model(2), model(3), model(4)}};
  const Eigen::MatrixXd obs = normal_matrix(2, 60, 5, 0.01);
  const Eigen::VectorXd st = normal_matrix(120, 1, 6, 0.01).col(0);
  const Eigen::MatrixXd near0 = Eigen::Matrix2d{{1, 0.5}, {0.5, 1}};
  const Eigen::MatrixXd near1 = Eigen::Matrix2d{{1, -0.5}, {-0.5, 1}};

  Eigen::Index best = 0;
  forward(pool.sub_pools[0][0].params, obs, st).policy.maxCoeff(&best);
  EXPECT_EQ(infer(pool, rs, near0, obs, st), static_cast<std::size_t>(best));

  Eigen::VectorXd direct = Eigen::VectorXd::Zero(5);
  for (const auto& m : pool.sub_pools[1]) direct += forward(m.params, obs, st).policy;
  direct /= 3.0;
  EXPECT_LT((ensemble_policy(pool.sub_pools[1], obs, st) - direct).cwiseAbs().maxCoeff(), 1e-12);
  direct.maxCoeff(&best);
  const auto chosen = infer(pool, rs, near1, obs, st);
  EXPECT_EQ(chosen, static_cast<std::size_t>(best));

  // Member order does not matter.
  std::swap(pool.sub_pools[1][0], pool.sub_pools[1][2]);
  EXPECT_EQ(infer(pool, rs, near1, obs, st), chosen);

  // Stochastic mode is seeded and stays in range.
  EXPECT_EQ(infer(pool, rs, near1, obs, st, InferenceMode::Stochastic, 9),
            infer(pool, rs, near1, obs, st, InferenceMode::Stochastic, 9));
  EXPECT_LT(infer(pool, rs, near1, obs, st, InferenceMode::Stochastic, 10), 5u);

  try {
    infer(pool, rs, Eigen::Matrix3d::Identity(), obs, st);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(Infer, AgreementOnTheSameIndex) {
  // Two members whose policies both peak at action 2.
  const auto arch = NetArchitecture::reference(2, 4);
  ModelPool pool;
  pool.arch = arch;
  PoolModel m;
  m.params = PolicyValueParams::initialize(arch, 1);
  const auto pb = static_cast<Eigen::Index>(block_offset(arch, "policy.bias"));
  m.params.values(pb + 2) = 1.0;
  PoolModel m2 = m;
  m2.params.values(pb + 1) = 0.5;
  pool.sub_pools = {{m, m2}};
  RepresentativeSet rs;
  CorrelationMatrix c;
  c.values = Eigen::Matrix2d::Identity();
  rs.matrices = {c};
  rs.member_times = {{}};
  EXPECT_EQ(infer(pool, rs, Eigen::Matrix2d::Identity(), Eigen::MatrixXd::Zero(2, 60), Eigen::VectorXd::Zero(120)), 2u);
}
