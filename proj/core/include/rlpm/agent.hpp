#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rlpm/action_space.hpp"
#include "rlpm/network.hpp"
#include "rlpm/portfolio_env.hpp"
#include "rlpm/rcme.hpp"
#include "rlpm/simulator.hpp"

namespace rlpm {

enum class TrainMode { Synchronous, Asynchronous };

struct TrainConfig {
  double gamma = 0.99;
  double learning_rate = 3e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::size_t rollout = 20;
  std::size_t workers = 4;
  std::uint64_t total_steps = 100000;
  double grad_clip = 0.5;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::Synchronous;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct Transition {
  Eigen::MatrixXd observation;
  Eigen::VectorXd state;
  std::size_t action = 0;
  double reward = 0.0;
  bool done = false;
};

/// A rollout fragment plus the inputs after its last step (for bootstrapping).
struct Trajectory {
  std::vector<Transition> steps;
  Eigen::MatrixXd next_observation;
  Eigen::VectorXd next_state;
};

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

struct LossAndGradient {
  LossTerms loss;
  Eigen::VectorXd gradient;
};

/// n-step advantage actor-critic objective, averaged over the rollout:
///   -log pi(a|s) * A + value_coef * 0.5 * (R - V)^2 - entropy_coef * H(pi)
/// with R the discounted return bootstrapped from V(next) unless the last step
/// ended the episode, and A = R - V held constant in the policy term.
LossAndGradient loss_and_gradients(const PolicyValueParams& params, const Trajectory& trajectory,
                                   const TrainConfig& cfg);

/// Bias-corrected first/second-moment optimizer state.
class Adam {
 public:
  Adam(std::size_t size, double lr, double beta1, double beta2, double eps);
  void apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  std::uint64_t steps() const { return t_; }

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

struct Episode {
  PortfolioEnv env;
  StepOutput current;
};

/// Produces a freshly reset episode for a given seed.
using EnvFactory = std::function<Episode(std::uint64_t seed)>;

/// Episodes over random (panel, start) draws from a set of return matrices.
EnvFactory dataset_env_factory(std::vector<std::shared_ptr<const Eigen::MatrixXd>> panels,
                               EnvConfig env_cfg, std::shared_ptr<const ActionSet> actions);

struct CurvePoint {
  std::uint64_t env_steps = 0;
  std::uint64_t episodes = 0;
  double loss = 0.0;
  double mean_episode_sharpe = 0.0;
};

struct TrainResult {
  PolicyValueParams params;
  std::uint64_t env_steps = 0;
  std::uint64_t updates = 0;
  std::uint64_t episodes = 0;
  /// Mean whole-episode Sharpe over the most recent finished episodes (0 if none).
  double final_training_sharpe = 0.0;
  std::vector<CurvePoint> curve;
};

/// Advantage actor-critic with `workers` independently seeded environments.
/// Synchronous mode: every round, all workers roll out with the same
/// parameters, then their gradients are applied in worker order; the result
/// is bit-reproducible for a given seed. Asynchronous mode: one thread per
/// worker, each applying its update to the shared parameters as soon as it
/// is ready.
TrainResult train(const EnvFactory& factory, const NetArchitecture& arch, const TrainConfig& cfg,
                  std::size_t jobs = 1);

struct PoolModel {
  std::size_t representative = 0;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::uint64_t env_steps = 0;
  double final_training_sharpe = 0.0;
  PolicyValueParams params;
};

/// Sub-pool per representative correlation matrix; the whole is the total pool.
struct ModelPool {
  NetArchitecture arch;
  std::size_t models_per_representative = 0;
  std::vector<std::vector<PoolModel>> sub_pools;

  std::size_t representatives() const { return sub_pools.size(); }
};

struct PoolConfig {
  std::size_t models_per_representative = 4;
  TrainConfig train{};
  SimulationConfig simulation{};
  EnvConfig env{};
};

struct PoolBuildReport {
  std::vector<std::string> failures;  // one line per failed model
  std::vector<std::vector<CurvePoint>> curves;  // per trained model, pool order
};

ModelPool build_model_pool(const RepresentativeSet& rs, const ReturnPanel& rp,
                           std::shared_ptr<const ActionSet> actions, const PoolConfig& cfg,
                           std::size_t jobs = 1, PoolBuildReport* report = nullptr);

enum class InferenceMode { Deterministic, Stochastic };

/// Mean of the sub-pool members' policy vectors.
Eigen::VectorXd ensemble_policy(const std::vector<PoolModel>& sub_pool,
                                const Eigen::MatrixXd& observation, const Eigen::VectorXd& state);

/// Picks the sub-pool of the representative nearest to `current_corr` and
/// returns the argmax (lowest index on ties) or a draw from the averaged policy.
std::size_t infer(const ModelPool& pool, const RepresentativeSet& rs,
                  const Eigen::MatrixXd& current_corr, const Eigen::MatrixXd& observation,
                  const Eigen::VectorXd& state, InferenceMode mode = InferenceMode::Deterministic,
                  std::uint64_t seed = 0);

void save_model_pool(const ModelPool& pool, const std::filesystem::path& path);
/// Verifies the stored architecture hash; when `expected` is given it must match too.
ModelPool load_model_pool(const std::filesystem::path& path,
                          const NetArchitecture* expected = nullptr);
/// Human-readable sidecar: one line per model with its training metadata.
void save_model_pool_metadata(const ModelPool& pool, const std::filesystem::path& path);

}  // namespace rlpm
