#include "rlpm/agent.hpp"

#include <atomic>
#include <cmath>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include "rlpm/error.hpp"
#include "rlpm/parallel.hpp"
#include "rlpm/rng.hpp"

namespace rlpm {

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "gamma must lie in (0, 1]");
  }
  if (!(learning_rate > 0.0) || !(grad_clip > 0.0) || !(entropy_coef >= 0.0) ||
      !(value_coef >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "learning rate and clip must be positive, coefficients non-negative");
  }
  if (rollout < 1 || workers < 1) {
    throw Error(ErrorKind::InvalidArgument, "rollout length and worker count must be positive");
  }
}

LossAndGradient loss_and_gradients(const PolicyValueParams& params, const Trajectory& trajectory,
                                   const TrainConfig& cfg) {
  const auto& steps = trajectory.steps;
  if (steps.empty()) {
    throw Error(ErrorKind::InvalidArgument, "empty trajectory");
  }
  const std::size_t len = steps.size();
  std::vector<ForwardCache> caches(len);
  for (std::size_t t = 0; t < len; ++t) {
    forward(params, steps[t].observation, steps[t].state, caches[t]);
  }
  double bootstrap = 0.0;
  if (!steps.back().done) {
    bootstrap = forward(params, trajectory.next_observation, trajectory.next_state).value;
  }

  std::vector<double> returns(len);
  double running = bootstrap;
  for (std::size_t k = len; k-- > 0;) {
    running = steps[k].reward + cfg.gamma * (steps[k].done ? 0.0 : running);
    returns[k] = running;
  }

  const double inv = 1.0 / static_cast<double>(len);
  LossAndGradient out;
  out.gradient = Eigen::VectorXd::Zero(params.values.size());
  for (std::size_t t = 0; t < len; ++t) {
    const auto& c = caches[t];
    const std::size_t a = steps[t].action;
    if (a >= static_cast<std::size_t>(c.logits.size())) {
      throw Error(ErrorKind::InvalidActionIndex, "trajectory action outside the policy head");
    }
    const double top = c.logits.maxCoeff();
    const double lse = top + std::log((c.logits.array() - top).exp().sum());
    const Eigen::VectorXd logp = c.logits.array() - lse;
    const double entropy = -(c.policy.array() * logp.array()).sum();
    const double advantage = returns[t] - c.value;

    out.loss.policy += -logp(static_cast<Eigen::Index>(a)) * advantage * inv;
    out.loss.value += 0.5 * advantage * advantage * inv;
    out.loss.entropy += entropy * inv;

    Eigen::VectorXd dlogits = c.policy * advantage;
    dlogits(static_cast<Eigen::Index>(a)) -= advantage;
    dlogits += cfg.entropy_coef * (c.policy.array() * (logp.array() + entropy)).matrix();
    dlogits *= inv;
    const double dvalue = -cfg.value_coef * advantage * inv;
    backward(params, c, dlogits, dvalue, out.gradient);
  }
  out.loss.total = out.loss.policy + cfg.value_coef * out.loss.value - cfg.entropy_coef * out.loss.entropy;
  if (!std::isfinite(out.loss.total) || !out.gradient.allFinite()) {
    throw Error(ErrorKind::NonFiniteLoss, "actor-critic loss is not finite");
  }
  return out;
}

Adam::Adam(std::size_t size, double lr, double beta1, double beta2, double eps)
    : m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::apply(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

EnvFactory dataset_env_factory(std::vector<std::shared_ptr<const Eigen::MatrixXd>> panels,
                               EnvConfig env_cfg, std::shared_ptr<const ActionSet> actions) {
  if (panels.empty()) {
    throw Error(ErrorKind::InvalidArgument, "training dataset is empty");
  }
  for (const auto& p : panels) {
    if (!p || static_cast<std::size_t>(p->rows()) < env_cfg.obs_window + 1) {
      throw Error(ErrorKind::InsufficientHistory,
                  "simulated panel too short for a " + std::to_string(env_cfg.obs_window) +
                      "-day observation");
    }
  }
  return [panels = std::move(panels), env_cfg, actions](std::uint64_t seed) {
    CounterRng rng(seed, 0xE915);
    const auto& returns = panels[rng.uniform_int(panels.size())];
    const std::size_t rows = static_cast<std::size_t>(returns->rows());
    const std::size_t first = env_cfg.obs_window - 1;
    // Prefer starts that leave room for a full episode.
    std::size_t last = rows >= env_cfg.episode_horizon + 1 + first
                           ? rows - 1 - env_cfg.episode_horizon
                           : first;
    last = std::max(last, first);
    const std::size_t start = first + rng.uniform_int(last - first + 1);
    PortfolioEnv env(returns, env_cfg, actions);
    StepOutput current = env.reset(start);
    return Episode{std::move(env), std::move(current)};
  };
}

namespace {

constexpr std::size_t kSharpeMemory = 20;

struct Worker {
  std::uint64_t seed = 0;
  CounterRng rng{0};
  std::uint64_t episode_index = 0;
  std::optional<Episode> episode;
};

std::size_t sample_action(const Eigen::VectorXd& policy, CounterRng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index a = 0; a < policy.size(); ++a) {
    acc += policy(a);
    if (u < acc) return static_cast<std::size_t>(a);
  }
  return static_cast<std::size_t>(policy.size() - 1);
}

struct Rollout {
  Trajectory trajectory;
  std::vector<double> finished_sharpes;
};

Rollout collect(Worker& w, const EnvFactory& factory, const PolicyValueParams& params,
                std::size_t budget) {
  Rollout out;
  for (std::size_t k = 0; k < budget; ++k) {
    if (!w.episode) {
      w.episode = factory(derive_seed(w.seed, w.episode_index++));
    }
    auto& ep = *w.episode;
    const auto policy = forward(params, ep.current.observation.values, ep.current.state).policy;
    const std::size_t action = sample_action(policy, w.rng);
    StepOutput next = ep.env.step(action);
    out.trajectory.steps.push_back({std::move(ep.current.observation.values),
                                    std::move(ep.current.state), action, next.reward, next.done});
    if (next.done) {
      const auto& pr = ep.env.episode_returns();
      out.finished_sharpes.push_back(pr.size() >= 2 ? trailing_sharpe(pr) : 0.0);
      w.episode.reset();
      break;
    }
    ep.current = std::move(next);
  }
  if (w.episode && !out.trajectory.steps.empty() && !out.trajectory.steps.back().done) {
    out.trajectory.next_observation = w.episode->current.observation.values;
    out.trajectory.next_state = w.episode->current.state;
  }
  return out;
}

void clip_gradient(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / norm;
}

double mean_of(const std::deque<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

TrainResult train(const EnvFactory& factory, const NetArchitecture& arch, const TrainConfig& cfg,
                  std::size_t jobs) {
  cfg.validate();
  TrainResult result;
  result.params = PolicyValueParams::initialize(arch, derive_seed(cfg.seed, 0));
  if (cfg.total_steps == 0) return result;

  Adam adam(static_cast<std::size_t>(result.params.values.size()), cfg.learning_rate,
            cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::vector<Worker> workers(cfg.workers);
  for (std::size_t i = 0; i < workers.size(); ++i) {
    workers[i].seed = derive_seed(cfg.seed, 1 + i);
    workers[i].rng = CounterRng(workers[i].seed, 0xAC7);
  }
  std::deque<double> recent;
  auto remember = [&](const std::vector<double>& sharpes) {
    for (double s : sharpes) {
      recent.push_back(s);
      if (recent.size() > kSharpeMemory) recent.pop_front();
      ++result.episodes;
    }
  };

  if (cfg.mode == TrainMode::Synchronous) {
    std::vector<Rollout> rollouts(workers.size());
    std::vector<LossAndGradient> grads(workers.size());
    while (result.env_steps < cfg.total_steps) {
      std::uint64_t left = cfg.total_steps - result.env_steps;
      std::vector<std::size_t> budget(workers.size(), 0);
      for (auto& b : budget) {
        b = static_cast<std::size_t>(std::min<std::uint64_t>(cfg.rollout, left));
        left -= b;
      }
      parallel_for(workers.size(), jobs, [&](std::size_t i) {
        if (budget[i] == 0) return;
        rollouts[i] = collect(workers[i], factory, result.params, budget[i]);
        grads[i] = loss_and_gradients(result.params, rollouts[i].trajectory, cfg);
      });
      double round_loss = 0.0;
      std::size_t active = 0;
      for (std::size_t i = 0; i < workers.size(); ++i) {
        if (budget[i] == 0) continue;
        clip_gradient(grads[i].gradient, cfg.grad_clip);
        adam.apply(result.params.values, grads[i].gradient);
        result.env_steps += rollouts[i].trajectory.steps.size();
        remember(rollouts[i].finished_sharpes);
        round_loss += grads[i].loss.total;
        ++active;
        ++result.updates;
      }
      if (!result.params.values.allFinite()) {
        throw Error(ErrorKind::DivergedTraining, "parameters became non-finite");
      }
      result.curve.push_back({result.env_steps, result.episodes,
                              round_loss / static_cast<double>(std::max<std::size_t>(active, 1)),
                              mean_of(recent)});
    }
  } else {
    std::mutex mutex;
    std::atomic<std::uint64_t> claimed{0};
    std::exception_ptr failure;
    // One rollout for worker i; false once the step budget is used up.
    auto run_once = [&](std::size_t i) {
      std::uint64_t before = claimed.load();
      std::uint64_t take = 0;
      do {
        if (before >= cfg.total_steps) return false;
        take = std::min<std::uint64_t>(cfg.rollout, cfg.total_steps - before);
      } while (!claimed.compare_exchange_weak(before, before + take));
      const auto budget = static_cast<std::size_t>(take);
      PolicyValueParams snapshot;
      {
        std::lock_guard lock(mutex);
        if (failure) return false;
        snapshot = result.params;
      }
      Rollout r = collect(workers[i], factory, snapshot, budget);
      // An episode that ends early hands the rest of the claim back; this
      // thread loops again, so the refund is never stranded.
      claimed.fetch_sub(budget - r.trajectory.steps.size());
      LossAndGradient g = loss_and_gradients(snapshot, r.trajectory, cfg);
      clip_gradient(g.gradient, cfg.grad_clip);
      std::lock_guard lock(mutex);
      adam.apply(result.params.values, g.gradient);
      result.env_steps += r.trajectory.steps.size();
      ++result.updates;
      remember(r.finished_sharpes);
      result.curve.push_back({result.env_steps, result.episodes, g.loss.total, mean_of(recent)});
      if (!result.params.values.allFinite()) {
        throw Error(ErrorKind::DivergedTraining, "parameters became non-finite");
      }
      return true;
    };
    std::vector<std::thread> threads;
    const std::size_t count = std::max<std::size_t>(1, std::min(jobs, workers.size()));
    // Each thread owns a fixed subset of workers and steps them round-robin.
    for (std::size_t t = 0; t < count; ++t) {
      threads.emplace_back([&, t] {
        try {
          for (bool more = true; more;) {
            for (std::size_t i = t; i < workers.size() && more; i += count) more = run_once(i);
          }
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : threads) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  result.final_training_sharpe = mean_of(recent);
  return result;
}

}  // namespace rlpm
