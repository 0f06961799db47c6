#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <optional>

#include "rlpm/agent.hpp"
#include "rlpm/error.hpp"
#include "rlpm/parallel.hpp"
#include "rlpm/rng.hpp"

namespace rlpm {

ModelPool build_model_pool(const RepresentativeSet& rs, const ReturnPanel& rp,
                           std::shared_ptr<const ActionSet> actions, const PoolConfig& cfg,
                           std::size_t jobs, PoolBuildReport* report) {
  if (!actions || actions->actions.empty()) {
    throw Error(ErrorKind::InvalidArgument, "model pool needs a non-empty action set");
  }
  if (cfg.models_per_representative < 1) {
    throw Error(ErrorKind::InvalidArgument, "models_per_representative must be at least 1");
  }
  if (cfg.simulation.n_paths < cfg.models_per_representative) {
    throw Error(ErrorKind::InvalidArgument,
                "need at least one simulated path per model (n_paths < models_per_representative)");
  }
  cfg.train.validate();
  cfg.env.validate();

  const std::size_t k = rs.matrices.size();
  const std::size_t m = cfg.models_per_representative;
  ModelPool pool;
  pool.arch = NetArchitecture::reference(rs.asset_ids.size(), actions->actions.size());
  pool.models_per_representative = m;
  pool.sub_pools.assign(k, {});

  std::vector<std::string> failures;
  std::mutex failure_mutex;
  auto fail = [&](std::size_t r, const std::string& what) {
    std::lock_guard lock(failure_mutex);
    failures.push_back("representative " + std::to_string(r) + ": " + what);
  };

  // Datasets first, one per representative, each with its own seed range.
  std::vector<std::vector<std::shared_ptr<const Eigen::MatrixXd>>> datasets(k);
  std::vector<std::vector<std::uint64_t>> path_seeds(k);
  for (std::size_t r = 0; r < k; ++r) {
    try {
      SimulationConfig sim = cfg.simulation;
      sim.base_seed = cfg.simulation.base_seed + r * cfg.simulation.n_paths;
      for (auto& panel : generate_dataset(r, rs, rp, sim, jobs)) {
        datasets[r].push_back(std::make_shared<const Eigen::MatrixXd>(returns_from_prices(panel.prices)));
        path_seeds[r].push_back(panel.seed);
      }
    } catch (const Error& e) {
      fail(r, e.what());
    }
  }

  struct Job {
    std::size_t rep, index;
  };
  std::vector<Job> work;
  for (std::size_t r = 0; r < k; ++r) {
    if (datasets[r].empty()) continue;
    for (std::size_t i = 0; i < m; ++i) work.push_back({r, i});
  }
  std::vector<std::optional<PoolModel>> trained(work.size());
  std::vector<std::vector<CurvePoint>> curves(work.size());
  parallel_for(work.size(), jobs, [&](std::size_t j) {
    const auto [r, i] = work[j];
    const auto& paths = datasets[r];
    const std::size_t lo = i * paths.size() / m;
    const std::size_t hi = (i + 1) * paths.size() / m;
    try {
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.train.seed, r, i);
      auto factory = dataset_env_factory({paths.begin() + static_cast<std::ptrdiff_t>(lo),
                                          paths.begin() + static_cast<std::ptrdiff_t>(hi)},
                                         cfg.env, actions);
      TrainResult res = train(factory, pool.arch, tc, 1);
      curves[j] = std::move(res.curve);
      trained[j] = PoolModel{r, i, tc.seed, res.env_steps, res.final_training_sharpe, std::move(res.params)};
    } catch (const Error& e) {
      fail(r, "model " + std::to_string(i) + ": " + e.what());
    }
  });

  for (std::size_t j = 0; j < work.size(); ++j) {
    if (trained[j]) pool.sub_pools[work[j].rep].push_back(std::move(*trained[j]));
    if (report) report->curves.push_back(std::move(curves[j]));
  }
  std::sort(failures.begin(), failures.end());
  if (report) report->failures = failures;
  for (std::size_t r = 0; r < k; ++r) {
    if (pool.sub_pools[r].empty()) {
      std::string detail;
      for (const auto& f : failures) detail += "\n  " + f;
      throw Error(ErrorKind::EmptyModelPool,
                  "representative " + std::to_string(r) + " has no trained model" + detail);
    }
  }
  return pool;
}

Eigen::VectorXd ensemble_policy(const std::vector<PoolModel>& sub_pool,
                                const Eigen::MatrixXd& observation, const Eigen::VectorXd& state) {
  if (sub_pool.empty()) {
    throw Error(ErrorKind::EmptyModelPool, "sub-pool has no models");
  }
  Eigen::VectorXd sum = forward(sub_pool.front().params, observation, state).policy;
  for (std::size_t i = 1; i < sub_pool.size(); ++i) {
    sum += forward(sub_pool[i].params, observation, state).policy;
  }
  return sum / static_cast<double>(sub_pool.size());
}

std::size_t infer(const ModelPool& pool, const RepresentativeSet& rs,
                  const Eigen::MatrixXd& current_corr, const Eigen::MatrixXd& observation,
                  const Eigen::VectorXd& state, InferenceMode mode, std::uint64_t seed) {
  if (pool.sub_pools.empty()) {
    throw Error(ErrorKind::EmptyModelPool, "model pool is empty");
  }
  if (rs.matrices.size() != pool.sub_pools.size()) {
    throw Error(ErrorKind::ShapeMismatch, "representative set and model pool disagree on K");
  }
  if (current_corr.rows() != static_cast<Eigen::Index>(pool.arch.n_assets) ||
      current_corr.cols() != current_corr.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "correlation matrix does not match the pool's asset count");
  }
  const std::size_t r = nearest_representative(current_corr, rs);
  const Eigen::VectorXd p = ensemble_policy(pool.sub_pools[r], observation, state);
  if (mode == InferenceMode::Deterministic) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < p.size(); ++a) {
      if (p(a) > p(best)) best = a;
    }
    return static_cast<std::size_t>(best);
  }
  CounterRng rng(seed, 0x1F3);
  const double u = rng.uniform() * p.sum();
  double acc = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    acc += p(a);
    if (u < acc) return static_cast<std::size_t>(a);
  }
  return static_cast<std::size_t>(p.size() - 1);
}

namespace {

constexpr char kMagic[8] = {'R', 'L', 'P', 'M', 'P', 'O', 'O', 'L'};
constexpr std::uint32_t kPoolVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u32(std::uint32_t v) { bytes(v); }
  void u64(std::uint64_t v) { bytes(v); }
  void f64(double v) { bytes(std::bit_cast<std::uint64_t>(v)); }

 private:
  template <class T>
  void bytes(T v) {
    char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(buf, sizeof(T));
  }
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string name) : is_(is), name_(std::move(name)) {}
  std::uint32_t u32() { return bytes<std::uint32_t>(); }
  std::uint64_t u64() { return bytes<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(bytes<std::uint64_t>()); }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::ArtifactFormat, name_ + ": " + what);
  }

 private:
  template <class T>
  T bytes() {
    unsigned char buf[sizeof(T)];
    if (!is_.read(reinterpret_cast<char*>(buf), sizeof(T))) fail("truncated file");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& is_;
  std::string name_;
};

void write_arch(Writer& w, const NetArchitecture& a) {
  w.u32(static_cast<std::uint32_t>(a.obs_window));
  w.u32(static_cast<std::uint32_t>(a.state_window));
  for (const ConvSpec* c : {&a.obs_conv1, &a.obs_conv2, &a.state_conv1, &a.state_conv2}) {
    w.u32(static_cast<std::uint32_t>(c->filters));
    w.u32(static_cast<std::uint32_t>(c->kernel));
    w.u32(static_cast<std::uint32_t>(c->stride));
  }
  w.u32(static_cast<std::uint32_t>(a.fc_width));
  w.f64(a.input_scale);
}

void read_arch(Reader& r, NetArchitecture& a) {
  a.obs_window = r.u32();
  a.state_window = r.u32();
  for (ConvSpec* c : {&a.obs_conv1, &a.obs_conv2, &a.state_conv1, &a.state_conv2}) {
    c->filters = r.u32();
    c->kernel = r.u32();
    c->stride = r.u32();
  }
  a.fc_width = r.u32();
  a.input_scale = r.f64();
}

}  // namespace

void save_model_pool(const ModelPool& pool, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  Writer w(os);
  os.write(kMagic, sizeof kMagic);
  w.u32(kPoolVersion);
  w.u64(pool.arch.hash());
  w.u32(static_cast<std::uint32_t>(pool.arch.n_assets));
  w.u32(static_cast<std::uint32_t>(pool.arch.n_actions));
  w.u32(static_cast<std::uint32_t>(pool.sub_pools.size()));
  w.u32(static_cast<std::uint32_t>(pool.models_per_representative));
  write_arch(w, pool.arch);
  for (const auto& sub : pool.sub_pools) {
    w.u32(static_cast<std::uint32_t>(sub.size()));
    for (const auto& model : sub) {
      if (!(model.params.arch == pool.arch)) {
        throw Error(ErrorKind::ShapeMismatch, "pool member architecture differs from the pool's");
      }
      w.u32(static_cast<std::uint32_t>(model.representative));
      w.u32(static_cast<std::uint32_t>(model.index));
      w.u64(model.seed);
      w.u64(model.params.init_seed);
      w.f64(model.final_training_sharpe);
      w.u64(model.env_steps);
      w.u64(static_cast<std::uint64_t>(model.params.values.size()));
      for (double v : model.params.values) w.f64(v);
    }
  }
  if (!os.flush()) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

ModelPool load_model_pool(const std::filesystem::path& path, const NetArchitecture* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  Reader r(is, path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    r.fail("not a model pool artifact");
  }
  if (const auto version = r.u32(); version != kPoolVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  const std::uint64_t stored_hash = r.u64();
  ModelPool pool;
  pool.arch.n_assets = r.u32();
  pool.arch.n_actions = r.u32();
  const std::size_t k = r.u32();
  pool.models_per_representative = r.u32();
  read_arch(r, pool.arch);
  if (pool.arch.hash() != stored_hash) r.fail("architecture hash mismatch");
  if (expected && !(*expected == pool.arch)) {
    throw Error(ErrorKind::ShapeMismatch,
                path.string() + ": pool architecture does not match the expected one");
  }
  try {
    pool.arch.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  const std::size_t count = pool.arch.param_count();
  pool.sub_pools.resize(k);
  for (std::size_t rep = 0; rep < k; ++rep) {
    const std::size_t members = r.u32();
    for (std::size_t i = 0; i < members; ++i) {
      PoolModel m;
      m.representative = r.u32();
      m.index = r.u32();
      m.seed = r.u64();
      m.params.arch = pool.arch;
      m.params.init_seed = r.u64();
      m.final_training_sharpe = r.f64();
      m.env_steps = r.u64();
      if (r.u64() != count) r.fail("parameter count does not match the architecture");
      m.params.values.resize(static_cast<Eigen::Index>(count));
      for (auto& v : m.params.values) v = r.f64();
      if (!m.params.values.allFinite()) r.fail("non-finite parameters");
      pool.sub_pools[rep].push_back(std::move(m));
    }
    if (pool.sub_pools[rep].empty()) r.fail("representative " + std::to_string(rep) + " has no models");
  }
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return pool;
}

void save_model_pool_metadata(const ModelPool& pool, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  const auto& a = pool.arch;
  os << "arch_hash " << std::hex << a.hash() << std::dec << '\n'
     << "assets " << a.n_assets << "\nactions " << a.n_actions << "\nrepresentatives "
     << pool.sub_pools.size() << "\nmodels_per_representative " << pool.models_per_representative
     << "\nparam_count " << a.param_count() << '\n'
     << "representative,index,seed,init_seed,env_steps,final_training_sharpe\n";
  os.precision(17);
  for (const auto& sub : pool.sub_pools) {
    for (const auto& m : sub) {
      os << m.representative << ',' << m.index << ',' << m.seed << ',' << m.params.init_seed << ','
         << m.env_steps << ',' << m.final_training_sharpe << '\n';
    }
  }
  if (!os.flush()) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace rlpm
