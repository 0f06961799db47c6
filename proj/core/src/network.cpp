#include "rlpm/network.hpp"

#include <cmath>
#include <cstring>

#include "rlpm/error.hpp"
#include "rlpm/rng.hpp"

namespace rlpm {
namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using Map = Eigen::Map<Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

enum Block : std::size_t {
  kObsC1W, kObsC1B, kObsC2W, kObsC2B,
  kStC1W, kStC1B, kStC2W, kStC2B,
  kFcW, kFcB, kPiW, kPiB, kVW, kVB,
  kBlockCount
};

struct BranchWeights {
  ConstMap w1, b1, w2, b2;
};

BranchWeights branch_weights(const std::vector<ParamBlock>& layout, const Eigen::VectorXd& v,
                             std::size_t first) {
  auto m = [&](std::size_t b) {
    const auto& blk = layout[b];
    return ConstMap(v.data() + blk.offset, static_cast<Eigen::Index>(blk.rows),
                    static_cast<Eigen::Index>(blk.cols));
  };
  return {m(first), m(first + 1), m(first + 2), m(first + 3)};
}

void branch_forward(const BranchWeights& w, const ConvSpec& c1, const ConvSpec& c2,
                    const double* x, std::size_t stride_x, std::size_t length, double scale,
                    BranchCache& cache, double* features) {
  const auto l1 = static_cast<Eigen::Index>(c1.output_length(length));
  const auto k1 = static_cast<Eigen::Index>(c1.kernel);
  cache.patches1.resize(l1, k1);
  for (Eigen::Index p = 0; p < l1; ++p) {
    for (Eigen::Index k = 0; k < k1; ++k) {
      cache.patches1(p, k) =
          scale * x[static_cast<std::size_t>(p * static_cast<Eigen::Index>(c1.stride) + k) * stride_x];
    }
  }
  cache.pre1.noalias() = cache.patches1 * w.w1.transpose();
  cache.pre1.rowwise() += w.b1.transpose().row(0);

  const auto f1 = static_cast<Eigen::Index>(c1.filters);
  const auto l2 = static_cast<Eigen::Index>(c2.output_length(static_cast<std::size_t>(l1)));
  const auto k2 = static_cast<Eigen::Index>(c2.kernel);
  cache.patches2.resize(l2, f1 * k2);
  for (Eigen::Index q = 0; q < l2; ++q) {
    for (Eigen::Index f = 0; f < f1; ++f) {
      for (Eigen::Index k = 0; k < k2; ++k) {
        cache.patches2(q, f * k2 + k) =
            std::max(0.0, cache.pre1(q * static_cast<Eigen::Index>(c2.stride) + k, f));
      }
    }
  }
  cache.pre2.noalias() = cache.patches2 * w.w2.transpose();
  cache.pre2.rowwise() += w.b2.transpose().row(0);

  const auto f2 = cache.pre2.cols();
  for (Eigen::Index g = 0; g < f2; ++g) {
    for (Eigen::Index q = 0; q < l2; ++q) {
      features[g * l2 + q] = std::max(0.0, cache.pre2(q, g));
    }
  }
}

void branch_backward(const BranchWeights& w, const ConvSpec& c2, const BranchCache& cache,
                     const double* dfeatures, const std::vector<ParamBlock>& layout,
                     std::size_t first, Eigen::VectorXd& grad) {
  auto gm = [&](std::size_t b) {
    const auto& blk = layout[b];
    return Map(grad.data() + blk.offset, static_cast<Eigen::Index>(blk.rows),
               static_cast<Eigen::Index>(blk.cols));
  };
  const Eigen::Index l2 = cache.pre2.rows();
  const Eigen::Index f2 = cache.pre2.cols();
  Eigen::MatrixXd dpre2(l2, f2);
  for (Eigen::Index g = 0; g < f2; ++g) {
    for (Eigen::Index q = 0; q < l2; ++q) {
      dpre2(q, g) = cache.pre2(q, g) > 0.0 ? dfeatures[g * l2 + q] : 0.0;
    }
  }
  gm(first + 2).noalias() += dpre2.transpose() * cache.patches2;
  gm(first + 3).noalias() += dpre2.colwise().sum().transpose();

  const Eigen::MatrixXd dpatches2 = dpre2 * w.w2;
  const Eigen::Index l1 = cache.pre1.rows();
  const Eigen::Index f1 = cache.pre1.cols();
  const auto k2 = static_cast<Eigen::Index>(c2.kernel);
  Eigen::MatrixXd dpre1 = Eigen::MatrixXd::Zero(l1, f1);
  for (Eigen::Index q = 0; q < l2; ++q) {
    for (Eigen::Index f = 0; f < f1; ++f) {
      for (Eigen::Index k = 0; k < k2; ++k) {
        dpre1(q * static_cast<Eigen::Index>(c2.stride) + k, f) += dpatches2(q, f * k2 + k);
      }
    }
  }
  dpre1 = (cache.pre1.array() > 0.0).select(dpre1, 0.0);
  gm(first).noalias() += dpre1.transpose() * cache.patches1;
  gm(first + 1).noalias() += dpre1.colwise().sum().transpose();
}

}  // namespace

NetArchitecture NetArchitecture::reference(std::size_t n_assets, std::size_t n_actions) {
  NetArchitecture a;
  a.n_assets = n_assets;
  a.n_actions = n_actions;
  return a;
}

std::size_t NetArchitecture::obs_features() const {
  return n_assets * obs_conv2.filters * obs_conv2.output_length(obs_conv1.output_length(obs_window));
}

std::size_t NetArchitecture::state_features() const {
  return state_conv2.filters * state_conv2.output_length(state_conv1.output_length(state_window));
}

void NetArchitecture::validate() const {
  if (n_assets < 1 || n_actions < 1 || fc_width < 1) {
    throw Error(ErrorKind::InvalidArgument, "network needs assets, actions and a hidden layer");
  }
  for (const ConvSpec* c : {&obs_conv1, &obs_conv2, &state_conv1, &state_conv2}) {
    if (c->filters < 1 || c->kernel < 1 || c->stride < 1) {
      throw Error(ErrorKind::InvalidArgument, "convolution sizes must be positive");
    }
  }
  if (obs_conv2.output_length(obs_conv1.output_length(obs_window)) == 0 ||
      state_conv2.output_length(state_conv1.output_length(state_window)) == 0) {
    throw Error(ErrorKind::InvalidArgument, "input windows too short for the convolution stack");
  }
}

std::vector<ParamBlock> parameter_layout(const NetArchitecture& a) {
  const std::size_t hidden_in = a.obs_features() + a.state_features();
  const std::vector<std::tuple<const char*, std::size_t, std::size_t>> shapes = {
      {"obs_conv1.weight", a.obs_conv1.filters, a.obs_conv1.kernel},
      {"obs_conv1.bias", a.obs_conv1.filters, 1},
      {"obs_conv2.weight", a.obs_conv2.filters, a.obs_conv1.filters * a.obs_conv2.kernel},
      {"obs_conv2.bias", a.obs_conv2.filters, 1},
      {"state_conv1.weight", a.state_conv1.filters, a.state_conv1.kernel},
      {"state_conv1.bias", a.state_conv1.filters, 1},
      {"state_conv2.weight", a.state_conv2.filters, a.state_conv1.filters * a.state_conv2.kernel},
      {"state_conv2.bias", a.state_conv2.filters, 1},
      {"fc.weight", a.fc_width, hidden_in},
      {"fc.bias", a.fc_width, 1},
      {"policy.weight", a.n_actions, a.fc_width},
      {"policy.bias", a.n_actions, 1},
      {"value.weight", 1, a.fc_width},
      {"value.bias", 1, 1},
  };
  std::vector<ParamBlock> layout;
  std::size_t offset = 0;
  for (const auto& [name, rows, cols] : shapes) {
    layout.push_back({name, rows, cols, offset});
    offset += rows * cols;
  }
  return layout;
}

std::size_t NetArchitecture::param_count() const {
  const auto layout = parameter_layout(*this);
  return layout.back().offset + layout.back().rows * layout.back().cols;
}

std::uint64_t NetArchitecture::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ull;
    }
  };
  mix(n_assets);
  mix(n_actions);
  mix(obs_window);
  mix(state_window);
  for (const ConvSpec* c : {&obs_conv1, &obs_conv2, &state_conv1, &state_conv2}) {
    mix(c->filters);
    mix(c->kernel);
    mix(c->stride);
  }
  mix(fc_width);
  std::uint64_t scale_bits = 0;
  std::memcpy(&scale_bits, &input_scale, sizeof scale_bits);
  mix(scale_bits);
  return h;
}

PolicyValueParams PolicyValueParams::initialize(const NetArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  PolicyValueParams p;
  p.arch = arch;
  p.init_seed = seed;
  p.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count()));
  const auto layout = parameter_layout(arch);
  CounterRng rng(seed, 0x1417);
  for (std::size_t b : {kObsC1W, kObsC2W, kStC1W, kStC2W, kFcW}) {
    const auto& blk = layout[b];
    const double bound = std::sqrt(6.0 / static_cast<double>(blk.cols));
    for (std::size_t i = 0; i < blk.rows * blk.cols; ++i) {
      p.values(static_cast<Eigen::Index>(blk.offset + i)) = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
  return p;
}

void forward(const PolicyValueParams& params, const Eigen::MatrixXd& observation,
             const Eigen::VectorXd& state, ForwardCache& cache) {
  const auto& a = params.arch;
  if (static_cast<std::size_t>(observation.rows()) != a.n_assets ||
      static_cast<std::size_t>(observation.cols()) != a.obs_window ||
      static_cast<std::size_t>(state.size()) != a.state_window) {
    throw Error(ErrorKind::ShapeMismatch,
                "network expects a " + std::to_string(a.n_assets) + "x" +
                    std::to_string(a.obs_window) + " observation and a length-" +
                    std::to_string(a.state_window) + " state");
  }
  if (static_cast<std::size_t>(params.values.size()) != a.param_count()) {
    throw Error(ErrorKind::ShapeMismatch, "parameter vector does not match the architecture");
  }
  const auto layout = parameter_layout(a);
  const auto& v = params.values;

  const std::size_t obs_per_asset = a.obs_features() / a.n_assets;
  cache.features.resize(static_cast<Eigen::Index>(a.obs_features() + a.state_features()));
  cache.obs.resize(a.n_assets);
  const auto obs_w = branch_weights(layout, v, kObsC1W);
  for (std::size_t i = 0; i < a.n_assets; ++i) {
    // Column-major storage: consecutive days of row i are rows() apart.
    branch_forward(obs_w, a.obs_conv1, a.obs_conv2, observation.data() + i,
                   static_cast<std::size_t>(observation.rows()), a.obs_window, a.input_scale,
                   cache.obs[i], cache.features.data() + i * obs_per_asset);
  }
  branch_forward(branch_weights(layout, v, kStC1W), a.state_conv1, a.state_conv2, state.data(), 1,
                 a.state_window, a.input_scale, cache.state,
                 cache.features.data() + a.obs_features());

  auto m = [&](std::size_t b) {
    const auto& blk = layout[b];
    return ConstMap(v.data() + blk.offset, static_cast<Eigen::Index>(blk.rows),
                    static_cast<Eigen::Index>(blk.cols));
  };
  cache.hidden_pre.noalias() = m(kFcW) * cache.features;
  cache.hidden_pre += m(kFcB).col(0);
  cache.hidden = cache.hidden_pre.cwiseMax(0.0);
  cache.logits.noalias() = m(kPiW) * cache.hidden;
  cache.logits += m(kPiB).col(0);
  cache.value = (m(kVW) * cache.hidden)(0) + m(kVB)(0, 0);

  const double top = cache.logits.maxCoeff();
  cache.policy = (cache.logits.array() - top).exp().matrix();
  cache.policy /= cache.policy.sum();
  if (!cache.policy.allFinite() || !std::isfinite(cache.value)) {
    throw Error(ErrorKind::NonFiniteActivation, "network produced a non-finite output");
  }
}

ForwardResult forward(const PolicyValueParams& params, const Eigen::MatrixXd& observation,
                      const Eigen::VectorXd& state) {
  ForwardCache cache;
  forward(params, observation, state, cache);
  return {std::move(cache.policy), cache.value};
}

void backward(const PolicyValueParams& params, const ForwardCache& cache,
              const Eigen::VectorXd& dlogits, double dvalue, Eigen::VectorXd& grad) {
  const auto& a = params.arch;
  const auto layout = parameter_layout(a);
  const auto& v = params.values;
  if (grad.size() != v.size()) grad = Eigen::VectorXd::Zero(v.size());

  auto m = [&](std::size_t b) {
    const auto& blk = layout[b];
    return ConstMap(v.data() + blk.offset, static_cast<Eigen::Index>(blk.rows),
                    static_cast<Eigen::Index>(blk.cols));
  };
  auto gm = [&](std::size_t b) {
    const auto& blk = layout[b];
    return Map(grad.data() + blk.offset, static_cast<Eigen::Index>(blk.rows),
               static_cast<Eigen::Index>(blk.cols));
  };

  gm(kPiW).noalias() += dlogits * cache.hidden.transpose();
  gm(kPiB).col(0) += dlogits;
  gm(kVW).row(0) += dvalue * cache.hidden.transpose();
  gm(kVB)(0, 0) += dvalue;

  Eigen::VectorXd dhidden = m(kPiW).transpose() * dlogits;
  dhidden += dvalue * m(kVW).row(0).transpose();
  const Eigen::VectorXd dpre = (cache.hidden_pre.array() > 0.0).select(dhidden, 0.0);
  gm(kFcW).noalias() += dpre * cache.features.transpose();
  gm(kFcB).col(0) += dpre;
  const Eigen::VectorXd dfeatures = m(kFcW).transpose() * dpre;

  const std::size_t obs_per_asset = a.obs_features() / a.n_assets;
  const auto obs_w = branch_weights(layout, v, kObsC1W);
  for (std::size_t i = 0; i < a.n_assets; ++i) {
    branch_backward(obs_w, a.obs_conv2, cache.obs[i], dfeatures.data() + i * obs_per_asset, layout,
                    kObsC1W, grad);
  }
  branch_backward(branch_weights(layout, v, kStC1W), a.state_conv2, cache.state,
                  dfeatures.data() + a.obs_features(), layout, kStC1W, grad);
}

}  // namespace rlpm
