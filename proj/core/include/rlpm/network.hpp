#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rlpm {

/// 1-D convolution along time, shared across asset rows.
struct ConvSpec {
  std::size_t filters = 8;
  std::size_t kernel = 8;
  std::size_t stride = 2;

  std::size_t output_length(std::size_t input_length) const {
    return input_length < kernel ? 0 : (input_length - kernel) / stride + 1;
  }
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Two-branch convolutional actor-critic. The observation branch convolves
/// each asset's return row; the state branch convolves the portfolio return
/// history. Flattened features feed one ReLU layer, then a softmax policy
/// head and a scalar value head.
struct NetArchitecture {
  std::size_t n_assets = 2;
  std::size_t n_actions = 3;
  std::size_t obs_window = 60;
  std::size_t state_window = 120;
  ConvSpec obs_conv1{8, 8, 2};
  ConvSpec obs_conv2{16, 4, 2};
  ConvSpec state_conv1{8, 8, 2};
  ConvSpec state_conv2{16, 4, 2};
  std::size_t fc_width = 128;
  /// Inputs are daily returns; they are multiplied by this before the first layer.
  double input_scale = 100.0;

  static NetArchitecture reference(std::size_t n_assets, std::size_t n_actions);

  std::size_t obs_features() const;
  std::size_t state_features() const;
  std::size_t param_count() const;
  /// FNV-1a over every field; stored in pool artifacts to reject mismatched loads.
  std::uint64_t hash() const;
  void validate() const;

  friend bool operator==(const NetArchitecture&, const NetArchitecture&) = default;
};

struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
};

std::vector<ParamBlock> parameter_layout(const NetArchitecture& arch);

struct PolicyValueParams {
  NetArchitecture arch;
  Eigen::VectorXd values;
  std::uint64_t init_seed = 0;

  /// He-uniform hidden layers, zero biases, zero policy/value heads (so the
  /// initial policy is exactly uniform and the initial value is 0).
  static PolicyValueParams initialize(const NetArchitecture& arch, std::uint64_t seed);
};

struct ForwardResult {
  Eigen::VectorXd policy;
  double value = 0.0;
};

/// Intermediate activations kept for backpropagation.
struct BranchCache {
  Eigen::MatrixXd patches1;  // L1 x K1
  Eigen::MatrixXd pre1;      // L1 x F1
  Eigen::MatrixXd patches2;  // L2 x (F1*K2)
  Eigen::MatrixXd pre2;      // L2 x F2
};

struct ForwardCache {
  std::vector<BranchCache> obs;  // one per asset row
  BranchCache state;
  Eigen::VectorXd features;
  Eigen::VectorXd hidden_pre;
  Eigen::VectorXd hidden;
  Eigen::VectorXd logits;
  Eigen::VectorXd policy;
  double value = 0.0;
};

ForwardResult forward(const PolicyValueParams& params, const Eigen::MatrixXd& observation,
                      const Eigen::VectorXd& state);
void forward(const PolicyValueParams& params, const Eigen::MatrixXd& observation,
             const Eigen::VectorXd& state, ForwardCache& cache);

/// Accumulates d(loss)/d(params) into `grad` given the loss gradients with
/// respect to the policy logits and the value output.
void backward(const PolicyValueParams& params, const ForwardCache& cache,
              const Eigen::VectorXd& dlogits, double dvalue, Eigen::VectorXd& grad);

}  // namespace rlpm
