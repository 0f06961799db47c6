#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rlpm/action_space.hpp"
#include "rlpm/agent.hpp"
#include "rlpm/evaluation.hpp"
#include "rlpm/market_data.hpp"
#include "rlpm/portfolio_env.hpp"
#include "rlpm/rcme.hpp"
#include "rlpm/simulator.hpp"

namespace rlpm::cli {

struct DataSection {
  std::filesystem::path prices;
  PanelSchema schema;
};

struct RcmeSection {
  std::size_t window = 60;
  std::size_t stride = 1;
  Linkage linkage = Linkage::Average;
  std::size_t k = 5;
};

struct ActionSection {
  std::size_t k_window = 20;
  double alpha = 0.001;
  std::size_t min_len = 20;
  ActionSpaceConfig extract;
};

enum class EvalMode { Fixed, Rolling, Both };

struct EvaluationSection {
  std::vector<Period> periods = default_periods();
  std::size_t horizon = 504;
  EvalMode mode = EvalMode::Fixed;
  /// Empty means the three benchmarks plus the model when a pool exists.
  std::vector<std::string> strategies;
};

/// Everything one experiment needs; loaded from an INI file whose sections
/// mirror the library modules. Relative paths resolve against the file's directory.
struct ExperimentConfig {
  DataSection data;
  RcmeSection rcme;
  SimulationConfig simulator;
  ActionSection action_space;
  EnvConfig env;
  TrainConfig train;
  std::size_t models_per_representative = 4;
  std::size_t moment_window = 252;
  EvaluationSection evaluation;
  std::filesystem::path output = "out";
  std::size_t jobs = 1;

  /// Throws Error(Config) naming the offending `section.key`.
  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one seed to every seeded stage: simulator, action sampling and training.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

std::vector<std::string> strategy_ids();

}  // namespace rlpm::cli
