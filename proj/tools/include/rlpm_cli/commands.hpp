#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlpm_cli/config.hpp"

namespace rlpm::cli {

/// Exit codes: 0 success, 1 runtime or strategy failure, 2 validation or I/O.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitInvalid = 2;

int exit_code_for(const std::exception& e);

/// Output layout under ExperimentConfig::output.
struct Artifacts {
  std::filesystem::path root;

  std::filesystem::path representatives() const { return root / "representatives.txt"; }
  std::filesystem::path regimes_report() const { return root / "regimes.txt"; }
  std::filesystem::path simulated() const { return root / "simulated"; }
  std::filesystem::path actions() const { return root / "actions.txt"; }
  std::filesystem::path pool() const { return root / "pool.bin"; }
  std::filesystem::path pool_metadata() const { return root / "pool_meta.csv"; }
  std::filesystem::path curves() const { return root / "curves"; }
  std::filesystem::path equity() const { return root / "equity"; }
  std::filesystem::path report_text(const std::string& mode) const { return root / ("report_" + mode + ".txt"); }
  std::filesystem::path report_csv(const std::string& mode) const { return root / ("report_" + mode + ".csv"); }
};

int cmd_analyze(const ExperimentConfig& cfg, std::ostream& out);
int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out);
int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_backtest(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_report(const ExperimentConfig& cfg, std::ostream& out);

/// Parses arguments, runs one subcommand and maps failures to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rlpm::cli
