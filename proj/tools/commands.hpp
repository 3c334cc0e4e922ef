#pragma once

// Subcommands of the pdmp-impulse tool. Everything is reachable through
// run() so tests can drive the tool without spawning processes.

#include "pdmp_impulse/config.hpp"
#include "pdmp_impulse/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pdmp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitValidation = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "# config_hash=<hex> seed=<n>", the first line of every CSV.
std::string output_header(const RunConfig& config);

/// Writes main.qc and control.qc (pooled) or control_<i>.qc (per point).
void write_chains(const ChainSet& chains, const RunConfig& config,
                  const std::filesystem::path& dir);
/// Reads the files written by write_chains; a missing directory or main
/// chain is a ConfigError.
ChainSet read_chains(const std::filesystem::path& dir);

/// Per-layer distortion table of the main and control chains.
std::string distortion_csv(const ChainSet& chains, const RunConfig& config);

/// Solver settings taken from a config for horizon N.
SolveOptions solve_options(const RunConfig& config, int N);

struct BenchmarkEntry {
  int K = 0;
  int N = 0;
  double v0 = 0.0;
  std::vector<double> curve;  // vtilde_1 over the control set
  double total = 0.0;
  bool floors_ok = false;
};

struct BenchmarkRun {
  std::vector<int> layer_sizes;
  std::vector<int> horizons;
  std::vector<BenchmarkEntry> entries;
  std::vector<std::filesystem::path> files;  // relative to the output dir

  const BenchmarkEntry& at(int K, int N) const;
};

/// Trains one main and one control chain per K with the largest horizon,
/// truncates them for the others, and writes grids, curves, reports and
/// one budget table per horizon under out_dir.
BenchmarkRun run_benchmark(const RunConfig& config, const std::vector<int>& layer_sizes,
                           const std::vector<int>& horizons,
                           const std::filesystem::path& out_dir);

struct ValidationCheck {
  std::string name;
  bool pass = false;
  nlohmann::json detail;
};

struct ValidationOptions {
  int toy_cases = 100;
  int identity_states = 200;
  bool toy_only = false;
  std::optional<std::filesystem::path> grids;
};

/// Oracle equivalence on toy chains, the survival identity, and (unless
/// toy_only) Monte Carlo consistency of vhat_0 on the configured model.
std::vector<ValidationCheck> run_validation(const RunConfig& config,
                                            const ValidationOptions& options);

}  // namespace pdmp::cli
