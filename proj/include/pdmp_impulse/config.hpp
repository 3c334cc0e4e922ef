#pragma once

// Flat key=value run configuration for the linear-drift benchmark.

#include "pdmp_impulse/core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pdmp {

struct RunConfig {
  BenchmarkParams model;
  int N = 5;
  std::vector<int> layer_sizes{50};
  std::uint64_t seed = 1;
  std::int64_t train_paths = 1'000'000;
  std::int64_t estimation_paths = 1'000'000;
  std::int64_t pilot_paths = 10'000;
  double p = 2.0;
  int n_max = 200;
  /// Use the error bounds' lower bound on the time step.
  bool budget_floor = true;
  /// "pooled" (one chain started uniformly on the control set) or "per_point".
  std::string control_start = "pooled";
  bool include_k0 = true;
  int threads = 0;  // 0: PDMP_IMPULSE_THREADS or 1
  double mc_horizon = 0.0;  // 0: 10 / alpha
  std::int64_t mc_sims = 100'000;

  /// Sorted key=value lines of every setting; the config hash is taken over
  /// this text.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

/// Parses key=value lines ('#' starts a comment). Unknown keys and bad
/// values throw ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Applies one key=value setting.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace pdmp
