#pragma once

// End-to-end runs on the benchmark: quantize the main and control chains,
// pick time steps from the error bounds, solve both recursions, and
// iterate the error budget.

#include "pdmp_impulse/config.hpp"
#include "pdmp_impulse/error_bounds.hpp"
#include "pdmp_impulse/quantizer.hpp"
#include "pdmp_impulse/solver.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace pdmp {

struct ChainSet {
  QuantizedChain main;
  /// One pooled chain, or one chain per control point.
  std::vector<QuantizedChain> control;

  bool pooled() const;
};

QuantizerOptions quantizer_options(const RunConfig& config, std::uint64_t seed);

/// Trains the main chain from x0 and the control chain(s) with horizon N.
ChainSet quantize_chains(const Problem& problem, const RunConfig& config);

struct SolveOptions {
  int N = 0;
  bool budget_floor = true;
  int n_max = 200;
  bool include_k0 = true;
  int threads = 0;
};

struct SolveReport {
  int N = 0;
  ControlValues control;
  MainSolution main;
  ErrorBudget budget;
  DeltaPolicy main_policy;
  std::vector<DeltaPolicy> control_policies;
  std::vector<std::size_t> layer_sizes;  // main chain cells per layer
  std::vector<std::string> warnings;
};

/// Time-step floors for each transition n -> n+1 of a chain:
/// sqrt((c4 a_n + c5 b_{n+1}) / c3) with the control or main constants.
std::vector<double> delta_floors(const ConstantsLedger& ledger, const QuantizedChain& chain,
                                 bool main_recursion);

/// Solves both recursions and the budget. Chains longer than N are
/// truncated; shorter chains are a ConfigError.
SolveReport solve_pipeline(const Problem& problem, const ChainSet& chains,
                           const SolveOptions& options);

/// vtilde over the control set used for the value curve: vtilde_1, or g
/// when N = 0.
const std::vector<double>& value_curve(const SolveReport& report);

nlohmann::json report_to_json(const SolveReport& report);
std::string value_curve_csv(const Problem& problem, const SolveReport& report);
std::string budget_csv(const std::vector<int>& grid_sizes, const std::vector<double>& totals);

}  // namespace pdmp
