#pragma once

// Backward recursions: the triangular recursion for the value functions on
// the control set, and the main recursion from the starting point.

#include "pdmp_impulse/operators.hpp"

#include <functional>
#include <span>
#include <vector>

namespace pdmp {

/// vtilde_k over the control set for k = 0..N. Entry N is g; entry 0 is
/// filled only when requested (it is a diagnostic, not used by the main
/// recursion).
struct ControlValues {
  int N = 0;
  std::vector<std::vector<double>> by_k;

  const std::vector<double>& at(int k) const;
};

/// Pooled mode: one chain whose layer 0 holds every control point.
ControlValues solve_control_values(const QuantizedOperators& pooled, int N,
                                   bool include_k0 = false);

/// Per-point mode: chains[i] starts at the i-th control point.
ControlValues solve_control_values(const std::vector<QuantizedOperators>& chains, int N,
                                   bool include_k0 = false);

struct LayerTable {
  int layer = 0;
  std::vector<State> points;  // distinct z of the layer
  GridValues values;
  /// Per point: intervention decision, time, and restart control index
  /// (meaningful only when intervening; -1 otherwise).
  std::vector<LdResult> actions;
  std::vector<int> restart;
};

struct MainSolution {
  double value = 0.0;              // vhat_0(x0)
  std::vector<LayerTable> tables;  // layers 0..N
};

/// vhat_N = g on the last layer, vhat_{k-1} = L^d_k(M vtilde_k, vhat_k).
MainSolution solve_main(const QuantizedOperators& main, const ControlValues& control, int N);

struct SweepReport {
  std::vector<int> horizons;
  std::vector<double> values;
  std::vector<double> differences;  // NaN for the first entry
  int flagged_index = -1;           // first entry with |difference| < tol
};

/// Runs `solve` for each horizon (increasing) and flags the first horizon
/// whose value differs from the previous one by less than tol.
SweepReport horizon_sweep(const std::function<double(int)>& solve, std::span<const int> horizons,
                          double tol);

}  // namespace pdmp
