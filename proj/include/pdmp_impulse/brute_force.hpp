#pragma once

// Reference evaluation of both backward recursions on tiny one-dimensional
// quantized chains by direct enumeration of every transition term. It keeps
// its own description of the chain and its own time grids and shares no code
// with the solver, so that the two can be compared.

#include <functional>
#include <vector>

namespace pdmp::oracle {

struct ToyCell {
  double z = 0.0;
  double s = 0.0;
  double weight = 0.0;
};

struct ToyLayer {
  std::vector<ToyCell> cells;
  /// rows[i][j]: probability of moving from cell i to cell j of the next
  /// layer; empty for the last layer.
  std::vector<std::vector<double>> rows;
};

struct ToyInstance {
  std::vector<ToyLayer> main;     // layer 0 is the single start cell
  std::vector<ToyLayer> control;  // layer 0 holds one cell per control point
  std::vector<double> controls;

  double alpha = 1.0;
  std::function<double(double z, double t)> F;
  std::function<double(double z)> t_star;
  std::function<double(double z, double t)> flow;
  std::function<double(double x, double y)> cost;
  std::function<double(double z)> g;

  /// Time step rule: Delta = max(floor * (1 + 1e-9), t* / n_max).
  std::vector<double> main_floor;
  std::vector<double> control_floor;
  int n_max = 10;
};

struct ToyResult {
  double root = 0.0;
  std::vector<std::vector<double>> v_tilde;  // k = 0..N, entry 0 unused
};

inline constexpr int kMaxToyCells = 4;
inline constexpr int kMaxToyHorizon = 3;

/// Throws std::invalid_argument beyond 4 cells per layer or N > 3.
ToyResult brute_force_recursion(const ToyInstance& toy, int N);

}  // namespace pdmp::oracle
