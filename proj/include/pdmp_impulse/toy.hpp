#pragma once

// Small randomized instances of the benchmark family with hand-made chains
// of at most four cells per layer, in both the solver's form and the
// brute-force oracle's form.

#include "pdmp_impulse/brute_force.hpp"
#include "pdmp_impulse/operators.hpp"
#include "pdmp_impulse/quantizer.hpp"

#include <cstdint>
#include <vector>

namespace pdmp {

struct ToyCase {
  int N = 1;
  Problem problem;
  QuantizedChain main;     // starts at x0
  QuantizedChain control;  // pooled, layer 0 holds the control points
  DeltaPolicy main_policy;
  DeltaPolicy control_policy;
};

struct ToyOptions {
  int max_cells = oracle::kMaxToyCells;
  int max_horizon = oracle::kMaxToyHorizon;
  int max_controls = 4;
  /// Probability that a cell reuses the z of an earlier cell of its layer.
  double shared_z = 0.3;
  /// Intervention cost; nonpositive draws one at random.
  double c0 = 0.0;
  int n_max = 10;
};

/// Random linear-drift model, affine g, random chains, weights, transition
/// rows and time-step floors, all drawn from `seed`.
ToyCase random_toy_case(std::uint64_t seed, const ToyOptions& options = {});

/// The same instance described for the oracle. F is evaluated with op_F so
/// both sides integrate the running cost identically.
oracle::ToyInstance toy_instance(const ToyCase& toy);

struct ToyValues {
  double root = 0.0;
  std::vector<std::vector<double>> v_tilde;  // k = 0..N, entry 0 empty
};

/// Runs the solver (pooled control chain) on a toy case.
ToyValues solve_toy(const ToyCase& toy);

}  // namespace pdmp
