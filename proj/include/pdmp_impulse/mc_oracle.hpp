#pragma once

// Monte Carlo estimates used to sanity-check computed values: the cost of
// never intervening, and the mean discount at the N-th jump.

#include "pdmp_impulse/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>

namespace pdmp {

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  /// Upper bound on the mass cut off by stopping at the horizon T
  /// (C_f e^{-alpha T} / alpha); zero where it does not apply.
  double truncation_bound = 0.0;
  std::int64_t n_sims = 0;
};

/// h(x0) = E[int_0^inf e^{-alpha s} f(X_s) ds] truncated at T, integrating
/// each flow segment between jumps by quadrature. T <= 0 selects 10 / alpha.
McEstimate mc_no_impulse_cost(const Problem& problem, const State& x0, std::int64_t n_sims,
                              double horizon_T, std::uint64_t seed, int threads = 1);

/// E[e^{-alpha T_N}] with T_N = S_1 + ... + S_N along the embedded chain.
McEstimate mc_discount_at_jump(const PdmpModel& model, double alpha, const State& x0, int n_jumps,
                               std::int64_t n_sims, std::uint64_t seed, int threads = 1);

/// Trajectory of the process up to the n_jumps-th jump, sampled on the flow
/// at spacing dt plus both ends of every jump.
struct TrajectoryPoint {
  double t = 0.0;
  State x;
  int jump = 0;  // number of jumps before this point
};
std::vector<TrajectoryPoint> simulate_trajectory(const PdmpModel& model, const State& x0,
                                                 int n_jumps, double dt, Rng& rng);

nlohmann::json estimate_to_json(const McEstimate& e);

}  // namespace pdmp
