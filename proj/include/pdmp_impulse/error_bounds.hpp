#pragma once

// A-priori error bounds: Lipschitz constants of the value functions, the
// per-layer constants of the two error bounds, and the iterated budget
// bounding ||v_0(Z_0) - vhat_0(Zhat_0)||_p.

#include "pdmp_impulse/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace pdmp {

struct BaseConstants {
  double E1 = 0.0;
  double E2 = 0.0;
  double E3 = 0.0;
};

/// E1 = C_t* [lambda]_1 + (C_lambda + alpha)[t*]
/// E2 = C_lambda [t*] + [lambda]_1 (1 + C_lambda C_t*) / alpha
/// E3 = [f]_1 / alpha + C_f (C_t* [lambda]_1 / alpha + [t*])
BaseConstants base_constants(const ConstantsLedger& ledger);

/// Regularity of one value function: [v]_1, [v]_2, [v]_*, global [v], C_v.
struct LipschitzEntry {
  double L1 = 0.0;
  double L2 = 0.0;
  double Lstar = 0.0;
  double L = 0.0;
  double C = 0.0;
  bool saturated = false;  // some bound overflowed to +inf
};

LipschitzEntry lipschitz_of(const TerminalConstants& g);

/// Bounds for Lw = L(Mw, w) given the bounds of w. C_{Lw} = max(C_f/alpha, C_w).
LipschitzEntry lipschitz_step(const ConstantsLedger& ledger, const LipschitzEntry& w);

/// Entries for v_0 .. v_N with v_N = g and v_n = L v_{n+1}.
std::vector<LipschitzEntry> lipschitz_iterate(const ConstantsLedger& ledger,
                                              const TerminalConstants& g, int N);

struct ErrorConstants {
  double c1 = 0.0;  // d1 / D1
  double c2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
  double c5 = 0.0;
};

/// d1..d5 of the control recursion at (k, n): v_cur = v_{k+n}, v_next = v_{k+n+1}.
ErrorConstants control_constants(const ConstantsLedger& ledger, const LipschitzEntry& v_cur,
                                 const LipschitzEntry& v_next);

/// D1..D5 of the main recursion at n: v_cur = v_n, v_next = v_{n+1}.
ErrorConstants main_constants(const ConstantsLedger& ledger, const LipschitzEntry& v_cur,
                              const LipschitzEntry& v_next);

/// Distortion and step inputs of one layer transition n -> n + 1.
struct LayerInputs {
  double a_n = 0.0;         // ||Z_n - Zhat_n||_p
  double a_next = 0.0;      // ||Z_{n+1} - Zhat_{n+1}||_p
  double b_next = 0.0;      // ||S_{n+1} - Shat_{n+1}||_p
  double delta_bar = 0.0;   // ||Delta(Zhat_n)||_p
};

/// prev_value + prev_control + d1 a_n + 2[v_{k+n+1}] a_{n+1} + C_f b_{n+1}
///   + d2 Delta_bar + 2 sqrt(d3 (d4 a_n + d5 b_{n+1})).
double layer_bound_control(const ConstantsLedger& ledger, const ErrorConstants& d,
                           const LipschitzEntry& v_next, const LayerInputs& in,
                           double prev_value_error, double prev_control_error);

/// prev_value + control_{n+1} + D1 a_n + 3[v_{n+1}] a_{n+1} + 2 C_f b_{n+1}
///   + D2 Delta_bar + 2 sqrt(D3 (D4 a_n + D5 b_{n+1})).
double layer_bound_main(const ConstantsLedger& ledger, const ErrorConstants& D,
                        const LipschitzEntry& v_next, const LayerInputs& in,
                        double prev_value_error, double control_error_next);

/// sqrt((c4 a_n + c5 b_{n+1}) / c3): the smallest step for which the
/// bounds apply; zero when c3 = 0.
double delta_floor(const ErrorConstants& c, double a_n, double b_next);

/// Per-chain inputs of the budget: distortions per layer (0..N) and, per
/// transition n -> n+1 (0..N-1), ||Delta(Zhat_n)||_p and min_z Delta(z).
struct ChainBudgetInputs {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> delta_bar;
  std::vector<double> min_delta;
};

struct BudgetInputs {
  ConstantsLedger ledger;
  TerminalConstants g;
  int N = 0;
  double p = 2.0;
  ChainBudgetInputs main;
  /// One entry for the pooled chain, or one per control point.
  std::vector<ChainBudgetInputs> control;
  /// Multiplier turning a chain's layer-0 error into a bound on
  /// max_y |v_k(y) - vtilde_k(y)|: u^{1/p} for the pooled chain, 1 otherwise.
  double control_factor = 1.0;
};

struct BudgetCell {
  int k = 0;  // control row (0 for the main recursion)
  int n = 0;
  ErrorConstants constants;
  double floor = 0.0;
  double min_delta = 0.0;
  bool floor_ok = true;
  double bound = 0.0;
};

struct ErrorBudget {
  BaseConstants base;
  std::vector<LipschitzEntry> lipschitz;        // v_0 .. v_N
  std::vector<BudgetCell> control_cells;        // chain 0 (pooled) or worst chain
  std::vector<double> control_error;            // index k = 0..N; [N] = 0, [0] unused
  std::vector<BudgetCell> main_cells;           // n = N-1 .. 0
  std::vector<double> main_error;               // index n = 0..N
  double total = 0.0;
  bool floors_ok = true;
  bool saturated = false;
};

/// Iterates the control triangle (k = N-1..1, n = N-k-1..0) and then the
/// main recursion (n = N-1..0). Base cases use [g] a for the value error and
/// zero for the control error at k = N.
ErrorBudget iterate_budget(const BudgetInputs& inputs);

nlohmann::json budget_to_json(const ErrorBudget& budget);

}  // namespace pdmp
