#pragma once

// Piecewise deterministic Markov process (PDMP) model abstraction, the impulse
// cost model, the constants ledger, and exact simulation of the embedded chain
// Theta_n = (Z_n, S_n) of post-jump locations and inter-jump times.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdmp {

inline constexpr int kMaxStateDim = 4;

/// Fixed-capacity real vector; states never allocate.
using State = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxStateDim, 1>;

using Rng = std::mt19937_64;

/// Independent generator for `stream` derived from a base seed.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

State scalar_state(double x);
State make_state(std::initializer_list<double> values);

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using ValueFunction = std::function<double(const State&)>;

/// Regularity constants of the model and the costs. Names follow the
/// bracket notation: L_x_1 is [x]_1 (space Lipschitz along the flow),
/// L_x_2 is [x]_2 (time Lipschitz along the flow), L_x_star is [x]_* (at the
/// boundary), C_x is a uniform bound.
struct ConstantsLedger {
  double C_lambda = 0.0;
  double L_lambda_1 = 0.0;
  double C_tstar = 0.0;
  double L_tstar = 0.0;
  double C_f = 0.0;
  double L_f_1 = 0.0;
  double L_f_2 = 0.0;
  double L_f_star = 0.0;
  double c_0 = 0.0;
  double C_c = 0.0;
  double L_c_1 = 0.0;
  double L_c_2 = 0.0;
  double L_c_star = 0.0;
  double alpha = 1.0;
  double L_Q = 0.0;

  /// Throws ConfigError unless alpha > 0, 0 < c_0 <= C_c, and every entry
  /// is finite and nonnegative.
  void validate() const;
};

/// Local characteristics (flow, jump rate, kernel) of the process on an open
/// set E with exit time t*. The optional closed forms replace quadrature and
/// root finding when present.
struct PdmpModel {
  int state_dim = 1;
  std::function<State(const State&, double)> flow;
  std::function<double(const State&)> jump_rate;
  std::function<State(const State&, Rng&)> kernel_sample;
  /// Qw(x); exact or quadrature over the kernel's support.
  std::function<double(const State&, const ValueFunction&)> kernel_expect;
  std::function<double(const State&)> exit_time;

  /// Lambda(x, t), optional.
  std::function<double(const State&, double)> cumulative_rate;
  /// Smallest s with Lambda(x, s) = level, ignoring t*; optional.
  std::function<double(const State&, double)> inverse_cumulative_rate;
};

/// Regularity constants of the initializing function g.
struct TerminalConstants {
  double bound = 0.0;
  double L_1 = 0.0;
  double L_2 = 0.0;
  double L_star = 0.0;
  double L_global = 0.0;
};

struct CostModel {
  std::function<double(const State&)> running_cost;
  /// c(x, y) for y in the control set.
  std::function<double(const State&, const State&)> intervention_cost;
  std::vector<State> control_set;
  /// Initializing function g; empty means the constant C_f / alpha.
  std::function<double(const State&)> terminal_g;
  /// Ledger of a user-supplied g; ignored for the constant default.
  TerminalConstants terminal_constants;
};

/// Everything the solver needs about one impulse control problem.
struct Problem {
  std::shared_ptr<const PdmpModel> model;
  std::shared_ptr<const CostModel> cost;
  ConstantsLedger constants;
  State x0;

  double alpha() const { return constants.alpha; }
  double g(const State& x) const;
  bool has_constant_g() const { return !cost->terminal_g; }
  /// Ledger of g: zeros and C_f / alpha for the constant default.
  TerminalConstants g_constants() const;
  std::size_t control_count() const { return cost->control_set.size(); }
};

/// Lambda(x, t) = int_0^t lambda(phi(x, s)) ds. Throws DomainError unless
/// 0 <= t <= t*(x).
double lambda_integral(const PdmpModel& model, const State& x, double t);

struct JumpDraw {
  double s = 0.0;
  bool forced = false;  // jump triggered by reaching the boundary at t*
};

/// Inverse-transform draw of the first inter-jump time from x.
JumpDraw sample_first_jump(const PdmpModel& model, const State& x, Rng& rng);

/// Embedded chain path of n_jumps steps: z[0] = x0, s[0] = 0.
struct ChainPath {
  std::vector<State> z;
  std::vector<double> s;
  std::vector<bool> hit_boundary;
};

ChainPath sample_chain(const PdmpModel& model, const State& x0, int n_jumps, Rng& rng);

/// Parameters of the linear-drift benchmark on E = [0, 1).
struct BenchmarkParams {
  double v = 1.0;
  double beta = 3.0;
  double c0 = 0.08;
  double alpha = 2.0;
  int u = 50;
  double x0 = 0.0;
};

/// phi(x, t) = x + v t, lambda(x) = beta x, Q(x, .) uniform on [0, 1/2],
/// f(x) = 1 - x, c = c0, control set {k / u : 0 <= k < u}.
Problem benchmark_problem(const BenchmarkParams& params = {});

}  // namespace pdmp
