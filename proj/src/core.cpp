#include "pdmp_impulse/core.hpp"

#include "pdmp_impulse/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pdmp {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return Rng(seq);
}

State scalar_state(double x) {
  State s(1);
  s(0) = x;
  return s;
}

State make_state(std::initializer_list<double> values) {
  if (values.size() == 0 || values.size() > static_cast<std::size_t>(kMaxStateDim)) {
    throw ConfigError("state dimension must be in [1, " + std::to_string(kMaxStateDim) + "]");
  }
  State s(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) s(i++) = v;
  return s;
}

void ConstantsLedger::validate() const {
  const double entries[] = {C_lambda, L_lambda_1, C_tstar, L_tstar, C_f,      L_f_1,
                            L_f_2,    L_f_star,   c_0,     C_c,     L_c_1,    L_c_2,
                            L_c_star, alpha,      L_Q};
  for (double e : entries) {
    if (!std::isfinite(e) || e < 0.0) {
      throw ConfigError("constants ledger entries must be finite and nonnegative");
    }
  }
  if (!(alpha > 0.0)) throw ConfigError("discount alpha must be positive");
  if (!(c_0 > 0.0) || c_0 > C_c) throw ConfigError("intervention costs require 0 < c_0 <= C_c");
}

double Problem::g(const State& x) const {
  if (cost->terminal_g) return cost->terminal_g(x);
  return constants.C_f / constants.alpha;
}

TerminalConstants Problem::g_constants() const {
  if (cost->terminal_g) return cost->terminal_constants;
  TerminalConstants tc;
  tc.bound = constants.C_f / constants.alpha;
  return tc;
}

namespace {

constexpr double kTimeSlack = 1e-12;

double cumulative_rate_unchecked(const PdmpModel& model, const State& x, double t) {
  if (model.cumulative_rate) return model.cumulative_rate(x, t);
  return quad::integrate([&](double s) { return model.jump_rate(model.flow(x, s)); }, 0.0, t);
}

// Solves Lambda(x, s) = level on [0, t_star] by safeguarded Newton; the
// caller guarantees Lambda(x, t_star) > level.
double invert_cumulative_rate(const PdmpModel& model, const State& x, double level,
                              double t_star) {
  double lo = 0.0;
  double hi = t_star;
  double s = 0.5 * t_star;
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double value = cumulative_rate_unchecked(model, x, s) - level;
    if (value > 0.0) {
      hi = s;
    } else {
      lo = s;
    }
    const double rate = model.jump_rate(model.flow(x, s));
    double next = rate > 0.0 ? s - value / rate : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) < 1e-12) {
      s = next;
      break;
    }
    s = next;
  }
  return s;
}

}  // namespace

double lambda_integral(const PdmpModel& model, const State& x, double t) {
  const double t_star = model.exit_time(x);
  if (!(t >= 0.0) || t > t_star + kTimeSlack * std::max(1.0, t_star)) {
    std::ostringstream msg;
    msg << "lambda_integral: t=" << t << " outside [0, t*(x)=" << t_star << "]";
    throw DomainError(msg.str());
  }
  return cumulative_rate_unchecked(model, x, std::min(t, t_star));
}

JumpDraw sample_first_jump(const PdmpModel& model, const State& x, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double t_star = model.exit_time(x);
  // 1 - U lies in (0, 1], so the exponential level is finite.
  const double level = -std::log(1.0 - uniform(rng));
  if (cumulative_rate_unchecked(model, x, t_star) <= level) return {t_star, true};
  double s = model.inverse_cumulative_rate ? model.inverse_cumulative_rate(x, level)
                                           : invert_cumulative_rate(model, x, level, t_star);
  s = std::clamp(s, 0.0, t_star);
  return {s, s == t_star};
}

ChainPath sample_chain(const PdmpModel& model, const State& x0, int n_jumps, Rng& rng) {
  if (n_jumps < 0) throw ConfigError("sample_chain: n_jumps must be nonnegative");
  ChainPath path;
  path.z.reserve(static_cast<std::size_t>(n_jumps) + 1);
  path.s.reserve(static_cast<std::size_t>(n_jumps) + 1);
  path.z.push_back(x0);
  path.s.push_back(0.0);
  path.hit_boundary.push_back(false);
  for (int n = 0; n < n_jumps; ++n) {
    const State& z = path.z.back();
    const JumpDraw jump = sample_first_jump(model, z, rng);
    path.z.push_back(model.kernel_sample(model.flow(z, jump.s), rng));
    path.s.push_back(jump.s);
    path.hit_boundary.push_back(jump.forced);
  }
  return path;
}

Problem benchmark_problem(const BenchmarkParams& params) {
  if (!(params.v > 0.0) || !(params.beta >= 0.0) || !(params.alpha > 0.0) ||
      !(params.c0 > 0.0) || params.u < 1 || !(params.x0 >= 0.0 && params.x0 < 1.0)) {
    throw ConfigError(
        "benchmark parameters require v > 0, beta >= 0, alpha > 0, c0 > 0, u >= 1, "
        "x0 in [0, 1)");
  }
  const double v = params.v;
  const double beta = params.beta;

  auto model = std::make_shared<PdmpModel>();
  model->state_dim = 1;
  model->flow = [v](const State& x, double t) { return scalar_state(x(0) + v * t); };
  model->jump_rate = [beta](const State& x) { return beta * x(0); };
  model->kernel_sample = [](const State&, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 0.5);
    return scalar_state(uniform(rng));
  };
  model->kernel_expect = [](const State&, const ValueFunction& w) {
    return 2.0 * quad::integrate([&](double z) { return w(scalar_state(z)); }, 0.0, 0.5);
  };
  model->exit_time = [v](const State& x) { return std::max(0.0, (1.0 - x(0)) / v); };
  model->cumulative_rate = [v, beta](const State& x, double t) {
    return beta * (x(0) * t + 0.5 * v * t * t);
  };
  model->inverse_cumulative_rate = [v, beta](const State& x, double level) {
    if (beta <= 0.0) return std::numeric_limits<double>::infinity();
    if (level <= 0.0) return 0.0;
    // Positive root of (beta v / 2) s^2 + beta x s - level, cancellation free.
    const double x0 = x(0);
    const double q = 2.0 * level / beta;
    return q / (x0 + std::sqrt(x0 * x0 + v * q));
  };

  auto cost = std::make_shared<CostModel>();
  cost->running_cost = [](const State& x) { return 1.0 - x(0); };
  const double c0 = params.c0;
  cost->intervention_cost = [c0](const State&, const State&) { return c0; };
  for (int k = 0; k < params.u; ++k) {
    cost->control_set.push_back(scalar_state(static_cast<double>(k) / params.u));
  }

  ConstantsLedger ledger;
  ledger.C_lambda = beta;
  ledger.L_lambda_1 = beta;
  ledger.C_tstar = 1.0 / v;
  ledger.L_tstar = 1.0 / v;
  ledger.C_f = 1.0;
  ledger.L_f_1 = 1.0;
  ledger.L_f_2 = v;
  ledger.L_f_star = 0.0;
  ledger.c_0 = c0;
  ledger.C_c = c0;
  ledger.L_c_1 = 0.0;
  ledger.L_c_2 = 0.0;
  ledger.L_c_star = 0.0;
  ledger.alpha = params.alpha;
  // Q(x, .) does not depend on x, so Qw is constant.
  ledger.L_Q = 0.0;
  ledger.validate();

  return Problem{model, cost, ledger, scalar_state(params.x0)};
}

}  // namespace pdmp
