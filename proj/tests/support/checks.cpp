#include "checks.hpp"

#include "pdmp_impulse/operators.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pdmp::testing {

double simpson(const std::function<double(double)>& f, double a, double b, long n) {
  if (n % 2 != 0) ++n;
  if (b <= a) return 0.0;
  const double h = (b - a) / static_cast<double>(n);
  double odd = 0.0;
  double even = 0.0;
  for (long i = 1; i < n; ++i) {
    const double y = f(a + h * static_cast<double>(i));
    (i % 2 ? odd : even) += y;
  }
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

double bench_lambda(const BenchmarkParams& p, double x, double t) {
  return p.beta * (x * t + p.v * t * t / 2.0);
}

double bench_tstar(const BenchmarkParams& p, double x) { return (1.0 - x) / p.v; }

double bench_F_simpson(const BenchmarkParams& p, double x, double t, long n) {
  const double tau = std::min(t, bench_tstar(p, x));
  return simpson(
      [&](double s) {
        return std::exp(-p.alpha * s - bench_lambda(p, x, s)) * (1.0 - (x + p.v * s));
      },
      0.0, tau, n);
}

namespace {

double growth(const Problem& problem, const State& x, double t) {
  return std::exp(problem.alpha() * t + lambda_integral(*problem.model, x, t));
}

// Test function on [0, 1] with its bound, its Lipschitz constant in space,
// and its Lipschitz constant in time along a flow of speed `speed`.
struct TestFunction {
  ValueFunction fn;
  double bound = 0.0;
  double lip_time = 0.0;
};

TestFunction random_function(Rng& rng, double speed) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double b = unit(rng) - 0.5;
  const double a = std::abs(b) + unit(rng);  // nonnegative on [0, 1]
  TestFunction out;
  if (unit(rng) < 0.5) {
    out.fn = [a, b](const State& x) { return a + b * x(0); };
    out.bound = std::max(std::abs(a), std::abs(a + b));
    out.lip_time = std::abs(b) * speed;
  } else {
    const double omega = 1.0 + 6.0 * unit(rng);
    out.fn = [a, b, omega](const State& x) { return a + b * std::sin(omega * x(0)); };
    out.bound = std::abs(a) + std::abs(b);
    out.lip_time = std::abs(b) * omega * speed;
  }
  return out;
}

double regularity_constant(const Problem& problem, const TestFunction& v, const TestFunction& w) {
  const auto& c = problem.constants;
  return c.C_f + w.bound * c.C_lambda + v.lip_time + v.bound * (c.C_lambda + c.alpha);
}

}  // namespace

CheckResult survival_identity(const Problem& problem, int samples, std::uint64_t seed) {
  Rng rng = make_rng(seed, 11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ValueFunction one = [](const State&) { return 1.0; };
  CheckResult r;
  for (int i = 0; i < samples; ++i) {
    const State x = scalar_state(0.999 * unit(rng));
    const double t = problem.model->exit_time(x) * (unit(rng) < 0.2 ? 1.0 : unit(rng));
    const double sum = op_H(problem, one, x, t) + op_I(problem, one, x, t) +
                       problem.alpha() * survival_integral(problem, x, t);
    r.max_error = std::max(r.max_error, std::abs(sum - 1.0));
    ++r.samples;
  }
  return r;
}

CheckResult semigroup_identities(const Problem& problem, int samples, std::uint64_t seed) {
  Rng rng = make_rng(seed, 12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ValueFunction v = [](const State& z) { return 0.5 - 0.3 * z(0); };
  const ValueFunction w = [](const State& z) { return 0.3 + 0.2 * z(0) * z(0); };
  CheckResult r;
  for (int i = 0; i < samples; ++i) {
    const State x = scalar_state(0.95 * unit(rng));
    const double ts = problem.model->exit_time(x);
    const double t = ts * 0.999 * unit(rng);
    const double u = 1.2 * (ts - t) * unit(rng);
    const State y = problem.model->flow(x, t);
    const double e = growth(problem, x, t);
    const double dF = op_F(problem, y, u) - e * (op_F(problem, x, t + u) - op_F(problem, x, t));
    const double dI =
        op_I(problem, w, y, u) - e * (op_I(problem, w, x, t + u) - op_I(problem, w, x, t));
    const double dH = op_H(problem, v, y, u) - e * op_H(problem, v, x, t + u);
    r.max_error = std::max({r.max_error, std::abs(dF), std::abs(dI), std::abs(dH)});
    ++r.samples;
  }
  return r;
}

CheckResult l_shift_identity(const Problem& problem, int samples, std::uint64_t seed) {
  Rng rng = make_rng(seed, 13);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ValueFunction v = [](const State& z) { return 0.2 + 0.1 * std::cos(3.0 * z(0)); };
  const ValueFunction w = [](const State& z) { return 0.35 - 0.1 * z(0); };
  CheckResult r;
  for (int i = 0; i < samples; ++i) {
    const State x = scalar_state(0.95 * unit(rng));
    const double ts = problem.model->exit_time(x);
    const double t = ts * 0.95 * unit(rng);
    const State y = problem.model->flow(x, t);
    const auto mesh = uniform_mesh(ts - t, 400);
    const double direct = op_L_on_mesh(problem, v, w, y, mesh);
    double inf_j = op_K(problem, w, x);
    for (double u : mesh) inf_j = std::min(inf_j, op_J(problem, v, w, x, t + u));
    const double shifted =
        growth(problem, x, t) * (inf_j - op_F(problem, x, t) - op_I(problem, w, x, t));
    r.max_error = std::max(r.max_error, std::abs(direct - shifted));
    ++r.samples;
  }
  return r;
}

// Quadrature noise allowance for the sampled inequalities; the quadrature
// tolerance is 1e-11 relative on values of order one.
constexpr double kNoise = 1e-10;

CheckResult time_regularity(const Problem& problem, const BenchmarkParams& p, int samples,
                            std::uint64_t seed) {
  Rng rng = make_rng(seed, 14);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CheckResult r;
  for (int i = 0; i < samples; ++i) {
    const TestFunction v = random_function(rng, p.v);
    const TestFunction w = random_function(rng, p.v);
    const State x = scalar_state(0.99 * unit(rng));
    const double ts = problem.model->exit_time(x);
    const double t = 1.2 * ts * unit(rng);
    const double u = unit(rng) < 0.5 ? 1.2 * ts * unit(rng) : t + 0.01 * ts * (unit(rng) - 0.5);
    const double lhs = std::abs(op_J(problem, v.fn, w.fn, x, t) -
                                op_J(problem, v.fn, w.fn, x, std::max(0.0, u)));
    const double rhs = regularity_constant(problem, v, w) * std::abs(t - std::max(0.0, u));
    if (!(lhs <= rhs + kNoise)) ++r.violations;
    ++r.samples;
  }
  return r;
}

CheckResult discretization_bound(const Problem& problem, const BenchmarkParams& p, int samples,
                                 std::uint64_t seed) {
  Rng rng = make_rng(seed, 15);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CheckResult r;
  for (int i = 0; i < samples; ++i) {
    const TestFunction v = random_function(rng, p.v);
    const TestFunction w = random_function(rng, p.v);
    const State x = scalar_state(0.99 * unit(rng));
    const double ts = problem.model->exit_time(x);
    const double delta = ts * (0.02 + 0.45 * unit(rng));
    const TimeGrid grid = build_time_grid(ts, delta);
    std::vector<double> fine;
    std::vector<double> knots = grid.points;
    knots.push_back(ts);
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      for (int j = 0; j < 100; ++j) {
        fine.push_back(knots[k] + (knots[k + 1] - knots[k]) * j / 100.0);
      }
    }
    fine.push_back(ts);
    const double L = op_L_on_mesh(problem, v.fn, w.fn, x, fine);
    const double Ld = op_L_on_mesh(problem, v.fn, w.fn, x, grid.points);
    const double rhs = regularity_constant(problem, v, w) * grid.delta;
    if (!(std::abs(L - Ld) <= rhs + kNoise)) ++r.violations;
    ++r.samples;
  }
  return r;
}

}  // namespace pdmp::testing
