#include "pdmp_impulse/solver.hpp"
#include "pdmp_impulse/toy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace pdmp {
namespace {

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

TEST(Solver, ToyCasesMatchBruteForce) {
  int intervene = 0;
  int wait = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const ToyCase toy = random_toy_case(seed);
    const auto oracle = oracle::brute_force_recursion(toy_instance(toy), toy.N);
    const ToyValues got = solve_toy(toy);
    worst = std::max(worst, rel_diff(got.root, oracle.root));
    for (int k = 1; k < toy.N; ++k) {
      const auto& a = got.v_tilde[static_cast<std::size_t>(k)];
      const auto& b = oracle.v_tilde[static_cast<std::size_t>(k)];
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_diff(a[i], b[i]));
    }

    const QuantizedOperators main(toy.problem, toy.main, toy.main_policy);
    const QuantizedOperators control(toy.problem, toy.control, toy.control_policy);
    const auto sol = solve_main(main, solve_control_values(control, toy.N), toy.N);
    for (int n = 0; n < toy.N; ++n) {
      for (const auto& a : sol.tables[static_cast<std::size_t>(n)].actions) {
        (a.intervene ? intervene : wait) += 1;
      }
    }
  }
  EXPECT_LT(worst, 1e-12);
  // Both branches of the min must have been exercised.
  EXPECT_GT(intervene, 0);
  EXPECT_GT(wait, 0);
}

TEST(Solver, ZeroHorizonReturnsG) {
  ToyOptions o;
  o.max_horizon = 1;
  const ToyCase toy = random_toy_case(3, o);
  const QuantizedOperators main(toy.problem, toy.main.truncated(0), toy.main_policy);
  const QuantizedOperators control(toy.problem, toy.control.truncated(0), toy.control_policy);
  const auto values = solve_control_values(control, 0);
  EXPECT_DOUBLE_EQ(solve_main(main, values, 0).value, toy.problem.g(toy.problem.x0));
}

TEST(Solver, OneStepIsASingleLd) {
  ToyOptions o;
  o.max_horizon = 1;
  const ToyCase toy = random_toy_case(8, o);
  ASSERT_EQ(toy.N, 1);
  const QuantizedOperators main(toy.problem, toy.main, toy.main_policy);
  const QuantizedOperators control(toy.problem, toy.control, toy.control_policy);
  const auto values = solve_control_values(control, 1);
  std::vector<double> g_next;
  for (std::size_t i = 0; i < main.group_count(1); ++i) {
    g_next.push_back(toy.problem.g(main.group_point(1, i)));
  }
  std::vector<double> g_controls;
  for (const auto& y : toy.problem.cost->control_set) g_controls.push_back(toy.problem.g(y));
  const auto cost = toy.problem.cost;
  const ValueFunction Mg = [&](const State& x) { return op_M(*cost, g_controls, x).value; };
  EXPECT_DOUBLE_EQ(solve_main(main, values, 1).value, main.L_d(0, 0, Mg, g_next).value);
}

TEST(Solver, HorizonMismatchIsAnError) {
  ToyOptions o;
  o.max_horizon = 2;
  ToyCase toy = random_toy_case(11, o);
  while (toy.N != 2) toy = random_toy_case(toy.N + 100, o);
  const QuantizedOperators main(toy.problem, toy.main, toy.main_policy);
  const QuantizedOperators control(toy.problem, toy.control, toy.control_policy);
  EXPECT_THROW(solve_control_values(control, 3), ConfigError);
  const auto values = solve_control_values(control, 2);
  EXPECT_THROW(solve_main(main, values, 1), ConfigError);
  const QuantizedOperators short_control(toy.problem, toy.control.truncated(1),
                                         toy.control_policy);
  EXPECT_THROW(solve_main(main, solve_control_values(short_control, 1), 2), ConfigError);
}

// Splitting the pooled chain by start cell gives per-point chains with the
// same successors, so both modes must agree exactly.
TEST(Solver, PerPointChainsMatchPooled) {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const ToyCase toy = random_toy_case(seed);
    const QuantizedOperators pooled(toy.problem, toy.control, toy.control_policy);
    std::vector<QuantizedOperators> per_point;
    for (std::size_t i = 0; i < toy.control.layers[0].size(); ++i) {
      QuantizedChain c = toy.control;
      LayerGrid& first = c.layers[0];
      first.z = {first.z[i]};
      first.s = {first.s[i]};
      first.weights = {1.0};
      if (!c.transitions.empty()) {
        const auto dense = c.transitions[0].to_dense();
        c.transitions[0] = TransitionMatrix::from_dense({dense[i]});
      }
      DeltaPolicy policy = toy.control_policy;
      per_point.emplace_back(toy.problem, c, policy);
    }
    const auto a = solve_control_values(pooled, toy.N, true);
    const auto b = solve_control_values(per_point, toy.N, true);
    for (int k = 0; k <= toy.N; ++k) {
      const auto& x = a.at(k);
      const auto& y = b.at(k);
      ASSERT_EQ(x.size(), y.size());
      for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-14);
    }
  }
}

TEST(Solver, RestartIndexPointsAtTheBestControl) {
  for (std::uint64_t seed = 40; seed < 60; ++seed) {
    const ToyCase toy = random_toy_case(seed);
    const QuantizedOperators main(toy.problem, toy.main, toy.main_policy);
    const QuantizedOperators control(toy.problem, toy.control, toy.control_policy);
    const auto values = solve_control_values(control, toy.N);
    const auto sol = solve_main(main, values, toy.N);
    for (int n = 0; n < toy.N; ++n) {
      const auto& table = sol.tables[static_cast<std::size_t>(n)];
      for (std::size_t g = 0; g < table.points.size(); ++g) {
        if (!table.actions[g].intervene) {
          EXPECT_EQ(table.restart[g], -1);
          continue;
        }
        const auto& vt = values.at(n + 1);
        const State x = toy.problem.model->flow(table.points[g], table.actions[g].time);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < vt.size(); ++i) {
          best = std::min(best, toy.problem.cost->intervention_cost(x, toy.problem.cost->control_set[i]) + vt[i]);
        }
        const auto r = static_cast<std::size_t>(table.restart[g]);
        EXPECT_DOUBLE_EQ(
            toy.problem.cost->intervention_cost(x, toy.problem.cost->control_set[r]) + vt[r], best);
      }
    }
  }
}

TEST(HorizonSweep, FlagsTheFirstSmallChange) {
  const std::vector<int> horizons{1, 2, 4, 8};
  const auto report = horizon_sweep([](int N) { return 1.0 - std::pow(0.1, N); }, horizons, 1e-3);
  EXPECT_TRUE(std::isnan(report.differences[0]));
  EXPECT_NEAR(report.differences[1], 0.09, 1e-15);
  EXPECT_EQ(report.flagged_index, 3);
  const auto all = horizon_sweep([](int) { return 0.5; }, horizons,
                                 std::numeric_limits<double>::infinity());
  EXPECT_EQ(all.flagged_index, 1);
  const std::vector<int> bad{2, 1};
  EXPECT_THROW(horizon_sweep([](int) { return 0.0; }, bad, 1.0), ConfigError);
}

TEST(HorizonSweep, ToyValuesAreDeterministic) {
  ToyOptions o;
  o.max_horizon = 3;
  const ToyCase toy = random_toy_case(5, o);
  auto solve = [&](int N) {
    const QuantizedOperators main(toy.problem, toy.main.truncated(N), toy.main_policy);
    const QuantizedOperators control(toy.problem, toy.control.truncated(N), toy.control_policy);
    return solve_main(main, solve_control_values(control, N), N).value;
  };
  std::vector<int> horizons;
  for (int N = 0; N <= toy.N; ++N) horizons.push_back(N);
  const auto a = horizon_sweep(solve, horizons, 0.0);
  const auto b = horizon_sweep(solve, horizons, 0.0);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.flagged_index, -1);
}

}  // namespace
}  // namespace pdmp
