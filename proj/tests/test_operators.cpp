#include "pdmp_impulse/operators.hpp"

#include "support/checks.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace pdmp {
namespace {

using testing::bench_F_simpson;
using testing::bench_lambda;
using testing::simpson;

const ValueFunction kHalf = [](const State&) { return 0.5; };

TEST(ContinuousOperators, RunningCostAgainstSimpson) {
  const Problem p = benchmark_problem();
  const BenchmarkParams bp;
  EXPECT_NEAR(op_F(p, scalar_state(0.0), 1.0), bench_F_simpson(bp, 0.0, 1.0), 1e-8);
  EXPECT_NEAR(op_F(p, scalar_state(0.4), 0.3), bench_F_simpson(bp, 0.4, 0.3), 1e-8);
  // Past the exit time the integral stops at t*.
  EXPECT_NEAR(op_F(p, scalar_state(0.4), 5.0), bench_F_simpson(bp, 0.4, 0.6), 1e-8);
}

TEST(ContinuousOperators, ConstantCostWithoutJumps) {
  Problem p = benchmark_problem();
  auto model = std::make_shared<PdmpModel>(*p.model);
  model->jump_rate = [](const State&) { return 0.0; };
  model->cumulative_rate = [](const State&, double) { return 0.0; };
  model->inverse_cumulative_rate = nullptr;
  auto cost = std::make_shared<CostModel>(*p.cost);
  cost->running_cost = [](const State&) { return 0.7; };
  p.model = model;
  p.cost = cost;
  const double a = p.alpha();
  for (double t : {0.0, 0.2, 0.9}) {
    EXPECT_NEAR(op_F(p, scalar_state(0.0), t), 0.7 * (1.0 - std::exp(-a * t)) / a, 1e-12);
    EXPECT_NEAR(op_I(p, kHalf, scalar_state(0.0), t), 0.0, 1e-15);
  }
}

TEST(ContinuousOperators, DiscountedSurvivalAtExit) {
  const Problem p = benchmark_problem();
  // e^{-2 - 1.5} at x = 0, t = t* = 1.
  const ValueFunction one = [](const State&) { return 1.0; };
  EXPECT_NEAR(op_H(p, one, scalar_state(0.0), 1.0), std::exp(-3.5), 1e-14);
  EXPECT_NEAR(op_H(p, one, scalar_state(0.0), 2.0), std::exp(-3.5), 1e-14);
  EXPECT_NEAR(op_H(p, kHalf, scalar_state(0.5), 0.25),
              0.5 * std::exp(-0.5 - bench_lambda(BenchmarkParams{}, 0.5, 0.25)), 1e-14);
}

TEST(ContinuousOperators, JumpIntegralAgainstSimpson) {
  const Problem p = benchmark_problem();
  const BenchmarkParams bp;
  // Qw is the constant 0.5 for w = 0.5, and lambda(phi(0, s)) = 3 s.
  const double oracle = simpson(
      [&](double s) { return std::exp(-2.0 * s - bench_lambda(bp, 0.0, s)) * 3.0 * s * 0.5; }, 0.0,
      0.5, 1'000'000);
  EXPECT_NEAR(op_I(p, kHalf, scalar_state(0.0), 0.5), oracle, 1e-9);
  const double j = bench_F_simpson(bp, 0.0, 0.5) + oracle +
                   0.5 * std::exp(-1.0 - bench_lambda(bp, 0.0, 0.5));
  EXPECT_NEAR(op_J(p, kHalf, kHalf, scalar_state(0.0), 0.5), j, 1e-8);
}

TEST(ContinuousOperators, SurvivalAndSemigroupIdentities) {
  const Problem p = benchmark_problem();
  EXPECT_LT(testing::survival_identity(p, 300, 1).max_error, 1e-7);
  EXPECT_LT(testing::semigroup_identities(p, 100, 2).max_error, 1e-6);
  EXPECT_LT(testing::l_shift_identity(p, 10, 3).max_error, 1e-6);
}

TEST(ContinuousOperators, SampledRegularityInequalities) {
  const Problem p = benchmark_problem();
  const BenchmarkParams bp;
  EXPECT_EQ(testing::time_regularity(p, bp, 200, 4).violations, 0);
  EXPECT_EQ(testing::discretization_bound(p, bp, 20, 5).violations, 0);
}

TEST(ContinuousOperators, KStaysBelowTheRunningCostBound) {
  const Problem p = benchmark_problem();
  const double bound = p.constants.C_f / p.alpha();
  const ValueFunction w = [bound](const State&) { return bound; };
  for (double x : {0.0, 0.3, 0.8, 0.999}) {
    EXPECT_LE(op_K(p, w, scalar_state(x)), bound + 1e-12);
  }
}

TEST(ContinuousOperators, OutsideTheDomain) {
  const Problem p = benchmark_problem();
  EXPECT_THROW(op_F(p, scalar_state(0.2), -0.1), DomainError);
}

TEST(Intervention, MinimumAndTieBreaking) {
  CostModel cost;
  cost.control_set = {scalar_state(0.0), scalar_state(0.5), scalar_state(1.0)};
  cost.intervention_cost = [](const State&, const State&) { return 0.08; };
  const std::vector<double> phi{0.3, 0.1, 0.4};
  const MResult r = op_M(cost, phi, scalar_state(0.2));
  EXPECT_NEAR(r.value, 0.18, 1e-15);
  EXPECT_EQ(r.argmin, 1u);
  const std::vector<double> tied{0.2, 0.1, 0.1};
  EXPECT_EQ(op_M(cost, tied, scalar_state(0.2)).argmin, 1u);
  const std::vector<double> short_phi{0.1};
  EXPECT_THROW(op_M(cost, short_phi, scalar_state(0.2)), ConfigError);
}

TEST(TimeGrid, Examples) {
  const TimeGrid a = build_time_grid(1.0, 0.3);
  ASSERT_EQ(a.points.size(), 3u);
  EXPECT_DOUBLE_EQ(a.points[1], 0.3);
  EXPECT_DOUBLE_EQ(a.points[2], 0.6);
  EXPECT_FALSE(a.degenerate);
  EXPECT_EQ(build_time_grid(1.0, 0.5).points, (std::vector<double>{0.0, 0.5}));
  const TimeGrid d = build_time_grid(1.0, 1.5);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.points, std::vector<double>{0.0});
  EXPECT_THROW(build_time_grid(0.0, 0.1), DomainError);
}

TEST(TimeGrid, PolicyUsesTheFloor) {
  DeltaPolicy policy;
  policy.floors = {0.3};
  policy.n_max = 10;
  EXPECT_GT(policy.grid(1.0, 0).delta, 0.3);
  EXPECT_LT(policy.grid(1.0, 0).delta, 0.3 + 1e-8);
  EXPECT_DOUBLE_EQ(policy.grid(1.0, 1).delta, 0.1);  // no floor for layer 1
  EXPECT_EQ(policy.floor(7), 0.0);
}

LayerGrid layer(std::vector<double> z, std::vector<double> s, std::vector<double> w, int index) {
  LayerGrid g;
  g.index = index;
  for (double x : z) g.z.push_back(scalar_state(x));
  g.s = std::move(s);
  g.weights = std::move(w);
  g.scale = {1.0, 1.0};
  return g;
}

QuantizedChain hand_chain() {
  QuantizedChain c;
  c.start = StartSpec::fixed(scalar_state(0.0));
  c.layers = {layer({0.0}, {0.0}, {1.0}, 0),
              layer({0.1, 0.3}, {0.2, 0.7}, {0.5, 0.5}, 1)};
  c.transitions = {TransitionMatrix::from_dense({{0.5, 0.5}})};
  c.distortion_z = {0.0, 0.0};
  c.distortion_s = {0.0, 0.0};
  return c;
}

TEST(QuantizedOperators, HandComputedKAndJ) {
  const Problem p = benchmark_problem();
  const BenchmarkParams bp;
  DeltaPolicy policy;
  policy.n_max = 4;
  const QuantizedOperators ops(p, hand_chain(), policy);
  ASSERT_EQ(ops.group_count(0), 1u);
  EXPECT_EQ(ops.time_grid(0, 0).points, (std::vector<double>{0.0, 0.25, 0.5, 0.75}));
  const std::vector<double> w{0.2, 0.6};
  const double k = bench_F_simpson(bp, 0.0, 1.0) + 0.5 * std::exp(-0.4) * 0.2 +
                   0.5 * std::exp(-1.4) * 0.6;
  EXPECT_NEAR(ops.K(0, 0, w), k, 1e-8);

  const ValueFunction v = [](const State& x) { return 1.0 - x(0); };
  const double j = bench_F_simpson(bp, 0.0, 0.5) + 0.5 * std::exp(-0.4) * 0.2 +
                   0.5 * std::exp(-1.0) * 0.5;
  EXPECT_NEAR(ops.J(0, 0, v, w, 0.5), j, 1e-8);
  EXPECT_THROW(ops.J(0, 0, v, w, 0.4), DomainError);

  const LdResult ld = ops.L_d(0, 0, v, w);
  double best = ops.K(0, 0, w);
  for (double t : ops.time_grid(0, 0).points) best = std::min(best, ops.J(0, 0, v, w, t));
  EXPECT_DOUBLE_EQ(ld.value, best);
}

TEST(QuantizedOperators, CellsSharingZAreMerged) {
  const Problem p = benchmark_problem();
  QuantizedChain c;
  c.start = StartSpec::fixed(scalar_state(0.0));
  c.layers = {layer({0.0}, {0.0}, {1.0}, 0),
              layer({0.2, 0.2}, {0.3, 0.6}, {0.25, 0.75}, 1),
              layer({0.1, 0.4}, {0.1, 0.5}, {0.4, 0.6}, 2)};
  c.transitions = {TransitionMatrix::from_dense({{0.25, 0.75}}),
                   TransitionMatrix::from_dense({{1.0, 0.0}, {0.2, 0.8}})};
  c.distortion_z = {0.0, 0.0, 0.0};
  c.distortion_s = {0.0, 0.0, 0.0};
  const QuantizedOperators ops(p, c, DeltaPolicy{});
  ASSERT_EQ(ops.group_count(1), 1u);
  EXPECT_DOUBLE_EQ(ops.group_weight(1, 0), 1.0);
  EXPECT_EQ(ops.cell_groups(1), (std::vector<std::size_t>{0, 0}));
  // Merged row: 0.25 [1, 0] + 0.75 [0.2, 0.8] = [0.4, 0.6].
  const std::vector<double> w{1.0, 2.0};
  const double expected = op_F(p, scalar_state(0.2), 1.0) + 0.4 * std::exp(-0.2) * 1.0 +
                          0.6 * std::exp(-1.0) * 2.0;
  EXPECT_NEAR(ops.K(1, 0, w), expected, 1e-13);
}

TEST(QuantizedOperators, DegenerateGridsCountAndNorm) {
  const Problem p = benchmark_problem();
  DeltaPolicy policy;
  policy.floors = {2.0};
  const QuantizedOperators ops(p, hand_chain(), policy);
  EXPECT_EQ(ops.degenerate_count(0), 1u);
  EXPECT_TRUE(ops.time_grid(0, 0).degenerate);
  EXPECT_DOUBLE_EQ(ops.delta_norm(0), 1.0);
  EXPECT_DOUBLE_EQ(ops.min_delta(0), 1.0);
}

}  // namespace
}  // namespace pdmp
