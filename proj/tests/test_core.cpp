#include "pdmp_impulse/core.hpp"

#include "support/checks.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace pdmp {
namespace {

using testing::bench_lambda;
using testing::simpson;

std::shared_ptr<PdmpModel> no_jump_model() {
  auto m = std::make_shared<PdmpModel>();
  m->flow = [](const State& x, double t) { return scalar_state(x(0) + t); };
  m->jump_rate = [](const State&) { return 0.0; };
  m->kernel_sample = [](const State&, Rng&) { return scalar_state(0.0); };
  m->kernel_expect = [](const State&, const ValueFunction& w) { return w(scalar_state(0.0)); };
  m->exit_time = [](const State& x) { return 1.0 - x(0); };
  return m;
}

TEST(LambdaIntegral, BenchmarkClosedForm) {
  const Problem p = benchmark_problem();
  EXPECT_NEAR(lambda_integral(*p.model, scalar_state(0.0), 1.0), 1.5, 1e-12);
  EXPECT_NEAR(lambda_integral(*p.model, scalar_state(0.5), 0.5), 1.125, 1e-12);
  EXPECT_EQ(lambda_integral(*p.model, scalar_state(0.3), 0.0), 0.0);
}

TEST(LambdaIntegral, QuadratureWhenNoClosedForm) {
  Problem p = benchmark_problem();
  auto m = std::make_shared<PdmpModel>(*p.model);
  m->cumulative_rate = nullptr;
  m->inverse_cumulative_rate = nullptr;
  BenchmarkParams bp;
  for (double x : {0.0, 0.2, 0.7}) {
    const double t = 0.9 * (1.0 - x);
    EXPECT_NEAR(lambda_integral(*m, scalar_state(x), t), bench_lambda(bp, x, t), 1e-10);
  }
}

TEST(LambdaIntegral, RejectsTimesPastExit) {
  const Problem p = benchmark_problem();
  EXPECT_THROW(lambda_integral(*p.model, scalar_state(0.5), 0.75), DomainError);
  EXPECT_THROW(lambda_integral(*p.model, scalar_state(0.5), -0.1), DomainError);
}

TEST(FirstJump, NoRateAlwaysHitsBoundary) {
  auto m = no_jump_model();
  Rng rng = make_rng(3);
  for (int i = 0; i < 100; ++i) {
    const JumpDraw d = sample_first_jump(*m, scalar_state(0.25), rng);
    EXPECT_TRUE(d.forced);
    EXPECT_DOUBLE_EQ(d.s, 0.75);
  }
}

TEST(FirstJump, BenchmarkSurvivalAndMeanTime) {
  const Problem p = benchmark_problem();
  Rng rng = make_rng(17);
  const int n = 100000;
  int forced = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const JumpDraw d = sample_first_jump(*p.model, scalar_state(0.0), rng);
    forced += d.forced ? 1 : 0;
    EXPECT_LE(d.s, 1.0);
    sum += d.s;
    sum_sq += d.s * d.s;
  }
  const double q = std::exp(-1.5);
  EXPECT_NEAR(static_cast<double>(forced) / n, q, 3.0 * std::sqrt(q * (1 - q) / n));

  BenchmarkParams bp;
  const double mean = simpson([&](double t) { return std::exp(-bench_lambda(bp, 0.0, t)); }, 0.0,
                              1.0, 100000);
  const double m = sum / n;
  const double se = std::sqrt((sum_sq / n - m * m) / n);
  EXPECT_NEAR(m, mean, 3.0 * se);
}

TEST(Chain, ZeroJumpsIsTheStart) {
  const Problem p = benchmark_problem();
  Rng rng = make_rng(1);
  const ChainPath path = sample_chain(*p.model, scalar_state(0.3), 0, rng);
  ASSERT_EQ(path.z.size(), 1u);
  EXPECT_EQ(path.z[0](0), 0.3);
  EXPECT_EQ(path.s[0], 0.0);
}

TEST(Chain, PostJumpLocationsStayInKernelSupport) {
  const Problem p = benchmark_problem();
  Rng rng = make_rng(5);
  for (int i = 0; i < 2000; ++i) {
    const ChainPath path = sample_chain(*p.model, scalar_state(0.0), 6, rng);
    for (std::size_t n = 1; n < path.z.size(); ++n) {
      EXPECT_GE(path.z[n](0), 0.0);
      EXPECT_LE(path.z[n](0), 0.5);
      EXPECT_GE(path.s[n], 0.0);
    }
  }
}

TEST(Chain, FirstLocationIsUniformOnHalfInterval) {
  const Problem p = benchmark_problem();
  Rng rng = make_rng(23);
  const int n = 100000;
  std::vector<double> z1;
  z1.reserve(n);
  for (int i = 0; i < n; ++i) z1.push_back(sample_chain(*p.model, scalar_state(0.0), 1, rng).z[1](0));
  std::sort(z1.begin(), z1.end());
  double D = 0.0;
  for (int i = 0; i < n; ++i) {
    const double F = std::clamp(2.0 * z1[static_cast<std::size_t>(i)], 0.0, 1.0);
    D = std::max({D, std::abs(F - static_cast<double>(i) / n),
                  std::abs(static_cast<double>(i + 1) / n - F)});
  }
  // Asymptotic Kolmogorov-Smirnov critical value at level 1e-3.
  const double critical = std::sqrt(-0.5 * std::log(1e-3 / 2.0)) / std::sqrt(static_cast<double>(n));
  EXPECT_LT(D, critical);
}

TEST(Benchmark, ModelPieces) {
  const Problem p = benchmark_problem();
  EXPECT_DOUBLE_EQ(p.model->exit_time(scalar_state(0.25)), 0.75);
  const ValueFunction id = [](const State& z) { return z(0); };
  for (double x : {0.0, 0.4, 0.99}) {
    EXPECT_NEAR(p.model->kernel_expect(scalar_state(x), id), 0.25, 1e-12);
  }
  EXPECT_EQ(p.control_count(), 50u);
  EXPECT_DOUBLE_EQ(p.cost->control_set[7](0), 7.0 / 50.0);
  EXPECT_DOUBLE_EQ(p.cost->intervention_cost(scalar_state(0.2), scalar_state(0.9)), 0.08);
  EXPECT_DOUBLE_EQ(p.g(scalar_state(0.3)), 0.5);
  EXPECT_TRUE(p.has_constant_g());
  EXPECT_DOUBLE_EQ(p.g_constants().bound, 0.5);
  EXPECT_EQ(p.g_constants().L_global, 0.0);
}

TEST(Benchmark, Ledger) {
  const auto c = benchmark_problem().constants;
  EXPECT_EQ(c.C_lambda, 3.0);
  EXPECT_EQ(c.L_lambda_1, 3.0);
  EXPECT_EQ(c.C_tstar, 1.0);
  EXPECT_EQ(c.L_tstar, 1.0);
  EXPECT_EQ(c.C_f, 1.0);
  EXPECT_EQ(c.L_f_1, 1.0);
  EXPECT_EQ(c.alpha, 2.0);
  EXPECT_EQ(c.C_c, 0.08);
}

TEST(Ledger, ValidationRejectsBadEntries) {
  auto c = benchmark_problem().constants;
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = benchmark_problem().constants;
  c.c_0 = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = benchmark_problem().constants;
  c.L_tstar = std::nan("");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Rng a = make_rng(9, 4);
  Rng b = make_rng(9, 4);
  Rng c = make_rng(9, 5);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
}

}  // namespace
}  // namespace pdmp
