#include "pdmp_impulse/config.hpp"

#include <gtest/gtest.h>

namespace pdmp {
namespace {

TEST(Config, DefaultsAreTheBenchmark) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.model.v, 1.0);
  EXPECT_EQ(c.model.beta, 3.0);
  EXPECT_EQ(c.model.c0, 0.08);
  EXPECT_EQ(c.model.alpha, 2.0);
  EXPECT_EQ(c.model.u, 50);
  EXPECT_EQ(c.N, 5);
  EXPECT_EQ(c.control_start, "pooled");
}

TEST(Config, ParsesKeysCommentsAndLists) {
  const RunConfig c = parse_config(
      "# benchmark\nN = 10\nK=50,100\n  seed=7  # trailing\ntrain_paths=1e5\n"
      "budget_floor=false\ncontrol_start=per_point\nT=3.5\n");
  EXPECT_EQ(c.N, 10);
  EXPECT_EQ(c.layer_sizes, (std::vector<int>{50, 100}));
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.train_paths, 100000);
  EXPECT_FALSE(c.budget_floor);
  EXPECT_EQ(c.control_start, "per_point");
  EXPECT_EQ(c.mc_horizon, 3.5);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("nonsense"), ConfigError);
  EXPECT_THROW(parse_config("colour=blue"), ConfigError);
  EXPECT_THROW(parse_config("N=five"), ConfigError);
  EXPECT_THROW(parse_config("N=2.5"), ConfigError);
  EXPECT_THROW(parse_config("N=-1"), ConfigError);
  EXPECT_THROW(parse_config("p=0.5"), ConfigError);
  EXPECT_THROW(parse_config("control_start=sometimes"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST(Config, HashIgnoresThreadsAndFormatting) {
  const RunConfig a = parse_config("N=3\nseed=2\n");
  const RunConfig b = parse_config("seed = 2\n\nN=3\nthreads=8\n");
  const RunConfig c = parse_config("N=3\nseed=3\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash_hex().size(), 16u);
}

TEST(Config, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

}  // namespace
}  // namespace pdmp
