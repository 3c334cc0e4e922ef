#include "pdmp_impulse/quantizer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace pdmp {
namespace {

namespace fs = std::filesystem;

LayerGrid grid_1d(std::vector<double> z, std::vector<double> s) {
  LayerGrid g;
  for (double x : z) g.z.push_back(scalar_state(x));
  g.s = std::move(s);
  g.weights.assign(g.s.size(), 1.0 / static_cast<double>(g.s.size()));
  g.scale = {1.0, 1.0};
  return g;
}

std::shared_ptr<PdmpModel> deterministic_model() {
  auto m = std::make_shared<PdmpModel>();
  m->flow = [](const State& x, double t) { return scalar_state(x(0) + t); };
  m->jump_rate = [](const State&) { return 0.0; };
  m->kernel_sample = [](const State&, Rng&) { return scalar_state(0.0); };
  m->kernel_expect = [](const State&, const ValueFunction& w) { return w(scalar_state(0.0)); };
  m->exit_time = [](const State& x) { return 1.0 - x(0); };
  return m;
}

QuantizerOptions small_options(int K, std::int64_t paths = 20000, std::uint64_t seed = 1) {
  QuantizerOptions o;
  o.layer_sizes = {K};
  o.train_paths = paths;
  o.estimation_paths = paths;
  o.pilot_paths = 2000;
  o.seed = seed;
  return o;
}

QuantizedChain small_benchmark_chain(int K, int N, std::uint64_t seed = 1, int threads = 1) {
  const Problem p = benchmark_problem();
  auto o = small_options(K, 20000, seed);
  o.threads = threads;
  return train_clvq(make_chain_sampler(p.model, StartSpec::fixed(p.x0), N), o);
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "pdmp_impulse_tests";
  fs::create_directories(dir);
  return dir / name;
}

TEST(Project, ExactTiesAndNearest) {
  const LayerGrid g = grid_1d({0.0, 0.2, 0.4, 0.6, 0.8, 1.0}, {0, 0, 0, 0, 0, 0});
  EXPECT_EQ(project(scalar_state(0.6), 0.0, g), 3u);
  // Equidistant from cells 2 and 5: the smaller index wins.
  const LayerGrid t = grid_1d({0.0, 0.0, 0.25, 0.0, 0.0, 0.75}, {9, 9, 0, 9, 9, 0});
  EXPECT_EQ(project(scalar_state(0.5), 0.0, t), 2u);
  const LayerGrid two = grid_1d({0.1, 0.9}, {0.0, 0.0});
  EXPECT_EQ(project(scalar_state(0.4), 0.0, two), 0u);
}

TEST(Project, IndexAgreesWithBruteForce) {
  Rng rng = make_rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> z;
    std::vector<double> s;
    for (int i = 0; i < 60; ++i) {
      // Coarse values produce many exact ties.
      z.push_back(std::round(unit(rng) * 8.0) / 8.0);
      s.push_back(std::round(unit(rng) * 4.0) / 4.0);
    }
    LayerGrid g = grid_1d(z, s);
    g.scale = {0.5 + unit(rng), 0.5 + unit(rng)};
    for (double p : {1.0, 2.0, 3.0}) {
      const NearestCellIndex index(g, p);
      for (int q = 0; q < 200; ++q) {
        const double x = std::round(unit(rng) * 16.0) / 16.0;
        const double t = std::round(unit(rng) * 8.0) / 8.0;
        EXPECT_EQ(index.nearest(scalar_state(x), t), project(scalar_state(x), t, g, p));
      }
    }
  }
}

TEST(Project, EmptyGridIsAnError) {
  LayerGrid g;
  g.scale = {1.0, 1.0};
  EXPECT_THROW(project(scalar_state(0.1), 0.0, g), ConfigError);
}

TEST(Clvq, DeterministicChainHasZeroDistortion) {
  auto model = deterministic_model();
  const auto chain =
      train_clvq(make_chain_sampler(model, StartSpec::fixed(scalar_state(0.0)), 3), small_options(3, 2000));
  ASSERT_EQ(chain.horizon(), 3);
  for (int n = 0; n <= 3; ++n) {
    EXPECT_EQ(chain.layers[static_cast<std::size_t>(n)].size(), 1u);
    EXPECT_EQ(chain.distortion_z[static_cast<std::size_t>(n)], 0.0);
    EXPECT_EQ(chain.distortion_s[static_cast<std::size_t>(n)], 0.0);
  }
  for (const auto& T : chain.transitions) {
    EXPECT_EQ(T.to_dense(), (std::vector<std::vector<double>>{{1.0}}));
  }
}

TEST(Clvq, SingleCellLayerHasUnitWeight) {
  const auto chain = small_benchmark_chain(1, 2);
  EXPECT_EQ(chain.layers[1].weights, std::vector<double>{1.0});
}

TEST(Clvq, StructureOfBenchmarkChain) {
  const auto chain = small_benchmark_chain(30, 3);
  chain.check();
  ASSERT_EQ(chain.layers.size(), 4u);
  EXPECT_EQ(chain.layers[0].size(), 1u);
  EXPECT_EQ(chain.layers[0].z[0](0), 0.0);
  for (std::size_t n = 0; n < chain.layers.size(); ++n) {
    double total = 0.0;
    for (double w : chain.layers[n].weights) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
    // Post-jump locations live in the kernel support [0, 1/2].
    if (n >= 1) {
      for (const auto& z : chain.layers[n].z) {
        EXPECT_GE(z(0), 0.0);
        EXPECT_LE(z(0), 0.5);
      }
    }
  }
  for (const auto& T : chain.transitions) {
    for (std::size_t r = 0; r < T.rows; ++r) {
      double total = 0.0;
      for (double q : T.row_probs(r)) total += q;
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Clvq, MoreCellsReduceDistortion) {
  const Problem p = benchmark_problem();
  const auto sampler = make_chain_sampler(p.model, StartSpec::fixed(p.x0), 1);
  auto coarse = small_options(50, 200000);
  auto fine = small_options(500, 200000);
  const auto a = train_clvq(sampler, coarse);
  const auto b = train_clvq(sampler, fine);
  EXPECT_LT(b.distortion_z[1], a.distortion_z[1]);
  EXPECT_LT(b.distortion_s[1], a.distortion_s[1]);
}

TEST(Clvq, StoredDistortionMatchesFreshBatch) {
  const Problem p = benchmark_problem();
  const auto sampler = make_chain_sampler(p.model, StartSpec::fixed(p.x0), 2);
  const auto chain = train_clvq(sampler, small_options(40, 50000));
  const auto fresh = measure_distortion(sampler, chain, 50000, 99);
  for (int n = 1; n <= 2; ++n) {
    const auto i = static_cast<std::size_t>(n);
    const double stored = chain.distortion_z[i] * chain.distortion_z[i] +
                          chain.distortion_s[i] * chain.distortion_s[i];
    EXPECT_NEAR(fresh.mean[i], stored, 0.05 * stored);
  }
}

TEST(Clvq, SeedsAndThreadsDetermineTheChain) {
  const auto a = small_benchmark_chain(20, 3, 5, 1);
  const auto b = small_benchmark_chain(20, 3, 5, 3);
  const auto c = small_benchmark_chain(20, 3, 6, 1);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST(Clvq, PooledStartPutsEveryControlInLayerZero) {
  const Problem p = benchmark_problem();
  const auto chain = train_clvq(
      make_chain_sampler(p.model, StartSpec::uniform_over(p.cost->control_set), 2),
      small_options(30, 20000));
  ASSERT_EQ(chain.layers[0].size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(chain.layers[0].z[i](0), p.cost->control_set[i](0));
    EXPECT_EQ(chain.layers[0].s[i], 0.0);
  }
  EXPECT_EQ(chain.distortion_z[0], 0.0);
}

TEST(Transitions, DenseRoundTripDropsZeros) {
  const std::vector<std::vector<double>> dense{{0.5, 0.0, 0.5}, {0.0, 1.0, 0.0}};
  const auto T = TransitionMatrix::from_dense(dense);
  EXPECT_EQ(T.col.size(), 3u);
  EXPECT_EQ(T.to_dense(), dense);
  EXPECT_EQ(T.at(0, 2), 0.5);
  EXPECT_EQ(T.at(1, 0), 0.0);
}

TEST(Transitions, DeadCellsAreDropped) {
  QuantizedChain chain;
  chain.start = StartSpec::fixed(scalar_state(0.0));
  chain.layers = {grid_1d({0.0}, {0.0}), grid_1d({0.1, 0.2, 0.3}, {0.5, 0.6, 0.7})};
  chain.layers[1].weights = {0.4, 0.0, 0.6};
  chain.transitions = {TransitionMatrix::from_dense({{0.4, 0.0, 0.6}})};
  chain.distortion_z = {0.0, 0.1};
  chain.distortion_s = {0.0, 0.1};
  drop_dead_cells(chain);
  chain.check();
  EXPECT_EQ(chain.layers[1].size(), 2u);
  EXPECT_EQ(chain.layers[1].z[1](0), 0.3);
  EXPECT_EQ(chain.transitions[0].to_dense(), (std::vector<std::vector<double>>{{0.4, 0.6}}));
}

TEST(ChainFile, RoundTripIsExact) {
  const auto chain = small_benchmark_chain(25, 3);
  const auto path = temp_file("roundtrip.qc");
  save_chain(chain, path, {{"seed", "1"}});
  const auto back = load_chain(path);
  EXPECT_TRUE(back == chain);
  EXPECT_EQ(back.distortion_z, chain.distortion_z);
  EXPECT_EQ(back.distortion_s, chain.distortion_s);
  EXPECT_EQ(chain_file_meta(path).at("seed"), "1");
}

TEST(ChainFile, DamageIsDetected) {
  const auto chain = small_benchmark_chain(10, 2);
  const auto path = temp_file("damaged.qc");
  save_chain(chain, path);
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  auto write = [&](const std::vector<char>& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  write(std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)));
  EXPECT_THROW(load_chain(path), CorruptFileError);

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  write(flipped);
  EXPECT_THROW(load_chain(path), CorruptFileError);

  auto version = bytes;
  version[8] = 7;  // little-endian u32 right after the magic
  write(version);
  EXPECT_THROW(load_chain(path), VersionMismatchError);

  write({'n', 'o', 'p', 'e'});
  EXPECT_THROW(load_chain(path), CorruptFileError);
}

TEST(ChainFile, TruncatedChainKeepsLeadingLayers) {
  const auto chain = small_benchmark_chain(10, 4);
  const auto t = chain.truncated(2);
  EXPECT_EQ(t.horizon(), 2);
  EXPECT_EQ(t.layers[2].s, chain.layers[2].s);
  EXPECT_THROW(chain.truncated(5), ConfigError);
}

}  // namespace
}  // namespace pdmp
