#include "pdmp_impulse/mc_oracle.hpp"

#include "pdmp_impulse/parallel.hpp"
#include "pdmp_impulse/quadrature.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace pdmp {

namespace {

constexpr std::int64_t kChunk = 1024;
constexpr std::uint64_t kMcStream = std::uint64_t{3} << 40;

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
};

// Per-chunk sums reduced in chunk order, so the result does not depend on
// the thread count.
template <class Draw>
Moments chunked_moments(std::int64_t n_sims, std::uint64_t seed, int threads, Draw&& draw) {
  const auto n_chunks = static_cast<std::size_t>((n_sims + kChunk - 1) / kChunk);
  std::vector<Moments> parts(n_chunks);
  parallel_chunks(n_chunks, resolve_threads(threads), [&](std::size_t c) {
    Rng rng = make_rng(seed, kMcStream + c);
    const std::int64_t begin = static_cast<std::int64_t>(c) * kChunk;
    const std::int64_t end = std::min(n_sims, begin + kChunk);
    Moments m;
    for (std::int64_t i = begin; i < end; ++i) {
      const double x = draw(rng);
      m.sum += x;
      m.sum_sq += x * x;
    }
    parts[c] = m;
  });
  Moments total;
  for (const auto& m : parts) {
    total.sum += m.sum;
    total.sum_sq += m.sum_sq;
  }
  return total;
}

McEstimate finish(const Moments& m, std::int64_t n) {
  McEstimate e;
  e.n_sims = n;
  const double dn = static_cast<double>(n);
  e.estimate = m.sum / dn;
  const double var = n > 1 ? std::max(0.0, (m.sum_sq - dn * e.estimate * e.estimate) / (dn - 1.0))
                           : 0.0;
  e.std_error = std::sqrt(var / dn);
  return e;
}

}  // namespace

McEstimate mc_no_impulse_cost(const Problem& problem, const State& x0, std::int64_t n_sims,
                              double horizon_T, std::uint64_t seed, int threads) {
  if (n_sims < 1) throw ConfigError("mc_no_impulse_cost: n_sims must be positive");
  const double alpha = problem.alpha();
  const double T = horizon_T > 0.0 ? horizon_T : 10.0 / alpha;
  const auto& model = *problem.model;
  const auto& f = problem.cost->running_cost;
  auto draw = [&](Rng& rng) {
    double elapsed = 0.0;
    double total = 0.0;
    State x = x0;
    while (elapsed < T) {
      const JumpDraw jump = sample_first_jump(model, x, rng);
      const double length = std::min(jump.s, T - elapsed);
      const double start = elapsed;
      total += quad::integrate(
          [&](double r) { return std::exp(-alpha * (start + r)) * f(model.flow(x, r)); }, 0.0,
          length);
      elapsed += jump.s;
      if (elapsed >= T) break;
      x = model.kernel_sample(model.flow(x, jump.s), rng);
    }
    return total;
  };
  McEstimate e = finish(chunked_moments(n_sims, seed, threads, draw), n_sims);
  e.truncation_bound = problem.constants.C_f * std::exp(-alpha * T) / alpha;
  return e;
}

McEstimate mc_discount_at_jump(const PdmpModel& model, double alpha, const State& x0, int n_jumps,
                               std::int64_t n_sims, std::uint64_t seed, int threads) {
  if (n_sims < 1) throw ConfigError("mc_discount_at_jump: n_sims must be positive");
  if (n_jumps < 0) throw ConfigError("mc_discount_at_jump: n_jumps must be nonnegative");
  auto draw = [&](Rng& rng) {
    double elapsed = 0.0;
    State x = x0;
    for (int n = 0; n < n_jumps; ++n) {
      const JumpDraw jump = sample_first_jump(model, x, rng);
      elapsed += jump.s;
      x = model.kernel_sample(model.flow(x, jump.s), rng);
    }
    return std::exp(-alpha * elapsed);
  };
  return finish(chunked_moments(n_sims, seed, threads, draw), n_sims);
}

std::vector<TrajectoryPoint> simulate_trajectory(const PdmpModel& model, const State& x0,
                                                 int n_jumps, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw ConfigError("simulate_trajectory: dt must be positive");
  std::vector<TrajectoryPoint> out;
  double elapsed = 0.0;
  State x = x0;
  for (int n = 0; n < n_jumps; ++n) {
    const JumpDraw jump = sample_first_jump(model, x, rng);
    for (long i = 0; static_cast<double>(i) * dt < jump.s; ++i) {
      const double r = static_cast<double>(i) * dt;
      out.push_back({elapsed + r, model.flow(x, r), n});
    }
    const State before = model.flow(x, jump.s);
    out.push_back({elapsed + jump.s, before, n});
    elapsed += jump.s;
    x = model.kernel_sample(before, rng);
    out.push_back({elapsed, x, n + 1});
  }
  if (n_jumps == 0) out.push_back({0.0, x0, 0});
  return out;
}

nlohmann::json estimate_to_json(const McEstimate& e) {
  return {{"estimate", e.estimate},
          {"std_error", e.std_error},
          {"truncation_bound", e.truncation_bound},
          {"n_sims", e.n_sims}};
}

}  // namespace pdmp
