#include "pdmp_impulse/toy.hpp"

#include "pdmp_impulse/solver.hpp"

#include <algorithm>
#include <random>

namespace pdmp {

namespace {

double uniform(Rng& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

LayerGrid make_layer(int index, std::vector<State> z, std::vector<double> s,
                     std::vector<double> weights) {
  LayerGrid layer;
  layer.index = index;
  layer.z = std::move(z);
  layer.s = std::move(s);
  layer.weights = std::move(weights);
  layer.scale = {1.0, 1.0};
  return layer;
}

LayerGrid random_layer(Rng& rng, int index, const ToyOptions& o) {
  const int m = pick(rng, 1, o.max_cells);
  std::vector<State> z;
  std::vector<double> s;
  std::vector<double> w;
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i > 0 && uniform(rng, 0.0, 1.0) < o.shared_z) {
      z.push_back(z[static_cast<std::size_t>(pick(rng, 0, i - 1))]);
    } else {
      z.push_back(scalar_state(uniform(rng, 0.0, 0.95)));
    }
    s.push_back(uniform(rng, 0.0, 1.2));
    w.push_back(uniform(rng, 0.05, 1.0));
    total += w.back();
  }
  for (auto& x : w) x /= total;
  return make_layer(index, std::move(z), std::move(s), std::move(w));
}

TransitionMatrix random_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<std::vector<double>> dense(rows, std::vector<double>(cols, 0.0));
  for (auto& row : dense) {
    double total = 0.0;
    for (auto& x : row) {
      x = uniform(rng, 0.0, 1.0) < 0.3 ? 0.0 : uniform(rng, 0.05, 1.0);
      total += x;
    }
    if (total == 0.0) {
      row[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(cols) - 1))] = 1.0;
      total = 1.0;
    }
    for (auto& x : row) x /= total;
  }
  return TransitionMatrix::from_dense(dense);
}

QuantizedChain random_chain(Rng& rng, LayerGrid first, StartSpec start, int N,
                            const ToyOptions& o) {
  QuantizedChain chain;
  chain.state_dim = 1;
  chain.p = 2.0;
  chain.start = std::move(start);
  chain.layers.push_back(std::move(first));
  for (int n = 1; n <= N; ++n) chain.layers.push_back(random_layer(rng, n, o));
  for (int n = 0; n < N; ++n) {
    chain.transitions.push_back(random_rows(rng, chain.layers[static_cast<std::size_t>(n)].size(),
                                            chain.layers[static_cast<std::size_t>(n) + 1].size()));
  }
  chain.distortion_z.assign(static_cast<std::size_t>(N) + 1, 0.0);
  chain.distortion_s.assign(static_cast<std::size_t>(N) + 1, 0.0);
  chain.check();
  return chain;
}

std::vector<double> random_floors(Rng& rng, int N) {
  std::vector<double> floors;
  for (int n = 0; n < N; ++n) floors.push_back(uniform(rng, 0.0, 1.0) < 0.3 ? 0.0 : uniform(rng, 0.0, 0.4));
  return floors;
}

oracle::ToyLayer toy_layer(const QuantizedChain& chain, std::size_t n) {
  oracle::ToyLayer out;
  const auto& layer = chain.layers[n];
  for (std::size_t i = 0; i < layer.size(); ++i) {
    out.cells.push_back({layer.z[i](0), layer.s[i], layer.weights[i]});
  }
  if (n < chain.transitions.size()) out.rows = chain.transitions[n].to_dense();
  return out;
}

}  // namespace

ToyCase random_toy_case(std::uint64_t seed, const ToyOptions& o) {
  Rng rng = make_rng(seed, 0x70f);
  ToyCase toy;
  toy.N = pick(rng, 1, o.max_horizon);

  BenchmarkParams params;
  params.v = uniform(rng, 0.5, 2.0);
  params.beta = uniform(rng, 0.5, 5.0);
  params.c0 = o.c0 > 0.0 ? o.c0 : uniform(rng, 0.01, 0.3);
  params.alpha = uniform(rng, 0.5, 3.0);
  params.u = pick(rng, 1, o.max_controls);
  params.x0 = uniform(rng, 0.0, 0.9);
  toy.problem = benchmark_problem(params);

  auto cost = std::make_shared<CostModel>(*toy.problem.cost);
  const double g0 = uniform(rng, 0.0, 0.5);
  const double g1 = uniform(rng, -0.3, 0.3);
  cost->terminal_g = [g0, g1](const State& x) { return g0 + g1 * x(0); };
  cost->terminal_constants.bound = g0 + std::abs(g1);
  cost->terminal_constants.L_global = std::abs(g1);
  toy.problem.cost = cost;

  const auto& controls = cost->control_set;
  toy.main = random_chain(rng,
                          make_layer(0, {toy.problem.x0}, {0.0}, {1.0}),
                          StartSpec::fixed(toy.problem.x0), toy.N, o);
  std::vector<double> s0(controls.size(), 0.0);
  std::vector<double> w0(controls.size(), 1.0 / static_cast<double>(controls.size()));
  toy.control = random_chain(rng, make_layer(0, controls, s0, w0),
                             StartSpec::uniform_over(controls), toy.N, o);

  toy.main_policy.floors = random_floors(rng, toy.N);
  toy.main_policy.n_max = o.n_max;
  toy.control_policy.floors = random_floors(rng, toy.N);
  toy.control_policy.n_max = o.n_max;
  return toy;
}

oracle::ToyInstance toy_instance(const ToyCase& toy) {
  oracle::ToyInstance out;
  for (std::size_t n = 0; n < toy.main.layers.size(); ++n) out.main.push_back(toy_layer(toy.main, n));
  for (std::size_t n = 0; n < toy.control.layers.size(); ++n) {
    out.control.push_back(toy_layer(toy.control, n));
  }
  for (const auto& y : toy.problem.cost->control_set) out.controls.push_back(y(0));

  const Problem problem = toy.problem;
  out.alpha = problem.alpha();
  out.F = [problem](double z, double t) { return op_F(problem, scalar_state(z), t); };
  out.t_star = [model = problem.model](double z) { return model->exit_time(scalar_state(z)); };
  out.flow = [model = problem.model](double z, double t) {
    return model->flow(scalar_state(z), t)(0);
  };
  out.cost = [cost = problem.cost](double x, double y) {
    return cost->intervention_cost(scalar_state(x), scalar_state(y));
  };
  out.g = [problem](double z) { return problem.g(scalar_state(z)); };
  out.main_floor = toy.main_policy.floors;
  out.control_floor = toy.control_policy.floors;
  out.n_max = toy.main_policy.n_max;
  return out;
}

ToyValues solve_toy(const ToyCase& toy) {
  const QuantizedOperators main(toy.problem, toy.main, toy.main_policy);
  const QuantizedOperators control(toy.problem, toy.control, toy.control_policy);
  const auto values = solve_control_values(control, toy.N, false);
  ToyValues out;
  out.root = solve_main(main, values, toy.N).value;
  out.v_tilde = values.by_k;
  return out;
}

}  // namespace pdmp
