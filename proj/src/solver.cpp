#include "pdmp_impulse/solver.hpp"

#include <cmath>
#include <limits>

namespace pdmp {

const std::vector<double>& ControlValues::at(int k) const {
  if (k < 0 || k > N || by_k[static_cast<std::size_t>(k)].empty()) {
    throw ConfigError("control values for k=" + std::to_string(k) + " are not available");
  }
  return by_k[static_cast<std::size_t>(k)];
}

namespace {

ValueFunction intervention_value(const Problem& problem, const std::vector<double>& v_tilde) {
  return [cost = problem.cost, &v_tilde](const State& x) {
    return op_M(*cost, v_tilde, x).value;
  };
}

GridValues terminal_values(const QuantizedOperators& ops, int layer) {
  GridValues w(ops.group_count(layer));
  for (std::size_t g = 0; g < w.size(); ++g) w[g] = ops.problem().g(ops.group_point(layer, g));
  return w;
}

// Values on layer 0 of vhat^k_k: start from g on layer N - k and apply
// L^d with M vtilde_{k+n} for n = N-k down to 1.
GridValues control_row(const QuantizedOperators& ops, int k, int N,
                       const std::vector<std::vector<double>>& by_k) {
  const int depth = N - k;
  GridValues w = terminal_values(ops, depth);
  for (int n = depth; n >= 1; --n) {
    const auto v = intervention_value(ops.problem(), by_k[static_cast<std::size_t>(k + n)]);
    const auto results = ops.L_d_layer(n - 1, v, w);
    w.resize(results.size());
    for (std::size_t g = 0; g < results.size(); ++g) w[g] = results[g].value;
  }
  return w;
}

void check_horizon(const QuantizedOperators& ops, int N, const char* what) {
  if (N < 0) throw ConfigError("horizon N must be nonnegative");
  if (ops.horizon() != N) {
    throw ConfigError(std::string(what) + " chain has " + std::to_string(ops.horizon() + 1) +
                      " layers, horizon N=" + std::to_string(N) + " needs " +
                      std::to_string(N + 1));
  }
}

ControlValues start_values(const Problem& problem, int N) {
  ControlValues out;
  out.N = N;
  out.by_k.resize(static_cast<std::size_t>(N) + 1);
  auto& last = out.by_k[static_cast<std::size_t>(N)];
  for (const auto& y : problem.cost->control_set) last.push_back(problem.g(y));
  return out;
}

}  // namespace

ControlValues solve_control_values(const QuantizedOperators& pooled, int N, bool include_k0) {
  check_horizon(pooled, N, "control");
  const auto& controls = pooled.problem().cost->control_set;
  if (controls.empty()) throw ConfigError("empty control set");
  // Layer-0 group of each control point.
  std::vector<std::size_t> slot(controls.size());
  for (std::size_t i = 0; i < controls.size(); ++i) {
    bool found = false;
    for (std::size_t g = 0; g < pooled.group_count(0) && !found; ++g) {
      const State& z = pooled.group_point(0, g);
      if (z.size() == controls[i].size() && z == controls[i]) {
        slot[i] = g;
        found = true;
      }
    }
    if (!found) throw ConfigError("control chain layer 0 misses control point " + std::to_string(i));
  }
  ControlValues out = start_values(pooled.problem(), N);
  const int last_k = include_k0 ? 0 : 1;
  for (int k = N - 1; k >= last_k; --k) {
    const GridValues row = control_row(pooled, k, N, out.by_k);
    auto& vk = out.by_k[static_cast<std::size_t>(k)];
    vk.resize(controls.size());
    for (std::size_t i = 0; i < controls.size(); ++i) vk[i] = row[slot[i]];
  }
  return out;
}

ControlValues solve_control_values(const std::vector<QuantizedOperators>& chains, int N,
                                   bool include_k0) {
  if (chains.empty()) throw ConfigError("no control chains");
  const auto& controls = chains.front().problem().cost->control_set;
  if (chains.size() != controls.size()) {
    throw ConfigError("per-point mode needs one chain per control point");
  }
  for (std::size_t i = 0; i < chains.size(); ++i) {
    check_horizon(chains[i], N, "control");
    if (chains[i].group_count(0) != 1 || !(chains[i].group_point(0, 0) == controls[i])) {
      throw ConfigError("control chain " + std::to_string(i) + " does not start at its point");
    }
  }
  ControlValues out = start_values(chains.front().problem(), N);
  const int last_k = include_k0 ? 0 : 1;
  for (int k = N - 1; k >= last_k; --k) {
    auto& vk = out.by_k[static_cast<std::size_t>(k)];
    vk.resize(controls.size());
    for (std::size_t i = 0; i < controls.size(); ++i) vk[i] = control_row(chains[i], k, N, out.by_k)[0];
  }
  return out;
}

MainSolution solve_main(const QuantizedOperators& main, const ControlValues& control, int N) {
  check_horizon(main, N, "main");
  if (control.N != N) throw ConfigError("control values were computed for another horizon");
  const Problem& problem = main.problem();
  MainSolution out;
  out.tables.resize(static_cast<std::size_t>(N) + 1);

  auto fill_points = [&](LayerTable& table, int layer) {
    table.layer = layer;
    table.points.clear();
    for (std::size_t g = 0; g < main.group_count(layer); ++g) {
      table.points.push_back(main.group_point(layer, g));
    }
  };

  auto& last = out.tables[static_cast<std::size_t>(N)];
  fill_points(last, N);
  last.values = terminal_values(main, N);
  for (int k = N; k >= 1; --k) {
    const auto& v_tilde = control.at(k);
    const auto v = intervention_value(problem, v_tilde);
    const auto results = main.L_d_layer(k - 1, v, out.tables[static_cast<std::size_t>(k)].values);
    auto& table = out.tables[static_cast<std::size_t>(k) - 1];
    fill_points(table, k - 1);
    table.values.resize(results.size());
    table.restart.assign(results.size(), -1);
    for (std::size_t g = 0; g < results.size(); ++g) {
      table.values[g] = results[g].value;
      if (results[g].intervene) {
        const State x = problem.model->flow(table.points[g], results[g].time);
        table.restart[g] = static_cast<int>(op_M(*problem.cost, v_tilde, x).argmin);
      }
    }
    table.actions = results;
  }
  const auto& root = out.tables.front();
  if (root.values.size() != 1) throw ConfigError("main chain must start from a single point");
  out.value = root.values.front();
  return out;
}

SweepReport horizon_sweep(const std::function<double(int)>& solve, std::span<const int> horizons,
                          double tol) {
  SweepReport out;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (i > 0 && horizons[i] <= horizons[i - 1]) {
      throw ConfigError("horizon_sweep: horizons must be increasing");
    }
    const double value = solve(horizons[i]);
    out.horizons.push_back(horizons[i]);
    out.values.push_back(value);
    const double diff =
        i == 0 ? std::numeric_limits<double>::quiet_NaN() : value - out.values[i - 1];
    out.differences.push_back(diff);
    if (out.flagged_index < 0 && i > 0 && std::abs(diff) < tol) {
      out.flagged_index = static_cast<int>(i);
    }
  }
  return out;
}

}  // namespace pdmp
