#include "pdmp_impulse/operators.hpp"

#include "pdmp_impulse/parallel.hpp"
#include "pdmp_impulse/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace pdmp {

namespace {

double horizon_of(const Problem& problem, const State& x, double t) {
  if (!(t >= 0.0)) throw DomainError("operator time must be nonnegative");
  return std::min(t, problem.model->exit_time(x));
}

double discount(const Problem& problem, const State& x, double s) {
  return std::exp(-problem.alpha() * s - lambda_integral(*problem.model, x, s));
}

}  // namespace

double op_F(const Problem& problem, const State& x, double t) {
  const double tau = horizon_of(problem, x, t);
  const auto& model = *problem.model;
  const auto& f = problem.cost->running_cost;
  return quad::integrate(
      [&](double s) { return discount(problem, x, s) * f(model.flow(x, s)); }, 0.0, tau);
}

double op_H(const Problem& problem, const ValueFunction& v, const State& x, double t) {
  const double tau = horizon_of(problem, x, t);
  return discount(problem, x, tau) * v(problem.model->flow(x, tau));
}

double op_I(const Problem& problem, const ValueFunction& w, const State& x, double t) {
  const double tau = horizon_of(problem, x, t);
  const auto& model = *problem.model;
  return quad::integrate(
      [&](double s) {
        const State y = model.flow(x, s);
        const double rate = model.jump_rate(y);
        if (rate == 0.0) return 0.0;
        return discount(problem, x, s) * rate * model.kernel_expect(y, w);
      },
      0.0, tau);
}

double survival_integral(const Problem& problem, const State& x, double t) {
  const double tau = horizon_of(problem, x, t);
  return quad::integrate([&](double s) { return discount(problem, x, s); }, 0.0, tau);
}

double op_J(const Problem& problem, const ValueFunction& v, const ValueFunction& w,
            const State& x, double t) {
  return op_F(problem, x, t) + op_H(problem, v, x, t) + op_I(problem, w, x, t);
}

double op_K(const Problem& problem, const ValueFunction& w, const State& x) {
  const double t_star = problem.model->exit_time(x);
  const State boundary = problem.model->flow(x, t_star);
  const double boundary_term =
      discount(problem, x, t_star) * problem.model->kernel_expect(boundary, w);
  return op_F(problem, x, t_star) + boundary_term + op_I(problem, w, x, t_star);
}

MResult op_M(const CostModel& cost, std::span<const double> phi_values, const State& x) {
  if (cost.control_set.empty()) throw ConfigError("op_M: empty control set");
  if (phi_values.size() != cost.control_set.size()) {
    throw ConfigError("op_M: one value per control point required");
  }
  MResult best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < phi_values.size(); ++i) {
    const double value = cost.intervention_cost(x, cost.control_set[i]) + phi_values[i];
    if (value < best.value) best = {value, i};
  }
  return best;
}

double op_L_on_mesh(const Problem& problem, const ValueFunction& v, const ValueFunction& w,
                    const State& x, std::span<const double> mesh) {
  double best = op_K(problem, w, x);
  for (double t : mesh) best = std::min(best, op_J(problem, v, w, x, t));
  return best;
}

std::vector<double> uniform_mesh(double t_star, int n) {
  if (n < 1) throw ConfigError("uniform_mesh: need at least one interval");
  std::vector<double> mesh(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) mesh[static_cast<std::size_t>(i)] = t_star * i / n;
  mesh.back() = t_star;
  return mesh;
}

// ---------------------------------------------------------------------------
// Time grids
// ---------------------------------------------------------------------------

TimeGrid build_time_grid(double t_star, double delta) {
  if (!(t_star > 0.0) || !std::isfinite(t_star)) {
    std::ostringstream msg;
    msg << "time grid needs 0 < t* < inf, got " << t_star;
    throw DomainError(msg.str());
  }
  if (!(delta > 0.0)) throw ConfigError("time grid step must be positive");
  TimeGrid grid;
  if (delta >= t_star) {
    grid.delta = t_star;
    grid.points = {0.0};
    grid.degenerate = true;
    return grid;
  }
  grid.delta = delta;
  auto n = static_cast<long long>(t_star / delta) - 1;
  while (n > 0 && static_cast<double>(n + 1) * delta > t_star) --n;
  grid.points.resize(static_cast<std::size_t>(n) + 1);
  for (long long i = 0; i <= n; ++i) {
    grid.points[static_cast<std::size_t>(i)] = static_cast<double>(i) * delta;
  }
  return grid;
}

double DeltaPolicy::floor(int layer) const {
  if (layer < 0 || static_cast<std::size_t>(layer) >= floors.size()) return 0.0;
  return floors[static_cast<std::size_t>(layer)];
}

TimeGrid DeltaPolicy::grid(double t_star, int layer) const {
  const double lower = floor(layer) * (1.0 + 1e-9);
  const double uniform = n_max > 0 ? t_star / n_max : 0.0;
  const double delta = std::max(lower, uniform);
  if (!(delta > 0.0)) throw ConfigError("time step policy needs a floor or n_max > 0");
  return build_time_grid(t_star, delta);
}

// ---------------------------------------------------------------------------
// Quantized operators
// ---------------------------------------------------------------------------

namespace {

struct StateLess {
  bool operator()(const State& a, const State& b) const {
    if (a.size() != b.size()) return a.size() < b.size();
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      if (a(k) != b(k)) return a(k) < b(k);
    }
    return false;
  }
};

}  // namespace

QuantizedOperators::QuantizedOperators(const Problem& problem, const QuantizedChain& chain,
                                       const DeltaPolicy& policy, int threads)
    : problem_(problem), chain_(chain), threads_(resolve_threads(threads)) {
  chain_.check();
  const int N = chain_.horizon();
  layers_.resize(static_cast<std::size_t>(N) + 1);
  for (int n = 0; n <= N; ++n) {
    const auto& grid = chain_.layers[static_cast<std::size_t>(n)];
    auto& layer = layers_[static_cast<std::size_t>(n)];
    std::map<State, std::size_t, StateLess> seen;
    layer.cell_group.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      auto [it, inserted] = seen.emplace(grid.z[i], layer.groups.size());
      if (inserted) {
        Group g;
        g.z = grid.z[i];
        g.t_star = problem_.model->exit_time(g.z);
        layer.groups.push_back(std::move(g));
      }
      layer.cell_group[i] = it->second;
      layer.groups[it->second].weight += grid.weights[i];
    }
  }
  // Averaged transition rows and per-group time data for layers 0..N-1.
  for (int n = 0; n < N; ++n) {
    const auto& grid = chain_.layers[static_cast<std::size_t>(n)];
    const auto& next_grid = chain_.layers[static_cast<std::size_t>(n) + 1];
    const auto& T = chain_.transitions[static_cast<std::size_t>(n)];
    auto& layer = layers_[static_cast<std::size_t>(n)];
    const auto& next_groups = layers_[static_cast<std::size_t>(n) + 1].cell_group;
    std::vector<std::vector<std::size_t>> members(layer.groups.size());
    for (std::size_t i = 0; i < grid.size(); ++i) members[layer.cell_group[i]].push_back(i);

    parallel_chunks(layer.groups.size(), threads_, [&](std::size_t gi) {
      Group& g = layer.groups[gi];
      const auto& cells = members[gi];
      double total = 0.0;
      for (auto i : cells) total += grid.weights[i];
      std::map<std::size_t, double> row;
      for (auto i : cells) {
        const double share = total > 0.0 ? grid.weights[i] / total
                                         : 1.0 / static_cast<double>(cells.size());
        const auto cols = T.row_cols(i);
        const auto probs = T.row_probs(i);
        for (std::size_t k = 0; k < cols.size(); ++k) row[cols[k]] += share * probs[k];
      }
      g.next.clear();
      for (const auto& [j, prob] : row) {
        if (prob > 0.0) g.next.push_back({next_grid.s[j], prob, next_groups[j]});
      }
      std::stable_sort(g.next.begin(), g.next.end(),
                       [](const Successor& a, const Successor& b) { return a.s < b.s; });

      g.grid = policy.grid(g.t_star, n);
      g.F_grid.resize(g.grid.points.size());
      for (std::size_t i = 0; i < g.grid.points.size(); ++i) {
        g.F_grid[i] = op_F(problem_, g.z, g.grid.points[i]);
      }
      g.F_tstar = op_F(problem_, g.z, g.t_star);
    });
  }
}

std::size_t QuantizedOperators::group_count(int layer) const {
  return layers_.at(static_cast<std::size_t>(layer)).groups.size();
}

const State& QuantizedOperators::group_point(int layer, std::size_t group) const {
  return layers_.at(static_cast<std::size_t>(layer)).groups.at(group).z;
}

const std::vector<std::size_t>& QuantizedOperators::cell_groups(int layer) const {
  return layers_.at(static_cast<std::size_t>(layer)).cell_group;
}

double QuantizedOperators::group_weight(int layer, std::size_t group) const {
  return layers_.at(static_cast<std::size_t>(layer)).groups.at(group).weight;
}

const TimeGrid& QuantizedOperators::time_grid(int layer, std::size_t group) const {
  return layers_.at(static_cast<std::size_t>(layer)).groups.at(group).grid;
}

double QuantizedOperators::exit_time(int layer, std::size_t group) const {
  return layers_.at(static_cast<std::size_t>(layer)).groups.at(group).t_star;
}

void QuantizedOperators::check_layer(int layer, std::span<const double> w_next) const {
  if (layer < 0 || layer >= horizon()) {
    throw ConfigError("no transition out of layer " + std::to_string(layer));
  }
  if (w_next.size() != group_count(layer + 1)) {
    throw ConfigError("value table size does not match layer " + std::to_string(layer + 1));
  }
}

double QuantizedOperators::jump_term(const Group& g, std::span<const double> w_next) const {
  const double alpha = problem_.alpha();
  double sum = 0.0;
  for (const auto& succ : g.next) sum += succ.prob * std::exp(-alpha * succ.s) * w_next[succ.group];
  return sum;
}

double QuantizedOperators::K(int layer, std::size_t group,
                             std::span<const double> w_next) const {
  check_layer(layer, w_next);
  const Group& g = layers_[static_cast<std::size_t>(layer)].groups.at(group);
  return g.F_tstar + jump_term(g, w_next);
}

double QuantizedOperators::J(int layer, std::size_t group, const ValueFunction& v,
                             std::span<const double> w_next, double t) const {
  check_layer(layer, w_next);
  const Group& g = layers_[static_cast<std::size_t>(layer)].groups.at(group);
  const auto& pts = g.grid.points;
  const auto it = std::lower_bound(pts.begin(), pts.end(), t);
  if (it == pts.end() || *it != t) {
    std::ostringstream msg;
    msg << "J^ evaluated at t=" << t << ", which is not a point of the time grid";
    throw DomainError(msg.str());
  }
  const double F = g.F_grid[static_cast<std::size_t>(it - pts.begin())];
  const double alpha = problem_.alpha();
  double jumped = 0.0;
  double survive = 0.0;
  for (const auto& succ : g.next) {
    if (succ.s < t) {
      jumped += succ.prob * std::exp(-alpha * succ.s) * w_next[succ.group];
    } else {
      survive += succ.prob;
    }
  }
  double stay = 0.0;
  if (survive > 0.0) stay = std::exp(-alpha * t) * v(problem_.model->flow(g.z, t)) * survive;
  return F + jumped + stay;
}

LdResult QuantizedOperators::L_d(int layer, std::size_t group, const ValueFunction& v,
                                 std::span<const double> w_next) const {
  check_layer(layer, w_next);
  const Group& g = layers_[static_cast<std::size_t>(layer)].groups.at(group);
  const double alpha = problem_.alpha();
  const std::size_t m = g.next.size();

  // Suffix sums of the successor masses: survive[j] = sum_{l >= j} prob_l.
  std::vector<double> survive(m + 1, 0.0);
  for (std::size_t j = m; j-- > 0;) survive[j] = survive[j + 1] + g.next[j].prob;

  LdResult out;
  out.j_min = std::numeric_limits<double>::infinity();
  double jumped = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < g.grid.points.size(); ++i) {
    const double t = g.grid.points[i];
    while (j < m && g.next[j].s < t) {
      jumped += g.next[j].prob * std::exp(-alpha * g.next[j].s) * w_next[g.next[j].group];
      ++j;
    }
    double stay = 0.0;
    if (survive[j] > 0.0) stay = std::exp(-alpha * t) * v(problem_.model->flow(g.z, t)) * survive[j];
    const double value = g.F_grid[i] + jumped + stay;
    if (value < out.j_min) {
      out.j_min = value;
      out.time = t;
    }
  }
  for (; j < m; ++j) {
    jumped += g.next[j].prob * std::exp(-alpha * g.next[j].s) * w_next[g.next[j].group];
  }
  out.k_value = g.F_tstar + jumped;
  out.intervene = out.j_min < out.k_value;
  out.value = out.intervene ? out.j_min : out.k_value;
  if (!out.intervene) out.time = g.t_star;
  return out;
}

std::vector<LdResult> QuantizedOperators::L_d_layer(int layer, const ValueFunction& v,
                                                    std::span<const double> w_next) const {
  check_layer(layer, w_next);
  std::vector<LdResult> out(group_count(layer));
  parallel_chunks(out.size(), threads_,
                  [&](std::size_t g) { out[g] = L_d(layer, g, v, w_next); });
  return out;
}

double QuantizedOperators::delta_norm(int layer) const {
  const auto& L = layers_.at(static_cast<std::size_t>(layer));
  const double p = chain_.p;
  double acc = 0.0;
  for (const auto& g : L.groups) {
    const double delta = g.grid.degenerate ? g.t_star : g.grid.delta;
    acc += g.weight * std::pow(delta, p);
  }
  return std::pow(acc, 1.0 / p);
}

double QuantizedOperators::min_delta(int layer) const {
  const auto& L = layers_.at(static_cast<std::size_t>(layer));
  double out = std::numeric_limits<double>::infinity();
  for (const auto& g : L.groups) out = std::min(out, g.grid.degenerate ? g.t_star : g.grid.delta);
  return out;
}

std::size_t QuantizedOperators::degenerate_count(int layer) const {
  const auto& L = layers_.at(static_cast<std::size_t>(layer));
  return static_cast<std::size_t>(std::count_if(
      L.groups.begin(), L.groups.end(), [](const Group& g) { return g.grid.degenerate; }));
}

}  // namespace pdmp
