#include "pdmp_impulse/brute_force.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pdmp::oracle {

namespace {

std::vector<double> step_grid(double t_star, double floor_value, int n_max) {
  double delta = floor_value * (1.0 + 1e-9);
  if (n_max > 0) delta = std::max(delta, t_star / n_max);
  if (delta >= t_star) return {0.0};
  long long n = static_cast<long long>(t_star / delta) - 1;
  while (n > 0 && static_cast<double>(n + 1) * delta > t_star) n = n - 1;
  std::vector<double> pts;
  for (long long i = 0; i <= n; ++i) pts.push_back(static_cast<double>(i) * delta);
  return pts;
}

double layer_floor(const std::vector<double>& floors, int n) {
  return n < static_cast<int>(floors.size()) ? floors[static_cast<std::size_t>(n)] : 0.0;
}

// Row of P(Zhat_{n+1} = cell j | Zhat_n = z) by averaging over the cells
// of layer n located at z.
std::vector<double> conditional_row(const ToyLayer& layer, double z) {
  const std::size_t width = layer.rows.front().size();
  std::vector<double> row(width, 0.0);
  double mass = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < layer.cells.size(); ++i) {
    if (layer.cells[i].z != z) continue;
    mass += layer.cells[i].weight;
    ++count;
  }
  for (std::size_t i = 0; i < layer.cells.size(); ++i) {
    if (layer.cells[i].z != z) continue;
    const double share = mass > 0.0 ? layer.cells[i].weight / mass : 1.0 / count;
    for (std::size_t j = 0; j < width; ++j) row[j] += share * layer.rows[i][j];
  }
  return row;
}

double best_restart(const ToyInstance& toy, const std::vector<double>& v_tilde, double x) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < toy.controls.size(); ++i) {
    best = std::min(best, toy.cost(x, toy.controls[i]) + v_tilde[i]);
  }
  return best;
}

// One application of min_t J ^ K at the point z of layer n, with w given
// per cell of layer n + 1.
double one_step(const ToyInstance& toy, const std::vector<ToyLayer>& chain, int n, double z,
                const std::vector<double>& w_next, const std::vector<double>& v_tilde,
                double floor_value) {
  const ToyLayer& here = chain[static_cast<std::size_t>(n)];
  const ToyLayer& next = chain[static_cast<std::size_t>(n) + 1];
  const std::vector<double> row = conditional_row(here, z);
  const double ts = toy.t_star(z);

  double k_value = toy.F(z, ts);
  for (std::size_t j = 0; j < next.cells.size(); ++j) {
    if (row[j] == 0.0) continue;
    k_value += row[j] * std::exp(-toy.alpha * next.cells[j].s) * w_next[j];
  }

  double j_min = std::numeric_limits<double>::infinity();
  for (double t : step_grid(ts, floor_value, toy.n_max)) {
    const double tau = std::min(t, ts);
    double value = toy.F(z, t);
    double stay_mass = 0.0;
    for (std::size_t j = 0; j < next.cells.size(); ++j) {
      if (row[j] == 0.0) continue;
      if (next.cells[j].s < tau) {
        value += row[j] * std::exp(-toy.alpha * next.cells[j].s) * w_next[j];
      } else {
        stay_mass += row[j];
      }
    }
    if (stay_mass > 0.0) {
      value += std::exp(-toy.alpha * tau) * best_restart(toy, v_tilde, toy.flow(z, tau)) *
               stay_mass;
    }
    j_min = std::min(j_min, value);
  }
  return std::min(j_min, k_value);
}

// Runs the recursion from layer `top` (initialized with g) down to layer 0
// on `chain`, using v_tilde[first + n] at step n.
std::vector<double> run_down(const ToyInstance& toy, const std::vector<ToyLayer>& chain,
                             const std::vector<double>& floors, int top, int first,
                             const std::vector<std::vector<double>>& v_tilde) {
  std::vector<double> w;
  for (const auto& cell : chain[static_cast<std::size_t>(top)].cells) w.push_back(toy.g(cell.z));
  for (int n = top; n >= 1; --n) {
    std::vector<double> below;
    for (const auto& cell : chain[static_cast<std::size_t>(n) - 1].cells) {
      below.push_back(one_step(toy, chain, n - 1, cell.z, w,
                               v_tilde[static_cast<std::size_t>(first + n)],
                               layer_floor(floors, n - 1)));
    }
    w = std::move(below);
  }
  return w;
}

void check_sizes(const std::vector<ToyLayer>& chain, int N, const char* what) {
  if (static_cast<int>(chain.size()) < N + 1) {
    throw std::invalid_argument(std::string(what) + " toy chain is shorter than the horizon");
  }
  for (const auto& layer : chain) {
    if (layer.cells.size() > static_cast<std::size_t>(kMaxToyCells)) {
      throw std::invalid_argument("brute force refuses more than 4 cells per layer");
    }
  }
}

}  // namespace

ToyResult brute_force_recursion(const ToyInstance& toy, int N) {
  if (N < 0 || N > kMaxToyHorizon) {
    throw std::invalid_argument("brute force refuses horizons above 3");
  }
  check_sizes(toy.main, N, "main");
  if (N >= 2) check_sizes(toy.control, N - 1, "control");

  ToyResult out;
  out.v_tilde.assign(static_cast<std::size_t>(N) + 1, {});
  for (double y : toy.controls) out.v_tilde[static_cast<std::size_t>(N)].push_back(toy.g(y));
  for (int k = N - 1; k >= 1; --k) {
    const auto layer0 = run_down(toy, toy.control, toy.control_floor, N - k, k, out.v_tilde);
    auto& vk = out.v_tilde[static_cast<std::size_t>(k)];
    for (double y : toy.controls) {
      for (std::size_t c = 0; c < toy.control[0].cells.size(); ++c) {
        if (toy.control[0].cells[c].z == y) {
          vk.push_back(layer0[c]);
          break;
        }
      }
    }
  }
  out.root = run_down(toy, toy.main, toy.main_floor, N, 0, out.v_tilde).front();
  return out;
}

}  // namespace pdmp::oracle
