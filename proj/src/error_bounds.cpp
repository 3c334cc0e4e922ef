#include "pdmp_impulse/error_bounds.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdmp {

BaseConstants base_constants(const ConstantsLedger& c) {
  BaseConstants e;
  e.E1 = c.C_tstar * c.L_lambda_1 + (c.C_lambda + c.alpha) * c.L_tstar;
  e.E2 = c.C_lambda * c.L_tstar + c.L_lambda_1 * (1.0 + c.C_lambda * c.C_tstar) / c.alpha;
  e.E3 = c.L_f_1 / c.alpha + c.C_f * (c.C_tstar * c.L_lambda_1 / c.alpha + c.L_tstar);
  return e;
}

LipschitzEntry lipschitz_of(const TerminalConstants& g) {
  LipschitzEntry e;
  e.L1 = g.L_1;
  e.L2 = g.L_2;
  e.Lstar = g.L_star;
  e.L = g.L_global;
  e.C = g.bound;
  return e;
}

namespace {

double saturate(double x, bool& flag) {
  if (std::isfinite(x)) return x;
  flag = true;
  return std::numeric_limits<double>::infinity();
}

}  // namespace

LipschitzEntry lipschitz_step(const ConstantsLedger& c, const LipschitzEntry& w) {
  const auto e = base_constants(c);
  const double growth = std::exp((c.alpha + c.C_lambda) * c.C_tstar);
  const double cost_term = c.L_c_1 + c.L_c_2 * c.L_tstar + c.C_c * e.E1;
  const double boundary = std::max(cost_term, c.L_Q * w.Lstar);

  LipschitzEntry out;
  out.saturated = w.saturated;
  out.L1 = growth * (c.L_lambda_1 * c.C_tstar * (c.C_c + c.C_f / c.alpha) + boundary +
                     2.0 * e.E3 + 2.0 * c.L_Q * c.C_lambda / c.alpha * w.L1 +
                     (e.E1 + 2.0 * e.E2 + c.L_lambda_1 * c.C_tstar * (1.0 + c.C_lambda / c.alpha)) *
                         w.C);
  out.L2 = growth * (3.0 * c.C_f + c.L_c_2 + 2.0 * c.C_c * (c.C_lambda + c.alpha) +
                     c.C_f * c.C_lambda / c.alpha +
                     w.C * (4.0 * c.C_lambda + c.C_lambda * c.C_lambda / c.alpha + c.alpha));
  out.Lstar = out.L1 + out.L2 * c.L_tstar;
  out.L = (e.E1 + e.E2) * w.C + c.L_Q * c.C_lambda / c.alpha * w.L1 + e.E3 + boundary;
  out.C = std::max(c.C_f / c.alpha, w.C);
  out.L1 = saturate(out.L1, out.saturated);
  out.L2 = saturate(out.L2, out.saturated);
  out.Lstar = saturate(out.Lstar, out.saturated);
  out.L = saturate(out.L, out.saturated);
  return out;
}

std::vector<LipschitzEntry> lipschitz_iterate(const ConstantsLedger& ledger,
                                              const TerminalConstants& g, int N) {
  if (N < 0) throw ConfigError("lipschitz_iterate: N must be nonnegative");
  std::vector<LipschitzEntry> out(static_cast<std::size_t>(N) + 1);
  out[static_cast<std::size_t>(N)] = lipschitz_of(g);
  for (int n = N - 1; n >= 0; --n) {
    out[static_cast<std::size_t>(n)] = lipschitz_step(ledger, out[static_cast<std::size_t>(n) + 1]);
  }
  return out;
}

namespace {

// d3 = D3, d5 = D5 and d2 = D2 share their formulas.
void common_constants(const ConstantsLedger& c, const LipschitzEntry& v_next, ErrorConstants& d) {
  const double scale = 2.0 * c.C_f / c.alpha + c.C_c;
  d.c2 = c.C_f + v_next.C * c.C_lambda + c.L_c_2 + (c.C_c + v_next.C) * (c.C_lambda + c.alpha);
  d.c3 = scale * c.C_lambda;
  d.c5 = 2.0 * scale;
}

}  // namespace

ErrorConstants control_constants(const ConstantsLedger& c, const LipschitzEntry& v_cur,
                                 const LipschitzEntry& v_next) {
  const auto e = base_constants(c);
  ErrorConstants d;
  d.c1 = std::max(c.L_Q * v_next.Lstar + 2.0 * e.E3,
                  c.C_c * (e.E1 + c.alpha * c.L_tstar) + 2.0 * (c.L_c_1 + c.L_c_2 * c.L_tstar)) +
         v_cur.L + c.L_Q * v_next.L1 * c.C_lambda / c.alpha + c.C_f / c.alpha * (e.E1 + e.E2);
  common_constants(c, v_next, d);
  d.c4 = c.C_f / c.alpha * (1.0 + c.L_tstar) + c.C_c * c.L_tstar;
  return d;
}

ErrorConstants main_constants(const ConstantsLedger& c, const LipschitzEntry& v_cur,
                              const LipschitzEntry& v_next) {
  const auto e = base_constants(c);
  ErrorConstants d;
  d.c1 = v_cur.L + c.L_Q * v_next.L1 * c.C_lambda / c.alpha + c.C_f / c.alpha * (e.E1 + e.E2) +
         std::max(c.L_Q * v_next.Lstar + 2.0 * e.E3,
                  2.0 * (c.L_c_1 + c.L_c_2 * c.L_tstar) + c.C_c * e.E1 +
                      c.alpha * c.L_tstar * (c.C_f / c.alpha + c.C_c));
  common_constants(c, v_next, d);
  d.c4 = 2.0 * c.L_tstar * (2.0 * c.C_f / c.alpha + c.C_c);
  return d;
}

double layer_bound_control(const ConstantsLedger& c, const ErrorConstants& d,
                           const LipschitzEntry& v_next, const LayerInputs& in,
                           double prev_value_error, double prev_control_error) {
  return prev_value_error + prev_control_error + d.c1 * in.a_n + 2.0 * v_next.L * in.a_next +
         c.C_f * in.b_next + d.c2 * in.delta_bar +
         2.0 * std::sqrt(d.c3 * (d.c4 * in.a_n + d.c5 * in.b_next));
}

double layer_bound_main(const ConstantsLedger& c, const ErrorConstants& D,
                        const LipschitzEntry& v_next, const LayerInputs& in,
                        double prev_value_error, double control_error_next) {
  return prev_value_error + control_error_next + D.c1 * in.a_n + 3.0 * v_next.L * in.a_next +
         2.0 * c.C_f * in.b_next + D.c2 * in.delta_bar +
         2.0 * std::sqrt(D.c3 * (D.c4 * in.a_n + D.c5 * in.b_next));
}

double delta_floor(const ErrorConstants& c, double a_n, double b_next) {
  if (!(c.c3 > 0.0)) return 0.0;
  return std::sqrt((c.c4 * a_n + c.c5 * b_next) / c.c3);
}

namespace {

void check_chain_inputs(const ChainBudgetInputs& in, int N, const char* what) {
  const auto layers = static_cast<std::size_t>(N) + 1;
  if (in.a.size() < layers || in.b.size() < layers ||
      in.delta_bar.size() < static_cast<std::size_t>(N) ||
      in.min_delta.size() < static_cast<std::size_t>(N)) {
    throw ConfigError(std::string("budget inputs for the ") + what + " chain are incomplete");
  }
}

LayerInputs layer_inputs(const ChainBudgetInputs& in, int n) {
  const auto i = static_cast<std::size_t>(n);
  return {in.a[i], in.a[i + 1], in.b[i + 1], in.delta_bar[i]};
}

}  // namespace

ErrorBudget iterate_budget(const BudgetInputs& in) {
  const int N = in.N;
  if (N < 0) throw ConfigError("iterate_budget: N must be nonnegative");
  check_chain_inputs(in.main, N, "main");
  if (N >= 2 && in.control.empty()) throw ConfigError("iterate_budget: no control chain inputs");
  for (const auto& ch : in.control) check_chain_inputs(ch, N - 1 > 0 ? N - 1 : 0, "control");

  const auto& c = in.ledger;
  ErrorBudget out;
  out.base = base_constants(c);
  out.lipschitz = lipschitz_iterate(c, in.g, N);
  for (const auto& e : out.lipschitz) out.saturated = out.saturated || e.saturated;
  const auto lip = [&](int n) -> const LipschitzEntry& {
    return out.lipschitz[static_cast<std::size_t>(n)];
  };

  // Control triangle.
  out.control_error.assign(static_cast<std::size_t>(N) + 1, 0.0);
  for (int k = N - 1; k >= 1; --k) {
    double worst = 0.0;
    for (std::size_t chain = 0; chain < in.control.size(); ++chain) {
      const auto& ch = in.control[chain];
      double err = in.g.L_global * ch.a[static_cast<std::size_t>(N - k)];
      for (int n = N - k - 1; n >= 0; --n) {
        const auto d = control_constants(c, lip(k + n), lip(k + n + 1));
        const auto li = layer_inputs(ch, n);
        err = layer_bound_control(c, d, lip(k + n + 1), li, err,
                                  out.control_error[static_cast<std::size_t>(k + n + 1)]);
        BudgetCell cell;
        cell.k = k;
        cell.n = n;
        cell.constants = d;
        cell.floor = delta_floor(d, li.a_n, li.b_next);
        cell.min_delta = ch.min_delta[static_cast<std::size_t>(n)];
        cell.floor_ok = cell.floor < cell.min_delta;
        cell.bound = err;
        out.floors_ok = out.floors_ok && cell.floor_ok;
        if (chain == 0) out.control_cells.push_back(cell);
      }
      worst = std::max(worst, err);
    }
    out.control_error[static_cast<std::size_t>(k)] = in.control_factor * worst;
  }

  // Main recursion.
  out.main_error.assign(static_cast<std::size_t>(N) + 1, 0.0);
  out.main_error[static_cast<std::size_t>(N)] =
      in.g.L_global * in.main.a[static_cast<std::size_t>(N)];
  for (int n = N - 1; n >= 0; --n) {
    const auto D = main_constants(c, lip(n), lip(n + 1));
    const auto li = layer_inputs(in.main, n);
    const double err = layer_bound_main(c, D, lip(n + 1), li,
                                        out.main_error[static_cast<std::size_t>(n) + 1],
                                        out.control_error[static_cast<std::size_t>(n) + 1]);
    out.main_error[static_cast<std::size_t>(n)] = err;
    BudgetCell cell;
    cell.n = n;
    cell.constants = D;
    cell.floor = delta_floor(D, li.a_n, li.b_next);
    cell.min_delta = in.main.min_delta[static_cast<std::size_t>(n)];
    cell.floor_ok = cell.floor < cell.min_delta;
    cell.bound = err;
    out.floors_ok = out.floors_ok && cell.floor_ok;
    out.main_cells.push_back(cell);
  }
  out.total = out.main_error[0];
  if (!std::isfinite(out.total)) out.saturated = true;
  return out;
}

namespace {

nlohmann::json cell_json(const BudgetCell& cell) {
  return {{"k", cell.k},
          {"n", cell.n},
          {"c1", cell.constants.c1},
          {"c2", cell.constants.c2},
          {"c3", cell.constants.c3},
          {"c4", cell.constants.c4},
          {"c5", cell.constants.c5},
          {"delta_floor", cell.floor},
          {"min_delta", cell.min_delta},
          {"floor_ok", cell.floor_ok},
          {"bound", cell.bound}};
}

}  // namespace

nlohmann::json budget_to_json(const ErrorBudget& b) {
  nlohmann::json j;
  j["E1"] = b.base.E1;
  j["E2"] = b.base.E2;
  j["E3"] = b.base.E3;
  auto lip = nlohmann::json::array();
  for (std::size_t n = 0; n < b.lipschitz.size(); ++n) {
    const auto& e = b.lipschitz[n];
    lip.push_back({{"n", n},
                   {"L1", e.L1},
                   {"L2", e.L2},
                   {"Lstar", e.Lstar},
                   {"L", e.L},
                   {"C", e.C},
                   {"saturated", e.saturated}});
  }
  j["lipschitz"] = lip;
  auto control = nlohmann::json::array();
  for (const auto& cell : b.control_cells) control.push_back(cell_json(cell));
  j["control_cells"] = control;
  j["control_error"] = b.control_error;
  auto main = nlohmann::json::array();
  for (const auto& cell : b.main_cells) main.push_back(cell_json(cell));
  j["main_cells"] = main;
  j["main_error"] = b.main_error;
  j["total"] = b.total;
  j["floors_ok"] = b.floors_ok;
  j["saturated"] = b.saturated;
  return j;
}

}  // namespace pdmp
