#include "pdmp_impulse/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>

namespace pdmp {

bool ChainSet::pooled() const {
  return control.size() == 1 && control.front().start.kind == StartSpec::Kind::UniformOverControls;
}

QuantizerOptions quantizer_options(const RunConfig& config, std::uint64_t seed) {
  QuantizerOptions o;
  o.layer_sizes = config.layer_sizes;
  o.train_paths = config.train_paths;
  o.estimation_paths = config.estimation_paths;
  o.pilot_paths = config.pilot_paths;
  o.p = config.p;
  o.seed = seed;
  o.threads = config.threads;
  return o;
}

ChainSet quantize_chains(const Problem& problem, const RunConfig& config) {
  ChainSet out;
  const auto& controls = problem.cost->control_set;
  out.main = train_clvq(make_chain_sampler(problem.model, StartSpec::fixed(problem.x0), config.N),
                        quantizer_options(config, config.seed));
  if (config.control_start == "pooled") {
    out.control.push_back(
        train_clvq(make_chain_sampler(problem.model, StartSpec::uniform_over(controls), config.N),
                   quantizer_options(config, config.seed + 1)));
  } else {
    for (std::size_t i = 0; i < controls.size(); ++i) {
      out.control.push_back(
          train_clvq(make_chain_sampler(problem.model, StartSpec::fixed(controls[i]), config.N),
                     quantizer_options(config, config.seed + 1 + i)));
    }
  }
  return out;
}

std::vector<double> delta_floors(const ConstantsLedger& ledger, const QuantizedChain& chain,
                                 bool main_recursion) {
  // c3, c4 and c5 do not depend on the value functions.
  const LipschitzEntry none;
  const auto c = main_recursion ? main_constants(ledger, none, none)
                                : control_constants(ledger, none, none);
  std::vector<double> floors;
  for (int n = 0; n < chain.horizon(); ++n) {
    floors.push_back(delta_floor(c, chain.distortion_z[static_cast<std::size_t>(n)],
                                 chain.distortion_s[static_cast<std::size_t>(n) + 1]));
  }
  return floors;
}

namespace {

QuantizedChain fit_horizon(const QuantizedChain& chain, int N, const char* what) {
  if (chain.horizon() < N) {
    throw ConfigError(std::string(what) + " chain has horizon " + std::to_string(chain.horizon()) +
                      ", below N=" + std::to_string(N));
  }
  return chain.horizon() == N ? chain : chain.truncated(N);
}

ChainBudgetInputs budget_inputs(const QuantizedOperators& ops) {
  ChainBudgetInputs in;
  const auto& chain = ops.chain();
  in.a = chain.distortion_z;
  in.b = chain.distortion_s;
  for (int n = 0; n < ops.horizon(); ++n) {
    in.delta_bar.push_back(ops.delta_norm(n));
    in.min_delta.push_back(ops.min_delta(n));
  }
  return in;
}

void note_degenerate(const QuantizedOperators& ops, const char* what,
                     std::vector<std::string>& warnings) {
  for (int n = 0; n < ops.horizon(); ++n) {
    if (const auto d = ops.degenerate_count(n)) {
      warnings.push_back(std::string(what) + " layer " + std::to_string(n) + ": " +
                         std::to_string(d) + " cells use the {0} time grid (t* below the step)");
    }
  }
}

}  // namespace

SolveReport solve_pipeline(const Problem& problem, const ChainSet& chains,
                           const SolveOptions& options) {
  const int N = options.N;
  if (N < 0) throw ConfigError("N must be nonnegative");
  if (chains.control.empty()) throw ConfigError("no control chain");
  SolveReport report;
  report.N = N;

  const QuantizedChain main_chain = fit_horizon(chains.main, N, "main");
  report.main_policy.n_max = options.n_max;
  if (options.budget_floor) report.main_policy.floors = delta_floors(problem.constants, main_chain, true);
  const QuantizedOperators main_ops(problem, main_chain, report.main_policy, options.threads);

  std::vector<QuantizedOperators> control_ops;
  for (const auto& chain : chains.control) {
    const QuantizedChain fitted = fit_horizon(chain, N, "control");
    DeltaPolicy policy;
    policy.n_max = options.n_max;
    if (options.budget_floor) policy.floors = delta_floors(problem.constants, fitted, false);
    report.control_policies.push_back(policy);
    control_ops.emplace_back(problem, fitted, policy, options.threads);
  }

  const bool pooled = chains.pooled();
  report.control = pooled ? solve_control_values(control_ops.front(), N, options.include_k0)
                          : solve_control_values(control_ops, N, options.include_k0);
  report.main = solve_main(main_ops, report.control, N);

  BudgetInputs in;
  in.ledger = problem.constants;
  in.g = problem.g_constants();
  in.N = N;
  in.p = main_chain.p;
  in.main = budget_inputs(main_ops);
  for (const auto& ops : control_ops) in.control.push_back(budget_inputs(ops));
  in.control_factor =
      pooled ? std::pow(static_cast<double>(problem.control_count()), 1.0 / main_chain.p) : 1.0;
  report.budget = iterate_budget(in);

  for (std::size_t n = 0; n < main_chain.layers.size(); ++n) {
    report.layer_sizes.push_back(main_chain.layers[n].size());
  }
  for (const auto& w : main_chain.warnings) report.warnings.push_back("main chain: " + w);
  for (const auto& chain : chains.control) {
    for (const auto& w : chain.warnings) report.warnings.push_back("control chain: " + w);
  }
  note_degenerate(main_ops, "main", report.warnings);
  for (const auto& ops : control_ops) note_degenerate(ops, "control", report.warnings);
  if (!report.budget.floors_ok) {
    report.warnings.push_back("time step below the error-bound floor on some layer");
  }
  if (report.budget.saturated) report.warnings.push_back("error budget overflowed");
  return report;
}

const std::vector<double>& value_curve(const SolveReport& report) {
  return report.control.at(report.N == 0 ? 0 : 1);
}

namespace {

nlohmann::json state_json(const State& x) {
  if (x.size() == 1) return x(0);
  auto arr = nlohmann::json::array();
  for (Eigen::Index k = 0; k < x.size(); ++k) arr.push_back(x(k));
  return arr;
}

}  // namespace

nlohmann::json report_to_json(const SolveReport& r) {
  nlohmann::json j;
  j["N"] = r.N;
  j["layer_sizes"] = r.layer_sizes;
  j["v_hat_0"] = r.main.value;
  auto v_tilde = nlohmann::json::object();
  for (int k = 0; k <= r.N; ++k) {
    const auto& row = r.control.by_k[static_cast<std::size_t>(k)];
    if (!row.empty()) v_tilde[std::to_string(k)] = row;
  }
  j["v_tilde"] = v_tilde;
  auto tables = nlohmann::json::array();
  for (const auto& t : r.main.tables) {
    nlohmann::json tj;
    tj["layer"] = t.layer;
    auto pts = nlohmann::json::array();
    for (const auto& z : t.points) pts.push_back(state_json(z));
    tj["points"] = pts;
    tj["values"] = t.values;
    if (!t.actions.empty()) {
      auto acts = nlohmann::json::array();
      for (std::size_t g = 0; g < t.actions.size(); ++g) {
        const auto& a = t.actions[g];
        acts.push_back({{"intervene", a.intervene},
                        {"time", a.time},
                        {"restart", t.restart[g]},
                        {"j_min", a.j_min},
                        {"k", a.k_value}});
      }
      tj["actions"] = acts;
    }
    tables.push_back(tj);
  }
  j["tables"] = tables;
  j["main_delta_floors"] = r.main_policy.floors;
  auto cf = nlohmann::json::array();
  for (const auto& p : r.control_policies) cf.push_back(p.floors);
  j["control_delta_floors"] = cf;
  j["n_max"] = r.main_policy.n_max;
  j["budget"] = budget_to_json(r.budget);
  j["warnings"] = r.warnings;
  return j;
}

std::string value_curve_csv(const Problem& problem, const SolveReport& report) {
  const auto& curve = value_curve(report);
  const auto& controls = problem.cost->control_set;
  std::string out = "y,v_tilde_1\n";
  char buf[96];
  for (std::size_t i = 0; i < controls.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", controls[i](0), curve[i]);
    out += buf;
  }
  return out;
}

std::string budget_csv(const std::vector<int>& grid_sizes, const std::vector<double>& totals) {
  std::string out = "grid_points,total_bound\n";
  char buf[96];
  for (std::size_t i = 0; i < grid_sizes.size() && i < totals.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", grid_sizes[i], totals[i]);
    out += buf;
  }
  return out;
}

}  // namespace pdmp
