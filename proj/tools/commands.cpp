#include "commands.hpp"

#include "pdmp_impulse/mc_oracle.hpp"
#include "pdmp_impulse/operators.hpp"
#include "pdmp_impulse/parallel.hpp"
#include "pdmp_impulse/toy.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace pdmp::cli {

namespace fs = std::filesystem;

std::string output_header(const RunConfig& config) {
  return "# config_hash=" + config.hash_hex() + " seed=" + std::to_string(config.seed) + "\n";
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::map<std::string, std::string> chain_meta(const RunConfig& config, const std::string& role) {
  return {{"config_hash", config.hash_hex()},
          {"seed", std::to_string(config.seed)},
          {"role", role}};
}

std::string control_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "control_%03zu.qc", i);
  return buf;
}

nlohmann::json stamped(const RunConfig& config, nlohmann::json j) {
  j["config_hash"] = config.hash_hex();
  j["seed"] = config.seed;
  return j;
}

std::string fmt_double(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_chains(const ChainSet& chains, const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  save_chain(chains.main, dir / "main.qc", chain_meta(config, "main"));
  if (chains.pooled()) {
    save_chain(chains.control.front(), dir / "control.qc", chain_meta(config, "control"));
  } else {
    for (std::size_t i = 0; i < chains.control.size(); ++i) {
      save_chain(chains.control[i], dir / control_file(i), chain_meta(config, "control"));
    }
  }
}

ChainSet read_chains(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("grid directory " + dir.string() + " not found");
  if (!fs::exists(dir / "main.qc")) throw ConfigError("no main.qc in " + dir.string());
  ChainSet out;
  out.main = load_chain(dir / "main.qc");
  if (fs::exists(dir / "control.qc")) {
    out.control.push_back(load_chain(dir / "control.qc"));
  } else {
    for (std::size_t i = 0; fs::exists(dir / control_file(i)); ++i) {
      out.control.push_back(load_chain(dir / control_file(i)));
    }
  }
  if (out.control.empty()) throw ConfigError("no control chain in " + dir.string());
  return out;
}

std::string distortion_csv(const ChainSet& chains, const RunConfig& config) {
  std::string out = output_header(config);
  out += "chain,layer,cells,distortion_z,distortion_s\n";
  auto rows = [&](const QuantizedChain& chain, const std::string& name) {
    for (std::size_t n = 0; n < chain.layers.size(); ++n) {
      out += name + "," + std::to_string(n) + "," + std::to_string(chain.layers[n].size()) + "," +
             fmt_double(chain.distortion_z[n]) + "," + fmt_double(chain.distortion_s[n]) + "\n";
    }
  };
  rows(chains.main, "main");
  for (std::size_t i = 0; i < chains.control.size(); ++i) {
    rows(chains.control[i], chains.pooled() ? "control" : "control_" + std::to_string(i));
  }
  return out;
}

SolveOptions solve_options(const RunConfig& config, int N) {
  SolveOptions o;
  o.N = N;
  o.budget_floor = config.budget_floor;
  o.n_max = config.n_max;
  o.include_k0 = config.include_k0;
  o.threads = resolve_threads(config.threads);
  return o;
}

const BenchmarkEntry& BenchmarkRun::at(int K, int N) const {
  for (const auto& e : entries) {
    if (e.K == K && e.N == N) return e;
  }
  throw ConfigError("no benchmark entry for K=" + std::to_string(K) + " N=" + std::to_string(N));
}

BenchmarkRun run_benchmark(const RunConfig& config, const std::vector<int>& layer_sizes,
                           const std::vector<int>& horizons, const fs::path& out_dir) {
  if (layer_sizes.empty() || horizons.empty()) throw ConfigError("benchmark needs K and N values");
  BenchmarkRun run;
  run.layer_sizes = layer_sizes;
  run.horizons = horizons;
  const int top = *std::max_element(horizons.begin(), horizons.end());
  const Problem problem = benchmark_problem(config.model);
  fs::create_directories(out_dir);

  auto emit = [&](const fs::path& rel, const std::string& text) {
    write_text(out_dir / rel, text);
    run.files.push_back(rel);
  };

  for (int K : layer_sizes) {
    RunConfig c = config;
    c.N = top;
    c.layer_sizes = {K};
    c.threads = resolve_threads(config.threads);
    const ChainSet chains = quantize_chains(problem, c);
    const fs::path grid_dir = "K" + std::to_string(K);
    write_chains(chains, c, out_dir / grid_dir);
    run.files.push_back(grid_dir / "main.qc");
    if (chains.pooled()) {
      run.files.push_back(grid_dir / "control.qc");
    } else {
      for (std::size_t i = 0; i < chains.control.size(); ++i) {
        run.files.push_back(grid_dir / control_file(i));
      }
    }
    emit(grid_dir / "distortions.csv", distortion_csv(chains, c));

    for (int N : horizons) {
      const SolveReport report = solve_pipeline(problem, chains, solve_options(c, N));
      BenchmarkEntry e;
      e.K = K;
      e.N = N;
      e.v0 = report.main.value;
      e.curve = value_curve(report);
      e.total = report.budget.total;
      e.floors_ok = report.budget.floors_ok;
      run.entries.push_back(e);
      const std::string tag = "N" + std::to_string(N) + "_K" + std::to_string(K);
      emit("curve_" + tag + ".csv", output_header(c) + value_curve_csv(problem, report));
      emit("report_" + tag + ".json", stamped(c, report_to_json(report)).dump(1) + "\n");
    }
  }

  nlohmann::json summary;
  for (int N : horizons) {
    std::vector<int> sizes;
    std::vector<double> totals;
    for (int K : layer_sizes) {
      const auto& e = run.at(K, N);
      sizes.push_back(K);
      totals.push_back(e.total);
      summary["entries"].push_back({{"N", N}, {"K", K}, {"v_hat_0", e.v0}, {"total", e.total},
                                    {"floors_ok", e.floors_ok}});
    }
    emit("budget_N" + std::to_string(N) + ".csv", output_header(config) + budget_csv(sizes, totals));
  }
  emit("summary.json", stamped(config, summary).dump(1) + "\n");
  return run;
}

std::vector<ValidationCheck> run_validation(const RunConfig& config,
                                            const ValidationOptions& options) {
  std::vector<ValidationCheck> checks;

  {
    ValidationCheck c;
    c.name = "oracle_equivalence";
    double worst = 0.0;
    int failures = 0;
    for (int i = 0; i < options.toy_cases; ++i) {
      const ToyCase toy = random_toy_case(config.seed * 1000003ull + static_cast<std::uint64_t>(i));
      const ToyValues a = solve_toy(toy);
      const auto b = oracle::brute_force_recursion(toy_instance(toy), toy.N);
      double rel = std::abs(a.root - b.root) / std::max(std::abs(b.root), 1e-300);
      for (int k = 1; k < toy.N; ++k) {
        const auto& x = a.v_tilde[static_cast<std::size_t>(k)];
        const auto& y = b.v_tilde[static_cast<std::size_t>(k)];
        for (std::size_t j = 0; j < y.size(); ++j) {
          rel = std::max(rel, std::abs(x[j] - y[j]) / std::max(std::abs(y[j]), 1e-300));
        }
      }
      worst = std::max(worst, rel);
      if (!(rel <= 1e-12)) ++failures;
    }
    c.pass = failures == 0;
    c.detail = {{"cases", options.toy_cases}, {"failures", failures},
                {"max_relative_difference", worst}, {"tolerance", 1e-12}};
    checks.push_back(c);
  }

  {
    ValidationCheck c;
    c.name = "survival_identity";
    const Problem problem = benchmark_problem(config.model);
    Rng rng = make_rng(config.seed, 0x5a1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const ValueFunction one = [](const State&) { return 1.0; };
    double worst = 0.0;
    for (int i = 0; i < options.identity_states; ++i) {
      const State x = scalar_state(0.999 * unit(rng));
      const double t = problem.model->exit_time(x) * unit(rng);
      const double sum = op_H(problem, one, x, t) + op_I(problem, one, x, t) +
                         problem.alpha() * survival_integral(problem, x, t);
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    c.pass = worst <= 1e-7;
    c.detail = {{"states", options.identity_states}, {"max_error", worst}, {"tolerance", 1e-7}};
    checks.push_back(c);
  }

  if (!options.toy_only) {
    ValidationCheck c;
    c.name = "mc_consistency";
    const Problem problem = benchmark_problem(config.model);
    const ChainSet chains =
        options.grids ? read_chains(*options.grids) : quantize_chains(problem, config);
    const SolveReport report = solve_pipeline(problem, chains, solve_options(config, config.N));
    const int threads = resolve_threads(config.threads);
    const McEstimate h = mc_no_impulse_cost(problem, problem.x0, config.mc_sims,
                                            config.mc_horizon, config.seed + 7, threads);
    const McEstimate d = mc_discount_at_jump(*problem.model, problem.alpha(), problem.x0,
                                             config.N, config.mc_sims, config.seed + 8, threads);
    const double C_g = problem.g_constants().bound;
    const double bound = h.estimate + 3.0 * h.std_error + h.truncation_bound + C_g * d.estimate + 0.02;
    const double v0 = report.main.value;
    c.pass = v0 >= 0.0 && v0 <= 0.5 && v0 <= bound;
    c.detail = {{"v_hat_0", v0},
                {"no_impulse_cost", estimate_to_json(h)},
                {"discount_at_jump", estimate_to_json(d)},
                {"C_g", C_g},
                {"bound", bound}};
    checks.push_back(c);
  }
  return checks;
}

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::vector<int> layer_sizes;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "base seed (overrides the config)");
  cmd->add_option("--threads", c.threads, "worker threads (default: PDMP_IMPULSE_THREADS or 1)");
}

RunConfig load(const Common& c) {
  RunConfig config = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed) config.seed = *c.seed;
  if (c.threads > 0) config.threads = c.threads;
  if (!c.layer_sizes.empty()) config.layer_sizes = c.layer_sizes;
  return config;
}

void emit_to(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("bad integer list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Impulse control of piecewise deterministic Markov processes by quantization",
               "pdmp-impulse"};
  app.require_subcommand(1);

  Common common;
  std::string out_path;
  std::string grids;
  std::vector<std::string> grid_list;
  int n_jumps = 10;
  double dt = 0.01;
  bool toy_only = false;
  std::string horizons = "5,10,15";

  auto* quantize = app.add_subcommand("quantize", "train and store the main and control chains");
  add_common(quantize, common);
  quantize->add_option("--layer-size", common.layer_sizes, "cells per layer (repeatable)");
  quantize->add_option("--out", out_path, "output directory")->required();

  auto* solve = app.add_subcommand("solve", "solve both recursions on stored chains");
  add_common(solve, common);
  solve->add_option("--grids", grids, "directory written by quantize")->required();
  solve->add_option("--out", out_path, "output directory")->required();

  auto* budget = app.add_subcommand("budget", "error budget table over several grid sets");
  add_common(budget, common);
  budget->add_option("--grids", grid_list, "directory written by quantize (repeatable)")
      ->required();
  budget->add_option("--out", out_path, "CSV file (default: stdout)");

  auto* validate = app.add_subcommand("validate", "oracle, identity and Monte Carlo checks");
  add_common(validate, common);
  validate->add_option("--grids", grids, "use stored chains for the Monte Carlo check");
  validate->add_flag("--toy-only", toy_only, "skip the Monte Carlo check");
  validate->add_option("--out", out_path, "JSON file (default: stdout)");

  auto* simulate = app.add_subcommand("simulate", "one trajectory of the process as CSV");
  add_common(simulate, common);
  simulate->add_option("--n-jumps", n_jumps, "number of jumps")->check(CLI::NonNegativeNumber);
  simulate->add_option("--dt", dt, "sampling step along the flow")->check(CLI::PositiveNumber);
  simulate->add_option("--out", out_path, "CSV file (default: stdout)");

  auto* bench = app.add_subcommand("benchmark", "grids, curves and budgets over K and N");
  add_common(bench, common);
  bench->add_option("--layer-size", common.layer_sizes, "K values (repeatable, default 50 100 500)");
  bench->add_option("--horizons", horizons, "comma separated N values");
  bench->add_option("--out", out_path, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*quantize) {
      const RunConfig config = load(common);
      const Problem problem = benchmark_problem(config.model);
      RunConfig run_config = config;
      run_config.threads = resolve_threads(config.threads);
      const ChainSet chains = quantize_chains(problem, run_config);
      write_chains(chains, config, out_path);
      const std::string table = distortion_csv(chains, config);
      write_text(fs::path(out_path) / "distortions.csv", table);
      out << table;
      for (const auto& w : chains.main.warnings) err << "warning: main chain: " << w << "\n";
      for (const auto& ch : chains.control) {
        for (const auto& w : ch.warnings) err << "warning: control chain: " << w << "\n";
      }
    } else if (*solve) {
      const RunConfig config = load(common);
      const Problem problem = benchmark_problem(config.model);
      const ChainSet chains = read_chains(grids);
      const SolveReport report = solve_pipeline(problem, chains, solve_options(config, config.N));
      write_text(fs::path(out_path) / "solve.json",
                 stamped(config, report_to_json(report)).dump(1) + "\n");
      write_text(fs::path(out_path) / "value_curve.csv",
                 output_header(config) + value_curve_csv(problem, report));
      out << output_header(config) << "v_hat_0=" << fmt_double(report.main.value)
          << " total_bound=" << fmt_double(report.budget.total) << "\n";
      for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    } else if (*budget) {
      const RunConfig config = load(common);
      const Problem problem = benchmark_problem(config.model);
      std::vector<int> sizes;
      std::vector<double> totals;
      for (const auto& dir : grid_list) {
        const ChainSet chains = read_chains(dir);
        const SolveReport report = solve_pipeline(problem, chains, solve_options(config, config.N));
        std::size_t largest = 0;
        for (const auto& layer : chains.main.layers) largest = std::max(largest, layer.size());
        sizes.push_back(static_cast<int>(largest));
        totals.push_back(report.budget.total);
      }
      emit_to(out_path, output_header(config) + budget_csv(sizes, totals), out);
    } else if (*validate) {
      const RunConfig config = load(common);
      ValidationOptions options;
      options.toy_only = toy_only;
      if (!grids.empty()) options.grids = grids;
      const auto checks = run_validation(config, options);
      bool all = true;
      nlohmann::json j;
      for (const auto& c : checks) {
        all = all && c.pass;
        j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
      }
      j["pass"] = all;
      emit_to(out_path, stamped(config, j).dump(1) + "\n", out);
      return all ? kExitOk : kExitValidation;
    } else if (*simulate) {
      const RunConfig config = load(common);
      const Problem problem = benchmark_problem(config.model);
      Rng rng = make_rng(config.seed, 0x51);
      const auto path = simulate_trajectory(*problem.model, problem.x0, n_jumps, dt, rng);
      std::string csv = output_header(config) + "t,x,jump\n";
      for (const auto& p : path) {
        csv += fmt_double(p.t) + "," + fmt_double(p.x(0)) + "," + std::to_string(p.jump) + "\n";
      }
      emit_to(out_path, csv, out);
    } else if (*bench) {
      RunConfig config = load(Common{common.config_path, common.seed, common.threads, {}});
      const std::vector<int> ks =
          common.layer_sizes.empty() ? std::vector<int>{50, 100, 500} : common.layer_sizes;
      const auto run = run_benchmark(config, ks, parse_int_list(horizons), out_path);
      out << output_header(config) << "N,K,v_hat_0,total_bound\n";
      for (const auto& e : run.entries) {
        out << e.N << "," << e.K << "," << fmt_double(e.v0) << "," << fmt_double(e.total) << "\n";
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CorruptFileError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace pdmp::cli
