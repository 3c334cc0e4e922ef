#include "pdmp_impulse/brute_force.hpp"
#include "pdmp_impulse/config.hpp"
#include "pdmp_impulse/mc_oracle.hpp"
#include "pdmp_impulse/operators.hpp"
#include "pdmp_impulse/pipeline.hpp"
#include "pdmp_impulse/toy.hpp"

#include <nlohmann/json.hpp>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pdmp;

namespace {

// Scalar callables from Python; the GIL is held throughout since the
// operators run on the calling thread.
ValueFunction wrap(const std::function<double(double)>& f) {
  return [f](const State& x) { return f(x(0)); };
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

RunConfig config_from(const py::dict& settings) {
  RunConfig c;
  for (const auto& [k, v] : settings) {
    apply_setting(c, py::str(k), py::str(v));
  }
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Impulse control of piecewise deterministic Markov processes by quantization";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<CorruptFileError>(m, "CorruptFileError", PyExc_IOError);

  py::class_<BenchmarkParams>(m, "BenchmarkParams")
      .def(py::init<>())
      .def_readwrite("v", &BenchmarkParams::v)
      .def_readwrite("beta", &BenchmarkParams::beta)
      .def_readwrite("c0", &BenchmarkParams::c0)
      .def_readwrite("alpha", &BenchmarkParams::alpha)
      .def_readwrite("u", &BenchmarkParams::u)
      .def_readwrite("x0", &BenchmarkParams::x0);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def(py::init(&config_from), py::arg("settings"))
      .def_readwrite("model", &RunConfig::model)
      .def_readwrite("N", &RunConfig::N)
      .def_readwrite("layer_sizes", &RunConfig::layer_sizes)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("train_paths", &RunConfig::train_paths)
      .def_readwrite("estimation_paths", &RunConfig::estimation_paths)
      .def_readwrite("pilot_paths", &RunConfig::pilot_paths)
      .def_readwrite("n_max", &RunConfig::n_max)
      .def_readwrite("budget_floor", &RunConfig::budget_floor)
      .def_readwrite("control_start", &RunConfig::control_start)
      .def_readwrite("threads", &RunConfig::threads)
      .def_readwrite("mc_sims", &RunConfig::mc_sims)
      .def("canonical", &RunConfig::canonical)
      .def("hash_hex", &RunConfig::hash_hex);
  m.def("load_config", [](const std::filesystem::path& p) { return load_config(p); });

  py::class_<QuantizedChain>(m, "QuantizedChain")
      .def_property_readonly("horizon", &QuantizedChain::horizon)
      .def_property_readonly("layer_sizes",
                             [](const QuantizedChain& c) {
                               std::vector<std::size_t> out;
                               for (const auto& l : c.layers) out.push_back(l.size());
                               return out;
                             })
      .def_readonly("distortion_z", &QuantizedChain::distortion_z)
      .def_readonly("distortion_s", &QuantizedChain::distortion_s)
      .def("layer",
           [](const QuantizedChain& c, int n) {
             const auto& l = c.layers.at(static_cast<std::size_t>(n));
             std::vector<double> z;
             for (const auto& x : l.z) z.push_back(x(0));
             return py::dict(py::arg("z") = z, py::arg("s") = l.s, py::arg("weights") = l.weights);
           })
      .def("save", [](const QuantizedChain& c, const std::filesystem::path& p) { save_chain(c, p); })
      .def("__eq__", &QuantizedChain::operator==);
  m.def("load_chain", [](const std::filesystem::path& p) { return load_chain(p); });

  py::class_<ChainSet>(m, "ChainSet")
      .def_readonly("main", &ChainSet::main)
      .def_readonly("control", &ChainSet::control)
      .def("pooled", &ChainSet::pooled);

  m.def(
      "quantize",
      [](const RunConfig& config) {
        py::gil_scoped_release release;
        return quantize_chains(benchmark_problem(config.model), config);
      },
      py::arg("config"), "Trains the main and control chains of the benchmark.");

  m.def(
      "solve",
      [](const RunConfig& config, const ChainSet& chains, std::optional<int> N) {
        SolveOptions o;
        o.N = N.value_or(config.N);
        o.budget_floor = config.budget_floor;
        o.n_max = config.n_max;
        o.include_k0 = config.include_k0;
        o.threads = config.threads;
        SolveReport report;
        {
          py::gil_scoped_release release;
          report = solve_pipeline(benchmark_problem(config.model), chains, o);
        }
        py::dict out = to_python(report_to_json(report));
        out["value_curve"] = value_curve(report);
        return out;
      },
      py::arg("config"), py::arg("chains"), py::arg("N") = py::none(),
      "Solves both recursions and the error budget; returns the report as a dict.");

  const auto params = [](const std::optional<BenchmarkParams>& p) {
    return benchmark_problem(p.value_or(BenchmarkParams{}));
  };
  m.def(
      "op_F", [params](double x, double t, std::optional<BenchmarkParams> p) {
        return op_F(params(p), scalar_state(x), t);
      },
      py::arg("x"), py::arg("t"), py::arg("params") = py::none());
  m.def(
      "op_H",
      [params](std::function<double(double)> v, double x, double t,
               std::optional<BenchmarkParams> p) {
        return op_H(params(p), wrap(v), scalar_state(x), t);
      },
      py::arg("v"), py::arg("x"), py::arg("t"), py::arg("params") = py::none());
  m.def(
      "op_I",
      [params](std::function<double(double)> w, double x, double t,
               std::optional<BenchmarkParams> p) {
        return op_I(params(p), wrap(w), scalar_state(x), t);
      },
      py::arg("w"), py::arg("x"), py::arg("t"), py::arg("params") = py::none());
  m.def(
      "op_J",
      [params](std::function<double(double)> v, std::function<double(double)> w, double x,
               double t, std::optional<BenchmarkParams> p) {
        return op_J(params(p), wrap(v), wrap(w), scalar_state(x), t);
      },
      py::arg("v"), py::arg("w"), py::arg("x"), py::arg("t"), py::arg("params") = py::none());
  m.def(
      "op_K",
      [params](std::function<double(double)> w, double x, std::optional<BenchmarkParams> p) {
        return op_K(params(p), wrap(w), scalar_state(x));
      },
      py::arg("w"), py::arg("x"), py::arg("params") = py::none());
  m.def(
      "survival_integral",
      [params](double x, double t, std::optional<BenchmarkParams> p) {
        return survival_integral(params(p), scalar_state(x), t);
      },
      py::arg("x"), py::arg("t"), py::arg("params") = py::none());
  m.def(
      "time_grid",
      [](double t_star, double delta) {
        const TimeGrid g = build_time_grid(t_star, delta);
        return py::make_tuple(g.points, g.degenerate);
      },
      py::arg("t_star"), py::arg("delta"));

  m.def(
      "mc_no_impulse_cost",
      [params](std::int64_t n, std::uint64_t seed, double T, std::optional<BenchmarkParams> p) {
        const Problem problem = params(p);
        py::gil_scoped_release release;
        const auto e = mc_no_impulse_cost(problem, problem.x0, n, T, seed);
        return std::make_tuple(e.estimate, e.std_error, e.truncation_bound);
      },
      py::arg("n_sims"), py::arg("seed") = 1, py::arg("T") = 0.0, py::arg("params") = py::none(),
      "(estimate, std_error, truncation_bound) of the cost of never intervening from x0.");
  m.def(
      "mc_discount_at_jump",
      [params](int N, std::int64_t n, std::uint64_t seed, std::optional<BenchmarkParams> p) {
        const Problem problem = params(p);
        py::gil_scoped_release release;
        const auto e = mc_discount_at_jump(*problem.model, problem.alpha(), problem.x0, N, n, seed);
        return std::make_pair(e.estimate, e.std_error);
      },
      py::arg("n_jumps"), py::arg("n_sims"), py::arg("seed") = 1, py::arg("params") = py::none());
  m.def(
      "simulate",
      [params](int n_jumps, double dt, std::uint64_t seed, std::optional<BenchmarkParams> p) {
        const Problem problem = params(p);
        Rng rng = make_rng(seed, 0x51);
        std::vector<std::tuple<double, double, int>> out;
        for (const auto& q : simulate_trajectory(*problem.model, problem.x0, n_jumps, dt, rng)) {
          out.emplace_back(q.t, q.x(0), q.jump);
        }
        return out;
      },
      py::arg("n_jumps"), py::arg("dt") = 0.01, py::arg("seed") = 1,
      py::arg("params") = py::none());

  m.def(
      "toy_check",
      [](std::uint64_t seed) {
        const ToyCase toy = random_toy_case(seed);
        const ToyValues a = solve_toy(toy);
        const auto b = oracle::brute_force_recursion(toy_instance(toy), toy.N);
        return py::make_tuple(a.root, b.root, toy.N);
      },
      py::arg("seed"),
      "Solver and brute-force values (solver, oracle, N) on one random toy chain.");
}
