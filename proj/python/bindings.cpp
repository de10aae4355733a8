#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "repcon/env.hpp"
#include "repcon/io.hpp"
#include "repcon/phase1.hpp"
#include "repcon/phase2.hpp"
#include "repcon/sim.hpp"
#include "repcon/solvers.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

py::object to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null:
      return py::none();
    case json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case json::value_t::number_integer:
      return py::int_(j.get<long long>());
    case json::value_t::number_unsigned:
      return py::int_(j.get<unsigned long long>());
    case json::value_t::number_float:
      return py::float_(j.get<double>());
    case json::value_t::string:
      return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(to_py(item));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it) {
        out[py::str(it.key())] = to_py(it.value());
      }
      return out;
    }
    default:
      return py::none();
  }
}

repcon::Scenario parse_scenario(const std::string& text) {
  return repcon::load_scenario(text);
}

struct SolveOutput {
  repcon::Scenario sc;
  repcon::ValueTable table;
  repcon::EquilibriumSolution eq;
};

SolveOutput solve_impl(const std::string& text, uint64_t seed, int jobs,
                       int restarts, int table_restarts, bool verify) {
  SolveOutput out{parse_scenario(text), {}, {}};
  repcon::ValueTableConfig tcfg;
  tcfg.solver.seed = seed;
  tcfg.solver.restarts = table_restarts;
  tcfg.jobs = jobs;
  out.table = repcon::build_value_tables(out.sc, tcfg);
  repcon::Phase1Config pcfg;
  pcfg.solver.seed = repcon::derive_seed(seed, 1);
  pcfg.solver.restarts = restarts;
  pcfg.solver.jobs = jobs;
  pcfg.run_verification = verify;
  out.eq = repcon::solve_phase1_sad(out.sc, out.table, pcfg);
  return out;
}

}  // namespace

PYBIND11_MODULE(_repcon, m) {
  m.doc() = "two-phase concealment defense solver";

  py::register_exception<repcon::ValidationError>(m, "ValidationError",
                                                  PyExc_ValueError);
  py::register_exception<repcon::SolverError>(m, "SolverError",
                                              PyExc_RuntimeError);

  m.def(
      "validate",
      [](const std::string& text) {
        repcon::Scenario sc = parse_scenario(text);
        return to_py(repcon::scenario_to_json(sc));
      },
      py::arg("text"), "parse and validate a scenario JSON string");

  m.def(
      "value_tables",
      [](const std::string& text, uint64_t seed, int jobs, int restarts,
         bool all_states) {
        repcon::Scenario sc = parse_scenario(text);
        repcon::ValueTableConfig cfg;
        cfg.solver.seed = seed;
        cfg.solver.restarts = restarts;
        cfg.jobs = jobs;
        cfg.all_states = all_states;
        repcon::ValueTable table = repcon::build_value_tables(sc, cfg);
        return to_py(repcon::value_table_to_json(sc, table));
      },
      py::arg("text"), py::arg("seed") = 0, py::arg("jobs") = 1,
      py::arg("restarts") = 12, py::arg("all_states") = false,
      "movement-stage value tables per (type, barrier, start cell)");

  m.def(
      "solve",
      [](const std::string& text, uint64_t seed, int jobs, int restarts,
         int table_restarts, bool verify) {
        SolveOutput out =
            solve_impl(text, seed, jobs, restarts, table_restarts, verify);
        repcon::Phase1Config pcfg;
        pcfg.solver.seed = repcon::derive_seed(seed, 2);
        pcfg.solver.restarts = restarts;
        pcfg.solver.jobs = jobs;
        repcon::BaselineResult baseline =
            repcon::full_information_baseline(out.sc, out.table, pcfg);
        repcon::ComparisonReport cmp =
            repcon::compare_defenses(out.eq, baseline);
        repcon::TransitionKernel k = repcon::build_transition(out.sc);
        repcon::GameTree tree = repcon::enumerate_tree(
            k, k.cell_state[out.sc.grid.cell_index(out.sc.grid.start)],
            out.sc.horizon);
        py::dict res;
        res["equilibrium"] =
            to_py(repcon::equilibrium_to_json(out.sc, tree, out.eq));
        res["comparison"] = to_py(repcon::comparison_to_json(cmp));
        res["verification"] =
            to_py(repcon::verification_to_json(out.eq.verification));
        return res;
      },
      py::arg("text"), py::arg("seed") = 0, py::arg("jobs") = 1,
      py::arg("restarts") = 16, py::arg("table_restarts") = 12,
      py::arg("verify") = true,
      "solve the concealment game and compare with the known-type defense");

  m.def(
      "simulate",
      [](const std::string& text, int rollouts, uint64_t seed, int jobs,
         int restarts, int table_restarts, int max_steps) {
        SolveOutput out =
            solve_impl(text, seed, jobs, restarts, table_restarts, false);
        repcon::MonteCarloResult mc = repcon::monte_carlo_value(
            out.sc, out.table, out.eq, rollouts, repcon::derive_seed(seed, 3),
            max_steps, jobs);
        py::dict res;
        res["expected_value"] = out.eq.value;
        res["monte_carlo"] = to_py(repcon::monte_carlo_to_json(mc));
        return res;
      },
      py::arg("text"), py::arg("rollouts") = 10000, py::arg("seed") = 0,
      py::arg("jobs") = 1, py::arg("restarts") = 16,
      py::arg("table_restarts") = 12, py::arg("max_steps") = 200,
      "Monte Carlo check of the solved equilibrium value");

  m.def(
      "update_belief",
      [](const std::vector<double>& prior,
         const std::vector<double>& likelihood) {
        return repcon::update_belief(prior, likelihood);
      },
      py::arg("prior"), py::arg("likelihood"),
      "one Bayes step: posterior over types after observing one action");
}
