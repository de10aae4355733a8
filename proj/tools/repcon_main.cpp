#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "repcon/env.hpp"
#include "repcon/io.hpp"
#include "repcon/phase1.hpp"
#include "repcon/phase2.hpp"
#include "repcon/sim.hpp"
#include "repcon/solvers.hpp"

namespace {

using repcon::RunManifest;

struct CommonOpts {
  uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir = ".";
  double tolerance = 1e-4;
};

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

std::string out_path(const CommonOpts& opts, const std::string& name) {
  std::filesystem::create_directories(opts.out_dir);
  return (std::filesystem::path(opts.out_dir) / name).string();
}

RunManifest start_manifest(const std::string& command, int argc, char** argv,
                           const CommonOpts& opts,
                           const std::string& scenario_path,
                           const std::string& scenario_text) {
  RunManifest m;
  m.command = command;
  for (int i = 0; i < argc; ++i) m.args.push_back(argv[i]);
  m.seed = opts.seed;
  m.jobs = opts.jobs;
  m.tolerance = opts.tolerance;
  m.scenario_path = scenario_path;
  m.scenario_sha256 = repcon::sha256_hex(scenario_text);
  m.started_utc = repcon::utc_timestamp();
  return m;
}

void finish_manifest(RunManifest& m, const CommonOpts& opts,
                     const Timer& timer) {
  m.wall_seconds = timer.seconds();
  std::string path = out_path(opts, "manifest.json");
  repcon::write_file(path, repcon::manifest_to_json(m).dump(2) + "\n");
}

repcon::ValueTable make_tables(const repcon::Scenario& sc,
                               const CommonOpts& opts, int restarts,
                               bool all_states) {
  repcon::ValueTableConfig cfg;
  cfg.solver.seed = opts.seed;
  cfg.solver.restarts = restarts;
  cfg.jobs = opts.jobs;
  cfg.all_states = all_states;
  return repcon::build_value_tables(sc, cfg);
}

repcon::EquilibriumSolution solve_game(const repcon::Scenario& sc,
                                       const repcon::ValueTable& table,
                                       const CommonOpts& opts, int restarts,
                                       bool run_verification) {
  repcon::Phase1Config cfg;
  cfg.solver.seed = repcon::derive_seed(opts.seed, 1);
  cfg.solver.restarts = restarts;
  cfg.solver.jobs = opts.jobs;
  cfg.run_verification = run_verification;
  return repcon::solve_phase1_sad(sc, table, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-phase concealment defense solver for grid worlds"};
  app.require_subcommand(1);

  CommonOpts opts;
  app.add_option("--seed", opts.seed, "master random seed")
      ->capture_default_str();
  app.add_option("--jobs", opts.jobs, "worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--out", opts.out_dir, "output directory")
      ->capture_default_str();
  app.add_option("--tolerance", opts.tolerance,
                 "equilibrium verification tolerance")
      ->capture_default_str();

  std::string scenario_path;
  int restarts = 16;
  int table_restarts = 12;
  bool all_states = false;
  bool lp_only = false;
  bool with_baseline = false;
  int rollouts = 100000;
  int max_steps = 200;
  int sample_episodes = 3;
  std::string tables_path;

  auto* validate =
      app.add_subcommand("validate", "check a scenario file and exit");
  validate->add_option("scenario", scenario_path, "scenario JSON file")
      ->required();

  auto* phase2 = app.add_subcommand(
      "solve-phase2", "movement-stage value tables per type and barrier");
  phase2->add_option("scenario", scenario_path)->required();
  phase2->add_option("--restarts", table_restarts, "ascent restarts per cell")
      ->capture_default_str();
  phase2->add_flag("--all-states", all_states,
                   "tabulate every free cell, not just the reachable ones");

  auto* phase1 = app.add_subcommand(
      "solve-phase1", "concealment game equilibrium and defense comparison");
  phase1->add_option("scenario", scenario_path)->required();
  phase1->add_option("--restarts", restarts, "ascent restarts")
      ->capture_default_str();
  phase1->add_option("--table-restarts", table_restarts,
                     "ascent restarts per value-table cell")
      ->capture_default_str();
  phase1->add_option("--tables", tables_path,
                     "reuse value tables from a solve-phase2 run");
  phase1->add_flag("--lp-only", lp_only,
                   "solve only the relaxation without the shared-row "
                   "constraint and exit");

  auto* simulate = app.add_subcommand(
      "simulate", "Monte Carlo rollouts of the solved equilibrium");
  simulate->add_option("scenario", scenario_path)->required();
  simulate->add_option("-n,--rollouts", rollouts)
      ->capture_default_str()
      ->check(CLI::Validator(
          [](std::string& s) {
            return std::stoll(s) > 0 ? std::string{}
                                     : std::string{"n must be positive"};
          },
          "POSITIVE"));
  simulate->add_option("--max-steps", max_steps,
                       "movement-stage step cap per episode")
      ->capture_default_str();
  simulate->add_option("--restarts", restarts)->capture_default_str();
  simulate->add_option("--table-restarts", table_restarts)
      ->capture_default_str();
  simulate->add_option("--episodes", sample_episodes,
                       "sample episodes to export")
      ->capture_default_str();
  simulate->add_option("--tables", tables_path);
  simulate->add_flag("--baseline", with_baseline,
                     "also solve the known-type defense and report the "
                     "concealment improvement");

  auto* verify = app.add_subcommand(
      "verify", "solve and check the equilibrium conditions");
  verify->add_option("scenario", scenario_path)->required();
  verify->add_option("--restarts", restarts)->capture_default_str();
  verify->add_option("--table-restarts", table_restarts)
      ->capture_default_str();
  verify->add_option("--tables", tables_path);

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Timer timer;
  try {
    std::string scenario_text = repcon::read_file(scenario_path);
    repcon::Scenario sc = repcon::load_scenario(scenario_text);

    auto load_or_build_tables = [&]() {
      if (!tables_path.empty()) {
        std::string path = tables_path;
        if (std::filesystem::is_directory(path)) path += "/values.json";
        return repcon::value_table_from_json(
            sc, nlohmann::json::parse(repcon::read_file(path)));
      }
      return make_tables(sc, opts, table_restarts, all_states);
    };

    if (validate->parsed()) {
      RunManifest m =
          start_manifest("validate", argc, argv, opts, scenario_path,
                         scenario_text);
      fmt::print("ok: {}x{} grid, {} types, {} barriers, horizon {}\n",
                 sc.grid.width, sc.grid.height, sc.num_types(),
                 sc.num_barriers(), sc.horizon);
      finish_manifest(m, opts, timer);
      return 0;
    }

    if (phase2->parsed()) {
      RunManifest m = start_manifest("solve-phase2", argc, argv, opts,
                                     scenario_path, scenario_text);
      repcon::ValueTable table = make_tables(sc, opts, table_restarts,
                                             all_states);
      std::string values = out_path(opts, "values.json");
      repcon::write_file(values,
                         repcon::value_table_to_json(sc, table).dump(2) + "\n");
      m.outputs.push_back(values);
      for (int theta = 0; theta < sc.num_types(); ++theta) {
        for (int omega = 0; omega < sc.num_barriers(); ++omega) {
          std::string csv =
              out_path(opts, fmt::format("heatmap_t{}_w{}.csv", theta, omega));
          repcon::write_file(csv,
                             repcon::value_heatmap_csv(sc, table, theta, omega));
          m.outputs.push_back(csv);
        }
      }
      fmt::print("tabulated {} cells x {} types x {} barriers\n",
                 table.states.size(), sc.num_types(), sc.num_barriers());
      finish_manifest(m, opts, timer);
      return 0;
    }

    if (phase1->parsed() && lp_only) {
      RunManifest m = start_manifest("solve-phase1", argc, argv, opts,
                                     scenario_path, scenario_text);
      repcon::ValueTable table = load_or_build_tables();
      repcon::TransitionKernel k = repcon::build_transition(sc);
      repcon::GameTree tree = repcon::enumerate_tree(
          k, k.cell_state[sc.grid.cell_index(sc.grid.start)], sc.horizon);
      repcon::LeafValues leaves =
          repcon::collect_leaf_values(tree, k, sc, table);
      repcon::Phase1LpSolution lp =
          repcon::solve_phase1_lp(tree, k, sc, leaves);
      nlohmann::json out;
      out["schema"] = 1;
      out["value"] = lp.value;
      out["columns"] = lp.columns;
      out["pricing_rounds"] = lp.pricing_rounds;
      out["certificate_gap"] = lp.certificate_gap;
      std::string lp_path = out_path(opts, "relaxation.json");
      repcon::write_file(lp_path, out.dump(2) + "\n");
      m.outputs.push_back(lp_path);
      fmt::print("relaxed game value {:.6f}\n", lp.value);
      finish_manifest(m, opts, timer);
      return 0;
    }

    if (phase1->parsed() || verify->parsed()) {
      const char* cmd = phase1->parsed() ? "solve-phase1" : "verify";
      RunManifest m =
          start_manifest(cmd, argc, argv, opts, scenario_path, scenario_text);
      repcon::ValueTable table = load_or_build_tables();
      repcon::EquilibriumSolution eq =
          solve_game(sc, table, opts, restarts, true);
      repcon::Phase1Config pcfg;
      pcfg.solver.seed = repcon::derive_seed(opts.seed, 2);
      pcfg.solver.restarts = restarts;
      pcfg.solver.jobs = opts.jobs;
      repcon::BaselineResult baseline =
          repcon::full_information_baseline(sc, table, pcfg);
      repcon::ComparisonReport cmp = repcon::compare_defenses(eq, baseline);

      repcon::TransitionKernel k = repcon::build_transition(sc);
      repcon::GameTree tree = repcon::enumerate_tree(
          k, k.cell_state[sc.grid.cell_index(sc.grid.start)], sc.horizon);
      std::string eq_path = out_path(opts, "equilibrium.json");
      repcon::write_file(
          eq_path, repcon::equilibrium_to_json(sc, tree, eq).dump(2) + "\n");
      m.outputs.push_back(eq_path);
      std::string cmp_path = out_path(opts, "comparison.json");
      repcon::write_file(cmp_path,
                         repcon::comparison_to_json(cmp).dump(2) + "\n");
      m.outputs.push_back(cmp_path);

      fmt::print("game value {:.6f} (relaxed {:.6f}, known-type {:.6f})\n",
                 eq.value, eq.lp_value, baseline.value);
      fmt::print("verification: {}\n",
                 eq.verification.ok() ? "passed" : "FAILED");
      for (const std::string& note : eq.verification.notes) {
        fmt::print("  note: {}\n", note);
      }
      finish_manifest(m, opts, timer);
      return eq.verification.ok() ? 0 : 3;
    }

    if (simulate->parsed()) {
      RunManifest m = start_manifest("simulate", argc, argv, opts,
                                     scenario_path, scenario_text);
      repcon::ValueTable table = load_or_build_tables();
      repcon::EquilibriumSolution eq =
          solve_game(sc, table, opts, restarts, false);
      repcon::MonteCarloResult mc = repcon::monte_carlo_value(
          sc, table, eq, rollouts, repcon::derive_seed(opts.seed, 3), max_steps,
          opts.jobs);

      nlohmann::json out;
      out["schema"] = 1;
      out["expected_value"] = eq.value;
      out["monte_carlo"] = repcon::monte_carlo_to_json(mc);

      std::string log_path = out_path(opts, "rollouts.jsonl");
      std::string log;
      for (int i = 0; i < sample_episodes; ++i) {
        repcon::RolloutConfig rc;
        rc.seed = repcon::derive_seed(opts.seed, 100 + i);
        rc.max_steps = max_steps;
        log += repcon::rollout_to_json(sc,
                                       repcon::simulate_episode(sc, table, eq,
                                                                rc))
                   .dump();
        log += '\n';
      }
      repcon::write_file(log_path, log);
      m.outputs.push_back(log_path);

      if (with_baseline) {
        repcon::Phase1Config pcfg;
        pcfg.solver.seed = repcon::derive_seed(opts.seed, 2);
        pcfg.solver.restarts = restarts;
        pcfg.solver.jobs = opts.jobs;
        repcon::BaselineResult baseline =
            repcon::full_information_baseline(sc, table, pcfg);
        repcon::ComparisonReport cmp = repcon::compare_defenses(eq, baseline);
        nlohmann::json jc = repcon::comparison_to_json(cmp);
        jc["empirical"] = repcon::monte_carlo_to_json(mc);
        std::string cmp_path = out_path(opts, "comparison.json");
        repcon::write_file(cmp_path, jc.dump(2) + "\n");
        m.outputs.push_back(cmp_path);
        out["comparison"] = jc;
        fmt::print(
            "improvement over the known-type defense: {:.1f}% total, {:.1f}% "
            "movement stage only\n",
            100.0 * cmp.relative_gain_fresh,
            100.0 * cmp.relative_gain_movement_fresh);
      }

      std::string mc_path = out_path(opts, "simulation.json");
      repcon::write_file(mc_path, out.dump(2) + "\n");
      m.outputs.push_back(mc_path);
      fmt::print("monte carlo mean {:.6f} +/- {:.6f} (expected {:.6f})\n",
                 mc.mean, mc.std_error, eq.value);
      finish_manifest(m, opts, timer);
      return 0;
    }
  } catch (const repcon::ValidationError& e) {
    fmt::print(stderr, "invalid input: {}\n", e.what());
    return 2;
  } catch (const repcon::SolverError& e) {
    fmt::print(stderr, "solver failure: {}\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 4;
  }
  return 0;
}
