#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repcon/env.hpp"
#include "repcon/phase1.hpp"
#include "repcon/phase2.hpp"
#include "repcon/sim.hpp"

namespace repcon {

nlohmann::json scenario_to_json(const Scenario& sc);

nlohmann::json value_table_to_json(const Scenario& sc, const ValueTable& table);
ValueTable value_table_from_json(const Scenario& sc, const nlohmann::json& j);

nlohmann::json equilibrium_to_json(const Scenario& sc, const GameTree& tree,
                                   const EquilibriumSolution& eq);

nlohmann::json verification_to_json(const VerificationReport& r);
nlohmann::json comparison_to_json(const ComparisonReport& r);
nlohmann::json rollout_to_json(const Scenario& sc, const Rollout& r);
nlohmann::json monte_carlo_to_json(const MonteCarloResult& r);

// One CSV per (type, barrier) with columns x,y,value; one row per tabulated
// cell.
std::string value_heatmap_csv(const Scenario& sc, const ValueTable& table,
                              int theta, int omega);

struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  uint64_t seed = 0;
  int jobs = 1;
  double tolerance = 0.0;
  std::string scenario_path;
  std::string scenario_sha256;
  std::string started_utc;
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;
};

nlohmann::json manifest_to_json(const RunManifest& m);

std::string sha256_hex(const std::string& bytes);
std::string utc_timestamp();
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace repcon
