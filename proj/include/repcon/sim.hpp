#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repcon/env.hpp"
#include "repcon/phase1.hpp"
#include "repcon/phase2.hpp"

namespace repcon {

struct RolloutConfig {
  uint64_t seed = 0;
  int max_steps = 200;  // Phase-II truncation cap
};

struct Rollout {
  int type = 0;
  int barrier = 0;
  std::vector<int> states;   // kernel states, start included
  std::vector<int> actions;  // letters via kActionLetter
  double payoff = 0.0;       // sum_t beta^t r(s_t,a_t), one global clock
  double truncation_residual = 0.0;  // beta^steps * max |V| bound
  bool absorbed = false;
};

// One full episode: type sampled from the prior, Phase-I actions from the
// equilibrium profile, deployment sampled from sigma at the reached leaf,
// Phase-II actions from the value-table policy for (type, barrier, s_T).
Rollout simulate_episode(const Scenario& sc, const ValueTable& table,
                         const EquilibriumSolution& eq,
                         const RolloutConfig& cfg);

struct MonteCarloResult {
  double mean = 0.0;
  double std_error = 0.0;
  double truncation_bound = 0.0;  // max residual across rollouts
  int n = 0;
};

MonteCarloResult monte_carlo_value(const Scenario& sc, const ValueTable& table,
                                   const EquilibriumSolution& eq, int n,
                                   uint64_t seed, int max_steps = 200,
                                   int jobs = 1);

struct ComparisonReport {
  double equilibrium_value = 0.0;        // concealment-aware defense
  double baseline_value = 0.0;           // full-information defense
  double lp_value = 0.0;                 // relaxed attacker
  double concealment_gain = 0.0;         // equilibrium - baseline
  double relative_gain = 0.0;            // gain / |baseline|
  double sad_gap = 0.0;                  // lp - equilibrium (attacker's loss to the constraint)
  double stage_constant = 0.0;           // observation-stage reward shared by both defenses
  double equilibrium_fresh = 0.0;
  double baseline_fresh = 0.0;
  double gain_fresh = 0.0;
  double relative_gain_fresh = 0.0;
  // Movement-stage-only share: both values minus the common stage constant.
  double relative_gain_movement_fresh = 0.0;
};

ComparisonReport compare_defenses(const EquilibriumSolution& eq,
                                  const BaselineResult& baseline);

}  // namespace repcon
