#include "repcon/sim.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace repcon {

namespace {

template <typename Row>
int sample_index(std::mt19937_64& rng, const Row& weights, int n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += weights[i];
    if (u <= acc) return i;
  }
  return n - 1;
}

struct SimContext {
  TransitionKernel phase1;
  std::vector<double> phase1_reward;
  std::vector<TransitionKernel> phase2;
  std::vector<std::vector<double>> phase2_reward;
  std::vector<double> value_bound;  // per barrier: max |r| / (1 - beta)

  explicit SimContext(const Scenario& sc) {
    phase1 = build_transition(sc);
    phase1_reward = reward_vector(sc, phase1);
    for (int w = 0; w < sc.num_barriers(); ++w) {
      phase2.push_back(build_transition(sc, w));
      phase2_reward.push_back(reward_vector(sc, phase2.back()));
      double max_abs = 0.0;
      for (double v : phase2_reward.back()) {
        max_abs = std::max(max_abs, std::abs(v));
      }
      value_bound.push_back(max_abs / (1.0 - sc.discount));
    }
  }
};

Rollout run_episode(const Scenario& sc, const ValueTable& table,
                    const EquilibriumSolution& eq, const SimContext& ctx,
                    const RolloutConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const double beta = sc.discount;
  const int T = sc.horizon;

  Rollout out;
  out.type = sample_index(rng, sc.prior, sc.num_types());
  const Representation& rep = sc.representations[out.type];
  const TransitionKernel& k1 = ctx.phase1;

  int state = k1.cell_state[sc.grid.cell_index(sc.grid.start)];
  long long node = 0;
  double discount = 1.0;
  out.states.push_back(state);
  for (int t = 0; t < T; ++t) {
    int a;
    if (state == k1.sink) {
      a = sample_index(rng, std::array<double, 4>{0.25, 0.25, 0.25, 0.25}, 4);
    } else {
      int g = rep.cell_to_superstate[k1.state_cell[state]];
      a = sample_index(rng, eq.attacker.policy[out.type].rows[g], kNumActions);
    }
    out.payoff += discount * ctx.phase1_reward[state];
    out.actions.push_back(a);
    state = k1.succ[state][a];
    node = 4 * node + 1 + a;
    discount *= beta;
    out.states.push_back(state);
  }

  long long first_leaf = ((1LL << (2 * T)) - 1) / 3;
  int leaf = static_cast<int>(node - first_leaf);
  out.barrier = sample_index(rng, eq.defender.sigma[leaf], sc.num_barriers());

  const TransitionKernel& k2 = ctx.phase2[out.barrier];
  const std::vector<double>& r2 = ctx.phase2_reward[out.barrier];
  const PolicyTable* policy = nullptr;
  if (state != k2.sink) {
    policy = &table.pi(out.type, out.barrier, k2.state_cell[state]);
  }

  for (int step = 0; step < cfg.max_steps; ++step) {
    if (state == k2.sink) {
      out.absorbed = true;
      break;
    }
    int g = rep.cell_to_superstate[k2.state_cell[state]];
    int a = sample_index(rng, policy->rows[g], kNumActions);
    out.payoff += discount * r2[state];
    out.actions.push_back(a);
    state = k2.succ[state][a];
    discount *= beta;
    out.states.push_back(state);
  }
  if (state == k2.sink) {
    out.absorbed = true;
  } else {
    out.truncation_residual = discount * ctx.value_bound[out.barrier];
  }
  return out;
}

}  // namespace

Rollout simulate_episode(const Scenario& sc, const ValueTable& table,
                         const EquilibriumSolution& eq,
                         const RolloutConfig& cfg) {
  SimContext ctx(sc);
  return run_episode(sc, table, eq, ctx, cfg);
}

MonteCarloResult monte_carlo_value(const Scenario& sc, const ValueTable& table,
                                   const EquilibriumSolution& eq, int n,
                                   uint64_t seed, int max_steps, int jobs) {
  SimContext ctx(sc);
  std::vector<double> payoffs(n, 0.0);
  std::vector<double> residuals(n, 0.0);
  parallel_for(n, jobs, [&](int i) {
    RolloutConfig cfg;
    cfg.seed = derive_seed(seed, static_cast<uint64_t>(i));
    cfg.max_steps = max_steps;
    Rollout roll = run_episode(sc, table, eq, ctx, cfg);
    payoffs[i] = roll.payoff;
    residuals[i] = roll.truncation_residual;
  });

  MonteCarloResult out;
  out.n = n;
  double sum = 0.0;
  for (double p : payoffs) sum += p;
  out.mean = sum / n;
  double ss = 0.0;
  for (double p : payoffs) ss += (p - out.mean) * (p - out.mean);
  out.std_error =
      n > 1 ? std::sqrt(ss / (static_cast<double>(n) * (n - 1))) : 0.0;
  for (double rr : residuals) {
    out.truncation_bound = std::max(out.truncation_bound, rr);
  }
  return out;
}

ComparisonReport compare_defenses(const EquilibriumSolution& eq,
                                  const BaselineResult& baseline) {
  ComparisonReport rep;
  rep.equilibrium_value = eq.value;
  rep.baseline_value = baseline.value;
  rep.lp_value = eq.lp_value;
  rep.concealment_gain = eq.value - baseline.value;
  rep.relative_gain = std::abs(baseline.value) > 1e-300
                          ? rep.concealment_gain / std::abs(baseline.value)
                          : 0.0;
  rep.sad_gap = eq.lp_value - eq.value;
  rep.equilibrium_fresh = eq.value_fresh_clock;
  rep.baseline_fresh = baseline.value_fresh_clock;
  rep.gain_fresh = eq.value_fresh_clock - baseline.value_fresh_clock;
  rep.relative_gain_fresh =
      std::abs(baseline.value_fresh_clock) > 1e-300
          ? rep.gain_fresh / std::abs(baseline.value_fresh_clock)
          : 0.0;
  rep.stage_constant = eq.stage_value;
  double movement_base = baseline.value_fresh_clock - rep.stage_constant;
  rep.relative_gain_movement_fresh =
      std::abs(movement_base) > 1e-9 ? rep.gain_fresh / std::abs(movement_base)
                                     : 0.0;
  return rep;
}

}  // namespace repcon
