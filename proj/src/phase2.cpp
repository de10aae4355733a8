#include "repcon/phase2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace repcon {

StatePolicy expand_policy(const TransitionKernel& k, const Representation& rep,
                          const PolicyTable& table) {
  StatePolicy policy(k.num_states, {0.25, 0.25, 0.25, 0.25});
  for (int s = 0; s + 1 < k.num_states; ++s) {
    int g = rep.cell_to_superstate[k.state_cell[s]];
    if (g < 0 || g >= static_cast<int>(table.rows.size())) {
      throw SolverError(
          fmt::format("policy table has no row for superstate {} (cell {})", g,
                      k.state_cell[s]));
    }
    policy[s] = table.rows[g];
  }
  return policy;
}

PolicyEvaluator::PolicyEvaluator(const TransitionKernel& k,
                                 std::vector<double> r, double beta)
    : kernel_(&k), r_(std::move(r)), beta_(beta) {
  if (static_cast<int>(r_.size()) != k.num_states) {
    throw SolverError("policy evaluator: reward vector size mismatch");
  }
}

EvalResult PolicyEvaluator::evaluate(const StatePolicy& policy,
                                     const std::vector<double>& mu) const {
  const TransitionKernel& k = *kernel_;
  const int n = k.num_states;
  if (static_cast<int>(policy.size()) != n ||
      static_cast<int>(mu.size()) != n) {
    throw SolverError("policy evaluator: policy or mu size mismatch");
  }

  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      m(s, k.succ[s][a]) -= beta_ * policy[s][a];
    }
  }
  Eigen::Map<const Eigen::VectorXd> rv(r_.data(), n);
  Eigen::Map<const Eigen::VectorXd> muv(mu.data(), n);

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  EvalResult out;
  out.state_values = lu.solve(rv);
  out.occupancy = lu.transpose().solve(muv);

  double vres = (m * out.state_values - rv).lpNorm<Eigen::Infinity>();
  out.flow_residual =
      (m.transpose() * out.occupancy - muv).lpNorm<Eigen::Infinity>();
  if (!out.state_values.allFinite() || !out.occupancy.allFinite() ||
      vres > 1e-9 || out.flow_residual > 1e-9) {
    out.state_values = solve_linear_system(m, rv);
    out.occupancy = solve_linear_system(m.transpose(), muv);
    out.flow_residual =
        (m.transpose() * out.occupancy - muv).lpNorm<Eigen::Infinity>();
  }
  out.value = muv.dot(out.state_values);
  return out;
}

void PolicyEvaluator::fill_q(const Eigen::VectorXd& state_values,
                             Eigen::MatrixXd* q) const {
  const TransitionKernel& k = *kernel_;
  const int n = k.num_states;
  q->resize(n, kNumActions);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      (*q)(s, a) = r_[s] + beta_ * state_values[k.succ[s][a]];
    }
  }
}

EvalResult evaluate_policy(const TransitionKernel& k, const StatePolicy& policy,
                           const std::vector<double>& mu,
                           const std::vector<double>& r, double beta) {
  return PolicyEvaluator(k, r, beta).evaluate(policy, mu);
}

EvalResult evaluate_policy(const TransitionKernel& k, const Representation& rep,
                           const PolicyTable& table,
                           const std::vector<double>& mu,
                           const std::vector<double>& r, double beta) {
  return PolicyEvaluator(k, r, beta).evaluate(expand_policy(k, rep, table), mu);
}

OccupancySolution solve_unconstrained_mdp(const TransitionKernel& k,
                                          const std::vector<double>& r,
                                          const std::vector<double>& mu,
                                          double beta) {
  const int n = k.num_states;
  LinearProgram lp;
  lp.num_vars = n * kNumActions;
  lp.c.assign(lp.num_vars, 0.0);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < kNumActions; ++a) lp.c[s * kNumActions + a] = r[s];
  }
  lp.a_eq.assign(n, std::vector<double>(lp.num_vars, 0.0));
  lp.b_eq = mu;
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      lp.a_eq[s][s * kNumActions + a] += 1.0;
      lp.a_eq[k.succ[s][a]][s * kNumActions + a] -= beta;
    }
  }

  LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::Optimal) {
    throw SolverError(fmt::format("occupancy LP did not reach optimality: {}",
                                  sol.diagnostics));
  }
  OccupancySolution out;
  out.value = sol.value;
  out.state_values = sol.dual_eq;
  out.nu.assign(n, {0.0, 0.0, 0.0, 0.0});
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      out.nu[s][a] = sol.x[s * kNumActions + a];
    }
  }
  return out;
}

RecoveredPolicy policy_from_occupancy(
    const std::vector<std::array<double, kNumActions>>& nu) {
  RecoveredPolicy out;
  out.policy.assign(nu.size(), {0.25, 0.25, 0.25, 0.25});
  for (size_t s = 0; s < nu.size(); ++s) {
    double total = 0.0;
    for (double v : nu[s]) total += v;
    if (total > 0.0) {
      for (int a = 0; a < kNumActions; ++a) out.policy[s][a] = nu[s][a] / total;
    } else {
      out.uniform_states.push_back(static_cast<int>(s));
    }
  }
  return out;
}

std::vector<double> value_iteration(const TransitionKernel& k,
                                    const std::vector<double>& r, double beta,
                                    double tol, int max_iters) {
  const int n = k.num_states;
  std::vector<double> v(n, 0.0), next(n, 0.0);
  for (int it = 0; it < max_iters; ++it) {
    double delta = 0.0;
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < kNumActions; ++a) {
        best = std::max(best, v[k.succ[s][a]]);
      }
      next[s] = r[s] + beta * best;
      delta = std::max(delta, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    if (delta < tol) break;
  }
  return v;
}

namespace {

PolicyTable table_from_flat(const std::vector<double>& x, int num_superstates) {
  PolicyTable table;
  table.rows.resize(num_superstates);
  for (int g = 0; g < num_superstates; ++g) {
    for (int a = 0; a < kNumActions; ++a) {
      table.rows[g][a] = x[g * kNumActions + a];
    }
  }
  return table;
}

}  // namespace

SadSolution solve_sad_mdp(const TransitionKernel& k, const Representation& rep,
                          const std::vector<double>& r,
                          const std::vector<double>& mu, double beta,
                          const MultiStartConfig& config) {
  const int ng = rep.num_superstates();
  PolicyEvaluator evaluator(k, r, beta);

  // Cells of each superstate mapped to kernel states once.
  std::vector<std::vector<int>> members(ng);
  for (int s = 0; s + 1 < k.num_states; ++s) {
    int g = rep.cell_to_superstate[k.state_cell[s]];
    if (g >= 0) members[g].push_back(s);
  }

  SimplexProduct domain;
  domain.block_sizes.assign(ng, kNumActions);

  auto objective = [&](const std::vector<double>& x,
                       std::vector<double>* grad) -> double {
    PolicyTable table = table_from_flat(x, ng);
    EvalResult ev = evaluator.evaluate(expand_policy(k, rep, table), mu);
    if (grad) {
      Eigen::MatrixXd q;
      evaluator.fill_q(ev.state_values, &q);
      grad->assign(ng * kNumActions, 0.0);
      for (int g = 0; g < ng; ++g) {
        for (int s : members[g]) {
          for (int a = 0; a < kNumActions; ++a) {
            (*grad)[g * kNumActions + a] += ev.occupancy[s] * q(s, a);
          }
        }
      }
    }
    return ev.value;
  };

  MultiStartResult ms = multistart_maximize(objective, domain, config);

  SadSolution sol;
  sol.policy = table_from_flat(ms.x, ng);
  sol.best_restart = ms.best_restart;
  sol.eval = evaluator.evaluate(expand_policy(k, rep, sol.policy), mu);

  // Greedy polish: move one superstate row at a time to the occupancy-weighted
  // best action, keeping only strict improvements. On singleton superstates
  // with everywhere-positive mu this is policy iteration and lands on the
  // exact optimum.
  Eigen::MatrixXd q;
  for (int round = 0; round < 64; ++round) {
    bool improved = false;
    for (int g = 0; g < ng; ++g) {
      evaluator.fill_q(sol.eval.state_values, &q);
      std::array<double, kNumActions> score{0.0, 0.0, 0.0, 0.0};
      for (int s : members[g]) {
        for (int a = 0; a < kNumActions; ++a) {
          score[a] += sol.eval.occupancy[s] * q(s, a);
        }
      }
      int best_a = 0;
      for (int a = 1; a < kNumActions; ++a) {
        if (score[a] > score[best_a]) best_a = a;
      }
      if (sol.policy.rows[g][best_a] >= 1.0 - 1e-12) continue;
      PolicyTable cand = sol.policy;
      cand.rows[g] = {0.0, 0.0, 0.0, 0.0};
      cand.rows[g][best_a] = 1.0;
      EvalResult ev = evaluator.evaluate(expand_policy(k, rep, cand), mu);
      if (ev.value > sol.eval.value + 1e-12) {
        sol.policy = std::move(cand);
        sol.eval = std::move(ev);
        improved = true;
      }
    }
    if (!improved) break;
    sol.polish_rounds = round + 1;
  }

  sol.value = sol.eval.value;
  return sol;
}

double brute_force_sad_oracle(const TransitionKernel& k,
                              const Representation& rep,
                              const std::vector<double>& r,
                              const std::vector<double>& mu, double beta,
                              double grid_step, int jobs) {
  const int ng = rep.num_superstates();
  int steps = static_cast<int>(std::lround(1.0 / grid_step));
  if (steps < 1 || std::abs(steps * grid_step - 1.0) > 1e-9) {
    throw SolverError(
        fmt::format("oracle grid step {} does not divide 1", grid_step));
  }

  std::vector<std::array<double, kNumActions>> comps;
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; i + j <= steps; ++j) {
      for (int l = 0; i + j + l <= steps; ++l) {
        int m = steps - i - j - l;
        comps.push_back({static_cast<double>(i) / steps,
                         static_cast<double>(j) / steps,
                         static_cast<double>(l) / steps,
                         static_cast<double>(m) / steps});
      }
    }
  }

  double total = 1.0;
  for (int g = 0; g < ng; ++g) total *= static_cast<double>(comps.size());
  if (total > 1e7) {
    throw SolverError(
        fmt::format("oracle grid of {:.3g} points exceeds the 1e7 guard",
                    total));
  }

  PolicyEvaluator evaluator(k, r, beta);
  const int outer = static_cast<int>(comps.size());
  std::vector<double> best_per_outer(outer,
                                     -std::numeric_limits<double>::infinity());

  parallel_for(outer, jobs, [&](int first) {
    std::vector<int> digits(ng, 0);
    digits[0] = first;
    PolicyTable table;
    table.rows.resize(ng);
    double best = -std::numeric_limits<double>::infinity();
    while (true) {
      for (int g = 0; g < ng; ++g) table.rows[g] = comps[digits[g]];
      EvalResult ev = evaluator.evaluate(expand_policy(k, rep, table), mu);
      best = std::max(best, ev.value);
      int g = ng - 1;
      while (g >= 1) {
        if (++digits[g] < outer) break;
        digits[g] = 0;
        --g;
      }
      if (g < 1) break;
    }
    best_per_outer[first] = best;
  });

  double best = -std::numeric_limits<double>::infinity();
  for (double v : best_per_outer) best = std::max(best, v);
  return best;
}

double ValueTable::v(int theta, int omega, int cell) const {
  auto it = index.find(cell);
  if (it == index.end()) {
    throw SolverError(fmt::format("value table has no entry for cell {}", cell));
  }
  return value[theta][omega][it->second];
}

const PolicyTable& ValueTable::pi(int theta, int omega, int cell) const {
  auto it = index.find(cell);
  if (it == index.end()) {
    throw SolverError(fmt::format("value table has no entry for cell {}", cell));
  }
  return policy[theta][omega][it->second];
}

ValueTable build_value_tables(const Scenario& sc, const ValueTableConfig& cfg,
                              const std::optional<std::vector<int>>&
                                  restrict_to_cells) {
  TransitionKernel base = build_transition(sc);

  std::vector<int> cells;
  if (restrict_to_cells.has_value()) {
    cells = *restrict_to_cells;
  } else if (cfg.all_states) {
    for (int s = 0; s + 1 < base.num_states; ++s) {
      cells.push_back(base.state_cell[s]);
    }
  } else {
    int start = base.cell_state[sc.grid.cell_index(sc.grid.start)];
    for (int s : reachable_states(base, start, sc.horizon)) {
      cells.push_back(base.state_cell[s]);
    }
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  ValueTable table;
  table.states = cells;
  table.mu_epsilon = cfg.mu_epsilon;
  table.seed = cfg.solver.seed;
  for (size_t i = 0; i < cells.size(); ++i) {
    table.index[cells[i]] = static_cast<int>(i);
  }

  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const int nc = static_cast<int>(cells.size());
  table.value.assign(
      nt, std::vector<std::vector<double>>(nb, std::vector<double>(nc, 0.0)));
  table.policy.assign(nt, std::vector<std::vector<PolicyTable>>(
                              nb, std::vector<PolicyTable>(nc)));

  std::vector<TransitionKernel> kernels(nb);
  std::vector<std::vector<double>> rewards(nb);
  for (int w = 0; w < nb; ++w) {
    kernels[w] = build_transition(sc, w);
    rewards[w] = reward_vector(sc, kernels[w]);
  }

  parallel_for(nt * nb * nc, cfg.jobs, [&](int task) {
    int theta = task / (nb * nc);
    int omega = (task / nc) % nb;
    int ci = task % nc;
    const TransitionKernel& k = kernels[omega];
    int s0 = k.cell_state[cells[ci]];
    if (s0 < 0) {
      throw SolverError(
          fmt::format("cell {} is not a state of barrier kernel {}", cells[ci],
                      omega));
    }

    const int n = k.num_states;
    std::vector<double> mu(n, 0.0);
    double eps = cfg.mu_epsilon;
    int free_states = n - 1;
    for (int s = 0; s < free_states; ++s) mu[s] = eps / free_states;
    mu[s0] += 1.0;
    for (double& v : mu) v /= (1.0 + eps);

    MultiStartConfig local = cfg.solver;
    local.jobs = 1;
    local.seed = derive_seed(cfg.solver.seed, static_cast<uint64_t>(task) + 1);
    SadSolution sol = solve_sad_mdp(k, sc.representations[theta],
                                    rewards[omega], mu, sc.discount, local);
    table.value[theta][omega][ci] = sol.eval.state_values[s0];
    table.policy[theta][omega][ci] = std::move(sol.policy);
  });

  return table;
}

}  // namespace repcon
