#include "repcon/phase1.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace repcon {

namespace {

std::vector<double> discount_powers(double beta, int horizon) {
  std::vector<double> p(horizon + 1, 1.0);
  for (int t = 1; t <= horizon; ++t) p[t] = p[t - 1] * beta;
  return p;
}

constexpr std::array<double, kNumActions> kUniformRow{0.25, 0.25, 0.25, 0.25};

const std::array<double, kNumActions>& profile_row(
    const AttackerProfile& profile, int theta, int superstate) {
  if (superstate < 0) return kUniformRow;
  return profile.policy[theta].rows[superstate];
}

}  // namespace

GameTree enumerate_tree(const TransitionKernel& k, int start_state,
                        int horizon) {
  if (horizon < 0) throw SolverError("tree horizon must be nonnegative");
  long long internal = ((1LL << (2 * horizon)) - 1) / 3;
  long long total = ((1LL << (2 * (horizon + 1))) - 1) / 3;
  if (horizon > 11 || total > (1LL << 26)) {
    throw SolverError(fmt::format("horizon {} needs {} tree nodes", horizon,
                                  total));
  }
  GameTree t;
  t.horizon = horizon;
  t.num_nodes = static_cast<int>(total);
  t.first_leaf = static_cast<int>(internal);
  t.depth.assign(t.num_nodes, 0);
  t.state.assign(t.num_nodes, 0);
  t.parent.assign(t.num_nodes, -1);
  t.action_in.assign(t.num_nodes, -1);
  t.state[0] = start_state;
  for (int h = 0; h < t.first_leaf; ++h) {
    for (int a = 0; a < kNumActions; ++a) {
      int c = GameTree::child(h, a);
      t.depth[c] = t.depth[h] + 1;
      t.state[c] = k.succ[t.state[h]][a];
      t.parent[c] = h;
      t.action_in[c] = a;
    }
  }
  return t;
}

std::vector<int> node_superstates(const GameTree& tree,
                                  const TransitionKernel& k,
                                  const Scenario& sc) {
  const int nt = sc.num_types();
  std::vector<int> flat(static_cast<size_t>(tree.num_nodes) * nt, -1);
  for (int h = 0; h < tree.num_nodes; ++h) {
    int cell = k.state_cell[tree.state[h]];
    if (cell < 0) continue;
    for (int theta = 0; theta < nt; ++theta) {
      flat[static_cast<size_t>(h) * nt + theta] =
          sc.representations[theta].cell_to_superstate[cell];
    }
  }
  return flat;
}

Belief update_belief(const Belief& prior,
                     const std::vector<double>& likelihood) {
  if (prior.size() != likelihood.size()) {
    throw SolverError("belief update: prior and likelihood sizes differ");
  }
  Belief post(prior.size(), 0.0);
  double total = 0.0;
  for (size_t i = 0; i < prior.size(); ++i) {
    post[i] = prior[i] * likelihood[i];
    total += post[i];
  }
  if (total <= 1e-15) {
    throw SolverError(
        "off-equilibrium observation: total likelihood is zero, the posterior "
        "is undefined");
  }
  for (double& p : post) p /= total;
  return post;
}

Belief belief_product_form(
    const Belief& prior, const std::vector<std::vector<double>>& step_likelihoods) {
  Belief post = prior;
  double total = 0.0;
  for (size_t theta = 0; theta < prior.size(); ++theta) {
    for (const std::vector<double>& step : step_likelihoods) {
      if (step.size() != prior.size()) {
        throw SolverError("belief update: prior and likelihood sizes differ");
      }
      post[theta] *= step[theta];
    }
    total += post[theta];
  }
  if (total <= 1e-15) {
    throw SolverError(
        "off-equilibrium observation: total likelihood is zero, the posterior "
        "is undefined");
  }
  for (double& p : post) p /= total;
  return post;
}

OccupationTree induced_occupation(const GameTree& tree, const Scenario& sc,
                                  const std::vector<int>& node_superstate_flat,
                                  const AttackerProfile& profile) {
  const int nt = sc.num_types();
  const double beta = sc.discount;
  OccupationTree occ;
  occ.z.assign(nt, std::vector<std::array<double, kNumActions>>(
                       tree.num_nodes, {0.0, 0.0, 0.0, 0.0}));
  occ.node_mass.assign(nt, std::vector<double>(tree.num_nodes, 0.0));
  for (int theta = 0; theta < nt; ++theta) {
    occ.node_mass[theta][0] = sc.prior[theta];
  }
  for (int h = 0; h < tree.first_leaf; ++h) {
    for (int theta = 0; theta < nt; ++theta) {
      double mass = occ.node_mass[theta][h];
      if (mass == 0.0) continue;
      const auto& row = profile_row(
          profile, theta, node_superstate_flat[static_cast<size_t>(h) * nt + theta]);
      for (int a = 0; a < kNumActions; ++a) {
        double za = mass * row[a];
        occ.z[theta][h][a] = za;
        occ.node_mass[theta][GameTree::child(h, a)] = beta * za;
      }
    }
  }
  return occ;
}

LeafValues collect_leaf_values(const GameTree& tree, const TransitionKernel& k,
                               const Scenario& sc, const ValueTable& table) {
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const int num_leaves = tree.num_nodes - tree.first_leaf;
  LeafValues leaves;
  leaves.value.assign(
      num_leaves,
      std::vector<std::vector<double>>(nt, std::vector<double>(nb, 0.0)));
  for (int j = 0; j < num_leaves; ++j) {
    int cell = k.state_cell[tree.state[tree.first_leaf + j]];
    if (cell < 0) continue;  // absorbed before the deployment: nothing left
    for (int theta = 0; theta < nt; ++theta) {
      for (int omega = 0; omega < nb; ++omega) {
        leaves.value[j][theta][omega] = table.v(theta, omega, cell);
      }
    }
  }
  return leaves;
}

ObjectiveBreakdown evaluate_objective(const GameTree& tree,
                                      const TransitionKernel& k,
                                      const Scenario& sc,
                                      const OccupationTree& occ,
                                      const LeafValues& leaves,
                                      double tie_tol) {
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const int num_leaves = tree.num_nodes - tree.first_leaf;
  std::vector<double> r = reward_vector(sc, k);

  ObjectiveBreakdown out;
  for (int h = 0; h < tree.first_leaf; ++h) {
    double rs = r[tree.state[h]];
    if (rs == 0.0) continue;
    for (int theta = 0; theta < nt; ++theta) {
      out.stage += occ.node_mass[theta][h] * rs;
    }
  }

  out.leaf_choice.assign(num_leaves, -1);
  out.tie_set.assign(num_leaves, {});
  std::vector<double> vals(nb, 0.0);
  for (int j = 0; j < num_leaves; ++j) {
    int node = tree.first_leaf + j;
    double mass = 0.0;
    for (int theta = 0; theta < nt; ++theta) mass += occ.node_mass[theta][node];
    if (mass <= 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    int choice = -1;
    for (int omega = 0; omega < nb; ++omega) {
      double v = 0.0;
      for (int theta = 0; theta < nt; ++theta) {
        v += occ.node_mass[theta][node] * leaves.value[j][theta][omega];
      }
      vals[omega] = v;
      if (v < best) {
        best = v;
        choice = omega;
      }
    }
    out.leaf_choice[j] = choice;
    for (int omega = 0; omega < nb; ++omega) {
      if (vals[omega] <= best + tie_tol) out.tie_set[j].push_back(omega);
    }
    out.leaf += best;
  }
  out.total = out.stage + out.leaf;
  return out;
}

Phase1LpSolution solve_phase1_lp(const GameTree& tree,
                                 const TransitionKernel& k, const Scenario& sc,
                                 const LeafValues& leaves) {
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const int T = tree.horizon;
  const int num_leaves = tree.num_nodes - tree.first_leaf;
  const double beta = sc.discount;
  std::vector<double> bp = discount_powers(beta, T);
  std::vector<double> r = reward_vector(sc, k);

  // Discounted stage reward collected along each root-to-leaf path.
  std::vector<double> path_reward(num_leaves, 0.0);
  std::vector<double> prefix(std::max(tree.first_leaf, 1), 0.0);
  if (tree.first_leaf > 0) prefix[0] = r[tree.state[0]];
  for (int h = 0; h < tree.first_leaf; ++h) {
    for (int a = 0; a < kNumActions; ++a) {
      int c = GameTree::child(h, a);
      if (c < tree.first_leaf) {
        prefix[c] = prefix[h] + bp[tree.depth[c]] * r[tree.state[c]];
      } else {
        path_reward[c - tree.first_leaf] = prefix[h];
      }
    }
  }

  // Leaves with the same terminal state and path reward are interchangeable;
  // price one representative per group.
  struct Group {
    int repr_leaf;
    double reward;
  };
  std::map<std::pair<int, long long>, int> group_of;
  std::vector<Group> groups;
  for (int j = 0; j < num_leaves; ++j) {
    std::pair<int, long long> key{tree.state[tree.first_leaf + j],
                                  std::llround(path_reward[j] * 1e12)};
    if (group_of.emplace(key, static_cast<int>(groups.size())).second) {
      groups.push_back({j, path_reward[j]});
    }
  }

  auto group_value = [&](int gi, const std::vector<double>& q) {
    const Group& g = groups[gi];
    double best = std::numeric_limits<double>::infinity();
    for (int omega = 0; omega < nb; ++omega) {
      double v = 0.0;
      for (int theta = 0; theta < nt; ++theta) {
        v += q[theta] * leaves.value[g.repr_leaf][theta][omega];
      }
      best = std::min(best, v);
    }
    return g.reward + bp[T] * best;
  };

  struct Column {
    int group;
    std::vector<double> q;
    double value;
  };
  std::vector<Column> columns;
  for (int theta = 0; theta < nt; ++theta) {
    std::vector<double> q(nt, 0.0);
    q[theta] = 1.0;
    int best_group = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int gi = 0; gi < static_cast<int>(groups.size()); ++gi) {
      double v = group_value(gi, q);
      if (v > best) {
        best = v;
        best_group = gi;
      }
    }
    columns.push_back({best_group, q, best});
  }

  Phase1LpSolution out;
  LpSolution master;
  int rounds = 0;
  double worst_reduced = 0.0;
  for (; rounds < 400; ++rounds) {
    LinearProgram lp;
    lp.num_vars = static_cast<int>(columns.size());
    lp.c.resize(lp.num_vars);
    lp.a_eq.assign(nt, std::vector<double>(lp.num_vars, 0.0));
    lp.b_eq = sc.prior;
    for (int ci = 0; ci < lp.num_vars; ++ci) {
      lp.c[ci] = columns[ci].value;
      for (int theta = 0; theta < nt; ++theta) {
        lp.a_eq[theta][ci] = columns[ci].q[theta];
      }
    }
    master = solve_lp(lp);
    if (master.status != LpStatus::Optimal) {
      throw SolverError(fmt::format("path-mixture master LP failed: {}",
                                    master.diagnostics));
    }

    // Pricing: per group, best posterior against the current duals.
    worst_reduced = 0.0;
    std::vector<Column> added;
    for (int gi = 0; gi < static_cast<int>(groups.size()); ++gi) {
      LinearProgram price;
      price.num_vars = nt + 1;  // posterior q and the epigraph variable
      price.c.assign(nt + 1, 0.0);
      for (int theta = 0; theta < nt; ++theta) {
        price.c[theta] = -master.dual_eq[theta];
      }
      price.c[nt] = bp[T];
      price.free_var.assign(nt + 1, 0);
      price.free_var[nt] = 1;
      price.a_eq.assign(1, std::vector<double>(nt + 1, 0.0));
      for (int theta = 0; theta < nt; ++theta) price.a_eq[0][theta] = 1.0;
      price.b_eq = {1.0};
      price.a_ub.assign(nb, std::vector<double>(nt + 1, 0.0));
      price.b_ub.assign(nb, 0.0);
      for (int omega = 0; omega < nb; ++omega) {
        price.a_ub[omega][nt] = 1.0;
        for (int theta = 0; theta < nt; ++theta) {
          price.a_ub[omega][theta] =
              -leaves.value[groups[gi].repr_leaf][theta][omega];
        }
      }
      LpSolution ps = solve_lp(price);
      if (ps.status != LpStatus::Optimal) {
        throw SolverError(fmt::format("pricing LP failed: {}", ps.diagnostics));
      }
      double reduced = ps.value + groups[gi].reward;
      if (reduced > worst_reduced) worst_reduced = reduced;
      if (reduced > 1e-10) {
        Column col;
        col.group = gi;
        col.q.assign(ps.x.begin(), ps.x.begin() + nt);
        // Snap the posterior onto the simplex and price it exactly.
        double qs = 0.0;
        for (double& v : col.q) {
          v = std::max(v, 0.0);
          qs += v;
        }
        if (qs <= 0.0) continue;
        for (double& v : col.q) v /= qs;
        col.value = group_value(gi, col.q);
        added.push_back(std::move(col));
      }
    }
    if (added.empty()) break;
    for (Column& c : added) columns.push_back(std::move(c));
  }

  double dual_bound = 0.0;
  for (int theta = 0; theta < nt; ++theta) {
    dual_bound += sc.prior[theta] * master.dual_eq[theta];
  }
  out.value = master.value;
  out.dual = master.dual_eq;
  out.columns = static_cast<int>(columns.size());
  out.pricing_rounds = rounds;
  out.certificate_gap =
      std::max(std::abs(master.value - dual_bound), worst_reduced);

  // Rebuild occupation flows from the supported path atoms.
  out.occupation.z.assign(nt, std::vector<std::array<double, kNumActions>>(
                                  tree.num_nodes, {0.0, 0.0, 0.0, 0.0}));
  out.occupation.node_mass.assign(nt,
                                  std::vector<double>(tree.num_nodes, 0.0));
  for (size_t ci = 0; ci < columns.size(); ++ci) {
    double lambda = master.x[ci];
    if (lambda <= 1e-14) continue;
    int leaf_node = tree.first_leaf + groups[columns[ci].group].repr_leaf;
    std::vector<std::pair<int, int>> path;  // (node, action taken)
    for (int node = leaf_node; tree.parent[node] >= 0;
         node = tree.parent[node]) {
      path.push_back({tree.parent[node], tree.action_in[node]});
    }
    std::reverse(path.begin(), path.end());
    for (int theta = 0; theta < nt; ++theta) {
      double atom = lambda * columns[ci].q[theta];
      if (atom <= 0.0) continue;
      for (size_t t = 0; t < path.size(); ++t) {
        out.occupation.z[theta][path[t].first][path[t].second] +=
            atom * bp[t];
        out.occupation.node_mass[theta][path[t].first] += atom * bp[t];
      }
      out.occupation.node_mass[theta][leaf_node] += atom * bp[path.size()];
    }
  }
  return out;
}

std::vector<Belief> extract_beliefs(const GameTree& tree,
                                    const OccupationTree& occ,
                                    const Belief& prior) {
  const int nt = static_cast<int>(prior.size());
  std::vector<Belief> beliefs(tree.num_nodes, Belief(nt, 0.0));
  for (int node = 0; node < tree.num_nodes; ++node) {
    double total = 0.0;
    for (int theta = 0; theta < nt; ++theta) {
      total += occ.node_mass[theta][node];
    }
    if (total > 0.0) {
      for (int theta = 0; theta < nt; ++theta) {
        beliefs[node][theta] = occ.node_mass[theta][node] / total;
      }
    } else if (node == 0) {
      beliefs[node] = prior;
    } else {
      beliefs[node] = beliefs[tree.parent[node]];
    }
  }
  return beliefs;
}

std::vector<std::vector<double>> attacker_value_recursion(
    const GameTree& tree, const TransitionKernel& k, const Scenario& sc,
    const AttackerProfile& profile,
    const std::vector<int>& node_superstate_flat, const LeafValues& leaves,
    const DefenderRule& sigma) {
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const double beta = sc.discount;
  std::vector<double> r = reward_vector(sc, k);
  std::vector<std::vector<double>> w(
      nt, std::vector<double>(tree.num_nodes, 0.0));
  for (int theta = 0; theta < nt; ++theta) {
    for (int node = tree.first_leaf; node < tree.num_nodes; ++node) {
      int j = node - tree.first_leaf;
      double v = 0.0;
      for (int omega = 0; omega < nb; ++omega) {
        v += sigma.sigma[j][omega] * leaves.value[j][theta][omega];
      }
      w[theta][node] = v;
    }
    for (int h = tree.first_leaf - 1; h >= 0; --h) {
      const auto& row = profile_row(
          profile, theta,
          node_superstate_flat[static_cast<size_t>(h) * nt + theta]);
      double acc = 0.0;
      for (int a = 0; a < kNumActions; ++a) {
        acc += row[a] * w[theta][GameTree::child(h, a)];
      }
      w[theta][h] = r[tree.state[h]] + beta * acc;
    }
  }
  return w;
}

double defender_value_recursion(const GameTree& tree,
                                const TransitionKernel& k, const Scenario& sc,
                                int node, const Belief& belief,
                                const AttackerProfile& profile,
                                const std::vector<int>& node_superstate_flat,
                                const LeafValues& leaves,
                                const DefenderRule& sigma) {
  std::vector<std::vector<double>> w = attacker_value_recursion(
      tree, k, sc, profile, node_superstate_flat, leaves, sigma);
  double total = 0.0;
  for (int theta = 0; theta < sc.num_types(); ++theta) {
    total += belief[theta] * w[theta][node];
  }
  return total;
}

namespace {

double factored_value(const GameTree& tree, const Scenario& sc,
                      const std::vector<double>& reward, int node,
                      const std::vector<double>& belief,
                      const AttackerProfile& profile,
                      const std::vector<int>& nsflat, const LeafValues& leaves,
                      const DefenderRule& sigma) {
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  double mass = 0.0;
  for (double b : belief) mass += b;
  if (!(mass > 0.0)) return 0.0;
  if (node >= tree.first_leaf) {
    int j = node - tree.first_leaf;
    double v = 0.0;
    for (int theta = 0; theta < nt; ++theta) {
      double lv = 0.0;
      for (int omega = 0; omega < nb; ++omega) {
        lv += sigma.sigma[j][omega] * leaves.value[j][theta][omega];
      }
      v += belief[theta] * lv;
    }
    return v;
  }
  double acc = mass * reward[tree.state[node]];
  for (int a = 0; a < kNumActions; ++a) {
    double mixed = 0.0;
    std::vector<double> next(nt, 0.0);
    for (int theta = 0; theta < nt; ++theta) {
      const auto& row = profile_row(
          profile, theta, nsflat[static_cast<size_t>(node) * nt + theta]);
      next[theta] = belief[theta] * row[a];
      mixed += next[theta];
    }
    if (mixed <= 0.0) continue;
    for (int theta = 0; theta < nt; ++theta) next[theta] /= mixed;
    acc += sc.discount * mixed *
           factored_value(tree, sc, reward, GameTree::child(node, a), next,
                          profile, nsflat, leaves, sigma);
  }
  return acc;
}

}  // namespace

double defender_value_factored(const GameTree& tree, const TransitionKernel& k,
                               const Scenario& sc, int node,
                               const Belief& belief,
                               const AttackerProfile& profile,
                               const std::vector<int>& node_superstate_flat,
                               const LeafValues& leaves,
                               const DefenderRule& sigma) {
  std::vector<double> r = reward_vector(sc, k);
  return factored_value(tree, sc, r, node, belief, profile,
                        node_superstate_flat, leaves, sigma);
}

DefenderRule defender_best_response(const GameTree& tree,
                                    const TransitionKernel& k,
                                    const Scenario& sc,
                                    const OccupationTree& occ,
                                    const LeafValues& leaves,
                                    const std::vector<Belief>& beliefs,
                                    const std::vector<int>& node_superstate_flat,
                                    const AttackerProfile& profile,
                                    double tie_tol) {
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const int num_leaves = tree.num_nodes - tree.first_leaf;
  const double beta = sc.discount;
  std::vector<double> r = reward_vector(sc, k);

  DefenderRule rule;
  rule.sigma.assign(num_leaves, std::vector<double>(nb, 0.0));
  std::vector<std::vector<int>> lp_ties;  // per tie leaf: candidate omegas
  std::vector<int> lp_leaf;

  for (int j = 0; j < num_leaves; ++j) {
    int node = tree.first_leaf + j;
    std::vector<double> weight(nt, 0.0);
    double mass = 0.0;
    for (int theta = 0; theta < nt; ++theta) {
      weight[theta] = occ.node_mass[theta][node];
      mass += weight[theta];
    }
    bool reachable = mass > 0.0;
    if (!reachable) weight = beliefs[node];

    double best = std::numeric_limits<double>::infinity();
    int choice = 0;
    std::vector<double> vals(nb, 0.0);
    for (int omega = 0; omega < nb; ++omega) {
      double v = 0.0;
      for (int theta = 0; theta < nt; ++theta) {
        v += weight[theta] * leaves.value[j][theta][omega];
      }
      vals[omega] = v;
      if (v < best) {
        best = v;
        choice = omega;
      }
    }
    rule.sigma[j][choice] = 1.0;
    if (!reachable) continue;
    std::vector<int> ties;
    for (int omega = 0; omega < nb; ++omega) {
      if (vals[omega] <= best + tie_tol * std::max(1.0, mass)) {
        ties.push_back(omega);
      }
    }
    if (ties.size() > 1) {
      lp_ties.push_back(ties);
      lp_leaf.push_back(j);
    }
  }

  if (lp_leaf.empty()) return rule;
  rule.tie_lp_used = true;

  // Variables: one weight per (tie leaf, candidate omega), plus the bound t.
  std::vector<std::pair<int, int>> var_key;  // (tie index, omega)
  std::vector<int> var_offset(lp_leaf.size() + 1, 0);
  for (size_t ti = 0; ti < lp_leaf.size(); ++ti) {
    var_offset[ti] = static_cast<int>(var_key.size());
    for (int omega : lp_ties[ti]) {
      var_key.push_back({static_cast<int>(ti), omega});
    }
  }
  var_offset[lp_leaf.size()] = static_cast<int>(var_key.size());
  const int nv = static_cast<int>(var_key.size());
  if (nv > 512) {
    rule.tie_lp_feasible = false;
    for (size_t ti = 0; ti < lp_leaf.size(); ++ti) {
      auto& row = rule.sigma[lp_leaf[ti]];
      std::fill(row.begin(), row.end(), 0.0);
      for (int omega : lp_ties[ti]) row[omega] = 1.0 / lp_ties[ti].size();
    }
    return rule;
  }

  // Attacker continuation values as affine functions of the tie weights:
  // w(node) = coeff(0) + sum_v coeff(1+v) * sigma_v.
  std::vector<Eigen::MatrixXd> w(nt);
  std::map<int, int> tie_of_leaf;
  for (size_t ti = 0; ti < lp_leaf.size(); ++ti) {
    tie_of_leaf[lp_leaf[ti]] = static_cast<int>(ti);
  }
  for (int theta = 0; theta < nt; ++theta) {
    w[theta] = Eigen::MatrixXd::Zero(tree.num_nodes, 1 + nv);
    for (int node = tree.first_leaf; node < tree.num_nodes; ++node) {
      int j = node - tree.first_leaf;
      auto it = tie_of_leaf.find(j);
      if (it == tie_of_leaf.end()) {
        double v = 0.0;
        for (int omega = 0; omega < nb; ++omega) {
          v += rule.sigma[j][omega] * leaves.value[j][theta][omega];
        }
        w[theta](node, 0) = v;
      } else {
        int ti = it->second;
        for (int vi = var_offset[ti]; vi < var_offset[ti + 1]; ++vi) {
          w[theta](node, 1 + vi) = leaves.value[j][theta][var_key[vi].second];
        }
      }
    }
    for (int h = tree.first_leaf - 1; h >= 0; --h) {
      const auto& row = profile_row(
          profile, theta,
          node_superstate_flat[static_cast<size_t>(h) * nt + theta]);
      auto acc = w[theta].row(h);
      acc.setZero();
      for (int a = 0; a < kNumActions; ++a) {
        acc += beta * row[a] * w[theta].row(GameTree::child(h, a));
      }
      w[theta](h, 0) += r[tree.state[h]];
    }
  }

  // Aggregated gradient of the type value with respect to each policy row:
  // grad(theta, superstate, a) = sum over visits of mass * beta * w(child).
  LinearProgram lp;
  lp.num_vars = nv + 1;
  lp.c.assign(nv + 1, 0.0);
  lp.c[nv] = -1.0;
  lp.free_var.assign(nv + 1, 0);
  lp.free_var[nv] = 1;
  lp.a_eq.assign(lp_leaf.size(), std::vector<double>(nv + 1, 0.0));
  lp.b_eq.assign(lp_leaf.size(), 1.0);
  for (int vi = 0; vi < nv; ++vi) lp.a_eq[var_key[vi].first][vi] = 1.0;

  for (int theta = 0; theta < nt; ++theta) {
    int ns = sc.representations[theta].num_superstates();
    std::vector<std::vector<Eigen::RowVectorXd>> grad(
        ns, std::vector<Eigen::RowVectorXd>(
                kNumActions, Eigen::RowVectorXd::Zero(1 + nv)));
    std::vector<uint8_t> seen(ns, 0);
    for (int h = 0; h < tree.first_leaf; ++h) {
      double mass = occ.node_mass[theta][h];
      if (mass <= 0.0) continue;
      int g = node_superstate_flat[static_cast<size_t>(h) * nt + theta];
      if (g < 0) continue;
      seen[g] = 1;
      for (int a = 0; a < kNumActions; ++a) {
        grad[g][a] += mass * beta * w[theta].row(GameTree::child(h, a));
      }
    }
    for (int g = 0; g < ns; ++g) {
      if (!seen[g]) continue;
      const auto& row = profile.policy[theta].rows[g];
      Eigen::RowVectorXd value = Eigen::RowVectorXd::Zero(1 + nv);
      for (int a = 0; a < kNumActions; ++a) value += row[a] * grad[g][a];
      for (int a = 0; a < kNumActions; ++a) {
        Eigen::RowVectorXd diff = grad[g][a] - value;
        std::vector<double> ubrow(nv + 1, 0.0);
        for (int vi = 0; vi < nv; ++vi) ubrow[vi] = diff(1 + vi);
        ubrow[nv] = -1.0;
        lp.a_ub.push_back(std::move(ubrow));
        lp.b_ub.push_back(-diff(0));
      }
    }
  }

  LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::Optimal) {
    rule.tie_lp_feasible = false;
    for (size_t ti = 0; ti < lp_leaf.size(); ++ti) {
      auto& row = rule.sigma[lp_leaf[ti]];
      std::fill(row.begin(), row.end(), 0.0);
      for (int omega : lp_ties[ti]) row[omega] = 1.0 / lp_ties[ti].size();
    }
    return rule;
  }
  rule.tie_slack = sol.x[nv];
  for (size_t ti = 0; ti < lp_leaf.size(); ++ti) {
    auto& row = rule.sigma[lp_leaf[ti]];
    std::fill(row.begin(), row.end(), 0.0);
    double total = 0.0;
    for (int vi = var_offset[ti]; vi < var_offset[ti + 1]; ++vi) {
      double v = std::max(sol.x[vi], 0.0);
      row[var_key[vi].second] = v;
      total += v;
    }
    if (total > 0.0) {
      for (double& v : row) v /= total;
    } else {
      for (int omega : lp_ties[ti]) row[omega] = 1.0 / lp_ties[ti].size();
    }
  }
  return rule;
}

namespace {

// Shared machinery for single-type ascent against fixed leaf payoffs.
struct TypeAscent {
  const GameTree* tree;
  const Scenario* sc;
  int theta;
  const std::vector<int>* nsflat;
  std::vector<double> reward_at_node;  // per internal node
  std::vector<double> leaf_payoff;     // per leaf
  std::vector<int> active;             // superstates with tree presence
  std::vector<int> block_of;           // superstate -> block or -1

  double eval(const std::vector<std::array<double, kNumActions>>& rows,
              std::vector<double>* grad, double* stage_out = nullptr,
              double* leaf_out = nullptr) const {
    const GameTree& t = *tree;
    const int nt = sc->num_types();
    const double beta = sc->discount;
    std::vector<double> mass(t.num_nodes, 0.0);
    mass[0] = 1.0;
    double stage = 0.0;
    for (int h = 0; h < t.first_leaf; ++h) {
      if (mass[h] == 0.0) continue;
      stage += mass[h] * reward_at_node[h];
      int g = (*nsflat)[static_cast<size_t>(h) * nt + theta];
      const auto& row = g >= 0 ? rows[g] : kUniformRow;
      for (int a = 0; a < kNumActions; ++a) {
        mass[GameTree::child(h, a)] += beta * mass[h] * row[a];
      }
    }
    double leaf = 0.0;
    for (int node = t.first_leaf; node < t.num_nodes; ++node) {
      if (mass[node] != 0.0) leaf += mass[node] * leaf_payoff[node - t.first_leaf];
    }
    if (grad) {
      std::vector<double> w(t.num_nodes, 0.0);
      for (int node = t.first_leaf; node < t.num_nodes; ++node) {
        w[node] = leaf_payoff[node - t.first_leaf];
      }
      for (int h = t.first_leaf - 1; h >= 0; --h) {
        int g = (*nsflat)[static_cast<size_t>(h) * nt + theta];
        const auto& row = g >= 0 ? rows[g] : kUniformRow;
        double acc = 0.0;
        for (int a = 0; a < kNumActions; ++a) {
          acc += row[a] * w[GameTree::child(h, a)];
        }
        w[h] = reward_at_node[h] + beta * acc;
      }
      grad->assign(active.size() * kNumActions, 0.0);
      for (int h = 0; h < t.first_leaf; ++h) {
        if (mass[h] == 0.0) continue;
        int g = (*nsflat)[static_cast<size_t>(h) * nt + theta];
        if (g < 0) continue;
        int b = block_of[g];
        for (int a = 0; a < kNumActions; ++a) {
          (*grad)[b * kNumActions + a] +=
              mass[h] * beta * w[GameTree::child(h, a)];
        }
      }
    }
    if (stage_out) *stage_out = stage;
    if (leaf_out) *leaf_out = leaf;
    return stage + leaf;
  }
};

struct TypeAscentResult {
  std::vector<std::array<double, kNumActions>> rows;
  double value = 0.0;
  double stage = 0.0;
  double leaf = 0.0;
};

TypeAscentResult maximize_type_value(const GameTree& tree,
                                     const TransitionKernel& k,
                                     const Scenario& sc, int theta,
                                     const std::vector<int>& nsflat,
                                     const std::vector<double>& leaf_payoff,
                                     const MultiStartConfig& config) {
  TypeAscent problem;
  problem.tree = &tree;
  problem.sc = &sc;
  problem.theta = theta;
  problem.nsflat = &nsflat;
  problem.leaf_payoff = leaf_payoff;
  std::vector<double> r = reward_vector(sc, k);
  problem.reward_at_node.resize(tree.first_leaf);
  for (int h = 0; h < tree.first_leaf; ++h) {
    problem.reward_at_node[h] = r[tree.state[h]];
  }
  int ns = sc.representations[theta].num_superstates();
  problem.block_of.assign(ns, -1);
  const int nt = sc.num_types();
  for (int h = 0; h < tree.first_leaf; ++h) {
    int g = nsflat[static_cast<size_t>(h) * nt + theta];
    if (g >= 0 && problem.block_of[g] < 0) {
      problem.block_of[g] = 0;
      problem.active.push_back(g);
    }
  }
  std::sort(problem.active.begin(), problem.active.end());
  for (size_t b = 0; b < problem.active.size(); ++b) {
    problem.block_of[problem.active[b]] = static_cast<int>(b);
  }

  auto rows_from_flat = [&](const std::vector<double>& x) {
    std::vector<std::array<double, kNumActions>> rows(ns, kUniformRow);
    for (size_t b = 0; b < problem.active.size(); ++b) {
      for (int a = 0; a < kNumActions; ++a) {
        rows[problem.active[b]][a] = x[b * kNumActions + a];
      }
    }
    return rows;
  };

  SimplexProduct domain;
  domain.block_sizes.assign(problem.active.size(), kNumActions);
  auto objective = [&](const std::vector<double>& x,
                       std::vector<double>* grad) {
    return problem.eval(rows_from_flat(x), grad);
  };
  MultiStartResult ms = multistart_maximize(objective, domain, config);

  TypeAscentResult out;
  out.rows = rows_from_flat(ms.x);
  out.value = problem.eval(out.rows, nullptr, &out.stage, &out.leaf);

  for (int round = 0; round < 64; ++round) {
    bool improved = false;
    for (int g : problem.active) {
      for (int a = 0; a < kNumActions; ++a) {
        if (out.rows[g][a] >= 1.0 - 1e-12) continue;
        auto cand = out.rows;
        cand[g] = {0.0, 0.0, 0.0, 0.0};
        cand[g][a] = 1.0;
        double stage = 0.0, leaf = 0.0;
        double v = problem.eval(cand, nullptr, &stage, &leaf);
        if (v > out.value + 1e-12) {
          out.rows = std::move(cand);
          out.value = v;
          out.stage = stage;
          out.leaf = leaf;
          improved = true;
        }
      }
    }
    if (!improved) break;
  }

  // Rows the optimal flow never visits keep whatever the start point held.
  // They contribute nothing here, but these results get reused as warm
  // starts for the joint ascent, where a later mass shift can route through
  // them; settle each on the greedy continuation of the polished solution.
  {
    const double beta = sc.discount;
    std::vector<double> mass(tree.num_nodes, 0.0);
    mass[0] = 1.0;
    std::vector<double> vis(problem.active.size(), 0.0);
    for (int h = 0; h < tree.first_leaf; ++h) {
      if (mass[h] == 0.0) continue;
      int g = nsflat[static_cast<size_t>(h) * nt + theta];
      const auto& row = g >= 0 ? out.rows[g] : kUniformRow;
      if (g >= 0) vis[problem.block_of[g]] += mass[h];
      for (int a = 0; a < kNumActions; ++a) {
        mass[GameTree::child(h, a)] += mass[h] * row[a];
      }
    }
    std::vector<int> entry(problem.active.size(), -1);
    for (int h = 0; h < tree.first_leaf; ++h) {
      int g = nsflat[static_cast<size_t>(h) * nt + theta];
      if (g >= 0 && entry[problem.block_of[g]] < 0) {
        entry[problem.block_of[g]] = h;
      }
    }
    std::vector<double> w(tree.num_nodes, 0.0);
    for (int sweep = 0; sweep <= sc.horizon; ++sweep) {
      for (int node = tree.first_leaf; node < tree.num_nodes; ++node) {
        w[node] = leaf_payoff[node - tree.first_leaf];
      }
      for (int h = tree.first_leaf - 1; h >= 0; --h) {
        int g = nsflat[static_cast<size_t>(h) * nt + theta];
        const auto& row = g >= 0 ? out.rows[g] : kUniformRow;
        double acc = 0.0;
        for (int a = 0; a < kNumActions; ++a) {
          acc += row[a] * w[GameTree::child(h, a)];
        }
        w[h] = problem.reward_at_node[h] + beta * acc;
      }
      for (size_t b = 0; b < problem.active.size(); ++b) {
        if (vis[b] > 0.0 || entry[b] < 0) continue;
        int best_a = 0;
        double best_w = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < kNumActions; ++a) {
          double v = w[GameTree::child(entry[b], a)];
          if (v > best_w) {
            best_w = v;
            best_a = a;
          }
        }
        auto& row = out.rows[problem.active[b]];
        row = {0.0, 0.0, 0.0, 0.0};
        row[best_a] = 1.0;
      }
    }
  }
  return out;
}

std::vector<double> frozen_leaf_weights(const GameTree& tree,
                                        const OccupationTree& occ,
                                        const std::vector<double>& prior,
                                        int node) {
  const int nt = static_cast<int>(prior.size());
  int cur = node;
  while (cur >= 0) {
    double total = 0.0;
    for (int theta = 0; theta < nt; ++theta) {
      total += occ.node_mass[theta][cur];
    }
    if (total > 0.0) {
      std::vector<double> w(nt, 0.0);
      for (int theta = 0; theta < nt; ++theta) {
        w[theta] = occ.node_mass[theta][cur];
      }
      return w;
    }
    cur = tree.parent[cur];
  }
  return prior;
}

}  // namespace

EquilibriumSolution solve_phase1_sad(const Scenario& sc,
                                     const ValueTable& table,
                                     const Phase1Config& cfg) {
  TransitionKernel k = build_transition(sc);
  int start = k.cell_state[sc.grid.cell_index(sc.grid.start)];
  GameTree tree = enumerate_tree(k, start, sc.horizon);
  std::vector<int> nsflat = node_superstates(tree, k, sc);
  LeafValues leaves = collect_leaf_values(tree, k, sc, table);
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const double beta = sc.discount;
  std::vector<double> bp = discount_powers(beta, sc.horizon);
  const int num_leaves = tree.num_nodes - tree.first_leaf;

  // Blocks: per type, the superstates that actually occur at decision nodes.
  std::vector<std::vector<int>> active(nt);
  std::vector<std::vector<int>> block_of(nt);
  int num_blocks = 0;
  for (int theta = 0; theta < nt; ++theta) {
    block_of[theta].assign(sc.representations[theta].num_superstates(), -1);
    for (int h = 0; h < tree.first_leaf; ++h) {
      int g = nsflat[static_cast<size_t>(h) * nt + theta];
      if (g >= 0 && block_of[theta][g] < 0) {
        block_of[theta][g] = 0;
        active[theta].push_back(g);
      }
    }
    std::sort(active[theta].begin(), active[theta].end());
    for (size_t b = 0; b < active[theta].size(); ++b) {
      block_of[theta][active[theta][b]] = num_blocks + static_cast<int>(b);
    }
    num_blocks += static_cast<int>(active[theta].size());
  }

  SimplexProduct domain;
  domain.block_sizes.assign(num_blocks, kNumActions);

  auto profile_from_flat = [&](const std::vector<double>& x) {
    AttackerProfile profile;
    profile.policy.resize(nt);
    for (int theta = 0; theta < nt; ++theta) {
      profile.policy[theta].rows.assign(
          sc.representations[theta].num_superstates(), kUniformRow);
      for (int g : active[theta]) {
        int b = block_of[theta][g];
        for (int a = 0; a < kNumActions; ++a) {
          profile.policy[theta].rows[g][a] = x[b * kNumActions + a];
        }
      }
    }
    return profile;
  };

  std::vector<double> node_reward = reward_vector(sc, k);
  auto objective = [&](const std::vector<double>& x,
                       std::vector<double>* grad) -> double {
    AttackerProfile profile = profile_from_flat(x);
    OccupationTree occ = induced_occupation(tree, sc, nsflat, profile);
    ObjectiveBreakdown bd =
        evaluate_objective(tree, k, sc, occ, leaves, cfg.tie_tol);
    if (!grad) return bd.total;

    // Backward continuation values per type, with the defender pinned to the
    // current per-leaf minimizer (frozen-weight argmin where unreachable).
    std::vector<int> omega_hat(num_leaves, 0);
    for (int j = 0; j < num_leaves; ++j) {
      if (bd.leaf_choice[j] >= 0) {
        omega_hat[j] = bd.leaf_choice[j];
        continue;
      }
      std::vector<double> wts =
          frozen_leaf_weights(tree, occ, sc.prior, tree.first_leaf + j);
      double best = std::numeric_limits<double>::infinity();
      for (int omega = 0; omega < nb; ++omega) {
        double v = 0.0;
        for (int theta = 0; theta < nt; ++theta) {
          v += wts[theta] * leaves.value[j][theta][omega];
        }
        if (v < best) {
          best = v;
          omega_hat[j] = omega;
        }
      }
    }
    grad->assign(num_blocks * kNumActions, 0.0);
    std::vector<double> w(tree.num_nodes, 0.0);
    for (int theta = 0; theta < nt; ++theta) {
      for (int node = tree.first_leaf; node < tree.num_nodes; ++node) {
        w[node] = leaves.value[node - tree.first_leaf][theta]
                              [omega_hat[node - tree.first_leaf]];
      }
      for (int h = tree.first_leaf - 1; h >= 0; --h) {
        const auto& row = profile_row(
            profile, theta, nsflat[static_cast<size_t>(h) * nt + theta]);
        double acc = 0.0;
        for (int a = 0; a < kNumActions; ++a) {
          acc += row[a] * w[GameTree::child(h, a)];
        }
        w[h] = node_reward[tree.state[h]] + beta * acc;
      }
      for (int h = 0; h < tree.first_leaf; ++h) {
        double mass = occ.node_mass[theta][h];
        if (mass == 0.0) continue;
        int g = nsflat[static_cast<size_t>(h) * nt + theta];
        if (g < 0) continue;
        int b = block_of[theta][g];
        for (int a = 0; a < kNumActions; ++a) {
          (*grad)[b * kNumActions + a] +=
              mass * beta * w[GameTree::child(h, a)];
        }
      }
    }
    return bd.total;
  };

  // Seed the joint ascent with each type's best response to a fixed
  // deployment (one start per pure barrier, one for the uniform mixture).
  // Random starts spread mass across stall leaves on deeper trees and the
  // ascent then stalls on that plateau; the best-response profiles start in
  // the pooling / separating support the optimum lives in.
  MultiStartConfig joint_cfg = cfg.solver;
  {
    MultiStartConfig br_cfg = cfg.solver;
    br_cfg.restarts = std::max(4, cfg.solver.restarts / 4);
    for (int pattern = 0; pattern <= nb; ++pattern) {
      std::vector<double> x0(static_cast<size_t>(num_blocks) * kNumActions,
                             0.0);
      for (int theta = 0; theta < nt; ++theta) {
        std::vector<double> payoff(num_leaves, 0.0);
        for (int j = 0; j < num_leaves; ++j) {
          if (pattern < nb) {
            payoff[j] = leaves.value[j][theta][pattern];
          } else {
            double acc = 0.0;
            for (int omega = 0; omega < nb; ++omega) {
              acc += leaves.value[j][theta][omega];
            }
            payoff[j] = acc / nb;
          }
        }
        br_cfg.seed =
            derive_seed(cfg.solver.seed,
                        500 + static_cast<uint64_t>(pattern) * 64 + theta);
        TypeAscentResult br =
            maximize_type_value(tree, k, sc, theta, nsflat, payoff, br_cfg);
        for (int g : active[theta]) {
          int b = block_of[theta][g];
          for (int a = 0; a < kNumActions; ++a) {
            x0[static_cast<size_t>(b) * kNumActions + a] = br.rows[g][a];
          }
        }
      }
      if (std::getenv("REPCON_DEBUG")) {
        fmt::print(stderr, "warm {} initial objective {:.9f}\n", pattern,
                   objective(x0, nullptr));
      }
      joint_cfg.warm_starts.push_back(std::move(x0));
    }
  }

  MultiStartResult ms = multistart_maximize(objective, domain, joint_cfg);
  if (std::getenv("REPCON_DEBUG")) {
    for (size_t i = 0; i < ms.restart_values.size(); ++i) {
      fmt::print(stderr, "restart {} -> {:.9f}\n", i, ms.restart_values[i]);
    }
    fmt::print(stderr, "best restart {} value {:.9f}\n", ms.best_restart,
               ms.value);
  }

  // Local refinement in three passes. First a greedy row polish: first-order
  // steps only adjust rows the current flow visits, so rows off the support
  // can finish on wall stalls and hold mass hostage; moving a whole row to
  // its best vertex cleans those up, while a genuinely mixed row survives
  // because every one of its vertices scores worse than the mix. Then snap
  // away projection dust, and finally sharpen each coordinate pair whose 1-d
  // slice has an interior peak by bisecting the sign change of its
  // directional derivative. The result is kept only if it held up.
  auto refine = [&](std::vector<double> x) {
    double cur = objective(x, nullptr);
    for (int sweep = 0; sweep < 64; ++sweep) {
      bool moved = false;
      for (int b = 0; b < num_blocks; ++b) {
        int best_a = -1;
        double best_v = cur;
        for (int a = 0; a < kNumActions; ++a) {
          std::vector<double> probe = x;
          for (int a2 = 0; a2 < kNumActions; ++a2) {
            probe[b * kNumActions + a2] = (a2 == a) ? 1.0 : 0.0;
          }
          double v = objective(probe, nullptr);
          if (v > best_v + 1e-12) {
            best_v = v;
            best_a = a;
          }
        }
        if (best_a >= 0) {
          for (int a2 = 0; a2 < kNumActions; ++a2) {
            x[b * kNumActions + a2] = (a2 == best_a) ? 1.0 : 0.0;
          }
          cur = best_v;
          moved = true;
        }
      }
      if (!moved) break;
    }
    std::vector<double> kept = x;

    for (int b = 0; b < num_blocks; ++b) {
      double sum = 0.0;
      for (int a = 0; a < kNumActions; ++a) {
        double& v = x[b * kNumActions + a];
        if (v < 1e-6) v = 0.0;
        sum += v;
      }
      if (sum > 0.0) {
        for (int a = 0; a < kNumActions; ++a) x[b * kNumActions + a] /= sum;
      }
    }
    // Steepest pair first: screen every coordinate pair's 1-d slice from the
    // current point and apply only the single most improving interior peak,
    // then rescan. Sweeping pairs in index order instead can lock in a small
    // bounce mix that blocks a larger kink on another row.
    double snapped = objective(x, nullptr);
    for (int round = 0; round < 64; ++round) {
      double round_best = snapped + 1e-12;
      std::vector<double> round_x;
      for (int b = 0; b < num_blocks; ++b) {
        for (int a1 = 0; a1 < kNumActions; ++a1) {
          for (int a2 = a1 + 1; a2 < kNumActions; ++a2) {
            double p = x[b * kNumActions + a1];
            double q = x[b * kNumActions + a2];
            double c = p + q;
            if (c < 1e-6) continue;
            auto slope = [&](double m) {
              std::vector<double> probe = x;
              probe[b * kNumActions + a1] = m;
              probe[b * kNumActions + a2] = c - m;
              std::vector<double> g;
              objective(probe, &g);
              return g[b * kNumActions + a1] - g[b * kNumActions + a2];
            };
            double lo = 0.0;
            double hi = c;
            if (!(slope(lo) > 0.0) || !(slope(hi) < 0.0)) continue;
            while (hi - lo > 1e-13) {
              double mid = 0.5 * (lo + hi);
              if (slope(mid) > 0.0) {
                lo = mid;
              } else {
                hi = mid;
              }
            }
            double m = 0.5 * (lo + hi);
            std::vector<double> cand = x;
            cand[b * kNumActions + a1] = m;
            cand[b * kNumActions + a2] = c - m;
            double v = objective(cand, nullptr);
            if (v > round_best) {
              round_best = v;
              round_x = std::move(cand);
            }
          }
        }
      }
      if (round_x.empty()) break;
      x = std::move(round_x);
      snapped = round_best;
    }
    if (snapped < cur - 1e-9) return std::make_pair(cur, std::move(kept));
    return std::make_pair(snapped, std::move(x));
  };

  // Refine the ascent winner, but also each warm start directly: the ascent
  // can scatter a clean warm start across stall paths it later cannot fully
  // retract, while polish plus pair bisection handles those profiles exactly.
  std::vector<double> x = ms.x;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int c = -1; c < static_cast<int>(joint_cfg.warm_starts.size()); ++c) {
    auto [v, rx] = refine(c < 0 ? ms.x : joint_cfg.warm_starts[c]);
    if (std::getenv("REPCON_DEBUG")) {
      fmt::print(stderr, "refine {} -> {:.9f}\n", c, v);
    }
    if (v > best_v) {
      best_v = v;
      x = std::move(rx);
    }
  }

  // Best-response rounds close the remaining gap. Resolve each type against
  // the deployment rule the current profile induces (tie mixing included)
  // and refine from that start. The rule prices off-support continuations
  // the way the equilibrium deployment does, which no pure-barrier warm
  // start can, so the rebuilt rows line up with the support the optimum
  // actually uses.
  for (int round = 0; round < 4; ++round) {
    AttackerProfile prof = profile_from_flat(x);
    OccupationTree occ = induced_occupation(tree, sc, nsflat, prof);
    std::vector<Belief> beliefs = extract_beliefs(tree, occ, sc.prior);
    DefenderRule rule = defender_best_response(tree, k, sc, occ, leaves,
                                               beliefs, nsflat, prof,
                                               cfg.tie_tol);
    std::vector<double> x0(static_cast<size_t>(num_blocks) * kNumActions,
                           0.0);
    MultiStartConfig br_cfg = cfg.solver;
    br_cfg.restarts = std::max(4, cfg.solver.restarts / 4);
    for (int theta = 0; theta < nt; ++theta) {
      std::vector<double> payoff(num_leaves, 0.0);
      for (int j = 0; j < num_leaves; ++j) {
        for (int omega = 0; omega < nb; ++omega) {
          payoff[j] += rule.sigma[j][omega] * leaves.value[j][theta][omega];
        }
      }
      br_cfg.seed = derive_seed(cfg.solver.seed,
                                800 + static_cast<uint64_t>(round) * 16 + theta);
      TypeAscentResult br =
          maximize_type_value(tree, k, sc, theta, nsflat, payoff, br_cfg);
      for (int g : active[theta]) {
        int b = block_of[theta][g];
        for (int a = 0; a < kNumActions; ++a) {
          x0[static_cast<size_t>(b) * kNumActions + a] = br.rows[g][a];
        }
      }
    }
    auto [v, rx] = refine(std::move(x0));
    if (std::getenv("REPCON_DEBUG")) {
      fmt::print(stderr, "br round {} -> {:.9f}\n", round, v);
    }
    if (v > best_v + 1e-10) {
      best_v = v;
      x = std::move(rx);
    } else {
      break;
    }
  }

  EquilibriumSolution eq;
  eq.attacker = profile_from_flat(x);
  eq.best_restart = ms.best_restart;
  eq.occupation = induced_occupation(tree, sc, nsflat, eq.attacker);
  ObjectiveBreakdown bd =
      evaluate_objective(tree, k, sc, eq.occupation, leaves, cfg.tie_tol);
  eq.value = bd.total;
  eq.stage_value = bd.stage;
  eq.leaf_value = bd.leaf;
  eq.value_fresh_clock = bd.stage + bd.leaf / bp[sc.horizon];
  eq.beliefs = extract_beliefs(tree, eq.occupation, sc.prior);
  eq.defender = defender_best_response(tree, k, sc, eq.occupation, leaves,
                                       eq.beliefs, nsflat, eq.attacker,
                                       cfg.tie_tol);
  eq.lp_value = solve_phase1_lp(tree, k, sc, leaves).value;

  if (cfg.run_verification) {
    eq.verification = verify_equilibrium(sc, table, eq, cfg.solver);
  }
  return eq;
}

VerificationReport verify_equilibrium(const Scenario& sc,
                                      const ValueTable& table,
                                      const EquilibriumSolution& eq,
                                      const MultiStartConfig& solver,
                                      double tol) {
  VerificationReport report;
  TransitionKernel k = build_transition(sc);
  int start = k.cell_state[sc.grid.cell_index(sc.grid.start)];
  GameTree tree = enumerate_tree(k, start, sc.horizon);
  std::vector<int> nsflat = node_superstates(tree, k, sc);
  LeafValues leaves = collect_leaf_values(tree, k, sc, table);
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const int num_leaves = tree.num_nodes - tree.first_leaf;
  std::vector<double> bp = discount_powers(sc.discount, sc.horizon);

  // (1) Beliefs must match the normalized products of played probabilities,
  // frozen along unreached branches.
  std::vector<std::vector<double>> reach(
      nt, std::vector<double>(tree.num_nodes, 0.0));
  for (int theta = 0; theta < nt; ++theta) reach[theta][0] = sc.prior[theta];
  for (int h = 0; h < tree.first_leaf; ++h) {
    for (int theta = 0; theta < nt; ++theta) {
      if (reach[theta][h] == 0.0) continue;
      const auto& row = profile_row(
          eq.attacker, theta, nsflat[static_cast<size_t>(h) * nt + theta]);
      for (int a = 0; a < kNumActions; ++a) {
        reach[theta][GameTree::child(h, a)] = reach[theta][h] * row[a];
      }
    }
  }
  double belief_err = 0.0;
  double mass_err = 0.0;
  {
    std::vector<std::vector<double>> expect(tree.num_nodes);
    for (int node = 0; node < tree.num_nodes; ++node) {
      double total = 0.0;
      for (int theta = 0; theta < nt; ++theta) total += reach[theta][node];
      if (total > 0.0) {
        expect[node].resize(nt);
        for (int theta = 0; theta < nt; ++theta) {
          expect[node][theta] = reach[theta][node] / total;
        }
      } else {
        expect[node] = node == 0 ? sc.prior : expect[tree.parent[node]];
      }
      for (int theta = 0; theta < nt; ++theta) {
        belief_err = std::max(
            belief_err, std::abs(expect[node][theta] - eq.beliefs[node][theta]));
        mass_err = std::max(
            mass_err, std::abs(reach[theta][node] * bp[tree.depth[node]] -
                               eq.occupation.node_mass[theta][node]));
      }
    }
  }
  report.belief_error = belief_err;
  report.beliefs_consistent = belief_err <= 1e-10 && mass_err <= 1e-9;
  if (mass_err > 1e-9) {
    report.notes.push_back(
        fmt::format("occupation masses drift from play probabilities by {:.3e}",
                    mass_err));
  }

  // (2) Deployment must be supported on the per-leaf minimizers.
  double slack = 0.0;
  for (int j = 0; j < num_leaves; ++j) {
    int node = tree.first_leaf + j;
    double mass = 0.0;
    for (int theta = 0; theta < nt; ++theta) {
      mass += eq.occupation.node_mass[theta][node];
    }
    if (mass <= 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> vals(nb, 0.0);
    for (int omega = 0; omega < nb; ++omega) {
      double v = 0.0;
      for (int theta = 0; theta < nt; ++theta) {
        v += eq.occupation.node_mass[theta][node] *
             leaves.value[j][theta][omega];
      }
      vals[omega] = v;
      best = std::min(best, v);
    }
    for (int omega = 0; omega < nb; ++omega) {
      if (eq.defender.sigma[j][omega] > 1e-12) {
        slack = std::max(slack, vals[omega] - best);
      }
    }
  }
  report.defender_slack = slack;
  report.defender_best_response = slack <= 1e-9;

  // (3) No type may gain from re-optimizing its own rows against the fixed
  // deployment rule (the constrained-class weak sequential rationality test).
  std::vector<std::vector<double>> w_eq = attacker_value_recursion(
      tree, k, sc, eq.attacker, nsflat, leaves, eq.defender);
  double worst_gain = -std::numeric_limits<double>::infinity();
  double worst_dp_gap = 0.0;
  std::vector<double> r = reward_vector(sc, k);
  for (int theta = 0; theta < nt; ++theta) {
    if (sc.prior[theta] <= 0.0) continue;
    std::vector<double> payoff(num_leaves, 0.0);
    for (int j = 0; j < num_leaves; ++j) {
      for (int omega = 0; omega < nb; ++omega) {
        payoff[j] += eq.defender.sigma[j][omega] * leaves.value[j][theta][omega];
      }
    }
    MultiStartConfig cfg = solver;
    cfg.seed = derive_seed(solver.seed, 7000 + theta);
    TypeAscentResult best =
        maximize_type_value(tree, k, sc, theta, nsflat, payoff, cfg);
    double gain = best.value - w_eq[theta][0];
    worst_gain = std::max(worst_gain, gain);

    // Diagnostic: the unconstrained tree best response (per-node rows).
    std::vector<double> dp(tree.num_nodes, 0.0);
    for (int node = tree.first_leaf; node < tree.num_nodes; ++node) {
      dp[node] = payoff[node - tree.first_leaf];
    }
    for (int h = tree.first_leaf - 1; h >= 0; --h) {
      double bestc = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < kNumActions; ++a) {
        bestc = std::max(bestc, dp[GameTree::child(h, a)]);
      }
      dp[h] = r[tree.state[h]] + sc.discount * bestc;
    }
    worst_dp_gap = std::max(worst_dp_gap, dp[0] - w_eq[theta][0]);
  }
  report.attacker_gain = worst_gain;
  report.attacker_sad_stable = worst_gain <= tol;
  report.unrestricted_gap = worst_dp_gap;

  // (4) The forward objective and the backward recursion must agree on the
  // game value; mismatches indicate inconsistent bookkeeping.
  double backward_value = 0.0;
  for (int theta = 0; theta < nt; ++theta) {
    backward_value += sc.prior[theta] * w_eq[theta][0];
  }
  double value_drift = std::abs(backward_value - eq.value);
  report.proposition_spot_check = value_drift <= 1e-8;
  if (value_drift > 1e-8) {
    report.notes.push_back(fmt::format(
        "forward objective {:.12f} vs backward recursion {:.12f}", eq.value,
        backward_value));
  }
  if (!report.defender_best_response) {
    report.notes.push_back(fmt::format(
        "deployment places weight on an option {:.3e} above the minimum",
        report.defender_slack));
  }
  if (!report.attacker_sad_stable) {
    report.notes.push_back(fmt::format(
        "a type improves its value by {:.6e} by re-optimizing", worst_gain));
  }
  return report;
}

BaselineResult full_information_baseline(const Scenario& sc,
                                         const ValueTable& table,
                                         const Phase1Config& cfg) {
  TransitionKernel k = build_transition(sc);
  int start = k.cell_state[sc.grid.cell_index(sc.grid.start)];
  GameTree tree = enumerate_tree(k, start, sc.horizon);
  std::vector<int> nsflat = node_superstates(tree, k, sc);
  LeafValues leaves = collect_leaf_values(tree, k, sc, table);
  const int nt = sc.num_types();
  const int nb = sc.num_barriers();
  const int num_leaves = tree.num_nodes - tree.first_leaf;
  std::vector<double> bp = discount_powers(sc.discount, sc.horizon);

  BaselineResult out;
  out.per_type.assign(nt, 0.0);
  out.deployment.assign(nt, 0);
  for (int theta = 0; theta < nt; ++theta) {
    // The informed defender deploys the type's worst barrier at every leaf,
    // so the attacker maximizes against the pointwise minimum.
    std::vector<double> payoff(num_leaves, 0.0);
    for (int j = 0; j < num_leaves; ++j) {
      double worst = leaves.value[j][theta][0];
      for (int omega = 1; omega < nb; ++omega) {
        worst = std::min(worst, leaves.value[j][theta][omega]);
      }
      payoff[j] = worst;
    }
    MultiStartConfig ms = cfg.solver;
    ms.seed = derive_seed(cfg.solver.seed, 9000 + theta * 64);
    TypeAscentResult res =
        maximize_type_value(tree, k, sc, theta, nsflat, payoff, ms);

    // Report the barrier the defender picks at the type's modal leaf.
    std::vector<double> mass(tree.num_nodes, 0.0);
    mass[0] = 1.0;
    for (int h = 0; h < tree.first_leaf; ++h) {
      int g = nsflat[static_cast<size_t>(h) * nt + theta];
      for (int a = 0; a < kNumActions; ++a) {
        double pa = g >= 0 ? res.rows[g][a] : 0.25;
        mass[GameTree::child(h, a)] += mass[h] * pa;
      }
    }
    int top = 0;
    for (int j = 1; j < num_leaves; ++j) {
      if (mass[tree.first_leaf + j] > mass[tree.first_leaf + top]) top = j;
    }
    int pick = 0;
    for (int omega = 1; omega < nb; ++omega) {
      if (leaves.value[top][theta][omega] < leaves.value[top][theta][pick]) {
        pick = omega;
      }
    }
    out.deployment[theta] = pick;

    double fresh = res.stage + res.leaf / bp[sc.horizon];
    out.per_type[theta] = fresh;
    out.value += sc.prior[theta] * res.value;
    out.value_fresh_clock += sc.prior[theta] * fresh;
  }
  return out;
}

}  // namespace repcon
