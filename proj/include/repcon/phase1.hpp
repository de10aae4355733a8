#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "repcon/env.hpp"
#include "repcon/phase2.hpp"
#include "repcon/solvers.hpp"

namespace repcon {

// Complete 4-ary tree of histories up to depth T. Nodes are indexed
// breadth-first: root 0, child(h,a) = 4h+1+a. All types share the tree
// because every history is a raw action string.
struct GameTree {
  int horizon = 0;
  int num_nodes = 0;           // (4^{T+1}-1)/3
  int first_leaf = 0;          // index of first depth-T node
  std::vector<int> depth;      // per node
  std::vector<int> state;      // kernel state reached by the action string
  std::vector<int> parent;     // -1 at root
  std::vector<int> action_in;  // action taken to reach node, -1 at root

  static int child(int h, int a) { return 4 * h + 1 + a; }
};

GameTree enumerate_tree(const TransitionKernel& k, int start_state,
                        int horizon);

using Belief = std::vector<double>;

// One exact-observation Bayes step: posterior(theta) proportional to
// prior(theta) * likelihood(theta). Zero total evidence means the observed
// action had probability zero under every type; the posterior is undefined
// and the call throws.
Belief update_belief(const Belief& prior, const std::vector<double>& likelihood);

// Whole-trajectory Bayes with a single normalization: posterior proportional
// to prior(theta) * product of per-step likelihoods. Agrees with iterating
// update_belief over the same steps.
Belief belief_product_form(
    const Belief& prior,
    const std::vector<std::vector<double>>& step_likelihoods);

// Per-type occupation flows over the tree. z[theta][h][a] is the measure of
// choosing a at h; node mass chi[theta][h] = sum_a z[theta][h][a] with
// chi(root) = prior(theta) and chi(child) = beta * z[theta][h][a].
struct OccupationTree {
  std::vector<std::vector<std::array<double, kNumActions>>> z;
  std::vector<std::vector<double>> node_mass;
};

// Attacker strategy profile: per type, per superstate, an action
// distribution. Rows for superstates never visited in the tree are uniform.
struct AttackerProfile {
  std::vector<PolicyTable> policy;  // [theta]
};

OccupationTree induced_occupation(const GameTree& tree, const Scenario& sc,
                                  const std::vector<int>& node_superstate_flat,
                                  const AttackerProfile& profile);

// Leaf payoff data shared by the LP and the ascent solver.
struct LeafValues {
  // value[k][theta][omega] for leaf k (leaf index = node - first_leaf);
  // leaves whose terminal state has no table entry get -inf masses pruned
  // upstream, so every stored row is finite.
  std::vector<std::vector<std::vector<double>>> value;
};

LeafValues collect_leaf_values(const GameTree& tree, const TransitionKernel& k,
                               const Scenario& sc, const ValueTable& table);

struct ObjectiveBreakdown {
  double total = 0.0;       // stage + discounted leaf term
  double stage = 0.0;       // sum_{t<T} beta^t E[r(s_t)]
  double leaf = 0.0;        // beta^T E[min_omega ...]
  std::vector<int> leaf_choice;          // argmin omega per positive-mass leaf, -1 otherwise
  std::vector<std::vector<int>> tie_set; // omegas within tie_tol of the min
};

ObjectiveBreakdown evaluate_objective(const GameTree& tree,
                                      const TransitionKernel& k,
                                      const Scenario& sc,
                                      const OccupationTree& occ,
                                      const LeafValues& leaves,
                                      double tie_tol = 1e-9);

struct Phase1LpSolution {
  double value = 0.0;   // exact optimum of the occupation-measure program
  OccupationTree occupation;
  std::vector<double> dual;  // per-type duals of the prior constraint
  int columns = 0;
  int pricing_rounds = 0;
  double certificate_gap = 0.0;
};

// Exact relaxation (no same-action-distribution constraint): concave
// maximization over path mixtures, solved by column generation on the
// leaf-path decomposition. Each column is a posterior over types assigned to
// one leaf group; pricing per group is a small LP over (posterior, min-value
// epigraph).
Phase1LpSolution solve_phase1_lp(const GameTree& tree,
                                 const TransitionKernel& k, const Scenario& sc,
                                 const LeafValues& leaves);

struct DefenderRule {
  // Deployment distribution per leaf. Unreachable leaves get the argmin
  // under the frozen belief of their last positive-mass ancestor.
  std::vector<std::vector<double>> sigma;  // [leaf][omega]
  bool tie_lp_used = false;
  bool tie_lp_feasible = true;
  double tie_slack = 0.0;  // optimized bound on one-row deviation advantage
};

struct VerificationReport {
  bool beliefs_consistent = false;
  double belief_error = 0.0;
  bool defender_best_response = false;
  double defender_slack = 0.0;
  bool attacker_sad_stable = false;
  double attacker_gain = 0.0;        // best per-type SAD improvement found
  double unrestricted_gap = 0.0;     // DP best response ignoring SAD (diagnostic)
  bool proposition_spot_check = true;
  std::vector<std::string> notes;
  bool ok() const {
    return beliefs_consistent && defender_best_response && attacker_sad_stable;
  }
};

struct EquilibriumSolution {
  AttackerProfile attacker;
  OccupationTree occupation;
  DefenderRule defender;
  std::vector<Belief> beliefs;  // per node, frozen along zero-mass suffixes
  double value = 0.0;           // stage + beta^T leaf (same clock throughout)
  double stage_value = 0.0;
  double leaf_value = 0.0;           // discounted
  double value_fresh_clock = 0.0;    // stage + undiscounted leaf table entry
  double lp_value = 0.0;             // relaxation optimum, for the gap report
  int best_restart = -1;
  VerificationReport verification;
};

struct Phase1Config {
  MultiStartConfig solver;
  ValueTableConfig table;
  double tie_tol = 1e-9;
  bool run_verification = true;
};

EquilibriumSolution solve_phase1_sad(const Scenario& sc,
                                     const ValueTable& table,
                                     const Phase1Config& cfg);

// Beliefs at every node: normalized node masses where positive, frozen at
// the last positive-mass ancestor otherwise.
std::vector<Belief> extract_beliefs(const GameTree& tree,
                                    const OccupationTree& occ,
                                    const Belief& prior);

// Per-leaf deployment given the profile: argmin over omega of the
// belief-weighted continuation value, ties resolved by an LP that minimizes
// the attacker's best aggregated one-row deviation advantage.
DefenderRule defender_best_response(const GameTree& tree,
                                    const TransitionKernel& k,
                                    const Scenario& sc,
                                    const OccupationTree& occ,
                                    const LeafValues& leaves,
                                    const std::vector<Belief>& beliefs,
                                    const std::vector<int>& node_superstate_flat,
                                    const AttackerProfile& profile,
                                    double tie_tol);

// Attacker continuation values W[theta][h] under a fixed deployment rule.
std::vector<std::vector<double>> attacker_value_recursion(
    const GameTree& tree, const TransitionKernel& k, const Scenario& sc,
    const AttackerProfile& profile,
    const std::vector<int>& node_superstate_flat, const LeafValues& leaves,
    const DefenderRule& sigma);

// Defender-side continuation value at a node for fixed strategies: the
// belief-weighted sum of the per-type values. Accepts unnormalized belief
// weights and is linear in them.
double defender_value_recursion(const GameTree& tree,
                                const TransitionKernel& k, const Scenario& sc,
                                int node, const Belief& belief,
                                const AttackerProfile& profile,
                                const std::vector<int>& node_superstate_flat,
                                const LeafValues& leaves,
                                const DefenderRule& sigma);

// Same quantity through the averaged-action factorization: each branch is
// weighted by the belief-averaged play probability and its child continues
// with the conditional belief. Branches with zero averaged probability
// contribute nothing, so no division by zero ever occurs.
double defender_value_factored(const GameTree& tree, const TransitionKernel& k,
                               const Scenario& sc, int node,
                               const Belief& belief,
                               const AttackerProfile& profile,
                               const std::vector<int>& node_superstate_flat,
                               const LeafValues& leaves,
                               const DefenderRule& sigma);

VerificationReport verify_equilibrium(const Scenario& sc,
                                      const ValueTable& table,
                                      const EquilibriumSolution& eq,
                                      const MultiStartConfig& solver,
                                      double tol = 1e-4);

struct BaselineResult {
  double value = 0.0;             // prior-weighted, same clock as EquilibriumSolution::value
  double value_fresh_clock = 0.0;
  std::vector<double> per_type;   // fresh-clock per-type values
  std::vector<int> deployment;    // omega chosen against each type
};

// Full-information defender: knows theta and deploys that type's worst
// barrier at whichever leaf is reached, so each type solves a single-agent
// SAD problem against the pointwise minimum over barriers.
BaselineResult full_information_baseline(const Scenario& sc,
                                         const ValueTable& table,
                                         const Phase1Config& cfg);

// Node superstate lookup flattened as node*num_types+theta (-1 at sink).
std::vector<int> node_superstates(const GameTree& tree,
                                  const TransitionKernel& k,
                                  const Scenario& sc);

}  // namespace repcon
