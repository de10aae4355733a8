#pragma once

#include <array>
#include <optional>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "repcon/env.hpp"
#include "repcon/solvers.hpp"

namespace repcon {

// One action distribution per superstate of a representation.
struct PolicyTable {
  std::vector<std::array<double, kNumActions>> rows;
};

// State-level policy (one row per kernel state, sink included).
using StatePolicy = std::vector<std::array<double, kNumActions>>;

StatePolicy expand_policy(const TransitionKernel& k, const Representation& rep,
                          const PolicyTable& table);

struct EvalResult {
  double value = 0.0;            // mu-weighted discounted return
  Eigen::VectorXd occupancy;     // d, flow solution per state
  Eigen::VectorXd state_values;  // V_pi per state
  double flow_residual = 0.0;
};

// Reusable workspace so grid enumeration does not reallocate per policy.
class PolicyEvaluator {
 public:
  PolicyEvaluator(const TransitionKernel& k, std::vector<double> r,
                  double beta);
  EvalResult evaluate(const StatePolicy& policy,
                      const std::vector<double>& mu) const;
  // Q(s,a) = r(s) + beta*V(succ(s,a)) for an already-evaluated policy.
  void fill_q(const Eigen::VectorXd& state_values,
              Eigen::MatrixXd* q) const;

  const TransitionKernel& kernel() const { return *kernel_; }
  const std::vector<double>& rewards() const { return r_; }
  double beta() const { return beta_; }

 private:
  const TransitionKernel* kernel_;
  std::vector<double> r_;
  double beta_;
};

EvalResult evaluate_policy(const TransitionKernel& k, const StatePolicy& policy,
                           const std::vector<double>& mu,
                           const std::vector<double>& r, double beta);
EvalResult evaluate_policy(const TransitionKernel& k, const Representation& rep,
                           const PolicyTable& table,
                           const std::vector<double>& mu,
                           const std::vector<double>& r, double beta);

struct OccupancySolution {
  std::vector<std::array<double, kNumActions>> nu;  // per state
  double value = 0.0;
  std::vector<double> state_values;  // duals of the flow constraints
};

// Exact dual-LP solve over state-action occupation measures.
OccupancySolution solve_unconstrained_mdp(const TransitionKernel& k,
                                          const std::vector<double>& r,
                                          const std::vector<double>& mu,
                                          double beta);

struct RecoveredPolicy {
  StatePolicy policy;
  std::vector<int> uniform_states;  // states with no occupation mass
};
RecoveredPolicy policy_from_occupancy(
    const std::vector<std::array<double, kNumActions>>& nu);

// Value-iteration oracle (used by tests and as an independent cross-check).
std::vector<double> value_iteration(const TransitionKernel& k,
                                    const std::vector<double>& r, double beta,
                                    double tol = 1e-12, int max_iters = 100000);

struct SadSolution {
  PolicyTable policy;
  double value = 0.0;      // mu-weighted objective
  EvalResult eval;         // evaluation of the returned policy
  int best_restart = -1;
  int polish_rounds = 0;
};

// Multistart projected gradient ascent over the product of per-superstate
// simplices, followed by a greedy polish (per-superstate argmax of
// sum_{s in gamma} d(s) Q(s,a), accepted only on exact value improvement).
SadSolution solve_sad_mdp(const TransitionKernel& k, const Representation& rep,
                          const std::vector<double>& r,
                          const std::vector<double>& mu, double beta,
                          const MultiStartConfig& config);

// Max of evaluate_policy over the product simplex grid with the given
// resolution, including every deterministic SAD policy. Guard: at most 1e7
// grid points.
double brute_force_sad_oracle(const TransitionKernel& k,
                              const Representation& rep,
                              const std::vector<double>& r,
                              const std::vector<double>& mu, double beta,
                              double grid_step, int jobs = 1);

struct ValueTableConfig {
  MultiStartConfig solver;
  double mu_epsilon = 1e-5;
  bool all_states = false;  // default: states reachable within horizon
  int jobs = 1;
};

// V[type][barrier][k] and the achieving policies, indexed by the cells in
// `states` (kernel-independent cell ids). Values are the policy's exact
// state value at the cell; the mu-regularized objective is what the solver
// maximizes.
struct ValueTable {
  std::vector<int> states;  // cell ids
  std::vector<std::vector<std::vector<double>>> value;        // [theta][omega][k]
  std::vector<std::vector<std::vector<PolicyTable>>> policy;  // [theta][omega][k]
  std::unordered_map<int, int> index;  // cell id -> k
  double mu_epsilon = 1e-5;
  uint64_t seed = 0;

  bool has(int cell) const { return index.count(cell) > 0; }
  double v(int theta, int omega, int cell) const;
  const PolicyTable& pi(int theta, int omega, int cell) const;
};

ValueTable build_value_tables(const Scenario& sc, const ValueTableConfig& cfg,
                              const std::optional<std::vector<int>>&
                                  restrict_to_cells = std::nullopt);

}  // namespace repcon
