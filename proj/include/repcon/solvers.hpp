#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace repcon {

// maximize c'x  subject to  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0
// (variables marked free are unrestricted in sign).
struct LinearProgram {
  int num_vars = 0;
  std::vector<double> c;
  std::vector<std::vector<double>> a_eq;
  std::vector<double> b_eq;
  std::vector<std::vector<double>> a_ub;
  std::vector<double> b_ub;
  std::vector<uint8_t> free_var;  // optional, size num_vars

  void check_shape() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, Stalled };

struct LpSolution {
  LpStatus status = LpStatus::Stalled;
  double value = 0.0;
  std::vector<double> x;
  std::vector<double> dual_eq;  // multipliers for equality rows
  std::vector<double> dual_ub;  // multipliers for <= rows (>= 0)
  double primal_residual = 0.0;
  double duality_gap = 0.0;
  int pivots = 0;
  std::string diagnostics;
};

LpSolution solve_lp(const LinearProgram& lp);

// Dense LU solve with residual check; throws SolverError (with a condition
// estimate) if A is singular or the residual exceeds 1e-10*(1+|b|_inf).
Eigen::VectorXd solve_linear_system(const Eigen::MatrixXd& a,
                                    const Eigen::VectorXd& b);

// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(const std::vector<double>& v);
void project_to_simplex_inplace(double* v, int n);

// A point is a concatenation of probability vectors, one per block.
struct SimplexProduct {
  std::vector<int> block_sizes;
  int dim() const;
  void project(std::vector<double>& x) const;
  bool feasible(const std::vector<double>& x, double tol = 1e-10) const;
};

struct MultiStartConfig {
  int restarts = 32;
  int max_iters = 600;
  double step0 = 1.0;       // diminishing step c/sqrt(k)
  double tol = 1e-8;        // stop when step improvement falls below this
  uint64_t seed = 0;
  int jobs = 1;
  // Extra starting points run before the random ones (projected first).
  std::vector<std::vector<double>> warm_starts;
};

struct MultiStartResult {
  std::vector<double> x;
  double value = 0.0;
  int best_restart = -1;
  std::vector<double> restart_values;  // per-start trace
};

// objective(x, grad) returns the value and fills grad (same length as x)
// with an ascent (sub)gradient. Runs projected gradient ascent from
// Dirichlet(1,..,1) starts; deterministic given config.seed regardless of
// thread scheduling (ties broken by restart index).
using SimplexObjective =
    std::function<double(const std::vector<double>&, std::vector<double>*)>;

MultiStartResult multistart_maximize(const SimplexObjective& objective,
                                     const SimplexProduct& domain,
                                     const MultiStartConfig& config);

// Deterministic per-task seed derivation (splitmix64 over a master seed).
uint64_t derive_seed(uint64_t master, uint64_t index);

// Dirichlet(1,...,1) sample of given size.
std::vector<double> dirichlet_uniform(std::mt19937_64& rng, int n);

// Simple chunked parallel-for; fn(i) must be safe to run concurrently for
// distinct i. jobs <= 1 runs inline.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace repcon
