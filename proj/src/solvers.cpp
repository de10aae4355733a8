#include "repcon/solvers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "repcon/env.hpp"

namespace repcon {

namespace {
constexpr double kReducedCostTol = 1e-9;
constexpr double kPivotTol = 1e-9;
constexpr double kRatioTieTol = 1e-12;
}  // namespace

void LinearProgram::check_shape() const {
  if (static_cast<int>(c.size()) != num_vars) {
    throw SolverError(fmt::format("lp: objective has {} coefficients for {} variables",
                                  c.size(), num_vars));
  }
  if (a_eq.size() != b_eq.size() || a_ub.size() != b_ub.size()) {
    throw SolverError("lp: constraint matrix and rhs sizes disagree");
  }
  for (const auto& row : a_eq) {
    if (static_cast<int>(row.size()) != num_vars) {
      throw SolverError("lp: equality row width mismatch");
    }
  }
  for (const auto& row : a_ub) {
    if (static_cast<int>(row.size()) != num_vars) {
      throw SolverError("lp: inequality row width mismatch");
    }
  }
  if (!free_var.empty() && static_cast<int>(free_var.size()) != num_vars) {
    throw SolverError("lp: free_var mask size mismatch");
  }
}

namespace {

struct Tableau {
  Eigen::MatrixXd t;        // (m+1) x (ncols+1); last row objective, last col rhs
  std::vector<int> basis;   // basic column per constraint row
  int m = 0;
  int ncols = 0;
  int pivots = 0;

  double& rhs(int r) { return t(r, ncols); }
  double obj() const { return t(m, ncols); }

  void apply_pivot(int r, int col) {
    t.row(r) /= t(r, col);
    Eigen::VectorXd colv = t.col(col);
    colv(r) = 0.0;
    t.noalias() -= colv * t.row(r);
    for (int i = 0; i <= m; ++i) t(i, col) = 0.0;
    t(r, col) = 1.0;
    basis[r] = col;
    ++pivots;
  }

  // Rebuild the objective row for cost vector c (maximization): row holds
  // reduced costs z_j - c_j, rhs holds the current objective value.
  void set_objective(const std::vector<double>& c) {
    for (int j = 0; j < ncols; ++j) t(m, j) = -c[j];
    t(m, ncols) = 0.0;
    for (int r = 0; r < m; ++r) {
      double cb = c[basis[r]];
      if (cb != 0.0) t.row(m) += cb * t.row(r);
    }
  }
};

enum class RunOutcome { Optimal, Unbounded, Stalled };

RunOutcome run_simplex(Tableau& tab, const std::vector<uint8_t>& enterable,
                       int max_pivots) {
  int m = tab.m;
  int ncols = tab.ncols;
  bool bland = false;
  int no_progress = 0;
  const int bland_after = 2 * (m + ncols) + 64;
  double last_obj = tab.obj();

  while (true) {
    int col = -1;
    if (!bland) {
      double best = -kReducedCostTol;
      for (int j = 0; j < ncols; ++j) {
        if (!enterable[j]) continue;
        double zj = tab.t(m, j);
        if (zj < best) {
          best = zj;
          col = j;
        }
      }
    } else {
      for (int j = 0; j < ncols; ++j) {
        if (enterable[j] && tab.t(m, j) < -kReducedCostTol) {
          col = j;
          break;
        }
      }
    }
    if (col < 0) return RunOutcome::Optimal;

    int row = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_mag = 0.0;
    for (int r = 0; r < m; ++r) {
      double a = tab.t(r, col);
      if (a <= kPivotTol) continue;
      double ratio = tab.rhs(r) / a;
      if (ratio < best_ratio - kRatioTieTol) {
        best_ratio = ratio;
        best_mag = a;
        row = r;
      } else if (ratio < best_ratio + kRatioTieTol) {
        bool take = bland ? (tab.basis[r] < tab.basis[row])
                          : (a > best_mag + kRatioTieTol ||
                             (std::abs(a - best_mag) <= kRatioTieTol &&
                              tab.basis[r] < tab.basis[row]));
        if (take) {
          best_ratio = std::min(best_ratio, ratio);
          best_mag = a;
          row = r;
        }
      }
    }
    if (row < 0) return RunOutcome::Unbounded;

    tab.apply_pivot(row, col);
    if (tab.pivots > max_pivots) return RunOutcome::Stalled;

    double obj = tab.obj();
    if (obj > last_obj + 1e-13) {
      no_progress = 0;
      last_obj = obj;
    } else if (++no_progress > bland_after) {
      bland = true;
    }
  }
}

}  // namespace

LpSolution solve_lp(const LinearProgram& lp) {
  lp.check_shape();
  LpSolution sol;

  const int n0 = lp.num_vars;
  const int me = static_cast<int>(lp.a_eq.size());
  const int mu = static_cast<int>(lp.a_ub.size());
  const int m = me + mu;

  // Split free variables into positive and negative parts.
  std::vector<int> pos_col(n0), neg_col(n0, -1);
  int n = 0;
  for (int i = 0; i < n0; ++i) {
    pos_col[i] = n++;
    if (!lp.free_var.empty() && lp.free_var[i]) neg_col[i] = n++;
  }

  // Column layout: structural | slacks (one per ub row) | artificials (one
  // per row). The artificial block doubles as B^{-1}, which is what the dual
  // recovery below reads off.
  const int slack0 = n;
  const int art0 = n + mu;
  const int ncols = n + mu + m;

  Tableau tab;
  tab.m = m;
  tab.ncols = ncols;
  tab.t = Eigen::MatrixXd::Zero(m + 1, ncols + 1);
  tab.basis.assign(m, -1);

  std::vector<double> row_sign(m, 1.0);
  auto fill_row = [&](int r, const std::vector<double>& src, double rhs) {
    double sgn = rhs < 0.0 ? -1.0 : 1.0;
    row_sign[r] = sgn;
    for (int i = 0; i < n0; ++i) {
      double v = sgn * src[i];
      tab.t(r, pos_col[i]) = v;
      if (neg_col[i] >= 0) tab.t(r, neg_col[i]) = -v;
    }
    tab.rhs(r) = sgn * rhs;
  };
  for (int r = 0; r < me; ++r) fill_row(r, lp.a_eq[r], lp.b_eq[r]);
  for (int r = 0; r < mu; ++r) {
    fill_row(me + r, lp.a_ub[r], lp.b_ub[r]);
    tab.t(me + r, slack0 + r) = row_sign[me + r];
  }
  for (int r = 0; r < m; ++r) tab.t(r, art0 + r) = 1.0;

  // Initial basis: slack where it has coefficient +1, artificial otherwise.
  std::vector<uint8_t> needs_artificial(m, 1);
  for (int r = me; r < m; ++r) {
    if (row_sign[r] > 0.0) {
      tab.basis[r] = slack0 + (r - me);
      needs_artificial[r] = 0;
    }
  }
  bool any_artificial = false;
  for (int r = 0; r < m; ++r) {
    if (needs_artificial[r]) {
      tab.basis[r] = art0 + r;
      any_artificial = true;
    }
  }

  const int max_pivots = 20000 + 60 * (m + ncols);
  double bscale = 1.0;
  for (double v : lp.b_eq) bscale = std::max(bscale, std::abs(v));
  for (double v : lp.b_ub) bscale = std::max(bscale, std::abs(v));

  std::vector<uint8_t> enterable(ncols, 1);

  if (any_artificial && m > 0) {
    std::vector<double> phase1(ncols, 0.0);
    for (int r = 0; r < m; ++r) {
      if (needs_artificial[r]) phase1[art0 + r] = -1.0;
    }
    tab.set_objective(phase1);
    RunOutcome out = run_simplex(tab, enterable, max_pivots);
    sol.pivots = tab.pivots;
    if (out == RunOutcome::Stalled) {
      sol.status = LpStatus::Stalled;
      sol.diagnostics = "phase-1 pivot limit reached";
      return sol;
    }
    if (out == RunOutcome::Unbounded) {
      throw SolverError("lp: phase-1 objective reported unbounded");
    }
    if (tab.obj() < -1e-7 * bscale) {
      sol.status = LpStatus::Infeasible;
      sol.diagnostics =
          fmt::format("phase-1 infeasibility {:.3e}", -tab.obj());
      return sol;
    }
    // Drive any artificial still in the basis out (or accept the row as
    // redundant when it has no non-artificial entry left).
    for (int r = 0; r < m; ++r) {
      if (tab.basis[r] < art0) continue;
      int col = -1;
      for (int j = 0; j < art0; ++j) {
        if (std::abs(tab.t(r, j)) > kPivotTol) {
          col = j;
          break;
        }
      }
      if (col >= 0) tab.apply_pivot(r, col);
    }
  }
  for (int j = art0; j < ncols; ++j) enterable[j] = 0;

  std::vector<double> c_full(ncols, 0.0);
  for (int i = 0; i < n0; ++i) {
    c_full[pos_col[i]] = lp.c[i];
    if (neg_col[i] >= 0) c_full[neg_col[i]] = -lp.c[i];
  }
  tab.set_objective(c_full);

  RunOutcome out = run_simplex(tab, enterable, max_pivots);
  sol.pivots = tab.pivots;
  if (out == RunOutcome::Unbounded) {
    sol.status = LpStatus::Unbounded;
    return sol;
  }
  if (out == RunOutcome::Stalled) {
    sol.status = LpStatus::Stalled;
    sol.diagnostics = "phase-2 pivot limit reached";
    return sol;
  }

  std::vector<double> xin(n, 0.0);
  for (int r = 0; r < m; ++r) {
    if (tab.basis[r] < n) xin[tab.basis[r]] = tab.rhs(r);
  }
  sol.x.assign(n0, 0.0);
  for (int i = 0; i < n0; ++i) {
    sol.x[i] = xin[pos_col[i]];
    if (neg_col[i] >= 0) sol.x[i] -= xin[neg_col[i]];
  }

  sol.value = 0.0;
  for (int i = 0; i < n0; ++i) sol.value += lp.c[i] * sol.x[i];

  sol.dual_eq.assign(me, 0.0);
  sol.dual_ub.assign(mu, 0.0);
  for (int r = 0; r < m; ++r) {
    double y = tab.t(m, art0 + r) * row_sign[r];
    if (r < me) {
      sol.dual_eq[r] = y;
    } else {
      sol.dual_ub[r - me] = std::max(y, 0.0);
    }
  }

  sol.primal_residual = 0.0;
  for (int r = 0; r < me; ++r) {
    double lhs = 0.0;
    for (int i = 0; i < n0; ++i) lhs += lp.a_eq[r][i] * sol.x[i];
    sol.primal_residual = std::max(sol.primal_residual, std::abs(lhs - lp.b_eq[r]));
  }
  for (int r = 0; r < mu; ++r) {
    double lhs = 0.0;
    for (int i = 0; i < n0; ++i) lhs += lp.a_ub[r][i] * sol.x[i];
    sol.primal_residual = std::max(sol.primal_residual, lhs - lp.b_ub[r]);
  }

  double dual_value = 0.0;
  for (int r = 0; r < me; ++r) dual_value += lp.b_eq[r] * sol.dual_eq[r];
  for (int r = 0; r < mu; ++r) dual_value += lp.b_ub[r] * sol.dual_ub[r];
  sol.duality_gap = std::abs(dual_value - sol.value);

  sol.status = LpStatus::Optimal;
  return sol;
}

Eigen::VectorXd solve_linear_system(const Eigen::MatrixXd& a,
                                    const Eigen::VectorXd& b) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw SolverError(fmt::format("linear system shape mismatch: {}x{} vs {}",
                                  a.rows(), a.cols(), b.size()));
  }
  const double tol = 1e-10 * (1.0 + b.lpNorm<Eigen::Infinity>());
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::VectorXd x = lu.solve(b);
  double resid = (a * x - b).lpNorm<Eigen::Infinity>();
  if (x.allFinite() && resid <= tol) return x;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  x = qr.solve(b);
  resid = (a * x - b).lpNorm<Eigen::Infinity>();
  if (x.allFinite() && resid <= tol) return x;

  double rmax = std::abs(qr.matrixR()(0, 0));
  double rmin = std::abs(qr.matrixR()(a.rows() - 1, a.rows() - 1));
  double cond = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
  throw SolverError(
      fmt::format("linear system solve failed: residual {:.3e} (tolerance "
                  "{:.3e}), condition estimate {:.3e}",
                  resid, tol, cond));
}

void project_to_simplex_inplace(double* v, int n) {
  if (n <= 0) return;
  if (n == 1) {
    v[0] = 1.0;
    return;
  }
  thread_local std::vector<double> u;
  u.assign(v, v + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double running = 0.0;
  double tau = 0.0;
  for (int j = 1; j <= n; ++j) {
    running += u[j - 1];
    double t = (running - 1.0) / j;
    if (u[j - 1] - t > 0.0) tau = t;
  }
  for (int i = 0; i < n; ++i) v[i] = std::max(v[i] - tau, 0.0);
}

std::vector<double> project_to_simplex(const std::vector<double>& v) {
  std::vector<double> out = v;
  project_to_simplex_inplace(out.data(), static_cast<int>(out.size()));
  return out;
}

int SimplexProduct::dim() const {
  int d = 0;
  for (int b : block_sizes) d += b;
  return d;
}

void SimplexProduct::project(std::vector<double>& x) const {
  int off = 0;
  for (int b : block_sizes) {
    project_to_simplex_inplace(x.data() + off, b);
    off += b;
  }
}

bool SimplexProduct::feasible(const std::vector<double>& x, double tol) const {
  if (static_cast<int>(x.size()) != dim()) return false;
  int off = 0;
  for (int b : block_sizes) {
    double sum = 0.0;
    for (int i = 0; i < b; ++i) {
      if (x[off + i] < -tol) return false;
      sum += x[off + i];
    }
    if (std::abs(sum - 1.0) > tol) return false;
    off += b;
  }
  return true;
}

uint64_t derive_seed(uint64_t master, uint64_t index) {
  uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<double> dirichlet_uniform(std::mt19937_64& rng, int n) {
  std::vector<double> out(n, 0.0);
  if (n <= 0) return out;
  std::exponential_distribution<double> exp1(1.0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = exp1(rng);
    sum += out[i];
  }
  if (sum <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / n);
  } else {
    for (double& v : out) v /= sum;
  }
  return out;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = std::min(jobs, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        int i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

MultiStartResult multistart_maximize(const SimplexObjective& objective,
                                     const SimplexProduct& domain,
                                     const MultiStartConfig& config) {
  const int dim = domain.dim();
  const int warm = static_cast<int>(config.warm_starts.size());
  const int restarts = warm + std::max(1, config.restarts);
  MultiStartResult result;
  result.restart_values.assign(restarts, -std::numeric_limits<double>::infinity());
  std::vector<std::vector<double>> points(restarts);

  parallel_for(restarts, config.jobs, [&](int r) {
    std::vector<double> x;
    if (r < warm) {
      x = config.warm_starts[r];
      x.resize(dim, 0.0);
      domain.project(x);
    } else {
      std::mt19937_64 rng(derive_seed(config.seed, static_cast<uint64_t>(r)));
      x.reserve(dim);
      for (int b : domain.block_sizes) {
        std::vector<double> block = dirichlet_uniform(rng, b);
        x.insert(x.end(), block.begin(), block.end());
      }
    }

    std::vector<double> grad(dim, 0.0), cand(dim, 0.0), cand_grad(dim, 0.0);
    double f = objective(x, &grad);
    double step = config.step0;
    for (int it = 0; it < config.max_iters; ++it) {
      for (int i = 0; i < dim; ++i) cand[i] = x[i] + step * grad[i];
      domain.project(cand);
      double fc = objective(cand, &cand_grad);
      if (fc > f + 1e-15) {
        double gain = fc - f;
        x.swap(cand);
        grad.swap(cand_grad);
        f = fc;
        step = std::min(step * 1.25, config.step0 * 64.0);
        double moved = 0.0;
        for (int i = 0; i < dim; ++i) {
          moved = std::max(moved, std::abs(x[i] - cand[i]));
        }
        if (gain < config.tol && moved < config.tol) break;
      } else {
        step *= 0.5;
        if (step < 1e-13) break;
      }
    }
    result.restart_values[r] = f;
    points[r] = std::move(x);
  });

  for (int r = 0; r < restarts; ++r) {
    if (result.restart_values[r] > result.value || result.best_restart < 0) {
      result.value = result.restart_values[r];
      result.best_restart = r;
      result.x = points[r];
    }
  }
  return result;
}

}  // namespace repcon
