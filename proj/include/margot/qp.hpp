#pragma once

#include <Eigen/Dense>

#include <limits>
#include <memory>
#include <vector>

namespace margot {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convex quadratic program in the form
///
///   minimize    0.5 x'Px + q'x
///   subject to  cl <= A x <= cu      (row constraints)
///               lb <=  x  <= ub      (variable bounds)
///
/// P must be symmetric positive semidefinite. +-inf entries in cl/cu/lb/ub
/// mark one-sided or absent limits; cl == cu marks an equality row.
struct QuadraticProgram {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;  // r x m, r may be zero
  Eigen::VectorXd cl, cu;
  Eigen::VectorXd lb, ub;

  int num_vars() const { return static_cast<int>(q.size()); }
  int num_rows() const { return static_cast<int>(cl.size()); }
  double objective(const Eigen::VectorXd& x) const;

  /// Program with the right shapes, free variables and no rows.
  static QuadraticProgram make(int num_vars, int num_rows);

  /// Throws std::invalid_argument on shape mismatch, crossed limits,
  /// non-finite P/q/A entries, asymmetry, or an indefinite P (checked by
  /// Cholesky after a 1e-10 diagonal shift; anything that still fails is a
  /// hard error rather than something to silently repair).
  void validate() const;
};

enum class QpStatus { Optimal, Infeasible, MaxIterations, CutoffExceeded };
const char* to_string(QpStatus status);

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double max_residual() const;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;         // row duals: negative when the lower side binds
  Eigen::VectorXd y_bounds;  // bound duals, same sign convention
  double objective = 0.0;
  // Certified lower bound on the optimal value, evaluated from the dual
  // iterate (Lagrangian of the rows, minimized in closed form over the
  // variable box; requires a diagonal P). -inf when unavailable, +inf when
  // the program is infeasible. Valid regardless of status, so an unconverged
  // solve still reports how much it proved.
  double lower_bound = -kInf;
  QpStatus status = QpStatus::MaxIterations;
  KktResiduals kkt;
  int iterations = 0;
  bool polished = false;
};

struct QpSettings {
  double eps_abs = 1e-6;         // absolute primal/dual tolerance
  double eps_rel = 0.0;
  double eps_infeasible = 1e-8;  // certificate tolerance
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double relax_alpha = 1.6;
  bool scaling = true;
  int scaling_iters = 10;
  bool adaptive_rho = true;
  bool polish = true;
  double polish_delta = 1e-9;
  bool active_set_fallback = true;  // exact rescue for m <= 200 on MaxIterations
  int check_interval = 25;
};

/// Operator-splitting solver with a cached KKT factorization.
///
/// P, q, A, cl, cu are fixed at construction. Variable bounds may be replaced
/// per solve; that is the only thing branch-and-bound node fixings change. The
/// KKT factorization is reused across solves and refreshed only when the set
/// of variables pinned by their bounds changes. Instances are not re-entrant;
/// distinct instances are independent.
class QpSolver {
 public:
  explicit QpSolver(QuadraticProgram prob, QpSettings settings = {});
  ~QpSolver();
  QpSolver(QpSolver&&) noexcept;
  QpSolver& operator=(QpSolver&&) noexcept;

  QpSolution solve();
  /// cutoff: stop as soon as the certified lower bound reaches this value
  /// (status CutoffExceeded); the caller is saying it only cares whether the
  /// optimum is below it. +inf disables the check.
  QpSolution solve(const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                   const QpSolution* warm_start = nullptr, double cutoff = kInf);

  const QuadraticProgram& problem() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

QpSolution solve_qp(const QuadraticProgram& prob, double tol = 1e-6,
                    int max_iter = 20000);
QpSolution solve_qp(const QuadraticProgram& prob, const QpSettings& settings);

/// Stationarity / primal feasibility / complementarity norms (inf-norm) of a
/// candidate primal-dual point. Pure computation, no solving.
KktResiduals kkt_residual(const QuadraticProgram& prob, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y,
                          const Eigen::VectorXd& y_bounds);

struct SvmSolution {
  Eigen::VectorXd w;
  double b = 0.0;
  Eigen::VectorXd xi;
  double objective = 0.0;
  QpStatus status = QpStatus::Optimal;
};

/// Soft-margin linear SVM: minimize 0.5 |w|^2 + sum_i C_i xi_i subject to
/// y_i (w'x_i + b) >= 1 - xi_i, xi >= 0. Labels must be -1/+1, C > 0.
/// fixed_zero_features[j] = true pins w_j to zero. Returned xi is recomputed
/// as max(0, 1 - y f(x)). Single-class input short-circuits to the analytic
/// optimum w = 0, b = label, xi = 0.
SvmSolution solve_svm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& C,
                      const std::vector<bool>* fixed_zero_features = nullptr,
                      const QpSettings& settings = {});

}  // namespace margot
