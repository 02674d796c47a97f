#include "margot/qp.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "margot/active_set.hpp"

namespace margot {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<double>;

double inf_norm(const VectorXd& v) {
  return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0;
}

// OSQP-style scale limiting: ignore near-zero norms, cap huge ones.
double limit_scaling(double v) {
  if (v < 1e-4) return 1.0;
  return std::min(v, 1e4);
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::Infeasible: return "Infeasible";
    case QpStatus::MaxIterations: return "MaxIterations";
    case QpStatus::CutoffExceeded: return "CutoffExceeded";
  }
  return "?";
}

double KktResiduals::max_residual() const {
  return std::max(stationarity, std::max(primal, complementarity));
}

double QuadraticProgram::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(P * x) + q.dot(x);
}

QuadraticProgram QuadraticProgram::make(int num_vars, int num_rows) {
  QuadraticProgram prob;
  prob.P = MatrixXd::Zero(num_vars, num_vars);
  prob.q = VectorXd::Zero(num_vars);
  prob.A = MatrixXd::Zero(num_rows, num_vars);
  prob.cl = VectorXd::Constant(num_rows, -kInf);
  prob.cu = VectorXd::Constant(num_rows, kInf);
  prob.lb = VectorXd::Constant(num_vars, -kInf);
  prob.ub = VectorXd::Constant(num_vars, kInf);
  return prob;
}

void QuadraticProgram::validate() const {
  const int m = num_vars();
  const int r = num_rows();
  if (P.rows() != m || P.cols() != m)
    throw std::invalid_argument("qp: P must be square and match q");
  if (lb.size() != m || ub.size() != m)
    throw std::invalid_argument("qp: bound vectors must match q");
  if (cu.size() != r) throw std::invalid_argument("qp: cl/cu size mismatch");
  if (r > 0 && (A.rows() != r || A.cols() != m))
    throw std::invalid_argument("qp: A shape does not match cl/cu and q");
  if (!P.allFinite() || !q.allFinite() || (r > 0 && !A.allFinite()))
    throw std::invalid_argument("qp: non-finite entries in P, q or A");
  for (int i = 0; i < r; ++i) {
    if (std::isnan(cl(i)) || std::isnan(cu(i)) || cl(i) > cu(i))
      throw std::invalid_argument("qp: crossed or NaN row limits");
  }
  for (int j = 0; j < m; ++j) {
    if (std::isnan(lb(j)) || std::isnan(ub(j)) || lb(j) > ub(j))
      throw std::invalid_argument("qp: crossed or NaN variable bounds");
  }
  const double p_scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * p_scale)
    throw std::invalid_argument("qp: P is not symmetric");
  // PSD gate: Cholesky must go through after a tiny diagonal shift. A matrix
  // that still fails is indefinite, which is a modelling error.
  const double shift =
      1e-10 * std::max(1.0, P.diagonal().size() > 0 ? P.diagonal().maxCoeff() : 1.0);
  MatrixXd shifted = P;
  shifted.diagonal().array() += shift;
  Eigen::LLT<MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("qp: P is not positive semidefinite");
}

KktResiduals kkt_residual(const QuadraticProgram& prob, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y,
                          const Eigen::VectorXd& y_bounds) {
  const int m = prob.num_vars();
  const int r = prob.num_rows();
  KktResiduals res;

  VectorXd stat = prob.P * x + prob.q;
  if (r > 0 && y.size() == r) stat += prob.A.transpose() * y;
  if (y_bounds.size() == m) stat += y_bounds;
  res.stationarity = inf_norm(stat);

  auto accumulate = [&res](double value, double lo, double hi, double dual) {
    const double viol = std::max({lo - value, value - hi, 0.0});
    res.primal = std::max(res.primal, viol);
    if (dual < 0.0) {
      res.complementarity =
          std::max(res.complementarity, std::isfinite(lo)
                                            ? std::abs(dual) * std::abs(value - lo)
                                            : std::abs(dual));
    } else if (dual > 0.0) {
      res.complementarity =
          std::max(res.complementarity, std::isfinite(hi)
                                            ? std::abs(dual) * std::abs(hi - value)
                                            : std::abs(dual));
    }
  };

  if (r > 0) {
    VectorXd ax = prob.A * x;
    for (int i = 0; i < r; ++i)
      accumulate(ax(i), prob.cl(i), prob.cu(i), y.size() == r ? y(i) : 0.0);
  }
  for (int j = 0; j < m; ++j)
    accumulate(x(j), prob.lb(j), prob.ub(j),
               y_bounds.size() == m ? y_bounds(j) : 0.0);
  return res;
}

//======================= operator-splitting solver =======================//

struct QpSolver::Impl {
  QuadraticProgram prob;
  QpSettings st;
  int m = 0;  // variables
  int r = 0;  // explicit rows
  int R = 0;  // rows plus the bound block

  // scaled data
  SparseMat P_s;
  SparseMat A_s;  // R x m, bound block included
  VectorXd q_s;
  VectorXd col_scale;  // D
  VectorXd row_scale;  // E over all R rows
  double cost_scale = 1.0;

  VectorXd rho;
  double rho_bar = 0.1;
  Eigen::SimplicialLDLT<SparseMat> kkt;
  int refactors = 0;
  std::uint64_t pin_sig = 0;
  VectorXd p_diag;
  bool p_separable = false;

  // iterates (scaled)
  VectorXd x, z, y;

  explicit Impl(QuadraticProgram p, QpSettings settings)
      : prob(std::move(p)), st(std::move(settings)) {
    prob.validate();
    m = prob.num_vars();
    r = prob.num_rows();
    R = r + m;
    rho_bar = st.rho;
    p_diag = prob.P.diagonal();
    p_separable = true;
    for (int i = 0; i < m && p_separable; ++i)
      for (int j = 0; j < m; ++j)
        if (i != j && prob.P(i, j) != 0.0) {
          p_separable = false;
          break;
        }
    scale();
    pin_sig = pin_signature(prob.lb, prob.ub);
    build_rho(prob.lb, prob.ub);
    factorize();
  }

  void scale() {
    col_scale = VectorXd::Ones(m);
    row_scale = VectorXd::Ones(R);
    cost_scale = 1.0;

    MatrixXd Pw = prob.P;
    MatrixXd Aw(R, m);
    if (r > 0) Aw.topRows(r) = prob.A;
    Aw.bottomRows(m) = MatrixXd::Identity(m, m);
    VectorXd qw = prob.q;

    const int iters = st.scaling ? st.scaling_iters : 0;
    for (int it = 0; it < iters; ++it) {
      VectorXd d(m), e(R);
      for (int j = 0; j < m; ++j) {
        const double cn = std::max(Pw.col(j).cwiseAbs().maxCoeff(),
                                   Aw.col(j).cwiseAbs().maxCoeff());
        d(j) = 1.0 / std::sqrt(limit_scaling(cn));
      }
      for (int i = 0; i < R; ++i) {
        const double rn = Aw.row(i).cwiseAbs().maxCoeff();
        e(i) = 1.0 / std::sqrt(limit_scaling(rn));
      }
      Pw = d.asDiagonal() * Pw * d.asDiagonal();
      qw = d.asDiagonal() * qw;
      Aw = e.asDiagonal() * Aw * d.asDiagonal();
      col_scale.array() *= d.array();
      row_scale.array() *= e.array();

      double mean_col = 0.0;
      for (int j = 0; j < m; ++j) mean_col += Pw.col(j).cwiseAbs().maxCoeff();
      mean_col /= std::max(1, m);
      const double g =
          1.0 / limit_scaling(std::max(mean_col, inf_norm(qw)));
      Pw *= g;
      qw *= g;
      cost_scale *= g;
    }

    P_s = Pw.sparseView(0.0, 0.0);
    A_s = Aw.sparseView(0.0, 0.0);
    q_s = qw;
  }

  static bool pinned(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) return false;
    return hi - lo <= 1e-12 * std::max(1.0, std::abs(lo));
  }

  // Equality rows get a much larger step weight; which box rows count as
  // equalities depends on the bounds of the call being solved.
  void build_rho(const VectorXd& lb_cur, const VectorXd& ub_cur) {
    rho = VectorXd::Constant(R, rho_bar);
    for (int i = 0; i < r; ++i)
      if (pinned(prob.cl(i), prob.cu(i))) rho(i) = rho_bar * 1e3;
    for (int j = 0; j < m; ++j)
      if (pinned(lb_cur(j), ub_cur(j))) rho(r + j) = rho_bar * 1e3;
  }

  std::uint64_t pin_signature(const VectorXd& lb_cur, const VectorXd& ub_cur) const {
    std::uint64_t h = 1469598103934665603ull;
    for (int j = 0; j < m; ++j) {
      h ^= static_cast<std::uint64_t>(2 * j + (pinned(lb_cur(j), ub_cur(j)) ? 1 : 0));
      h *= 1099511628211ull;
    }
    return h;
  }

  void factorize() {
    double sigma = st.sigma;
    for (int attempt = 0; attempt < 4; ++attempt) {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(static_cast<std::size_t>(P_s.nonZeros() + 2 * A_s.nonZeros() + m + R));
      for (int k = 0; k < P_s.outerSize(); ++k)
        for (SparseMat::InnerIterator it(P_s, k); it; ++it)
          trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                            it.value());
      for (int j = 0; j < m; ++j) trip.emplace_back(j, j, sigma);
      for (int k = 0; k < A_s.outerSize(); ++k)
        for (SparseMat::InnerIterator it(A_s, k); it; ++it) {
          const int i = static_cast<int>(it.row());
          const int j = static_cast<int>(it.col());
          trip.emplace_back(m + i, j, it.value());
          trip.emplace_back(j, m + i, it.value());
        }
      for (int i = 0; i < R; ++i) trip.emplace_back(m + i, m + i, -1.0 / rho(i));
      SparseMat K(m + R, m + R);
      K.setFromTriplets(trip.begin(), trip.end());
      kkt.compute(K);
      if (kkt.info() == Eigen::Success) return;
      sigma *= 100.0;  // quasi-definite in exact arithmetic; nudge if roundoff bites
    }
    throw std::runtime_error("qp: KKT factorization failed");
  }

  // Scaled limits for the full row block given (possibly overridden) bounds.
  void scaled_limits(const VectorXd& lb, const VectorXd& ub, VectorXd& lo,
                     VectorXd& hi) const {
    lo.resize(R);
    hi.resize(R);
    for (int i = 0; i < r; ++i) {
      lo(i) = prob.cl(i) * row_scale(i);
      hi(i) = prob.cu(i) * row_scale(i);
    }
    for (int j = 0; j < m; ++j) {
      lo(r + j) = lb(j) * row_scale(r + j);
      hi(r + j) = ub(j) * row_scale(r + j);
    }
  }

  struct Residuals {
    double prim = kInf, dual = kInf;
    double norm_ax = 0, norm_z = 0, norm_px = 0, norm_aty = 0;
  };

  Residuals residuals(const VectorXd& xu, const VectorXd& zu,
                      const VectorXd& yu) const {
    Residuals res;
    VectorXd ax(R);
    if (r > 0) ax.head(r) = prob.A * xu;
    ax.tail(m) = xu;
    VectorXd px = prob.P * xu;
    VectorXd aty = VectorXd::Zero(m);
    if (r > 0) aty += prob.A.transpose() * yu.head(r);
    aty += yu.tail(m);
    res.prim = inf_norm(ax - zu);
    res.dual = inf_norm(px + prob.q + aty);
    res.norm_ax = inf_norm(ax);
    res.norm_z = inf_norm(zu);
    res.norm_px = inf_norm(px);
    res.norm_aty = std::max(inf_norm(aty), inf_norm(prob.q));
    return res;
  }

  // Lagrangian lower bound from row multipliers: the rows are relaxed with
  // the given y and the remaining box-constrained problem is minimized in
  // closed form (needs a diagonal P, which makes it separable). Valid for
  // any y, converged or not, so it certifies progress for the caller even
  // when the iteration stalls.
  double dual_bound(const VectorXd& y_rows, const VectorXd& lb_cur,
                    const VectorXd& ub_cur) const {
    if (!p_separable || y_rows.size() != r || !y_rows.allFinite()) return -kInf;
    // A multiplier pushing against a missing limit would make the support
    // term unbounded; projecting it to zero keeps the vector dual-feasible
    // and the bound valid, just possibly weaker.
    VectorXd yh = y_rows;
    double support = 0.0;
    for (int i = 0; i < r; ++i) {
      double& yi = yh(i);
      if (yi > 0.0) {
        if (std::isfinite(prob.cu(i)))
          support += yi * prob.cu(i);
        else
          yi = 0.0;
      } else if (yi < 0.0) {
        if (std::isfinite(prob.cl(i)))
          support += yi * prob.cl(i);
        else
          yi = 0.0;
      }
    }
    VectorXd c = prob.q;
    if (r > 0) c.noalias() += prob.A.transpose() * yh;
    double box_min = 0.0;
    for (int j = 0; j < m; ++j) {
      const double pj = p_diag(j);
      const double cj = c(j);
      const double lo = lb_cur(j);
      const double hi = ub_cur(j);
      if (pj > 0.0) {
        const double xs = std::clamp(-cj / pj, lo, hi);
        box_min += 0.5 * pj * xs * xs + cj * xs;
      } else if (cj > 0.0) {
        if (!std::isfinite(lo)) return -kInf;
        box_min += cj * lo;
      } else if (cj < 0.0) {
        if (!std::isfinite(hi)) return -kInf;
        box_min += cj * hi;
      }
    }
    return box_min - support;
  }

  VectorXd unscale_x(const VectorXd& xs) const {
    return col_scale.asDiagonal() * xs;
  }
  VectorXd unscale_y(const VectorXd& ys) const {
    return (row_scale.asDiagonal() * ys) / cost_scale;
  }
  VectorXd unscale_z(const VectorXd& zs) const {
    return zs.cwiseQuotient(row_scale);
  }

  bool primal_infeasibility_cert(const VectorXd& dy_u, const VectorXd& lo_u,
                                 const VectorXd& hi_u) const {
    const double norm_dy = inf_norm(dy_u);
    if (norm_dy <= 1e-14) return false;
    const double eps = st.eps_infeasible * norm_dy;
    VectorXd at_dy = VectorXd::Zero(m);
    if (r > 0) at_dy += prob.A.transpose() * dy_u.head(r);
    at_dy += dy_u.tail(m);
    if (inf_norm(at_dy) > eps) return false;
    double support = 0.0;
    for (int i = 0; i < R; ++i) {
      if (dy_u(i) > 0) {
        if (!std::isfinite(hi_u(i))) return false;
        support += hi_u(i) * dy_u(i);
      } else if (dy_u(i) < 0) {
        if (!std::isfinite(lo_u(i))) return false;
        support += lo_u(i) * dy_u(i);
      }
    }
    return support < -eps;
  }

  bool dual_infeasibility_cert(const VectorXd& dx_u, const VectorXd& lo_u,
                               const VectorXd& hi_u) const {
    const double norm_dx = inf_norm(dx_u);
    if (norm_dx <= 1e-14) return false;
    const double eps = st.eps_infeasible * norm_dx;
    if (inf_norm(prob.P * dx_u) > eps) return false;
    if (prob.q.dot(dx_u) >= -eps) return false;
    VectorXd adx(R);
    if (r > 0) adx.head(r) = prob.A * dx_u;
    adx.tail(m) = dx_u;
    for (int i = 0; i < R; ++i) {
      const bool lo_fin = std::isfinite(lo_u(i));
      const bool hi_fin = std::isfinite(hi_u(i));
      if (lo_fin && hi_fin) {
        if (std::abs(adx(i)) > eps) return false;
      } else if (hi_fin) {
        if (adx(i) > eps) return false;
      } else if (lo_fin) {
        if (adx(i) < -eps) return false;
      }
    }
    return true;
  }

  // Exact KKT refinement on the detected active set. The dual-sign guess can
  // miss rows whose multipliers have not built up yet and can carry stale
  // ones, so the set is repaired over a few rounds: rows the trial point
  // violates enter, rows whose multiplier comes out with the wrong sign
  // leave. Returns true when the best trial beats the incoming residual.
  // Each repair round factors a fresh reduced KKT system, which is the
  // expensive part; the caller-shared budget keeps a run from sinking
  // unbounded time into polish attempts that are not converging.
  bool polish(const VectorXd& lb, const VectorXd& ub, QpSolution& sol,
              int& round_budget) const {
    enum class Side : char { Lo, Hi };
    std::vector<Side> side(static_cast<std::size_t>(R), Side::Lo);
    std::vector<char> active(static_cast<std::size_t>(R), 0);
    std::vector<char> fixed(static_cast<std::size_t>(R), 0);
    auto row_lo = [&](int i) { return i < r ? prob.cl(i) : lb(i - r); };
    auto row_hi = [&](int i) { return i < r ? prob.cu(i) : ub(i - r); };

    VectorXd ax(R);
    if (r > 0) ax.head(r) = prob.A * sol.x;
    ax.tail(m) = sol.x;
    VectorXd y_full(R);
    y_full.head(r) = sol.y;
    y_full.tail(m) = sol.y_bounds;
    // A dual sign alone can flag a row the iterate has not actually pinned
    // yet (common on partially converged points), so additionally require
    // the row value to sit near the bound the dual points at.
    const double prox = 10.0 * std::max(sol.kkt.primal, st.eps_abs);
    for (int i = 0; i < R; ++i) {
      const double lo = row_lo(i);
      const double hi = row_hi(i);
      if (std::isfinite(lo) && std::isfinite(hi) &&
          hi - lo <= 1e-12 * std::max(1.0, std::abs(lo))) {
        active[i] = fixed[i] = 1;
      } else if (y_full(i) < -1e-12 && std::isfinite(lo) &&
                 ax(i) - lo <= prox * std::max(1.0, std::abs(lo))) {
        active[i] = 1;
      } else if (y_full(i) > 1e-12 && std::isfinite(hi) &&
                 hi - ax(i) <= prox * std::max(1.0, std::abs(hi))) {
        active[i] = 1;
        side[i] = Side::Hi;
      }
    }

    QuadraticProgram eff = prob;
    eff.lb = lb;
    eff.ub = ub;
    QpSolution best;
    bool have_best = false;
    int rounds = 0;
    std::vector<std::uint64_t> seen;

    for (int round = 0; round < 20 && round_budget > 0; ++round, --round_budget) {
      ++rounds;
      std::vector<int> act;
      std::vector<double> target;
      std::uint64_t sig = 1469598103934665603ull;
      for (int i = 0; i < R; ++i) {
        if (!active[i]) continue;
        act.push_back(i);
        target.push_back(side[i] == Side::Hi ? row_hi(i) : row_lo(i));
        sig ^= static_cast<std::uint64_t>(2 * i + (side[i] == Side::Hi));
        sig *= 1099511628211ull;
      }
      if (std::find(seen.begin(), seen.end(), sig) != seen.end()) break;
      seen.push_back(sig);
      const int k = static_cast<int>(act.size());
      const int n_sys = m + k;

      // The LDLT below runs without numerical pivoting, so a tiny
      // regularization can still hit a breakdown pivot. Retry with a larger
      // delta; the refinement passes solve against the unregularized system,
      // so the extra regularization does not leak into the answer.
      SparseMat K(n_sys, n_sys);
      Eigen::SimplicialLDLT<SparseMat> fac;
      bool factored = false;
      for (double delta = st.polish_delta; delta <= 1e-3; delta *= 100.0) {
        std::vector<Eigen::Triplet<double>> trip;
        for (int cj = 0; cj < m; ++cj) {
          for (int ci = 0; ci < m; ++ci) {
            const double v = prob.P(ci, cj);
            if (v != 0.0) trip.emplace_back(ci, cj, v);
          }
          trip.emplace_back(cj, cj, delta);
        }
        for (int a = 0; a < k; ++a) {
          const int i = act[a];
          if (i < r) {
            for (int j = 0; j < m; ++j) {
              const double v = prob.A(i, j);
              if (v != 0.0) {
                trip.emplace_back(m + a, j, v);
                trip.emplace_back(j, m + a, v);
              }
            }
          } else {
            trip.emplace_back(m + a, i - r, 1.0);
            trip.emplace_back(i - r, m + a, 1.0);
          }
          trip.emplace_back(m + a, m + a, -delta);
        }
        K.setFromTriplets(trip.begin(), trip.end());
        fac.compute(K);
        if (fac.info() == Eigen::Success) {
          factored = true;
          break;
        }
      }
      if (!factored) break;

      VectorXd rhs(n_sys);
      rhs.head(m) = -prob.q;
      for (int a = 0; a < k; ++a) rhs(m + a) = target[a];
      VectorXd sol_vec = fac.solve(rhs);

      // Iterative refinement against the unregularized system.
      auto apply_unreg = [&](const VectorXd& v) {
        VectorXd out(n_sys);
        out.head(m) = prob.P * v.head(m);
        for (int a = 0; a < k; ++a) {
          const int i = act[a];
          double dot = 0.0;
          if (i < r) {
            dot = prob.A.row(i).dot(v.head(m));
            out.head(m) += prob.A.row(i).transpose() * v(m + a);
          } else {
            dot = v(i - r);
            out(i - r) += v(m + a);
          }
          out(m + a) = dot;
        }
        return out;
      };
      // For a degenerate active set the unregularized operator is singular
      // and refinement can diverge; keep passes only while the residual
      // actually shrinks so the candidate stays bounded.
      double ref_res = (rhs - apply_unreg(sol_vec)).norm();
      for (int pass = 0; pass < 3; ++pass) {
        VectorXd next = sol_vec + fac.solve(rhs - apply_unreg(sol_vec));
        const double nr = (rhs - apply_unreg(next)).norm();
        if (!std::isfinite(nr) || nr >= ref_res) break;
        sol_vec = std::move(next);
        ref_res = nr;
      }

      QpSolution cand = sol;
      cand.x = sol_vec.head(m);
      cand.y = VectorXd::Zero(r);
      cand.y_bounds = VectorXd::Zero(m);
      for (int a = 0; a < k; ++a) {
        const int i = act[a];
        if (i < r)
          cand.y(i) = sol_vec(m + a);
        else
          cand.y_bounds(i - r) = sol_vec(m + a);
      }
      cand.kkt = kkt_residual(eff, cand.x, cand.y, cand.y_bounds);

      // A small residual is not enough: a multiplier pushing from the wrong
      // side of its bound marks a stationary point of the wrong restricted
      // problem, whose objective can undercut the true minimum.
      bool signs_ok = true;
      for (int a = 0; a < k && signs_ok; ++a) {
        const int i = act[a];
        if (fixed[i]) continue;
        const double yv = i < r ? cand.y(i) : cand.y_bounds(i - r);
        if (side[i] == Side::Lo ? yv > 1e-9 : yv < -1e-9) signs_ok = false;
      }
      if (signs_ok &&
          (!have_best || cand.kkt.max_residual() < best.kkt.max_residual())) {
        best = cand;
        have_best = true;
      }
      if (signs_ok && cand.kkt.max_residual() <= 1e-9) break;

      VectorXd cax(R);
      if (r > 0) cax.head(r) = prob.A * cand.x;
      cax.tail(m) = cand.x;
      bool changed = false;
      for (int i = 0; i < R; ++i) {
        if (fixed[i]) continue;
        if (active[i]) {
          const double yv = i < r ? cand.y(i) : cand.y_bounds(i - r);
          const bool wrong = side[i] == Side::Lo ? yv > 1e-9 : yv < -1e-9;
          if (wrong) {
            active[i] = 0;
            changed = true;
          }
        } else {
          const double lo = row_lo(i);
          const double hi = row_hi(i);
          if (std::isfinite(lo) &&
              lo - cax(i) > 1e-7 * std::max(1.0, std::abs(lo))) {
            active[i] = 1;
            side[i] = Side::Lo;
            changed = true;
          } else if (std::isfinite(hi) &&
                     cax(i) - hi > 1e-7 * std::max(1.0, std::abs(hi))) {
            active[i] = 1;
            side[i] = Side::Hi;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }

    if (have_best && best.kkt.max_residual() < sol.kkt.max_residual()) {
      best.objective = prob.objective(best.x);
      best.polished = true;
      sol = best;
      return true;
    }
    return false;
  }

  QpSolution run(const VectorXd& lb, const VectorXd& ub, const QpSolution* warm,
                 double cutoff) {
    if (lb.size() != m || ub.size() != m)
      throw std::invalid_argument("qp: bound override size mismatch");
    for (int j = 0; j < m; ++j)
      if (std::isnan(lb(j)) || std::isnan(ub(j)) || lb(j) > ub(j))
        throw std::invalid_argument("qp: crossed bound override");

    VectorXd lo, hi;
    scaled_limits(lb, ub, lo, hi);
    VectorXd lo_u(R), hi_u(R);
    for (int i = 0; i < r; ++i) {
      lo_u(i) = prob.cl(i);
      hi_u(i) = prob.cu(i);
    }
    lo_u.tail(m) = lb;
    hi_u.tail(m) = ub;

    if (warm != nullptr && warm->x.size() == m) {
      x = warm->x.cwiseQuotient(col_scale);
      y = VectorXd::Zero(R);
      if (warm->y.size() == r && warm->y_bounds.size() == m) {
        y.head(r) = warm->y.head(r);
        y.tail(m) = warm->y_bounds;
        y = (y.cwiseQuotient(row_scale)) * cost_scale;
      }
      z = (A_s * x).cwiseMax(lo).cwiseMin(hi);
    } else {
      x = VectorXd::Zero(m);
      z = VectorXd::Zero(R).cwiseMax(lo).cwiseMin(hi);
      y = VectorXd::Zero(R);
    }

    QpSolution out;
    out.status = QpStatus::MaxIterations;
    refactors = 0;
    const std::uint64_t sig = pin_signature(lb, ub);
    if (sig != pin_sig) {
      pin_sig = sig;
      build_rho(lb, ub);
      factorize();
    }

    QuadraticProgram eff = prob;
    eff.lb = lb;
    eff.ub = ub;
    double best_db = -kInf;
    auto note_db = [&](const VectorXd& y_rows) {
      const double db = dual_bound(y_rows, lb, ub);
      if (db > best_db) best_db = db;
      return best_db;
    };
    const double loose_abs = std::max(st.eps_abs, 1e-4);
    const double loose_rel = std::max(st.eps_rel, 1e-4);
    int polish_tries = st.polish ? 8 : 0;
    int polish_next_iter = 500;
    double last_eps_pri = st.eps_abs;
    double last_eps_dua = st.eps_abs;

    auto meets_tolerances = [&](const QpSolution& s) {
      VectorXd av(R);
      if (r > 0) av.head(r) = prob.A * s.x;
      av.tail(m) = s.x;
      VectorXd yv(R);
      yv.head(r) = s.y;
      yv.tail(m) = s.y_bounds;
      VectorXd aty = VectorXd::Zero(m);
      if (r > 0) aty = prob.A.transpose() * yv.head(r);
      aty += yv.tail(m);
      const double e_pri =
          st.eps_abs + st.eps_rel * av.lpNorm<Eigen::Infinity>();
      const double e_dua =
          st.eps_abs +
          st.eps_rel * std::max((prob.P * s.x).lpNorm<Eigen::Infinity>(),
                                aty.lpNorm<Eigen::Infinity>());
      return s.kkt.primal <= e_pri && s.kkt.stationarity <= e_dua &&
             s.kkt.complementarity <= 10.0 * std::max(e_pri, e_dua);
    };

    // Warm multipliers certify a bound before any iteration runs: under
    // tighter bounds the same y gives an equal or larger Lagrangian value,
    // which often already crosses the caller's cutoff.
    if (warm != nullptr && warm->y.size() == r &&
        note_db(warm->y) >= cutoff) {
      QpSolution quick;
      quick.x = VectorXd::Zero(m);
      if (warm->x.size() == m) quick.x = warm->x.cwiseMax(lb).cwiseMin(ub);
      quick.y = warm->y;
      quick.y_bounds = warm->y_bounds.size() == m ? warm->y_bounds
                                                  : VectorXd::Zero(m);
      quick.kkt = kkt_residual(eff, quick.x, quick.y, quick.y_bounds);
      quick.objective = prob.objective(quick.x);
      quick.lower_bound = best_db;
      quick.status = QpStatus::CutoffExceeded;
      return quick;
    }

    // A warm start that carries exact multipliers (a polished parent node in
    // a branch-and-bound tree, say) usually differs from this problem's
    // solution by a handful of active rows; pivoting from its active set
    // often solves the problem outright without any splitting iterations.
    if (st.polish && warm != nullptr && warm->x.size() == m &&
        warm->y.size() == r && warm->y_bounds.size() == m &&
        warm->x.allFinite()) {
      QpSolution trial;
      trial.x = warm->x.cwiseMax(lb).cwiseMin(ub);
      trial.y = warm->y;
      trial.y_bounds = warm->y_bounds;
      trial.kkt = kkt_residual(eff, trial.x, trial.y, trial.y_bounds);
      int warm_rounds = 6;
      if (polish(lb, ub, trial, warm_rounds) && meets_tolerances(trial)) {
        trial.status = QpStatus::Optimal;
        trial.iterations = 0;
        note_db(trial.y);
        trial.lower_bound = best_db;
        return trial;
      }
    }

    VectorXd rhs(m + R), xt(m), nu(R), zt(R), z_relax(R), x_prev(m), y_prev(R);
    int iter = 0;
    while (iter < st.max_iter) {
      ++iter;
      x_prev = x;
      y_prev = y;

      rhs.head(m) = st.sigma * x - q_s;
      rhs.tail(R) = z - y.cwiseQuotient(rho);
      VectorXd sol_vec = kkt.solve(rhs);
      xt = sol_vec.head(m);
      nu = sol_vec.tail(R);
      zt = z + (nu - y).cwiseQuotient(rho);

      x = st.relax_alpha * xt + (1.0 - st.relax_alpha) * x;
      z_relax = st.relax_alpha * zt + (1.0 - st.relax_alpha) * z;
      z = (z_relax + y.cwiseQuotient(rho)).cwiseMax(lo).cwiseMin(hi);
      y = y + rho.cwiseProduct(z_relax - z);

      const bool last = iter == st.max_iter;
      if (iter % st.check_interval != 0 && !last) continue;

      VectorXd xu = unscale_x(x);
      VectorXd zu = unscale_z(z);
      VectorXd yu = unscale_y(y);
      Residuals res = residuals(xu, zu, yu);
      const double eps_pri =
          st.eps_abs + st.eps_rel * std::max(res.norm_ax, res.norm_z);
      const double eps_dua =
          st.eps_abs + st.eps_rel * std::max(res.norm_px, res.norm_aty);
      last_eps_pri = eps_pri;
      last_eps_dua = eps_dua;
      if (res.prim <= eps_pri && res.dual <= eps_dua) {
        out.status = QpStatus::Optimal;
        break;
      }

      if (std::isfinite(cutoff) && (iter % (st.check_interval * 4) == 0 || last) &&
          note_db(yu.head(r)) >= cutoff) {
        out.x = xu;
        out.y = yu.head(r);
        out.y_bounds = yu.tail(m);
        out.kkt = kkt_residual(eff, out.x, out.y, out.y_bounds);
        out.objective = prob.objective(out.x);
        out.iterations = iter;
        out.lower_bound = best_db;
        out.status = QpStatus::CutoffExceeded;
        return out;
      }

      // Once the iterate is roughly converged (or progress has stalled for a
      // while), polishing often lands the exact solution directly; accept it
      // early when it meets the strict tolerance instead of grinding out the
      // remaining iterations.
      const bool near =
          res.prim <=
              loose_abs + loose_rel * std::max(res.norm_ax, res.norm_z) &&
          res.dual <=
              loose_abs + loose_rel * std::max(res.norm_px, res.norm_aty);
      if (polish_tries > 0 && (near || iter >= polish_next_iter)) {
        --polish_tries;
        polish_next_iter = iter * 2;
        QpSolution trial;
        trial.x = xu;
        trial.y = yu.head(r);
        trial.y_bounds = yu.tail(m);
        trial.kkt = kkt_residual(eff, trial.x, trial.y, trial.y_bounds);
        // Far from convergence the active set guess is usually wrong, so a
        // failed attempt should stay cheap; spend real effort only nearby.
        int try_rounds = near ? 12 : 4;
        if (polish(lb, ub, trial, try_rounds) && trial.kkt.primal <= eps_pri &&
            trial.kkt.stationarity <= eps_dua &&
            trial.kkt.complementarity <= 10.0 * std::max(eps_pri, eps_dua)) {
          trial.status = QpStatus::Optimal;
          trial.iterations = iter;
          note_db(trial.y);
          trial.lower_bound = best_db;
          return trial;
        }
      }

      VectorXd dy_u = unscale_y(y - y_prev);
      if (primal_infeasibility_cert(dy_u, lo_u, hi_u)) {
        out.status = QpStatus::Infeasible;
        out.x = xu;
        out.y = dy_u.head(r);
        out.y_bounds = dy_u.tail(m);
        out.objective = kInf;
        out.lower_bound = kInf;
        out.iterations = iter;
        return out;
      }
      VectorXd dx_u = unscale_x(x - x_prev);
      if (dual_infeasibility_cert(dx_u, lo_u, hi_u)) {
        // Unbounded below; the status set folds this into MaxIterations.
        break;
      }

      if (st.adaptive_rho && refactors < 12 && iter >= st.check_interval * 8 &&
          iter % (st.check_interval * 4) == 0 && !last) {
        const double num = res.prim / std::max({res.norm_ax, res.norm_z, 1e-10});
        const double den =
            res.dual / std::max({res.norm_px, res.norm_aty, 1e-10});
        const double ratio = std::sqrt(num / std::max(den, 1e-16));
        if (ratio > 5.0 || ratio < 0.2) {
          rho_bar = std::clamp(rho_bar * ratio, 1e-6, 1e6);
          build_rho(lb, ub);
          factorize();
          ++refactors;
        }
      }
    }

    out.x = unscale_x(x);
    out.y = unscale_y(y).head(r);
    out.y_bounds = unscale_y(y).tail(m);
    out.iterations = iter;
    out.kkt = kkt_residual(eff, out.x, out.y, out.y_bounds);
    out.objective = prob.objective(out.x);

    int final_budget = 20;
    if (out.status == QpStatus::Optimal && st.polish)
      polish(lb, ub, out, final_budget);

    // A run that stalls at the iteration cap often still identifies the
    // active set; when the polished point meets the strict tolerances,
    // report it as solved.
    if (out.status == QpStatus::MaxIterations && st.polish &&
        polish(lb, ub, out, final_budget) && out.kkt.primal <= last_eps_pri &&
        out.kkt.stationarity <= last_eps_dua &&
        out.kkt.complementarity <=
            10.0 * std::max(last_eps_pri, last_eps_dua)) {
      out.status = QpStatus::Optimal;
    }

    if (out.status == QpStatus::MaxIterations && st.active_set_fallback &&
        m <= 200) {
      QpSolution exact = solve_qp_active_set(eff);
      if (exact.status != QpStatus::MaxIterations) {
        if (exact.y.size() == r) note_db(exact.y);
        exact.lower_bound =
            exact.status == QpStatus::Infeasible ? kInf : best_db;
        return exact;
      }
    }
    if (out.y.size() == r) note_db(out.y);
    out.lower_bound = best_db;
    return out;
  }
};

QpSolver::QpSolver(QuadraticProgram prob, QpSettings settings)
    : impl_(std::make_unique<Impl>(std::move(prob), std::move(settings))) {}
QpSolver::~QpSolver() = default;
QpSolver::QpSolver(QpSolver&&) noexcept = default;
QpSolver& QpSolver::operator=(QpSolver&&) noexcept = default;

QpSolution QpSolver::solve() {
  return impl_->run(impl_->prob.lb, impl_->prob.ub, nullptr, kInf);
}

QpSolution QpSolver::solve(const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                           const QpSolution* warm_start, double cutoff) {
  return impl_->run(lb, ub, warm_start, cutoff);
}

const QuadraticProgram& QpSolver::problem() const { return impl_->prob; }

QpSolution solve_qp(const QuadraticProgram& prob, double tol, int max_iter) {
  QpSettings st;
  st.eps_abs = tol;
  st.max_iter = max_iter;
  return solve_qp(prob, st);
}

QpSolution solve_qp(const QuadraticProgram& prob, const QpSettings& settings) {
  QpSolver solver(prob, settings);
  return solver.solve();
}

//=============================== svm ===============================//

SvmSolution solve_svm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& C,
                      const std::vector<bool>* fixed_zero_features,
                      const QpSettings& settings) {
  const long I = X.rows();
  const int n = static_cast<int>(X.cols());
  if (I == 0) throw std::invalid_argument("svm: empty dataset");
  if (y.size() != I || C.size() != I)
    throw std::invalid_argument("svm: y/C size mismatch");
  for (long i = 0; i < I; ++i) {
    if (y(i) != 1.0 && y(i) != -1.0)
      throw std::invalid_argument("svm: labels must be -1/+1");
    if (!(C(i) > 0.0)) throw std::invalid_argument("svm: C must be positive");
  }
  if (fixed_zero_features != nullptr &&
      static_cast<int>(fixed_zero_features->size()) != n)
    throw std::invalid_argument("svm: mask size mismatch");

  SvmSolution sol;
  sol.w = VectorXd::Zero(n);
  sol.xi = VectorXd::Zero(I);

  // Single-class data: margin holds with w = 0, b = label, no loss.
  bool single_class = true;
  for (long i = 1; i < I; ++i)
    if (y(i) != y(0)) {
      single_class = false;
      break;
    }
  if (single_class) {
    sol.b = y(0);
    sol.objective = 0.0;
    sol.status = QpStatus::Optimal;
    return sol;
  }

  std::vector<int> active;
  for (int j = 0; j < n; ++j)
    if (fixed_zero_features == nullptr || !(*fixed_zero_features)[j])
      active.push_back(j);
  const int na = static_cast<int>(active.size());

  const int mv = na + 1 + static_cast<int>(I);
  QuadraticProgram prob = QuadraticProgram::make(mv, static_cast<int>(I));
  for (int j = 0; j < na; ++j) prob.P(j, j) = 1.0;
  for (long i = 0; i < I; ++i) {
    prob.q(na + 1 + i) = C(i);
    for (int j = 0; j < na; ++j) prob.A(i, j) = y(i) * X(i, active[j]);
    prob.A(i, na) = y(i);
    prob.A(i, na + 1 + i) = 1.0;
    prob.cl(i) = 1.0;
    prob.lb(na + 1 + i) = 0.0;
  }

  QpSolution qp = solve_qp(prob, settings);
  for (int j = 0; j < na; ++j) sol.w(active[j]) = qp.x(j);
  sol.b = qp.x(na);
  sol.xi = (VectorXd::Ones(I) -
            y.cwiseProduct(X * sol.w + VectorXd::Constant(I, sol.b)))
               .cwiseMax(0.0);
  sol.objective = 0.5 * sol.w.squaredNorm() + C.dot(sol.xi);
  sol.status = qp.status;
  return sol;
}

}  // namespace margot
