#include "margot/active_set.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace margot {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Constraint {
  VectorXd a;   // unit normal
  double beta;  // a'x >= beta
  int row = -1;
  int var = -1;
  int side = -1;  // -1 lower, +1 upper
  bool equality = false;
  double norm = 1.0;
};

enum class InnerStatus { Optimal, Infeasible, Stalled };

struct InnerResult {
  InnerStatus status = InnerStatus::Stalled;
  VectorXd x;
  std::vector<int> active;
  std::vector<double> multipliers;
};

// Dual active-set method for strictly convex QPs: start at the unconstrained
// minimum and add violated constraints one at a time, taking partial steps
// that drop blocking inequalities when their multipliers would go negative.
InnerResult solve_strictly_convex(const Eigen::LLT<MatrixXd>& llt,
                                  const VectorXd& q,
                                  const std::vector<Constraint>& cons) {
  const int n = static_cast<int>(q.size());
  const int nc = static_cast<int>(cons.size());
  InnerResult res;
  res.x = -llt.solve(q);

  std::vector<int> active;
  std::vector<double> u;
  std::vector<char> in_active(cons.size(), 0);

  MatrixXd N(n, 0);
  MatrixXd GiN(n, 0);

  auto append_active = [&](int idx, double mult) {
    const int k = static_cast<int>(active.size());
    active.push_back(idx);
    u.push_back(mult);
    in_active[idx] = 1;
    N.conservativeResize(n, k + 1);
    GiN.conservativeResize(n, k + 1);
    N.col(k) = cons[idx].a;
    GiN.col(k) = llt.solve(cons[idx].a);
  };
  auto remove_active = [&](int pos) {
    in_active[active[pos]] = 0;
    const int k = static_cast<int>(active.size());
    for (int j = pos; j + 1 < k; ++j) {
      active[j] = active[j + 1];
      u[j] = u[j + 1];
      N.col(j) = N.col(j + 1);
      GiN.col(j) = GiN.col(j + 1);
    }
    active.pop_back();
    u.pop_back();
    N.conservativeResize(n, k - 1);
    GiN.conservativeResize(n, k - 1);
  };

  // step direction for candidate normal a: z moves x, rvec moves multipliers
  auto directions = [&](const VectorXd& a, VectorXd& z, VectorXd& rvec) {
    VectorXd gia = llt.solve(a);
    const int k = static_cast<int>(active.size());
    if (k == 0) {
      z = gia;
      rvec.resize(0);
      return true;
    }
    MatrixXd M = N.transpose() * GiN;
    Eigen::FullPivLU<MatrixXd> lu(M);
    if (!lu.isInvertible()) return false;
    rvec = lu.solve(N.transpose() * gia);
    z = gia - GiN * rvec;
    return true;
  };

  const int max_steps = 50 * (nc + 10);
  int steps = 0;

  // equalities first; they are never dropped and their multipliers are free
  for (int c = 0; c < nc; ++c) {
    if (!cons[c].equality) continue;
    VectorXd z, rvec;
    if (!directions(cons[c].a, z, rvec)) return res;
    const double s = cons[c].a.dot(res.x) - cons[c].beta;
    const double za = cons[c].a.dot(z);
    if (za <= 1e-13) {
      if (std::abs(s) > 1e-9) {
        res.status = InnerStatus::Infeasible;
        return res;
      }
      continue;  // dependent but consistent
    }
    const double t = -s / za;
    res.x += t * z;
    for (std::size_t j = 0; j < u.size(); ++j) u[j] -= t * rvec(static_cast<long>(j));
    append_active(c, t);
  }

  while (steps++ < max_steps) {
    // most violated inequality
    int p = -1;
    double worst = -1e-12;
    for (int c = 0; c < nc; ++c) {
      if (cons[c].equality || in_active[c]) continue;
      const double s = cons[c].a.dot(res.x) - cons[c].beta;
      if (s < worst) {
        worst = s;
        p = c;
      }
    }
    if (p < 0) {
      res.status = InnerStatus::Optimal;
      res.active = active;
      res.multipliers = u;
      return res;
    }

    double up = 0.0;
    while (steps++ < max_steps) {
      VectorXd z, rvec;
      if (!directions(cons[p].a, z, rvec)) return res;

      double t1 = std::numeric_limits<double>::infinity();
      int blocking = -1;
      for (std::size_t j = 0; j < active.size(); ++j) {
        if (cons[active[j]].equality) continue;
        const double rj = rvec(static_cast<long>(j));
        if (rj > 1e-13) {
          const double cand = u[j] / rj;
          if (cand < t1) {
            t1 = cand;
            blocking = static_cast<int>(j);
          }
        }
      }

      const double za = cons[p].a.dot(z);
      double t2 = std::numeric_limits<double>::infinity();
      double s = cons[p].a.dot(res.x) - cons[p].beta;
      if (za > 1e-13) t2 = -s / za;

      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        res.status = InnerStatus::Infeasible;
        return res;
      }

      if (std::isfinite(t2)) res.x += t * z;
      for (std::size_t j = 0; j < u.size(); ++j) u[j] -= t * rvec(static_cast<long>(j));
      up += t;

      if (t == t2 && t2 <= t1) {
        append_active(p, up);
        break;
      }
      remove_active(blocking);
    }
  }
  return res;
}

}  // namespace

QpSolution solve_qp_active_set(const QuadraticProgram& prob, double tol,
                               int max_prox_iters) {
  prob.validate();
  const int n = prob.num_vars();
  const int r = prob.num_rows();

  QpSolution out;
  out.status = QpStatus::MaxIterations;
  out.x = VectorXd::Zero(n);
  out.y = VectorXd::Zero(r);
  out.y_bounds = VectorXd::Zero(n);
  out.objective = kInf;

  std::vector<Constraint> cons;
  auto push = [&cons](VectorXd a, double beta, int row, int var, int side,
                      bool eq) {
    Constraint c;
    c.norm = a.norm();
    if (c.norm <= 1e-14) return true;  // vacuous direction, caller checks beta
    c.a = a / c.norm;
    c.beta = beta / c.norm;
    c.row = row;
    c.var = var;
    c.side = side;
    c.equality = eq;
    cons.push_back(std::move(c));
    return true;
  };

  for (int i = 0; i < r; ++i) {
    VectorXd a = prob.A.row(i).transpose();
    const bool lo = std::isfinite(prob.cl(i));
    const bool hi = std::isfinite(prob.cu(i));
    const bool eq = lo && hi &&
                    prob.cu(i) - prob.cl(i) <=
                        1e-12 * std::max(1.0, std::abs(prob.cl(i)));
    if (a.norm() <= 1e-14) {
      if ((lo && prob.cl(i) > 1e-9) || (hi && prob.cu(i) < -1e-9)) {
        out.status = QpStatus::Infeasible;
        return out;
      }
      continue;
    }
    if (eq) {
      push(a, prob.cl(i), i, -1, -1, true);
    } else {
      if (lo) push(a, prob.cl(i), i, -1, -1, false);
      if (hi) push(-a, -prob.cu(i), i, -1, +1, false);
    }
  }
  for (int j = 0; j < n; ++j) {
    const bool lo = std::isfinite(prob.lb(j));
    const bool hi = std::isfinite(prob.ub(j));
    const bool eq = lo && hi &&
                    prob.ub(j) - prob.lb(j) <=
                        1e-12 * std::max(1.0, std::abs(prob.lb(j)));
    VectorXd e = VectorXd::Zero(n);
    e(j) = 1.0;
    if (eq) {
      push(e, prob.lb(j), -1, j, -1, true);
    } else {
      if (lo) push(e, prob.lb(j), -1, j, -1, false);
      if (hi) push(-e, -prob.ub(j), -1, j, +1, false);
    }
  }
  std::stable_sort(cons.begin(), cons.end(),
                   [](const Constraint& a, const Constraint& b) {
                     return a.equality && !b.equality;
                   });

  // Per-variable proximal weights. Keeping mu_j proportional to the local
  // data scale caps the unconstrained starting point of the inner method at
  // ~1e4 in every coordinate, which keeps step arithmetic well conditioned.
  VectorXd mu(n);
  for (int j = 0; j < n; ++j)
    mu(j) = 1e-4 * std::max({1.0, prob.P(j, j), std::abs(prob.q(j))});
  MatrixXd G = prob.P;
  G.diagonal() += mu;
  Eigen::LLT<MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("active set: regularized matrix not positive definite");
  }

  VectorXd x_ref = VectorXd::Zero(n);
  for (int it = 0; it < max_prox_iters; ++it) {
    VectorXd q_mu = prob.q - mu.cwiseProduct(x_ref);
    InnerResult inner = solve_strictly_convex(llt, q_mu, cons);
    if (inner.status == InnerStatus::Infeasible) {
      out.status = QpStatus::Infeasible;
      return out;
    }
    if (inner.status == InnerStatus::Stalled) {
      out.status = QpStatus::MaxIterations;
      return out;
    }

    VectorXd y = VectorXd::Zero(r);
    VectorXd yb = VectorXd::Zero(n);
    for (std::size_t k = 0; k < inner.active.size(); ++k) {
      const Constraint& c = cons[inner.active[k]];
      const double lam = inner.multipliers[k] / c.norm;
      const double signed_lam = c.side < 0 ? -lam : lam;
      if (c.row >= 0)
        y(c.row) += signed_lam;
      else
        yb(c.var) += signed_lam;
    }

    KktResiduals kkt = kkt_residual(prob, inner.x, y, yb);
    if (it == 0 || kkt.max_residual() < out.kkt.max_residual()) {
      out.x = inner.x;
      out.y = y;
      out.y_bounds = yb;
      out.kkt = kkt;
      out.objective = prob.objective(inner.x);
      out.iterations = it + 1;
      out.polished = true;
    }
    if (kkt.max_residual() <= tol) {
      out.status = QpStatus::Optimal;
      return out;
    }
    if ((inner.x - x_ref).lpNorm<Eigen::Infinity>() <=
        1e-14 * std::max(1.0, inner.x.lpNorm<Eigen::Infinity>()))
      return out;  // fixed point at the numerical floor
    x_ref = inner.x;
    if (x_ref.lpNorm<Eigen::Infinity>() > 1e12) break;  // diverging, unbounded
  }
  return out;
}

}  // namespace margot
