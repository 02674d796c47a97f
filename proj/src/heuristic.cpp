#include "margot/heuristic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "margot/bnb.hpp"

namespace margot {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

VectorXd hinge(const MatrixXd& X, const VectorXd& y, const VectorXd& w,
               double b) {
  return (VectorXd::Ones(X.rows()) -
          y.cwiseProduct(X * w + VectorXd::Constant(X.rows(), b)))
      .cwiseMax(0.0);
}

/// Smallest |delta| intercept shift (ties upward) that leaves no sample with
/// w'x + b in the open dead zone (-epsilon, 0), where neither routing side
/// accepts it. Validity is checked on recomputed values so the partition
/// made later sees exactly what was verified.
double clear_dead_zone(const MatrixXd& X, const VectorXd& w, double b,
                       double epsilon, bool& nudged) {
  const VectorXd hw = X * w;
  auto zone_free = [&](double bb) {
    for (long i = 0; i < hw.size(); ++i) {
      const double h = hw(i) + bb;
      if (h > -epsilon && h < 0.0) return false;
    }
    return true;
  };
  if (zone_free(b)) return b;

  std::vector<double> deltas;
  deltas.reserve(static_cast<std::size_t>(2 * hw.size()));
  for (long i = 0; i < hw.size(); ++i) {
    const double h = hw(i) + b;
    deltas.push_back(-h);            // sample lands exactly on the right edge
    deltas.push_back(-h - epsilon);  // or exactly on the left edge
  }
  std::sort(deltas.begin(), deltas.end(), [](double a, double c) {
    const double aa = std::abs(a), cc = std::abs(c);
    if (aa != cc) return aa < cc;
    return a > c;
  });
  for (double d : deltas) {
    if (zone_free(b + d)) {
      nudged = true;
      return b + d;
    }
  }
  throw std::logic_error("dead zone shift search failed");
}

double binomial_capped(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) {
    r *= static_cast<double>(n - k + i);
    r /= static_cast<double>(i);
    if (r > 1e12) return r;
  }
  return r;
}

bool next_combination(std::vector<int>& comb, int n) {
  const int k = static_cast<int>(comb.size());
  for (int i = k - 1; i >= 0; --i) {
    if (comb[i] < n - k + i) {
      ++comb[i];
      for (int j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
      return true;
    }
  }
  return false;
}

struct MaskedFit {
  VectorXd w;
  double b = 0.0;
  double objective = kInf;
  bool ok = false;
};

/// Soft-margin SVM with the weight support restricted to `active` and every
/// weight boxed to [-M_w, M_w], matching the linking rows of the selection
/// variants. Assumes both classes present.
MaskedFit masked_box_svm(const MatrixXd& X, const VectorXd& y, double C,
                         const std::vector<int>& active, double M_w,
                         double qp_tol) {
  const long I = X.rows();
  const int n = static_cast<int>(X.cols());
  const int k = static_cast<int>(active.size());
  QuadraticProgram prob = QuadraticProgram::make(k + 1 + static_cast<int>(I),
                                                 static_cast<int>(I));
  for (int j = 0; j < k; ++j) {
    prob.P(j, j) = 1.0;
    prob.lb(j) = -M_w;
    prob.ub(j) = M_w;
  }
  for (long i = 0; i < I; ++i) {
    const int xi = k + 1 + static_cast<int>(i);
    prob.q(xi) = C;
    prob.lb(xi) = 0.0;
    for (int j = 0; j < k; ++j) prob.A(i, j) = y(i) * X(i, active[j]);
    prob.A(i, k) = y(i);
    prob.A(i, xi) = 1.0;
    prob.cl(i) = 1.0;
  }
  QpSettings st;
  st.eps_abs = qp_tol;
  QpSolution sol = solve_qp(prob, st);
  MaskedFit fit;
  fit.ok = sol.status == QpStatus::Optimal;
  fit.w = VectorXd::Zero(n);
  for (int j = 0; j < k; ++j) fit.w(active[j]) = sol.x(j);
  fit.b = sol.x(k);
  const VectorXd xi = hinge(X, y, fit.w, fit.b);
  fit.objective = 0.5 * fit.w.squaredNorm() + C * xi.sum();
  return fit;
}

/// One-node feature-selection MIQP: SVM terms plus selector bits with
/// linking rows, a hard budget (HFS) or a penalized excess variable (SFS).
MixedIntegerQP node_selection_miqp(const MatrixXd& X, const VectorXd& y,
                                   double C, int budget, double alpha,
                                   ModelVariant mode, double M_w) {
  const long I = X.rows();
  const int n = static_cast<int>(X.cols());
  const bool sfs = mode == ModelVariant::Sfs;
  const int vars = n + 1 + static_cast<int>(I) + n + (sfs ? 1 : 0);
  const int rows = static_cast<int>(I) + 2 * n + 1;
  MixedIntegerQP miqp;
  miqp.base = QuadraticProgram::make(vars, rows);
  auto& base = miqp.base;
  const int b_ix = n;
  const int xi0 = n + 1;
  const int s0 = n + 1 + static_cast<int>(I);
  const int u_ix = s0 + n;

  for (int j = 0; j < n; ++j) base.P(j, j) = 1.0;
  for (long i = 0; i < I; ++i) {
    const int xi = xi0 + static_cast<int>(i);
    base.q(xi) = C;
    base.lb(xi) = 0.0;
    for (int j = 0; j < n; ++j) base.A(i, j) = y(i) * X(i, j);
    base.A(i, b_ix) = y(i);
    base.A(i, xi) = 1.0;
    base.cl(i) = 1.0;
  }
  for (int j = 0; j < n; ++j) {
    base.lb(s0 + j) = 0.0;
    base.ub(s0 + j) = 1.0;
    miqp.binary_vars.push_back(s0 + j);
    const int lo = static_cast<int>(I) + j;
    const int hi = static_cast<int>(I) + n + j;
    base.A(lo, j) = 1.0;
    base.A(lo, s0 + j) = M_w;
    base.cl(lo) = 0.0;
    base.A(hi, j) = 1.0;
    base.A(hi, s0 + j) = -M_w;
    base.cu(hi) = 0.0;
  }
  const int last_row = static_cast<int>(I) + 2 * n;
  if (sfs) {
    base.q(u_ix) = alpha;
    base.lb(u_ix) = 0.0;
    base.A(last_row, u_ix) = 1.0;
    for (int j = 0; j < n; ++j) base.A(last_row, s0 + j) = -1.0;
    base.cl(last_row) = -static_cast<double>(budget);
  } else {
    for (int j = 0; j < n; ++j) base.A(last_row, s0 + j) = 1.0;
    base.cu(last_row) = static_cast<double>(budget);
  }
  return miqp;
}

std::vector<int> top_weight_features(const VectorXd& w, int count) {
  std::vector<int> order(static_cast<std::size_t>(w.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(w(a)) > std::abs(w(b));
  });
  order.resize(static_cast<std::size_t>(std::min<long>(count, w.size())));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

NodeFit ws_svm_node(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    double C, int budget, double alpha, ModelVariant mode,
                    const Hyperparameters& hp, double time_budget,
                    double qp_tol) {
  const long I = X.rows();
  const int n = static_cast<int>(X.cols());
  NodeFit fit;
  fit.w = VectorXd::Zero(n);
  fit.xi = VectorXd::Zero(I);
  if (mode != ModelVariant::Margot)
    fit.s = VectorXd::Zero(n);

  if (I == 0) {
    fit.b = 1.0;
    return fit;
  }
  bool single_class = true;
  for (long i = 1; i < I; ++i)
    if (y(i) != y(0)) {
      single_class = false;
      break;
    }
  if (single_class) {
    fit.b = y(0);
    return fit;
  }

  const auto t0 = Clock::now();
  auto remaining = [&] {
    return time_budget -
           std::chrono::duration<double>(Clock::now() - t0).count();
  };

  if (mode == ModelVariant::Margot) {
    QpSettings st;
    st.eps_abs = qp_tol;
    SvmSolution svm = solve_svm(X, y, VectorXd::Constant(I, C), nullptr, st);
    fit.w = svm.w;
    fit.b = svm.b;
  } else if (mode == ModelVariant::Hfs &&
             binomial_capped(n, budget) <= 1e4) {
    std::vector<int> comb(static_cast<std::size_t>(budget));
    std::iota(comb.begin(), comb.end(), 0);
    MaskedFit best;
    do {
      if (remaining() <= 0.0 && best.ok) {
        fit.hit_time_limit = true;
        break;
      }
      MaskedFit cand = masked_box_svm(X, y, C, comb, hp.M_w, qp_tol);
      if (cand.ok && (!best.ok || cand.objective < best.objective)) {
        best = cand;
        fit.s.setZero();
        for (int j : comb) fit.s(j) = 1.0;
      }
    } while (next_combination(comb, n));
    if (!best.ok) throw std::runtime_error("node subproblem did not converge");
    fit.w = best.w;
    fit.b = best.b;
  } else {
    MixedIntegerQP miqp =
        node_selection_miqp(X, y, C, budget, alpha, mode, hp.M_w);
    BnbParams params;
    params.time_limit = std::max(remaining(), 0.05);
    params.qp_tol = std::max(qp_tol, 1e-9);
    BnbSolver solver(miqp, params);

    // two starts: the majority stump and the top-|w| restriction of the
    // unrestricted svm
    {
      const double maj = y.sum() >= 0 ? 1.0 : -1.0;
      VectorXd x0 = VectorXd::Zero(miqp.base.num_vars());
      x0(n) = maj;
      const VectorXd xi0 = hinge(X, y, VectorXd::Zero(n), maj);
      for (long i = 0; i < I; ++i) x0(n + 1 + i) = xi0(i);
      if (mode == ModelVariant::Sfs) x0(miqp.base.num_vars() - 1) = 0.0;
      solver.inject_incumbent(x0);
    }
    {
      QpSettings st;
      st.eps_abs = qp_tol;
      SvmSolution svm = solve_svm(X, y, VectorXd::Constant(I, C), nullptr, st);
      const std::vector<int> mask = top_weight_features(svm.w, budget);
      MaskedFit warm = masked_box_svm(X, y, C, mask, hp.M_w, qp_tol);
      if (warm.ok) {
        VectorXd x1 = VectorXd::Zero(miqp.base.num_vars());
        for (int j = 0; j < n; ++j) x1(j) = warm.w(j);
        x1(n) = warm.b;
        const VectorXd xi1 = hinge(X, y, warm.w, warm.b);
        for (long i = 0; i < I; ++i) x1(n + 1 + i) = xi1(i);
        for (int j : mask) x1(n + 1 + I + j) = 1.0;
        solver.inject_incumbent(x1);
      }
    }
    BnbResult res = solver.run();
    if (!res.has_incumbent())
      throw std::runtime_error("node subproblem found no feasible point");
    fit.hit_time_limit = res.status == BnbStatus::TimeLimit;
    for (int j = 0; j < n; ++j) {
      fit.s(j) = std::round(res.x(n + 1 + I + j));
      fit.w(j) = fit.s(j) > 0.5 ? res.x(j) : 0.0;
    }
    fit.b = res.x(n);
    if (mode == ModelVariant::Sfs)
      fit.u = std::max(0.0, fit.s.sum() - static_cast<double>(budget));
  }

  fit.b = clear_dead_zone(X, fit.w, fit.b, hp.epsilon, fit.nudged);
  fit.xi = hinge(X, y, fit.w, fit.b);
  fit.objective = 0.5 * fit.w.squaredNorm() + C * fit.xi.sum() +
                  (mode == ModelVariant::Sfs ? alpha * fit.u : 0.0);
  return fit;
}

HeuristicResult local_svm(const Dataset& data, const HeuristicConfig& config) {
  data.validate();
  const int n = data.cols();
  const long I = data.rows();
  config.hp.validate(config.mode, n);
  const TreeTopology topo = build_topology(config.hp.depth);
  const int nb = topo.num_branch();
  const int nlast = static_cast<int>(topo.last_branch_nodes.size());
  const int first_last = nlast - 1;

  const auto t0 = Clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };

  HeuristicResult result;
  ModelSolution& sol = result.solution;
  sol.w = MatrixXd::Zero(nb, n);
  sol.b = VectorXd::Zero(nb);
  sol.xi = MatrixXd::Zero(nb, I);
  sol.z = MatrixXd::Zero(I, nlast);
  if (config.mode != ModelVariant::Margot) sol.s = MatrixXd::Zero(nb, n);
  if (config.mode == ModelVariant::Sfs) sol.u = VectorXd::Zero(nb);

  std::vector<std::vector<long>> members(static_cast<std::size_t>(nb));
  members[0].resize(static_cast<std::size_t>(I));
  std::iota(members[0].begin(), members[0].end(), 0L);

  for (int t = 0; t < nb; ++t) {
    const auto& idx = members[static_cast<std::size_t>(t)];
    MatrixXd Xt(static_cast<long>(idx.size()), n);
    VectorXd yt(static_cast<long>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Xt.row(static_cast<long>(k)) = data.X.row(idx[k]);
      yt(static_cast<long>(k)) = data.y(idx[k]);
    }

    const double budget_share =
        std::max(config.time_limit - elapsed(), 0.0) / (nb - t);
    const int node_budget =
        config.mode == ModelVariant::Margot ? n : config.hp.budgets(t);
    NodeFit fit =
        ws_svm_node(Xt, yt, config.hp.C(t), node_budget, config.hp.alpha,
                    config.mode, config.hp, budget_share, config.qp_tol);

    sol.w.row(t) = fit.w.transpose();
    sol.b(t) = fit.b;
    for (std::size_t k = 0; k < idx.size(); ++k)
      sol.xi(t, idx[k]) = fit.xi(static_cast<long>(k));
    if (config.mode != ModelVariant::Margot) sol.s.row(t) = fit.s.transpose();
    if (config.mode == ModelVariant::Sfs) sol.u(t) = fit.u;
    result.nudge_applied = result.nudge_applied || fit.nudged;
    result.hit_time_limit = result.hit_time_limit || fit.hit_time_limit;

    if (topo.is_last_level(t)) {
      for (long i : idx) sol.z(i, t - first_last) = 1.0;
    } else {
      auto& left = members[static_cast<std::size_t>(TreeTopology::left_child(t))];
      auto& right = members[static_cast<std::size_t>(TreeTopology::right_child(t))];
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const double h = fit.w.dot(Xt.row(static_cast<long>(k)).transpose()) + fit.b;
        (h >= 0.0 ? right : left).push_back(idx[k]);
      }
    }
  }

  double objective = 0.0;
  for (int t = 0; t < nb; ++t) {
    objective += 0.5 * sol.w.row(t).squaredNorm() +
                 config.hp.C(t) * sol.xi.row(t).sum();
    if (config.mode == ModelVariant::Sfs) objective += config.hp.alpha * sol.u(t);
  }
  sol.objective = objective;

  // big-M audit: every deactivated constraint must hold with room to spare
  const MatrixXd H =
      (data.X * sol.w.transpose()).rowwise() + sol.b.transpose();  // I x nb
  std::vector<int> assigned(static_cast<std::size_t>(I));
  for (long i = 0; i < I; ++i) {
    int best = 0;
    for (int c = 1; c < nlast; ++c)
      if (sol.z(i, c) > sol.z(i, best)) best = c;
    assigned[static_cast<std::size_t>(i)] = first_last + best;
  }
  auto in_set = [](const std::vector<int>& v, int x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  for (int t = 0; t < nb && !result.big_m_exceeded; ++t) {
    const auto& last = topo.subtree_last[static_cast<std::size_t>(t)];
    for (long i = 0; i < I; ++i) {
      const int a = assigned[static_cast<std::size_t>(i)];
      const double h = H(i, t);
      if (!in_set(last, a) &&
          data.y(i) * h + sol.xi(t, i) <= 1.0 - config.hp.M_xi + 1e-9) {
        result.big_m_exceeded = true;
        break;
      }
      if (!topo.is_last_level(t)) {
        const bool under_right =
            in_set(topo.subtree_last_right[static_cast<std::size_t>(t)], a);
        const bool under_left =
            in_set(topo.subtree_last_left[static_cast<std::size_t>(t)], a);
        if ((!under_right && h <= -config.hp.M_h + 1e-9) ||
            (!under_left && h >= config.hp.M_h - config.hp.epsilon - 1e-9)) {
          result.big_m_exceeded = true;
          break;
        }
      }
    }
  }

  result.wall_seconds = elapsed();
  result.hit_time_limit =
      result.hit_time_limit || result.wall_seconds > config.time_limit;
  return result;
}

}  // namespace margot
