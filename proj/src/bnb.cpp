#include "margot/bnb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace margot {

namespace {

using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

double rel_gap(double ub, double lb) {
  if (!std::isfinite(ub) || !std::isfinite(lb)) return kInf;
  return (ub - lb) / std::max(std::abs(ub), 1e-10);
}

}  // namespace

const char* to_string(BnbStatus status) {
  switch (status) {
    case BnbStatus::Optimal: return "Optimal";
    case BnbStatus::TimeLimit: return "TimeLimit";
    case BnbStatus::Infeasible: return "Infeasible";
  }
  return "?";
}

void MixedIntegerQP::validate() const {
  base.validate();
  std::vector<int> sorted = binary_vars;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const int j = sorted[k];
    if (j < 0 || j >= base.num_vars())
      throw std::invalid_argument("miqp: binary index out of range");
    if (k > 0 && sorted[k - 1] == j)
      throw std::invalid_argument("miqp: duplicate binary index");
    if (base.lb(j) < -1e-9 || base.ub(j) > 1.0 + 1e-9)
      throw std::invalid_argument("miqp: binary variable bounds must lie in [0,1]");
  }
}

std::pair<int, std::array<BnbNode, 2>> branch(const MixedIntegerQP& prob,
                                              const BnbNode& node,
                                              const Eigen::VectorXd& relaxed_x,
                                              double int_tol, BranchRule rule) {
  int pick = -1;
  double best_score = kInf;
  for (int j : prob.binary_vars) {
    const double v = relaxed_x(j);
    if (std::abs(v - std::round(v)) <= int_tol) continue;
    if (rule == BranchRule::LowestIndex) {
      pick = j;
      break;
    }
    const double score = std::abs(v - 0.5);
    if (score < best_score) {
      best_score = score;
      pick = j;
    }
  }
  if (pick < 0) throw std::logic_error("branch: relaxation is already integral");

  std::array<BnbNode, 2> children{node, node};
  children[0].ub(pick) = 0.0;
  children[1].lb(pick) = 1.0;
  for (auto& child : children) ++child.depth;
  return {pick, children};
}

struct BnbSolver::Impl {
  MixedIntegerQP prob;
  BnbParams params;
  QpSolver qp;

  VectorXd best_x;
  double ub = kInf;
  BnbStats stats;
  bool ran = false;

  struct Open {
    BnbNode node;
    long id = 0;
    bool preferred = false;  // dive continues into this child first
    std::shared_ptr<QpSolution> warm;
  };
  std::vector<Open> open;
  long next_id = 1;

  static QpSettings relaxation_settings(const BnbParams& params) {
    QpSettings st;
    st.eps_abs = params.qp_tol;
    st.eps_rel = params.qp_tol;
    st.max_iter = params.qp_max_iter;
    return st;
  }

  Impl(const MixedIntegerQP& p, BnbParams prm)
      : prob(p), params(std::move(prm)),
        qp(p.base, relaxation_settings(params)) {
    prob.validate();
    if (params.time_limit <= 0) throw std::invalid_argument("bnb: bad time limit");
  }

  bool feasible_point(const VectorXd& x) const {
    if (x.size() != prob.base.num_vars() || !x.allFinite()) return false;
    const auto& b = prob.base;
    for (int j = 0; j < b.num_vars(); ++j)
      if (x(j) < b.lb(j) - params.feas_tol || x(j) > b.ub(j) + params.feas_tol)
        return false;
    if (b.num_rows() > 0) {
      VectorXd ax = b.A * x;
      for (int i = 0; i < b.num_rows(); ++i)
        if (ax(i) < b.cl(i) - params.feas_tol || ax(i) > b.cu(i) + params.feas_tol)
          return false;
    }
    for (int j : prob.binary_vars)
      if (std::abs(x(j) - std::round(x(j))) > params.int_tol) return false;
    return true;
  }

  bool accept_incumbent(const VectorXd& x) {
    const double obj = prob.base.objective(x);
    if (obj >= ub) return false;
    ub = obj;
    best_x = x;
    if (std::isnan(stats.first_incumbent)) stats.first_incumbent = obj;
    open.erase(std::remove_if(open.begin(), open.end(),
                              [&](const Open& o) {
                                return o.node.bound >= ub - params.feas_tol;
                              }),
               open.end());
    return true;
  }

  // Fixes binaries that some row forces outright, iterated to a fixed point.
  // Returns false when a row can no longer be satisfied.
  bool presolve(VectorXd& lb, VectorXd& ub_box) const {
    const auto& b = prob.base;
    if (b.num_rows() == 0) return true;
    std::vector<char> is_binary(static_cast<std::size_t>(b.num_vars()), 0);
    for (int j : prob.binary_vars) is_binary[static_cast<std::size_t>(j)] = 1;

    for (int pass = 0; pass < 10; ++pass) {
      bool changed = false;
      for (int i = 0; i < b.num_rows(); ++i) {
        double min_act = 0.0, max_act = 0.0;
        bool min_inf = false, max_inf = false;
        for (int j = 0; j < b.num_vars(); ++j) {
          const double a = b.A(i, j);
          if (a == 0.0) continue;
          const double lo_part = a > 0 ? a * lb(j) : a * ub_box(j);
          const double hi_part = a > 0 ? a * ub_box(j) : a * lb(j);
          if (std::isfinite(lo_part)) min_act += lo_part; else min_inf = true;
          if (std::isfinite(hi_part)) max_act += hi_part; else max_inf = true;
        }
        const double lo_row = min_inf ? -kInf : min_act;
        const double hi_row = max_inf ? kInf : max_act;
        if (lo_row > b.cu(i) + params.feas_tol || hi_row < b.cl(i) - params.feas_tol)
          return false;

        for (int j = 0; j < b.num_vars(); ++j) {
          const double a = b.A(i, j);
          if (a == 0.0 || !is_binary[static_cast<std::size_t>(j)]) continue;
          if (ub_box(j) - lb(j) < 0.5) continue;  // already fixed
          // row activity range with x_j pinned to each value
          const double lo_wo = lo_row - std::min(a * lb(j), a * ub_box(j));
          const double hi_wo = hi_row - std::max(a * lb(j), a * ub_box(j));
          const bool zero_ok = !(lo_wo > b.cu(i) + params.feas_tol ||
                                 hi_wo < b.cl(i) - params.feas_tol);
          const bool one_ok = !(lo_wo + a > b.cu(i) + params.feas_tol ||
                                hi_wo + a < b.cl(i) - params.feas_tol);
          if (!zero_ok && !one_ok) return false;
          if (!zero_ok) {
            lb(j) = 1.0;
            changed = true;
          } else if (!one_ok) {
            ub_box(j) = 0.0;
            changed = true;
          }
        }
      }
      if (!changed) return true;
    }
    return true;
  }

  void log_line(long id, double global_lb, int depth) const {
    if (params.log == nullptr) return;
    *params.log << "node " << id << " lb=" << global_lb << " ub=" << ub
                << " gap=" << rel_gap(ub, global_lb) << " depth=" << depth
                << "\n";
  }

  double open_min_bound() const {
    double lb = kInf;
    for (const auto& o : open) lb = std::min(lb, o.node.bound);
    return lb;
  }

  std::size_t select() const {
    std::size_t pick = 0;
    if (!std::isfinite(ub)) {
      // dive: deepest open node, preferring the child that matches the
      // parent's fractional value, newest on remaining ties
      for (std::size_t k = 1; k < open.size(); ++k) {
        const auto& a = open[k];
        const auto& b = open[pick];
        if (a.node.depth != b.node.depth) {
          if (a.node.depth > b.node.depth) pick = k;
        } else if (a.preferred != b.preferred) {
          if (a.preferred) pick = k;
        } else if (a.id > b.id) {
          pick = k;
        }
      }
    } else {
      for (std::size_t k = 1; k < open.size(); ++k) {
        const auto& a = open[k];
        const auto& b = open[pick];
        if (a.node.bound != b.node.bound) {
          if (a.node.bound < b.node.bound) pick = k;
        } else if (a.id < b.id) {
          pick = k;
        }
      }
    }
    return pick;
  }

  BnbResult run() {
    if (ran) throw std::logic_error("bnb: run() is single use");
    ran = true;
    const auto t0 = Clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(Clock::now() - t0).count();
    };

    BnbResult res;
    VectorXd root_lb = prob.base.lb;
    VectorXd root_ub = prob.base.ub;
    const bool root_ok = presolve(root_lb, root_ub);

    if (root_ok) {
      Open root;
      root.node.lb = std::move(root_lb);
      root.node.ub = std::move(root_ub);
      root.node.bound = -kInf;
      root.node.depth = 0;
      root.id = next_id++;
      open.push_back(std::move(root));
    }

    bool root_processed = false;
    bool timed_out = false;
    while (!open.empty()) {
      if (elapsed() > params.time_limit) {
        timed_out = true;
        break;
      }
      double global_lb = std::min(open_min_bound(), ub);
      if (std::isfinite(ub) && rel_gap(ub, global_lb) <= params.gap_tol) break;

      const std::size_t k = select();
      Open cur = std::move(open[k]);
      open[k] = std::move(open.back());
      open.pop_back();
      if (cur.node.bound >= ub - params.feas_tol) continue;

      const double cutoff = std::isfinite(ub) ? ub - params.feas_tol : kInf;
      QpSolution rel = qp.solve(cur.node.lb, cur.node.ub, cur.warm.get(), cutoff);
      ++stats.nodes;
      const long id = cur.id;

      if (rel.status == QpStatus::Infeasible) {
        if (!root_processed) {
          root_processed = true;
          stats.incumbent_after_root = std::isfinite(ub) ? ub : stats.incumbent_after_root;
        }
        log_line(id, std::min(open_min_bound(), ub), cur.node.depth);
        continue;
      }

      double bound = cur.node.bound;
      const bool converged = rel.status == QpStatus::Optimal;
      if (std::isfinite(rel.lower_bound))
        bound = std::max(bound, rel.lower_bound);
      else if (converged)
        bound = std::max(bound, rel.objective);

      if (bound >= ub - params.feas_tol) {
        if (!root_processed) {
          root_processed = true;
          stats.incumbent_after_root = std::isfinite(ub) ? ub : stats.incumbent_after_root;
        }
        log_line(id, std::min(open_min_bound(), ub), cur.node.depth);
        continue;
      }

      bool integral = true;
      for (int j : prob.binary_vars)
        if (std::abs(rel.x(j) - std::round(rel.x(j))) > params.int_tol) {
          integral = false;
          break;
        }

      if (integral && converged && feasible_point(rel.x)) {
        accept_incumbent(rel.x);
      } else if (integral) {
        // unusable point (unconverged or infeasible beyond tolerance): keep
        // the subtree alive through any still-free binary
        int free_j = -1;
        for (int j : prob.binary_vars)
          if (cur.node.ub(j) - cur.node.lb(j) > 0.5) {
            free_j = j;
            break;
          }
        if (free_j >= 0) {
          BnbNode zero = cur.node, one = cur.node;
          zero.ub(free_j) = 0.0;
          one.lb(free_j) = 1.0;
          ++zero.depth;
          ++one.depth;
          auto warm = std::make_shared<QpSolution>(std::move(rel));
          for (auto* child : {&zero, &one}) {
            Open o;
            o.node = std::move(*child);
            o.node.bound = bound;
            o.id = next_id++;
            o.warm = warm;
            open.push_back(std::move(o));
          }
        }
      } else {
        auto [j, children] = branch(prob, cur.node, rel.x, params.int_tol,
                                    params.branching);
        const bool prefer_one = rel.x(j) >= 0.5;
        auto warm = std::make_shared<QpSolution>(std::move(rel));
        for (int c = 0; c < 2; ++c) {
          Open o;
          o.node = std::move(children[static_cast<std::size_t>(c)]);
          o.node.bound = bound;
          o.id = next_id++;
          o.preferred = (c == 1) == prefer_one;
          o.warm = warm;
          open.push_back(std::move(o));
        }
      }

      if (!root_processed) {
        root_processed = true;
        if (std::isfinite(ub)) stats.incumbent_after_root = ub;
      }
      log_line(id, std::min(open_min_bound(), ub), cur.node.depth);
    }

    stats.wall_seconds = elapsed();
    res.stats = stats;
    res.upper_bound = ub;
    res.x = best_x;
    if (timed_out) {
      res.lower_bound = std::min(open_min_bound(), ub);
      res.status = BnbStatus::TimeLimit;
    } else if (best_x.size() > 0) {
      res.lower_bound = open.empty() ? ub : std::min(open_min_bound(), ub);
      res.status = BnbStatus::Optimal;
    } else {
      res.lower_bound = kInf;
      res.status = BnbStatus::Infeasible;
    }
    res.gap = std::max(0.0, rel_gap(res.upper_bound, res.lower_bound));
    return res;
  }
};

BnbSolver::BnbSolver(const MixedIntegerQP& prob, BnbParams params)
    : impl_(std::make_unique<Impl>(prob, std::move(params))) {}
BnbSolver::~BnbSolver() = default;
BnbSolver::BnbSolver(BnbSolver&&) noexcept = default;
BnbSolver& BnbSolver::operator=(BnbSolver&&) noexcept = default;

bool BnbSolver::inject_incumbent(const Eigen::VectorXd& x) {
  if (!impl_->feasible_point(x)) return false;
  const bool took = impl_->accept_incumbent(x);
  if (took) impl_->stats.warm_start_accepted = true;
  return took;
}

BnbResult BnbSolver::run() { return impl_->run(); }

double BnbSolver::upper_bound() const { return impl_->ub; }

BnbResult solve_miqp(const MixedIntegerQP& prob, const BnbParams& params,
                     const std::optional<Eigen::VectorXd>& warm_start) {
  BnbSolver solver(prob, params);
  if (warm_start.has_value()) solver.inject_incumbent(*warm_start);
  return solver.run();
}

}  // namespace margot
