#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "margot/qp.hpp"

namespace margot {

/// Convex MIQP: the base program plus a set of variables restricted to {0,1}.
/// Every index in binary_vars must have bounds within [0,1] in the base.
struct MixedIntegerQP {
  QuadraticProgram base;
  std::vector<int> binary_vars;

  void validate() const;
};

enum class NodeSelection { BestBound, DepthFirst };
enum class BranchRule { MostFractional, LowestIndex };

struct BnbParams {
  double time_limit = 600.0;  // seconds
  double int_tol = 1e-5;
  double feas_tol = 1e-6;
  double gap_tol = 1e-6;
  NodeSelection node_selection = NodeSelection::BestBound;
  BranchRule branching = BranchRule::MostFractional;
  std::uint64_t seed = 0;  // reserved; the search itself is deterministic
  double qp_tol = 1e-7;
  int qp_max_iter = 20000;
  std::ostream* log = nullptr;  // node lines: "node <id> lb=<v> ub=<v> gap=<v> depth=<d>"
};

enum class BnbStatus { Optimal, TimeLimit, Infeasible };
const char* to_string(BnbStatus status);

struct BnbStats {
  long nodes = 0;
  double first_incumbent = std::numeric_limits<double>::quiet_NaN();       // f0
  double incumbent_after_root = std::numeric_limits<double>::quiet_NaN();  // f1
  double wall_seconds = 0.0;
  bool warm_start_accepted = false;
};

struct BnbResult {
  Eigen::VectorXd x;  // best incumbent (empty when none)
  double upper_bound = kInf;
  double lower_bound = -kInf;
  double gap = kInf;  // (ub - lb) / max(|ub|, 1e-10)
  BnbStatus status = BnbStatus::TimeLimit;
  BnbStats stats;

  bool has_incumbent() const { return x.size() > 0; }
};

/// One open node: the variable-bound box of its subproblem and the best
/// known lower bound for anything inside it (inherited from the parent until
/// its own relaxation is solved).
struct BnbNode {
  Eigen::VectorXd lb, ub;
  double bound = -kInf;
  int depth = 0;
};

/// Picks the branching variable from a fractional relaxation solution and
/// returns it with the two child nodes (variable fixed to 0 / to 1).
/// Throws std::logic_error when every binary is integral within int_tol.
std::pair<int, std::array<BnbNode, 2>> branch(const MixedIntegerQP& prob,
                                              const BnbNode& node,
                                              const Eigen::VectorXd& relaxed_x,
                                              double int_tol,
                                              BranchRule rule);

/// Single-tree search over QP relaxations. Node selection is best-bound with
/// depth-first dives until the first incumbent; branching picks the most
/// fractional binary (ties to the lowest index). Single-threaded and
/// deterministic. Relaxations share one factorized workspace, since node
/// subproblems differ only in variable bounds.
class BnbSolver {
 public:
  BnbSolver(const MixedIntegerQP& prob, BnbParams params = {});
  ~BnbSolver();
  BnbSolver(BnbSolver&&) noexcept;
  BnbSolver& operator=(BnbSolver&&) noexcept;

  /// Offers a point as incumbent. Accepted iff feasible (rows and bounds
  /// within feas_tol, binaries within int_tol) and strictly better than the
  /// current upper bound. Open nodes whose bound cannot beat the new
  /// incumbent are pruned.
  bool inject_incumbent(const Eigen::VectorXd& x);

  BnbResult run();  // single use

  double upper_bound() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

BnbResult solve_miqp(const MixedIntegerQP& prob, const BnbParams& params = {},
                     const std::optional<Eigen::VectorXd>& warm_start = {});

}  // namespace margot
