#pragma once

#include "margot/qp.hpp"

namespace margot {

/// Dense exact QP solver: proximal-point iterations around a dual active-set
/// method (Goldfarb-Idnani style). Each proximal subproblem is strictly
/// convex, so the method handles rank-deficient P. Intended for small
/// problems (the first-order solver falls back to it at m <= 200); it also
/// serves as an independent cross-check in tests.
QpSolution solve_qp_active_set(const QuadraticProgram& prob, double tol = 1e-9,
                               int max_prox_iters = 500);

}  // namespace margot
