#pragma once

#include <Eigen/Core>

namespace kdarek::qp {

enum class QpStatus { Optimal, Infeasible, MaxIterations };

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;  // multipliers, one per constraint row
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
  double kkt_residual = 0.0;
};

// Strictly convex dense QP: min 1/2 x'Hx + f'x  s.t.  Ax <= b.
// Dual active-set method starting from the unconstrained optimum; sized for
// a handful of variables and constraints, deterministic tie-breaking.
QpResult solve(const Eigen::MatrixXd& h, const Eigen::VectorXd& f,
               const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
               int max_iters = 200);

}  // namespace kdarek::qp
