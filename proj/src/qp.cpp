#include "kdarek/qp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "kdarek/errors.hpp"

namespace kdarek::qp {

namespace {

constexpr double kFeasTol = 1e-10;
constexpr double kSingularTol = 1e-12;

double kkt_residual(const Eigen::MatrixXd& h, const Eigen::VectorXd& f,
                    const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                    const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) {
  double r = (h * x + f + a.transpose() * lambda).lpNorm<Eigen::Infinity>();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double viol = a.row(i).dot(x) - b(i);
    r = std::max(r, viol);                                // primal feasibility
    r = std::max(r, -lambda(i));                          // dual feasibility
    r = std::max(r, std::abs(lambda(i) * std::min(viol, 0.0)));  // compl.
  }
  return r;
}

}  // namespace

QpResult solve(const Eigen::MatrixXd& h, const Eigen::VectorXd& f,
               const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
               int max_iters) {
  const Eigen::Index n = h.rows();
  const Eigen::Index m = a.rows();
  if (h.cols() != n || f.size() != n || (m > 0 && a.cols() != n) ||
      b.size() != m) {
    throw DimensionMismatch("qp dimensions inconsistent");
  }

  const Eigen::LLT<Eigen::MatrixXd> hllt(h);
  if (hllt.info() != Eigen::Success) {
    throw DimensionMismatch("qp objective must be strictly convex");
  }

  QpResult res;
  res.x = hllt.solve(-f);
  res.lambda = Eigen::VectorXd::Zero(m);

  std::vector<Eigen::Index> active;
  const double feas_tol =
      kFeasTol * (1.0 + (m > 0 ? b.cwiseAbs().maxCoeff() : 0.0));

  for (res.iterations = 0; res.iterations < max_iters; ++res.iterations) {
    // Most violated inactive constraint; ties go to the lowest index.
    Eigen::Index incoming = -1;
    double worst = feas_tol;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double viol = a.row(i).dot(res.x) - b(i);
      if (viol > worst) {
        worst = viol;
        incoming = i;
      }
    }
    if (incoming < 0) {
      res.status = QpStatus::Optimal;
      res.kkt_residual = kkt_residual(h, f, a, b, res.x, res.lambda);
      return res;
    }

    double lambda_in = 0.0;
    bool resolved = false;
    while (!resolved) {
      // Direction from raising the incoming multiplier with the active set
      // held tight:  [H A_act'; A_act 0] [dx; dl] = [-a_in; 0].
      const Eigen::Index na = static_cast<Eigen::Index>(active.size());
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + na, n + na);
      kkt.topLeftCorner(n, n) = h;
      for (Eigen::Index j = 0; j < na; ++j) {
        kkt.block(0, n + j, n, 1) = a.row(active[j]).transpose();
        kkt.block(n + j, 0, 1, n) = a.row(active[j]);
      }
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + na);
      rhs.head(n) = -a.row(incoming).transpose();
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      const Eigen::VectorXd sol = lu.solve(rhs);
      const Eigen::VectorXd dx = sol.head(n);
      const Eigen::VectorXd dl = sol.tail(na);

      const double dviol = a.row(incoming).dot(dx);  // <= 0 by construction
      const double viol = a.row(incoming).dot(res.x) - b(incoming);

      // Dual blocking step: active multipliers must stay nonnegative.
      double t_dual = std::numeric_limits<double>::infinity();
      Eigen::Index blocking = -1;
      for (Eigen::Index j = 0; j < na; ++j) {
        if (dl(j) < -kSingularTol) {
          const double t = res.lambda(active[j]) / (-dl(j));
          if (t < t_dual) {
            t_dual = t;
            blocking = j;
          }
        }
      }

      if (dviol >= -kSingularTol) {
        // No primal progress possible in this subspace.
        if (!std::isfinite(t_dual)) {
          res.status = QpStatus::Infeasible;
          res.kkt_residual = kkt_residual(h, f, a, b, res.x, res.lambda);
          return res;
        }
        for (Eigen::Index j = 0; j < na; ++j) {
          res.lambda(active[j]) += t_dual * dl(j);
        }
        lambda_in += t_dual;
        res.lambda(active[blocking]) = 0.0;
        active.erase(active.begin() + blocking);
        continue;
      }

      const double t_full = viol / (-dviol);
      const double t = std::min(t_full, t_dual);
      res.x += t * dx;
      for (Eigen::Index j = 0; j < na; ++j) {
        res.lambda(active[j]) += t * dl(j);
      }
      lambda_in += t;
      if (t_dual < t_full) {
        res.lambda(active[blocking]) = 0.0;
        active.erase(active.begin() + blocking);
      } else {
        res.lambda(incoming) = lambda_in;
        active.push_back(incoming);
        resolved = true;
      }
    }
  }

  res.status = QpStatus::MaxIterations;
  res.kkt_residual = kkt_residual(h, f, a, b, res.x, res.lambda);
  return res;
}

}  // namespace kdarek::qp
