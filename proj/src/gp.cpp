#include "kdarek/gp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "kdarek/errors.hpp"

namespace kdarek::base {

double GpModel::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const GpHyper& hyper) {
  const double sq = (a - b).squaredNorm();
  return hyper.signal_var *
         std::exp(-0.5 * sq / (hyper.lengthscale * hyper.lengthscale));
}

GpModel GpModel::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const GpHyper& hyper) {
  if (x.rows() < 1 || x.rows() != y.size()) {
    throw DimensionMismatch("gp_fit needs n >= 1 paired samples");
  }
  if (hyper.lengthscale <= 0.0 || hyper.signal_var <= 0.0 ||
      hyper.noise_var < 0.0) {
    throw DimensionMismatch("gp hyperparameters must be positive");
  }

  const Eigen::Index n = x.rows();
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double k = kernel(x.row(i).transpose(), x.row(j).transpose(), hyper);
      cov(i, j) = k;
      cov(j, i) = k;
    }
  }

  GpModel model;
  model.x_ = x;
  model.y_ = y;
  model.hyper_ = hyper;

  const double jitters[] = {0.0, 1e-10, 1e-8, 1e-6};
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
  for (double j : jitters) {
    Eigen::MatrixXd k = cov;
    k.diagonal().array() += hyper.noise_var + j * hyper.signal_var;
    llt.compute(k);
    if (llt.info() == Eigen::Success) {
      model.jitter_ = j;
      ok = true;
      break;
    }
  }
  if (!ok) {
    throw NotPositiveDefinite(
        "covariance not positive definite after jitter escalation to 1e-6");
  }

  model.chol_lower_ = llt.matrixL();
  model.alpha_ = llt.solve(y);

  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    log_det += std::log(model.chol_lower_(i, i));
  }
  model.log_marginal_ = -0.5 * y.dot(model.alpha_) - log_det -
                        0.5 * n * std::log(2.0 * M_PI);
  return model;
}

GpModel::Prediction GpModel::predict(const Eigen::VectorXd& x) const {
  const Eigen::Index n = x_.rows();
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ks(i) = kernel(x_.row(i).transpose(), x, hyper_);
  }
  Prediction p;
  p.mean = ks.dot(alpha_);
  const Eigen::VectorXd v =
      chol_lower_.triangularView<Eigen::Lower>().solve(ks);
  const double var = kernel(x, x, hyper_) - v.squaredNorm();
  p.stddev = std::sqrt(std::max(0.0, var));
  return p;
}

GpModel gp_grid_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const std::vector<double>& lengthscales,
                       const std::vector<double>& signal_stddevs,
                       const std::vector<double>& noise_stddevs) {
  GpModel best;
  double best_lml = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (double ls : lengthscales) {
    for (double sf : signal_stddevs) {
      for (double sn : noise_stddevs) {
        GpHyper h{ls, sf * sf, sn * sn};
        GpModel m = GpModel::fit(x, y, h);
        if (m.log_marginal() > best_lml) {
          best_lml = m.log_marginal();
          best = std::move(m);
          found = true;
        }
      }
    }
  }
  if (!found) throw DimensionMismatch("empty hyperparameter grid");
  return best;
}

}  // namespace kdarek::base
