#pragma once

#include <Eigen/Core>
#include <vector>

namespace kdarek::base {

// Squared-exponential kernel hyperparameters, stored as variances.
struct GpHyper {
  double lengthscale = 1.0;
  double signal_var = 1.0;
  double noise_var = 1e-4;
};

// Exact Gaussian-process regression backed by a Cholesky factor of
// K + noise*I (+ escalating jitter when the factorization fails).
class GpModel {
 public:
  GpModel() = default;

  static GpModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const GpHyper& hyper);

  struct Prediction {
    double mean = 0.0;
    double stddev = 0.0;
  };
  Prediction predict(const Eigen::VectorXd& x) const;

  double log_marginal() const { return log_marginal_; }
  double jitter_used() const { return jitter_; }
  const GpHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& train_x() const { return x_; }
  const Eigen::VectorXd& train_y() const { return y_; }

  static double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const GpHyper& hyper);

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  GpHyper hyper_;
  Eigen::MatrixXd chol_lower_;
  Eigen::VectorXd alpha_;
  double log_marginal_ = 0.0;
  double jitter_ = 0.0;
};

// Exhaustive search over candidate hyperparameters, maximizing the log
// marginal likelihood; candidates are stddevs for the variance entries.
GpModel gp_grid_search(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const std::vector<double>& lengthscales,
                       const std::vector<double>& signal_stddevs,
                       const std::vector<double>& noise_stddevs);

}  // namespace kdarek::base
