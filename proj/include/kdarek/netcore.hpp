#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "kdarek/rng.hpp"
#include "kdarek/spline1d.hpp"

namespace kdarek::net {

struct SigmaMaxResult {
  double value = 0.0;
  bool converged = true;
  int iterations = 0;
};

// Largest singular value by power iteration. warm_start, when given, is the
// persistent right iterate (resized on first use) so repeated calls on a
// slowly changing matrix converge in a couple of sweeps.
SigmaMaxResult sigma_max(const Eigen::MatrixXd& w,
                         Eigen::VectorXd* warm_start = nullptr,
                         double rel_tol = 1e-6, int max_iters = 100);

// Rescales w to spectral norm `cap` when it exceeds the cap; returns w
// unchanged otherwise.
Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& w, double cap);

struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  double cap = 1.0;
  Eigen::VectorXd power_state;  // persistent power-iteration iterate
};

// Per-dimension MLP: scalar input, ReLU hidden layers, linear output, each
// weight matrix kept under its spectral cap after every optimizer step.
class SnrMlp {
 public:
  SnrMlp() = default;
  // widths = [1, hidden..., output]; every layer gets the same cap.
  SnrMlp(const std::vector<int>& widths, double layer_cap, Rng& rng);

  int depth() const { return static_cast<int>(layers_.size()); }
  int output_dim() const;
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Eigen::VectorXd forward(double x) const;

  struct Cache {
    std::vector<Eigen::VectorXd> pre;  // pre-activations per layer
    std::vector<Eigen::VectorXd> act;  // act[l] = input to layer l
  };
  void forward_cached(double x, Cache& cache, Eigen::VectorXd& out) const;

  struct Grad {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;
  };
  Grad zero_grad() const;
  void backward(const Cache& cache, const Eigen::VectorXd& grad_out,
                Grad& grad) const;

  // Enforces the spectral cap on every layer, re-estimating until the cap
  // holds within relative 5e-7.
  void normalize();
  double cap_product() const;

  std::size_t param_count() const;
  std::size_t write_params(double* dst) const;
  std::size_t read_params(const double* src);

 private:
  std::vector<DenseLayer> layers_;
};

struct ModelShape {
  int input_dim = 1;             // d
  int feature_dim = 5;           // q
  int output_dim = 1;            // m
  int spline_order = 3;          // k
  std::vector<int> mlp_hidden;   // hidden widths between input 1 and q
  double layer_cap = 1.0;
};

// Two-block network: d spectrally normalized per-dimension MLPs summed into
// a shared feature vector, then one spline layer mapping features to
// outputs.
class KdarekModel {
 public:
  KdarekModel() = default;
  KdarekModel(const ModelShape& shape, Rng& rng);

  int input_dim() const { return static_cast<int>(mlps_.size()); }
  int feature_dim() const { return spline_.in_dim(); }
  int output_dim() const { return spline_.out_dim(); }
  int spline_order() const { return spline_.degree(); }
  int mlp_depth() const { return mlps_.empty() ? 0 : mlps_[0].depth(); }

  SnrMlp& mlp(int p) { return mlps_[p]; }
  const SnrMlp& mlp(int p) const { return mlps_[p]; }
  KanLayer& spline() { return spline_; }
  const KanLayer& spline() const { return spline_; }

  Eigen::VectorXd features(const Eigen::VectorXd& x) const;

  struct Eval {
    Eigen::VectorXd output;
    Eigen::VectorXd features;
  };
  Eval forward(const Eigen::VectorXd& x) const;

  std::size_t param_count() const;
  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& params);

  void normalize_mlps();

 private:
  std::vector<SnrMlp> mlps_;
  KanLayer spline_;
};

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 0.1;
  enum class Optimizer { Gd, Adam } optimizer = Optimizer::Gd;
  std::uint64_t seed = 0;
  int knot_regrid_period = 10;
  double coeff_init_scale = 0.1;
};

struct TrainResult {
  std::vector<double> loss_history;  // full-batch MSE before each step
  double final_loss = 0.0;
};

// Full-batch MSE and its flattened analytic gradient at the current
// parameters.
double loss_and_gradient(const KdarekModel& model, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& y, Eigen::VectorXd* grad);

double mse_loss(const KdarekModel& model, const Eigen::MatrixXd& x,
                const Eigen::MatrixXd& y);

// Gradient training with per-step spectral normalization. Spline grids are
// initialized from the features of knot_inputs at epoch 0, re-derived every
// cfg.knot_regrid_period epochs (refitting coefficients by least squares),
// and once more at the end so stored grids always match the final feature
// map. Throws NonFiniteLoss when the loss leaves the reals.
TrainResult train(KdarekModel& model, const Eigen::MatrixXd& x,
                  const Eigen::MatrixXd& y, const Eigen::MatrixXd& knot_inputs,
                  const TrainConfig& cfg);

// Feature rows of the model at each input row (used for knot grids).
Eigen::MatrixXd feature_rows(const KdarekModel& model,
                             const Eigen::MatrixXd& inputs);

}  // namespace kdarek::net
