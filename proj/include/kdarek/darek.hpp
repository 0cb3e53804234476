#pragma once

#include <Eigen/Core>
#include <vector>

#include "kdarek/bounds.hpp"
#include "kdarek/netcore.hpp"
#include "kdarek/spline1d.hpp"

namespace kdarek::base {

struct DarekShape {
  int input_dim = 1;
  int hidden_dim = 5;
  int output_dim = 1;
  int spline_order = 3;
};

// Two-spline-layer network: hidden[i] = sum_p s1_{i,p}(x_p),
// out[r] = sum_i s2_{r,i}(hidden_i). Layer-1 grids sit on the selected
// training samples; layer-2 grids on the layer-1 images of those samples.
class DarekModel {
 public:
  DarekModel() = default;
  DarekModel(const DarekShape& shape, Rng& rng);

  int input_dim() const { return layer1_.in_dim(); }
  int hidden_dim() const { return layer1_.out_dim(); }
  int output_dim() const { return layer2_.out_dim(); }
  int spline_order() const { return layer1_.degree(); }

  net::KanLayer& layer1() { return layer1_; }
  const net::KanLayer& layer1() const { return layer1_; }
  net::KanLayer& layer2() { return layer2_; }
  const net::KanLayer& layer2() const { return layer2_; }

  Eigen::VectorXd hidden(const Eigen::VectorXd& x) const;

  struct Eval {
    Eigen::VectorXd output;
    Eigen::VectorXd hidden;
  };
  Eval forward(const Eigen::VectorXd& x) const;

  std::size_t param_count() const;
  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& params);

 private:
  net::KanLayer layer1_;
  net::KanLayer layer2_;
};

double darek_loss_and_gradient(const DarekModel& model,
                               const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& y,
                               Eigen::VectorXd* grad);

// Same training loop as the two-block network: full-batch gradient steps,
// layer-2 grids re-derived from the drifting hidden features of the knot
// samples every knot_regrid_period epochs and once at the end.
net::TrainResult darek_train(DarekModel& model, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& knot_inputs,
                             const net::TrainConfig& cfg);

// Everything the two-layer propagated bound needs, fixed after training.
struct DarekBoundContext {
  Eigen::MatrixXd inputs;     // selected samples
  Eigen::MatrixXd hidden;     // layer-1 images of the samples (raw rows)
  Eigen::MatrixXd residuals;  // f_hat(inputs) - targets, signed
  std::vector<net::SortedColumn> input_columns;
  std::vector<net::SortedColumn> hidden_columns;
  // Lipschitz sharing across the two layers (heuristic): the first-order
  // and order-(k+1) constants are split as sqrt(total/d) per layer; the
  // propagated layer-1 term is scaled per spline of layer 2.
  double layer_first_order = 1.0;
  double propagation_scale = 1.0;  // layer_first_order / hidden_dim
  interp::LipschitzOrderK layer_high_order;
  int order = 3;
};

DarekBoundContext make_darek_context(const DarekModel& model,
                                     const Eigen::MatrixXd& knot_inputs,
                                     const Eigen::MatrixXd& knot_targets,
                                     double total_first_order,
                                     double total_high_order);

// Propagated two-layer bound: layer-2 windowed spline bound at the hidden
// image, plus the layer-1 interpolation bounds scaled through layer 2.
bounds::ErrorBound darek_two_layer_bound(const DarekModel& model,
                                         const DarekBoundContext& ctx,
                                         const Eigen::VectorXd& x);

// Deep ensemble of independently seeded two-spline-layer members.
struct EnsembleModel {
  std::vector<DarekModel> members;

  struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;  // population std across members
  };
  Prediction predict(const Eigen::VectorXd& x) const;
  std::size_t param_count() const;
};

EnsembleModel ensemble_train(const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& knot_inputs,
                             const DarekShape& shape,
                             const net::TrainConfig& base_cfg, int n_members,
                             int jobs);

}  // namespace kdarek::base
