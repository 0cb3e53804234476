#pragma once

#include <Eigen/Core>
#include <vector>

#include "kdarek/interp.hpp"
#include "kdarek/netcore.hpp"

namespace kdarek::bounds {

enum class KnotStrategy { Quantile, FarthestPoint };

// Selected knot samples: inputs (T), their feature rows (K, filled after
// training), and targets (Y). Every feature column carries the permutation
// that sorts it so residual rows can be co-indexed with sorted knots.
struct KnotTriple {
  Eigen::MatrixXd inputs;    // m_k x d
  Eigen::MatrixXd features;  // m_k x q, rows aligned with inputs
  Eigen::MatrixXd targets;   // m_k x m
  std::vector<net::SortedColumn> input_columns;    // d
  std::vector<net::SortedColumn> feature_columns;  // q
  std::vector<int> degenerate_columns;  // feature columns repaired by jitter
  bool has_features = false;

  int knot_count() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
};

// Picks m_k samples: uniform quantiles of the first coordinate for 1-D data
// (endpoints included), greedy farthest-point (max-min, seeded at the sample
// nearest the centroid) otherwise. Throws TooFewSamples.
KnotTriple select_knots(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        int m_k, KnotStrategy strategy, int order);

// Fills triple.features with the model's feature rows of triple.inputs and
// rebuilds the per-column sorted views. Near-duplicate columns are repaired
// by a deterministic jitter and recorded in degenerate_columns.
void compute_feature_knots(const net::KdarekModel& model, KnotTriple& triple);

// Equal division of the total Lipschitz constant across the MLP layers and
// the spline layer: layer_cap = (L_f/d)^{1/(L+1)}, mlp_cap = layer_cap^L,
// spline_cap = layer_cap / splines_per_group.
struct LipschitzBudget {
  double total_first_order = 1.0;
  interp::LipschitzOrderK high_order;  // order k+1 constant for the windows
  int input_dim = 1;
  int layer_count = 1;
  int splines_per_group = 1;
  double layer_cap = 1.0;
  double mlp_cap = 1.0;
  double spline_cap = 1.0;
};

LipschitzBudget make_budget(double total_first_order, int input_dim,
                            int layer_count, int splines_per_group,
                            interp::LipschitzOrderK high_order);

// Signed residuals f_hat(T) - Y; magnitudes are taken where the bound uses
// them.
Eigen::MatrixXd residual_matrix(const net::KdarekModel& model,
                                const KnotTriple& triple);

struct MlpBlockError {
  double value = 0.0;
  std::vector<int> nearest_rows;  // per input dimension, row index into T
};

// Worst-case feature error of the MLP block: cap times the summed
// per-dimension distances to the nearest selected sample coordinate.
MlpBlockError mlp_block_error(const Eigen::VectorXd& x,
                              const KnotTriple& triple,
                              const LipschitzBudget& budget);
// General form with one cap per input dimension.
MlpBlockError mlp_block_error(const Eigen::VectorXd& x,
                              const KnotTriple& triple,
                              const std::vector<double>& per_dim_caps);

// Each spline in an output group receives an equal share of that output's
// knot residuals.
Eigen::MatrixXd distribute_residuals(const Eigen::MatrixXd& residuals,
                                     int splines_per_group);

// Worst error of output group r at feature point xi: per-feature windowed
// interpolation bound plus the interpolant of the residual shares.
double spline_block_error(const Eigen::VectorXd& xi, const KnotTriple& triple,
                          const Eigen::MatrixXd& shares,
                          const LipschitzBudget& budget, int out_index,
                          int order);

struct ErrorBound {
  Eigen::VectorXd total;        // per output
  Eigen::VectorXd spline_term;  // per output
  double mlp_term = 0.0;
  std::vector<int> nearest_knot_rows;  // per input dimension
};

// Complete bound: total_r = spline_term_r + spline_cap * mlp_term.
ErrorBound total_bound(const net::KdarekModel& model, const Eigen::VectorXd& x,
                       const KnotTriple& triple, const LipschitzBudget& budget,
                       const Eigen::MatrixXd& residuals);

// Trained model bundled with everything a bound query needs.
struct BoundEvaluator {
  net::KdarekModel model;
  KnotTriple triple;
  LipschitzBudget budget;
  Eigen::MatrixXd residuals;

  ErrorBound bound_at(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& x) const;
};

// Computes features and residuals for a trained model and packs the bundle.
BoundEvaluator make_evaluator(net::KdarekModel model, KnotTriple triple,
                              const LipschitzBudget& budget);

}  // namespace kdarek::bounds
