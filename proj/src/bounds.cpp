#include "kdarek/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kdarek/errors.hpp"

namespace kdarek::bounds {

namespace {

std::vector<int> quantile_rows(const Eigen::VectorXd& x, int m_k) {
  const int n = static_cast<int>(x.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return x(a) < x(b); });

  std::vector<int> picks(m_k);
  for (int i = 0; i < m_k; ++i) {
    picks[i] = static_cast<int>(
        std::llround(static_cast<double>(i) * (n - 1) / (m_k - 1)));
  }
  // Repair rounding collisions while keeping both endpoints.
  for (int i = 1; i < m_k; ++i) picks[i] = std::max(picks[i], picks[i - 1] + 1);
  for (int i = m_k - 1; i >= 0; --i) {
    picks[i] = std::min(picks[i], n - 1 - (m_k - 1 - i));
  }
  std::vector<int> rows(m_k);
  for (int i = 0; i < m_k; ++i) rows[i] = order[picks[i]];
  return rows;
}

std::vector<int> farthest_point_rows(const Eigen::MatrixXd& x, int m_k) {
  const int n = static_cast<int>(x.rows());
  const Eigen::RowVectorXd centroid = x.colwise().mean();

  int seed = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double d = (x.row(i) - centroid).squaredNorm();
    if (d < best) {
      best = d;
      seed = i;
    }
  }

  std::vector<int> rows{seed};
  std::vector<double> min_dist(n);
  for (int i = 0; i < n; ++i) {
    min_dist[i] = (x.row(i) - x.row(seed)).squaredNorm();
  }
  while (static_cast<int>(rows.size()) < m_k) {
    int pick = 0;
    double far = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_dist[i] > far) {
        far = min_dist[i];
        pick = i;
      }
    }
    rows.push_back(pick);
    for (int i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], (x.row(i) - x.row(pick)).squaredNorm());
    }
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

KnotTriple select_knots(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        int m_k, KnotStrategy strategy, int order) {
  if (m_k < order + 1) {
    throw TooFewSamples("need at least order+1 knots");
  }
  if (x.rows() < m_k) {
    throw TooFewSamples("dataset smaller than requested knot count");
  }
  if (x.rows() != y.rows()) throw DimensionMismatch("x/y row mismatch");

  std::vector<int> rows;
  if (m_k == x.rows()) {
    rows.resize(m_k);
    std::iota(rows.begin(), rows.end(), 0);
  } else if (strategy == KnotStrategy::Quantile) {
    rows = quantile_rows(x.col(0), m_k);
  } else {
    rows = farthest_point_rows(x, m_k);
  }

  KnotTriple triple;
  triple.inputs.resize(m_k, x.cols());
  triple.targets.resize(m_k, y.cols());
  for (int i = 0; i < m_k; ++i) {
    triple.inputs.row(i) = x.row(rows[i]);
    triple.targets.row(i) = y.row(rows[i]);
  }
  triple.input_columns.reserve(x.cols());
  for (int p = 0; p < x.cols(); ++p) {
    triple.input_columns.push_back(net::sorted_feature_grid(triple.inputs.col(p)));
  }
  return triple;
}

void compute_feature_knots(const net::KdarekModel& model, KnotTriple& triple) {
  triple.features = net::feature_rows(model, triple.inputs);
  triple.feature_columns.clear();
  triple.degenerate_columns.clear();
  triple.feature_columns.reserve(triple.features.cols());
  for (int i = 0; i < triple.features.cols(); ++i) {
    auto col = net::sorted_feature_grid(triple.features.col(i));
    if (col.repaired) triple.degenerate_columns.push_back(i);
    triple.feature_columns.push_back(std::move(col));
  }
  triple.has_features = true;
}

LipschitzBudget make_budget(double total_first_order, int input_dim,
                            int layer_count, int splines_per_group,
                            interp::LipschitzOrderK high_order) {
  if (total_first_order <= 0.0 || input_dim < 1 || layer_count < 1 ||
      splines_per_group < 1 || high_order.value < 0.0) {
    throw DimensionMismatch("budget inputs must be positive");
  }
  LipschitzBudget b;
  b.total_first_order = total_first_order;
  b.high_order = high_order;
  b.input_dim = input_dim;
  b.layer_count = layer_count;
  b.splines_per_group = splines_per_group;
  b.layer_cap = std::pow(total_first_order / input_dim,
                         1.0 / (layer_count + 1));
  b.mlp_cap = std::pow(b.layer_cap, layer_count);
  b.spline_cap = b.layer_cap / splines_per_group;
  return b;
}

Eigen::MatrixXd residual_matrix(const net::KdarekModel& model,
                                const KnotTriple& triple) {
  Eigen::MatrixXd res(triple.inputs.rows(), model.output_dim());
  for (Eigen::Index i = 0; i < triple.inputs.rows(); ++i) {
    res.row(i) =
        model.forward(triple.inputs.row(i).transpose()).output.transpose() -
        triple.targets.row(i);
  }
  return res;
}

namespace {

MlpBlockError nearest_scan(const Eigen::VectorXd& x, const KnotTriple& triple,
                           const std::vector<double>& caps) {
  MlpBlockError out;
  out.nearest_rows.resize(triple.input_dim());
  for (int p = 0; p < triple.input_dim(); ++p) {
    const auto& col = triple.input_columns[p];
    const auto it =
        std::lower_bound(col.knots.begin(), col.knots.end(), x(p));
    std::size_t cand = it - col.knots.begin();
    // Compare the insertion neighbours; ties go to the lower index.
    std::size_t best = std::min(cand, col.knots.size() - 1);
    if (cand > 0 &&
        std::abs(x(p) - col.knots[cand - 1]) <=
            std::abs(x(p) - col.knots[best])) {
      best = cand - 1;
    }
    out.value += caps[p] * std::abs(x(p) - col.knots[best]);
    out.nearest_rows[p] = col.perm[best];
  }
  return out;
}

}  // namespace

MlpBlockError mlp_block_error(const Eigen::VectorXd& x,
                              const KnotTriple& triple,
                              const LipschitzBudget& budget) {
  const std::vector<double> caps(triple.input_dim(), budget.mlp_cap);
  return nearest_scan(x, triple, caps);
}

MlpBlockError mlp_block_error(const Eigen::VectorXd& x,
                              const KnotTriple& triple,
                              const std::vector<double>& per_dim_caps) {
  if (static_cast<int>(per_dim_caps.size()) != triple.input_dim()) {
    throw DimensionMismatch("one cap per input dimension required");
  }
  return nearest_scan(x, triple, per_dim_caps);
}

Eigen::MatrixXd distribute_residuals(const Eigen::MatrixXd& residuals,
                                     int splines_per_group) {
  if (splines_per_group < 1) {
    throw DimensionMismatch("splines_per_group must be >= 1");
  }
  return residuals / static_cast<double>(splines_per_group);
}

double spline_block_error(const Eigen::VectorXd& xi, const KnotTriple& triple,
                          const Eigen::MatrixXd& shares,
                          const LipschitzBudget& budget, int out_index,
                          int order) {
  if (!triple.has_features) {
    throw DimensionMismatch("feature knots not computed");
  }
  double total = 0.0;
  interp::KnotWindow window;
  for (int i = 0; i < static_cast<int>(triple.feature_columns.size()); ++i) {
    const auto& col = triple.feature_columns[i];
    const std::size_t interval = interp::select_interval(col.knots, xi(i));
    const auto range = interp::window_for(col.knots, interval, order);
    window.order = order;
    window.knots.assign(col.knots.begin() + range.first,
                        col.knots.begin() + range.first + range.count);
    window.values.resize(range.count);
    for (std::size_t t = 0; t < range.count; ++t) {
      window.values[t] = shares(col.perm[range.first + t], out_index);
    }
    total += interp::spline_error_bound(xi(i), window, budget.high_order);
  }
  return total;
}

ErrorBound total_bound(const net::KdarekModel& model, const Eigen::VectorXd& x,
                       const KnotTriple& triple, const LipschitzBudget& budget,
                       const Eigen::MatrixXd& residuals) {
  const auto eval = model.forward(x);
  const Eigen::MatrixXd shares =
      distribute_residuals(residuals, budget.splines_per_group);
  const MlpBlockError mlp = mlp_block_error(x, triple, budget);

  ErrorBound eb;
  eb.mlp_term = mlp.value;
  eb.nearest_knot_rows = mlp.nearest_rows;
  eb.spline_term.resize(model.output_dim());
  eb.total.resize(model.output_dim());
  for (int r = 0; r < model.output_dim(); ++r) {
    eb.spline_term(r) = spline_block_error(eval.features, triple, shares,
                                           budget, r, model.spline_order());
    eb.total(r) = eb.spline_term(r) + budget.spline_cap * eb.mlp_term;
  }
  return eb;
}

ErrorBound BoundEvaluator::bound_at(const Eigen::VectorXd& x) const {
  return total_bound(model, x, triple, budget, residuals);
}

Eigen::VectorXd BoundEvaluator::predict(const Eigen::VectorXd& x) const {
  return model.forward(x).output;
}

BoundEvaluator make_evaluator(net::KdarekModel model, KnotTriple triple,
                              const LipschitzBudget& budget) {
  BoundEvaluator ev;
  compute_feature_knots(model, triple);
  ev.residuals = residual_matrix(model, triple);
  ev.model = std::move(model);
  ev.triple = std::move(triple);
  ev.budget = budget;
  return ev;
}

}  // namespace kdarek::bounds
