#include "kdarek/darek.hpp"

#include <cmath>

#include "kdarek/errors.hpp"
#include "kdarek/parallel.hpp"

namespace kdarek::base {

DarekModel::DarekModel(const DarekShape& shape, Rng& rng)
    : layer1_(shape.spline_order, shape.input_dim, shape.hidden_dim),
      layer2_(shape.spline_order, shape.hidden_dim, shape.output_dim) {
  layer1_.init_coeffs(rng, 0.1);
  layer2_.init_coeffs(rng, 0.1);
}

Eigen::VectorXd DarekModel::hidden(const Eigen::VectorXd& x) const {
  return layer1_.forward(x);
}

DarekModel::Eval DarekModel::forward(const Eigen::VectorXd& x) const {
  Eval e;
  e.hidden = layer1_.forward(x);
  e.output = layer2_.forward(e.hidden);
  return e;
}

std::size_t DarekModel::param_count() const {
  return layer1_.param_count() + layer2_.param_count();
}

Eigen::VectorXd DarekModel::params() const {
  Eigen::VectorXd v(param_count());
  std::size_t off = layer1_.write_params(v.data());
  layer2_.write_params(v.data() + off);
  return v;
}

void DarekModel::set_params(const Eigen::VectorXd& params) {
  if (static_cast<std::size_t>(params.size()) != param_count()) {
    throw DimensionMismatch("parameter vector size mismatch");
  }
  const std::size_t off = layer1_.read_params(params.data());
  layer2_.read_params(params.data() + off);
}

namespace {

struct DarekWorkspace {
  net::KanLayer::Cache cache1, cache2;
  net::KanLayer::CoeffGrad grad1, grad2;
  Eigen::VectorXd h, f, gf, gh;
};

double darek_batch(const DarekModel& model, const Eigen::MatrixXd& x,
                   const Eigen::MatrixXd& y, DarekWorkspace* ws,
                   bool with_grad) {
  const Eigen::Index n = x.rows();
  const int m = model.output_dim();
  const double scale = 1.0 / (static_cast<double>(n) * m);
  double loss = 0.0;
  for (Eigen::Index s = 0; s < n; ++s) {
    model.layer1().forward_cached(x.row(s).transpose(), ws->cache1, ws->h);
    model.layer2().forward_cached(ws->h, ws->cache2, ws->f);
    loss += (ws->f - y.row(s).transpose()).squaredNorm();
    if (with_grad) {
      ws->gf = 2.0 * scale * (ws->f - y.row(s).transpose());
      model.layer2().backward(ws->cache2, ws->gf, ws->grad2, &ws->gh);
      model.layer1().backward(ws->cache1, ws->gh, ws->grad1, nullptr);
    }
  }
  return loss * scale;
}

void darek_flatten(const DarekModel& model, const DarekWorkspace& ws,
                   Eigen::VectorXd& grad) {
  grad.resize(model.param_count());
  std::size_t off = 0;
  auto put = [&](const net::KanLayer::CoeffGrad& g) {
    for (const auto& row : g) {
      for (const auto& c : row) {
        for (Eigen::Index j = 0; j < c.size(); ++j) grad(off++) = c(j);
      }
    }
  };
  put(ws.grad1);
  put(ws.grad2);
}

void reset(net::KanLayer::CoeffGrad& g) {
  for (auto& row : g) {
    for (auto& c : row) c.setZero();
  }
}

void regrid_layer2(DarekModel& model, const Eigen::MatrixXd& knot_inputs,
                   bool refit) {
  Eigen::MatrixXd hidden(knot_inputs.rows(), model.hidden_dim());
  for (Eigen::Index i = 0; i < knot_inputs.rows(); ++i) {
    hidden.row(i) = model.hidden(knot_inputs.row(i).transpose()).transpose();
  }
  std::vector<std::vector<double>> grids(model.hidden_dim());
  for (int i = 0; i < model.hidden_dim(); ++i) {
    grids[i] = net::sorted_feature_grid(hidden.col(i)).knots;
  }
  if (refit) {
    model.layer2().set_grids_refit(grids);
  } else {
    for (int i = 0; i < model.hidden_dim(); ++i) {
      model.layer2().set_grid(i, std::move(grids[i]));
    }
  }
}

}  // namespace

double darek_loss_and_gradient(const DarekModel& model,
                               const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& y,
                               Eigen::VectorXd* grad) {
  DarekWorkspace ws;
  ws.grad1 = model.layer1().zero_coeff_grad();
  ws.grad2 = model.layer2().zero_coeff_grad();
  const double loss = darek_batch(model, x, y, &ws, grad != nullptr);
  if (grad) darek_flatten(model, ws, *grad);
  return loss;
}

net::TrainResult darek_train(DarekModel& model, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& knot_inputs,
                             const net::TrainConfig& cfg) {
  if (x.rows() == 0) throw TooFewSamples("empty training set");
  if (x.rows() != y.rows() || x.cols() != model.input_dim() ||
      y.cols() != model.output_dim()) {
    throw DimensionMismatch("training data does not match model dims");
  }

  // Layer-1 grids sit directly on the selected samples and never move.
  for (int p = 0; p < model.input_dim(); ++p) {
    model.layer1().set_grid(
        p, net::sorted_feature_grid(knot_inputs.col(p)).knots);
  }
  regrid_layer2(model, knot_inputs, /*refit=*/false);
  Rng coeff_rng(Rng::mix(cfg.seed, 0xDA2EC5EEDULL));
  model.layer1().init_coeffs(coeff_rng, cfg.coeff_init_scale);
  model.layer2().init_coeffs(coeff_rng, cfg.coeff_init_scale);

  DarekWorkspace ws;
  ws.grad1 = model.layer1().zero_coeff_grad();
  ws.grad2 = model.layer2().zero_coeff_grad();
  Eigen::VectorXd grad(model.param_count());
  Eigen::VectorXd params;

  net::TrainResult result;
  result.loss_history.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    reset(ws.grad1);
    reset(ws.grad2);
    const double loss = darek_batch(model, x, y, &ws, true);
    if (!std::isfinite(loss)) throw NonFiniteLoss(epoch);
    result.loss_history.push_back(loss);
    darek_flatten(model, ws, grad);
    params = model.params();
    params -= cfg.learning_rate * grad;
    model.set_params(params);

    if (cfg.knot_regrid_period > 0 &&
        (epoch + 1) % cfg.knot_regrid_period == 0 &&
        epoch + 1 < cfg.epochs) {
      regrid_layer2(model, knot_inputs, /*refit=*/true);
    }
  }
  regrid_layer2(model, knot_inputs, /*refit=*/true);
  DarekWorkspace final_ws;
  final_ws.grad1 = model.layer1().zero_coeff_grad();
  final_ws.grad2 = model.layer2().zero_coeff_grad();
  result.final_loss = darek_batch(model, x, y, &final_ws, false);
  if (!std::isfinite(result.final_loss)) throw NonFiniteLoss(cfg.epochs);
  return result;
}

DarekBoundContext make_darek_context(const DarekModel& model,
                                     const Eigen::MatrixXd& knot_inputs,
                                     const Eigen::MatrixXd& knot_targets,
                                     double total_first_order,
                                     double total_high_order) {
  DarekBoundContext ctx;
  ctx.order = model.spline_order();
  ctx.inputs = knot_inputs;
  ctx.hidden.resize(knot_inputs.rows(), model.hidden_dim());
  ctx.residuals.resize(knot_inputs.rows(), model.output_dim());
  for (Eigen::Index i = 0; i < knot_inputs.rows(); ++i) {
    const auto eval = model.forward(knot_inputs.row(i).transpose());
    ctx.hidden.row(i) = eval.hidden.transpose();
    ctx.residuals.row(i) = eval.output.transpose() - knot_targets.row(i);
  }
  for (int p = 0; p < model.input_dim(); ++p) {
    ctx.input_columns.push_back(net::sorted_feature_grid(ctx.inputs.col(p)));
  }
  for (int i = 0; i < model.hidden_dim(); ++i) {
    ctx.hidden_columns.push_back(net::sorted_feature_grid(ctx.hidden.col(i)));
  }
  const int d = model.input_dim();
  ctx.layer_first_order = std::sqrt(total_first_order / d);
  ctx.propagation_scale = ctx.layer_first_order / model.hidden_dim();
  ctx.layer_high_order.order = ctx.order + 1;
  ctx.layer_high_order.value = std::sqrt(total_high_order / d);
  return ctx;
}

bounds::ErrorBound darek_two_layer_bound(const DarekModel& model,
                                         const DarekBoundContext& ctx,
                                         const Eigen::VectorXd& x) {
  const auto eval = model.forward(x);
  const int h = model.hidden_dim();
  const int m = model.output_dim();
  const int k = ctx.order;

  // Layer-1 term: pure interpolation bounds on the sample grids (knot
  // residuals are attributed to the last layer), summed over inputs for
  // each hidden unit. Grids are shared across hidden units, so one sweep
  // over input dimensions serves them all.
  double layer1_per_unit = 0.0;
  interp::KnotWindow window;
  for (int p = 0; p < model.input_dim(); ++p) {
    const auto& col = ctx.input_columns[p];
    const std::size_t interval = interp::select_interval(col.knots, x(p));
    const auto range = interp::window_for(col.knots, interval, k);
    window.order = k;
    window.knots.assign(col.knots.begin() + range.first,
                        col.knots.begin() + range.first + range.count);
    window.values.assign(range.count, 0.0);
    layer1_per_unit +=
        interp::interpolation_error_bound(x(p), window, ctx.layer_high_order);
  }
  const double layer1_sum = h * layer1_per_unit;

  // Layer-2 term: windowed spline bound at the hidden image with the knot
  // residuals shared equally across the group's splines.
  bounds::ErrorBound eb;
  eb.mlp_term = layer1_sum;
  eb.spline_term.resize(m);
  eb.total.resize(m);
  for (int r = 0; r < m; ++r) {
    double term = 0.0;
    for (int i = 0; i < h; ++i) {
      const auto& col = ctx.hidden_columns[i];
      const std::size_t interval =
          interp::select_interval(col.knots, eval.hidden(i));
      const auto range = interp::window_for(col.knots, interval, k);
      window.order = k;
      window.knots.assign(col.knots.begin() + range.first,
                          col.knots.begin() + range.first + range.count);
      window.values.resize(range.count);
      for (std::size_t t = 0; t < range.count; ++t) {
        window.values[t] = ctx.residuals(col.perm[range.first + t], r) / h;
      }
      term += interp::spline_error_bound(eval.hidden(i), window,
                                         ctx.layer_high_order);
    }
    eb.spline_term(r) = term;
    eb.total(r) = term + ctx.propagation_scale * layer1_sum;
  }
  return eb;
}

EnsembleModel::Prediction EnsembleModel::predict(
    const Eigen::VectorXd& x) const {
  const int m = members.front().output_dim();
  Prediction p;
  p.mean = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd outs(members.size(), m);
  for (std::size_t i = 0; i < members.size(); ++i) {
    outs.row(i) = members[i].forward(x).output.transpose();
    p.mean += outs.row(i).transpose();
  }
  p.mean /= static_cast<double>(members.size());
  p.stddev = Eigen::VectorXd::Zero(m);
  for (std::size_t i = 0; i < members.size(); ++i) {
    p.stddev += (outs.row(i).transpose() - p.mean).array().square().matrix();
  }
  p.stddev = (p.stddev / static_cast<double>(members.size()))
                 .array()
                 .sqrt()
                 .matrix();
  return p;
}

std::size_t EnsembleModel::param_count() const {
  std::size_t n = 0;
  for (const auto& member : members) n += member.param_count();
  return n;
}

EnsembleModel ensemble_train(const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& knot_inputs,
                             const DarekShape& shape,
                             const net::TrainConfig& base_cfg, int n_members,
                             int jobs) {
  if (n_members < 2) throw TooFewSamples("ensemble needs at least 2 members");
  EnsembleModel ensemble;
  ensemble.members.reserve(n_members);
  std::vector<net::TrainConfig> cfgs(n_members, base_cfg);
  for (int i = 0; i < n_members; ++i) {
    cfgs[i].seed = Rng::mix(base_cfg.seed, 0xE45E3B1EULL, i);
    Rng rng(cfgs[i].seed);
    ensemble.members.emplace_back(shape, rng);
  }
  // Members are independent; each writes only its own slot.
  parallel_for(static_cast<std::size_t>(n_members), jobs, [&](std::size_t i) {
    darek_train(ensemble.members[i], x, y, knot_inputs, cfgs[i]);
  });
  return ensemble;
}

}  // namespace kdarek::base
