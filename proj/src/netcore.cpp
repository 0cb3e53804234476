#include "kdarek/netcore.hpp"

#include <cmath>
#include <limits>

#include "kdarek/errors.hpp"

namespace kdarek::net {

SigmaMaxResult sigma_max(const Eigen::MatrixXd& w, Eigen::VectorXd* warm_start,
                         double rel_tol, int max_iters) {
  SigmaMaxResult res;
  if (w.size() == 0) throw DimensionMismatch("sigma_max of empty matrix");
  if (w.isZero(0.0)) return res;

  Eigen::VectorXd local;
  Eigen::VectorXd& v = warm_start ? *warm_start : local;
  if (v.size() != w.cols()) {
    v.setOnes(w.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += 1e-3 * (i + 1);
  }
  if (v.norm() < 1e-300) v.setOnes(w.cols());

  double sigma = 0.0;
  double prev = -1.0;
  int it = 0;
  for (; it < max_iters; ++it) {
    v.normalize();
    Eigen::VectorXd u = w * v;
    sigma = u.norm();
    if (sigma < 1e-300) {
      // Iterate fell into the null space; restart from the dominant row.
      Eigen::Index best = 0;
      w.rowwise().norm().maxCoeff(&best);
      v = w.row(best).transpose();
      if (v.norm() < 1e-300) return {0.0, true, it};
      continue;
    }
    if (std::abs(sigma - prev) <= rel_tol * sigma) {
      res.value = sigma;
      res.converged = true;
      res.iterations = it + 1;
      v = w.transpose() * u / sigma;
      return res;
    }
    prev = sigma;
    v = w.transpose() * u / sigma;
  }
  res.value = sigma;
  res.converged = false;
  res.iterations = it;
  return res;
}

Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& w, double cap) {
  if (w.size() == 0 || w.isZero(0.0)) return w;
  const SigmaMaxResult s = sigma_max(w);
  if (s.value > cap) return (cap / s.value) * w;
  return w;
}

SnrMlp::SnrMlp(const std::vector<int>& widths, double layer_cap, Rng& rng) {
  if (widths.size() < 2 || widths.front() != 1) {
    throw DimensionMismatch("SnrMlp widths must start at 1");
  }
  layers_.resize(widths.size() - 1);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const int rows = widths[l + 1];
    const int cols = widths[l];
    auto& layer = layers_[l];
    layer.cap = layer_cap;
    layer.weight.resize(rows, cols);
    layer.bias.resize(rows);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) {
        layer.weight(r, c) = rng.uniform(-bound, bound);
      }
    }
    for (int r = 0; r < rows; ++r) layer.bias(r) = rng.uniform(-bound, bound);
  }
  normalize();
}

int SnrMlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

Eigen::VectorXd SnrMlp::forward(double x) const {
  Eigen::VectorXd a(1);
  a(0) = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    a = (layers_[l].weight * a + layers_[l].bias).eval();
    if (l + 1 < layers_.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

void SnrMlp::forward_cached(double x, Cache& cache,
                            Eigen::VectorXd& out) const {
  const std::size_t n = layers_.size();
  cache.pre.resize(n);
  cache.act.resize(n + 1);
  cache.act[0].resize(1);
  cache.act[0](0) = x;
  for (std::size_t l = 0; l < n; ++l) {
    cache.pre[l].noalias() = layers_[l].weight * cache.act[l];
    cache.pre[l] += layers_[l].bias;
    if (l + 1 < n) {
      cache.act[l + 1] = cache.pre[l].cwiseMax(0.0);
    } else {
      cache.act[l + 1] = cache.pre[l];
    }
  }
  out = cache.act[n];
}

SnrMlp::Grad SnrMlp::zero_grad() const {
  Grad g;
  g.weight.reserve(layers_.size());
  g.bias.reserve(layers_.size());
  for (const auto& layer : layers_) {
    g.weight.push_back(
        Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

void SnrMlp::backward(const Cache& cache, const Eigen::VectorXd& grad_out,
                      Grad& grad) const {
  const std::size_t n = layers_.size();
  Eigen::VectorXd delta = grad_out;
  for (std::size_t l = n; l-- > 0;) {
    grad.weight[l].noalias() += delta * cache.act[l].transpose();
    grad.bias[l] += delta;
    if (l > 0) {
      Eigen::VectorXd next = layers_[l].weight.transpose() * delta;
      // ReLU mask of the (l-1)-th pre-activation.
      for (Eigen::Index i = 0; i < next.size(); ++i) {
        if (cache.pre[l - 1](i) <= 0.0) next(i) = 0.0;
      }
      delta.swap(next);
    }
  }
}

void SnrMlp::normalize() {
  for (auto& layer : layers_) {
    for (int pass = 0; pass < 8; ++pass) {
      const SigmaMaxResult s =
          sigma_max(layer.weight, &layer.power_state, 1e-9, 300);
      if (s.value <= layer.cap * (1.0 + 5e-7)) break;
      layer.weight *= layer.cap / s.value;
    }
  }
}

double SnrMlp::cap_product() const {
  double p = 1.0;
  for (const auto& layer : layers_) p *= layer.cap;
  return p;
}

std::size_t SnrMlp::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<std::size_t>(layer.weight.size()) +
         static_cast<std::size_t>(layer.bias.size());
  }
  return n;
}

std::size_t SnrMlp::write_params(double* dst) const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      dst[n++] = layer.weight(i);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      dst[n++] = layer.bias(i);
    }
  }
  return n;
}

std::size_t SnrMlp::read_params(const double* src) {
  std::size_t n = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight(i) = src[n++];
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias(i) = src[n++];
    }
  }
  return n;
}

KdarekModel::KdarekModel(const ModelShape& shape, Rng& rng)
    : spline_(shape.spline_order, shape.feature_dim, shape.output_dim) {
  std::vector<int> widths;
  widths.push_back(1);
  for (int h : shape.mlp_hidden) widths.push_back(h);
  widths.push_back(shape.feature_dim);
  mlps_.reserve(shape.input_dim);
  for (int p = 0; p < shape.input_dim; ++p) {
    mlps_.emplace_back(widths, shape.layer_cap, rng);
  }
}

Eigen::VectorXd KdarekModel::features(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) {
    throw DimensionMismatch("input dimension mismatch");
  }
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(feature_dim());
  for (int p = 0; p < input_dim(); ++p) xi += mlps_[p].forward(x(p));
  return xi;
}

KdarekModel::Eval KdarekModel::forward(const Eigen::VectorXd& x) const {
  Eval e;
  e.features = features(x);
  e.output = spline_.forward(e.features);
  return e;
}

std::size_t KdarekModel::param_count() const {
  std::size_t n = spline_.param_count();
  for (const auto& mlp : mlps_) n += mlp.param_count();
  return n;
}

Eigen::VectorXd KdarekModel::params() const {
  Eigen::VectorXd v(param_count());
  std::size_t off = 0;
  for (const auto& mlp : mlps_) off += mlp.write_params(v.data() + off);
  off += spline_.write_params(v.data() + off);
  return v;
}

void KdarekModel::set_params(const Eigen::VectorXd& params) {
  if (static_cast<std::size_t>(params.size()) != param_count()) {
    throw DimensionMismatch("parameter vector size mismatch");
  }
  std::size_t off = 0;
  for (auto& mlp : mlps_) off += mlp.read_params(params.data() + off);
  spline_.read_params(params.data() + off);
}

void KdarekModel::normalize_mlps() {
  for (auto& mlp : mlps_) mlp.normalize();
}

namespace {

// Reusable buffers for the full-batch pass.
struct Workspace {
  std::vector<SnrMlp::Cache> mlp_cache;
  std::vector<SnrMlp::Grad> mlp_grad;
  KanLayer::Cache spline_cache;
  KanLayer::CoeffGrad spline_grad;
  Eigen::VectorXd xi, f, gf, gxi, psi;
};

double batch_pass(const KdarekModel& model, const Eigen::MatrixXd& x,
                  const Eigen::MatrixXd& y, Workspace* ws, bool with_grad) {
  const Eigen::Index n = x.rows();
  const int d = model.input_dim();
  const int m = model.output_dim();
  const double scale = 1.0 / (static_cast<double>(n) * m);

  double loss = 0.0;
  for (Eigen::Index s = 0; s < n; ++s) {
    ws->xi.setZero(model.feature_dim());
    for (int p = 0; p < d; ++p) {
      model.mlp(p).forward_cached(x(s, p), ws->mlp_cache[p], ws->psi);
      ws->xi += ws->psi;
    }
    model.spline().forward_cached(ws->xi, ws->spline_cache, ws->f);
    loss += (ws->f - y.row(s).transpose()).squaredNorm();
    if (with_grad) {
      ws->gf = 2.0 * scale * (ws->f - y.row(s).transpose());
      model.spline().backward(ws->spline_cache, ws->gf, ws->spline_grad,
                              &ws->gxi);
      for (int p = 0; p < d; ++p) {
        model.mlp(p).backward(ws->mlp_cache[p], ws->gxi, ws->mlp_grad[p]);
      }
    }
  }
  return loss * scale;
}

void flatten_grads(const KdarekModel& model, const Workspace& ws,
                   Eigen::VectorXd& grad) {
  grad.resize(model.param_count());
  std::size_t off = 0;
  for (int p = 0; p < model.input_dim(); ++p) {
    const auto& g = ws.mlp_grad[p];
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
      for (Eigen::Index i = 0; i < g.weight[l].size(); ++i) {
        grad(off++) = g.weight[l](i);
      }
      for (Eigen::Index i = 0; i < g.bias[l].size(); ++i) {
        grad(off++) = g.bias[l](i);
      }
    }
  }
  for (int r = 0; r < model.output_dim(); ++r) {
    for (int i = 0; i < model.feature_dim(); ++i) {
      const auto& g = ws.spline_grad[r][i];
      for (Eigen::Index j = 0; j < g.size(); ++j) grad(off++) = g(j);
    }
  }
}

Workspace make_workspace(const KdarekModel& model) {
  Workspace ws;
  ws.mlp_cache.resize(model.input_dim());
  ws.mlp_grad.reserve(model.input_dim());
  for (int p = 0; p < model.input_dim(); ++p) {
    ws.mlp_grad.push_back(model.mlp(p).zero_grad());
  }
  ws.spline_grad = model.spline().zero_coeff_grad();
  return ws;
}

void reset_grads(Workspace& ws) {
  for (auto& g : ws.mlp_grad) {
    for (auto& w : g.weight) w.setZero();
    for (auto& b : g.bias) b.setZero();
  }
  for (auto& row : ws.spline_grad) {
    for (auto& c : row) c.setZero();
  }
}

void regrid_from_features(KdarekModel& model,
                          const Eigen::MatrixXd& knot_inputs, bool refit) {
  const Eigen::MatrixXd feats = feature_rows(model, knot_inputs);
  std::vector<std::vector<double>> grids(model.feature_dim());
  for (int i = 0; i < model.feature_dim(); ++i) {
    grids[i] = sorted_feature_grid(feats.col(i)).knots;
  }
  if (refit) {
    model.spline().set_grids_refit(grids);
  } else {
    for (int i = 0; i < model.feature_dim(); ++i) {
      model.spline().set_grid(i, std::move(grids[i]));
    }
  }
}

}  // namespace

double loss_and_gradient(const KdarekModel& model, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& y, Eigen::VectorXd* grad) {
  Workspace ws = make_workspace(model);
  reset_grads(ws);
  const double loss = batch_pass(model, x, y, &ws, grad != nullptr);
  if (grad) flatten_grads(model, ws, *grad);
  return loss;
}

double mse_loss(const KdarekModel& model, const Eigen::MatrixXd& x,
                const Eigen::MatrixXd& y) {
  return loss_and_gradient(model, x, y, nullptr);
}

Eigen::MatrixXd feature_rows(const KdarekModel& model,
                             const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd feats(inputs.rows(), model.feature_dim());
  for (Eigen::Index s = 0; s < inputs.rows(); ++s) {
    feats.row(s) = model.features(inputs.row(s).transpose()).transpose();
  }
  return feats;
}

TrainResult train(KdarekModel& model, const Eigen::MatrixXd& x,
                  const Eigen::MatrixXd& y, const Eigen::MatrixXd& knot_inputs,
                  const TrainConfig& cfg) {
  if (x.rows() == 0) throw TooFewSamples("empty training set");
  if (x.rows() != y.rows() || x.cols() != model.input_dim() ||
      y.cols() != model.output_dim()) {
    throw DimensionMismatch("training data does not match model dims");
  }
  if (cfg.epochs < 1 || cfg.learning_rate <= 0.0) {
    throw DimensionMismatch("epochs >= 1 and learning_rate > 0 required");
  }

  regrid_from_features(model, knot_inputs, /*refit=*/false);
  Rng coeff_rng(Rng::mix(cfg.seed, 0xC0EFF5EEDULL));
  model.spline().init_coeffs(coeff_rng, cfg.coeff_init_scale);

  Workspace ws = make_workspace(model);
  Eigen::VectorXd grad(model.param_count());
  Eigen::VectorXd params = model.params();

  // Adam state (unused under plain gradient descent).
  Eigen::VectorXd adam_m, adam_v;
  if (cfg.optimizer == TrainConfig::Optimizer::Adam) {
    adam_m = Eigen::VectorXd::Zero(params.size());
    adam_v = Eigen::VectorXd::Zero(params.size());
  }

  TrainResult result;
  result.loss_history.reserve(cfg.epochs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    reset_grads(ws);
    const double loss = batch_pass(model, x, y, &ws, true);
    if (!std::isfinite(loss)) throw NonFiniteLoss(epoch);
    result.loss_history.push_back(loss);
    flatten_grads(model, ws, grad);

    params = model.params();
    if (cfg.optimizer == TrainConfig::Optimizer::Adam) {
      const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double t = epoch + 1;
      adam_m = b1 * adam_m + (1.0 - b1) * grad;
      adam_v = b2 * adam_v.array().matrix() +
               (1.0 - b2) * grad.array().square().matrix();
      const double corr1 = 1.0 - std::pow(b1, t);
      const double corr2 = 1.0 - std::pow(b2, t);
      params -= (cfg.learning_rate * (adam_m / corr1).array() /
                 ((adam_v / corr2).array().sqrt() + eps))
                    .matrix();
    } else {
      params -= cfg.learning_rate * grad;
    }
    model.set_params(params);
    model.normalize_mlps();

    if (cfg.knot_regrid_period > 0 &&
        (epoch + 1) % cfg.knot_regrid_period == 0 &&
        epoch + 1 < cfg.epochs) {
      regrid_from_features(model, knot_inputs, /*refit=*/true);
      // Grid moves change the workspace shapes only if knot counts change,
      // which they cannot; nothing to rebuild.
    }
  }

  regrid_from_features(model, knot_inputs, /*refit=*/true);
  result.final_loss = batch_pass(model, x, y, &ws, false);
  if (!std::isfinite(result.final_loss)) throw NonFiniteLoss(cfg.epochs);
  return result;
}

}  // namespace kdarek::net
