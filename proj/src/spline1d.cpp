#include "kdarek/spline1d.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "kdarek/errors.hpp"
#include "kdarek/interp.hpp"

namespace kdarek::net {

namespace {

// Triangular Cox-de Boor recursion (basis-functions form). span indexes the
// padded knot vector with t[span] <= piece < t[span+1]; x may lie outside
// the piece, in which case the piece polynomials extrapolate.
void basis_funs(const std::vector<double>& t, int span, double x, int degree,
                double* out) {
  std::array<double, kMaxSplineDegree + 1> left{};
  std::array<double, kMaxSplineDegree + 1> right{};
  out[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace

SplineBasis::SplineBasis(int degree, std::vector<double> grid)
    : degree_(degree), grid_(std::move(grid)) {
  if (degree_ < 1 || degree_ > kMaxSplineDegree) {
    throw DimensionMismatch("spline degree out of supported range");
  }
  const int m = static_cast<int>(grid_.size());
  if (m < 2 || m < degree_) {
    throw TooFewKnots("spline grid needs at least max(2, degree) knots");
  }
  for (int i = 0; i + 1 < m; ++i) {
    if (!(grid_[i + 1] > grid_[i])) {
      throw DuplicateKnots("spline grid must be strictly increasing");
    }
  }
  n_basis_ = m - degree_ + 1;

  // Extended vector: one extra knot each side, then `degree` padding knots
  // so the recursion never reads out of bounds near the edges. Padding
  // values never influence the real basis functions.
  const double lo_gap = grid_[1] - grid_[0];
  const double hi_gap = grid_[m - 1] - grid_[m - 2];
  padded_.clear();
  padded_.reserve(m + 2 + 2 * degree_);
  for (int i = degree_; i >= 0; --i) {
    padded_.push_back(grid_[0] - (i + 1) * lo_gap);
  }
  for (double g : grid_) padded_.push_back(g);
  for (int i = 0; i <= degree_; ++i) {
    padded_.push_back(grid_[m - 1] + (i + 1) * hi_gap);
  }
}

std::size_t SplineBasis::interval_of(double x) const {
  return interp::select_interval(grid_, x);
}

SplineBasis::Active SplineBasis::eval(double x, bool with_derivative) const {
  return eval_at_interval(interval_of(x), x, with_derivative);
}

SplineBasis::Active SplineBasis::eval_at_interval(std::size_t interval,
                                                  double x,
                                                  bool with_derivative) const {
  // Real basis index i lives at padded index i + degree; the padded span of
  // stored interval j is j + degree + 1.
  const int k = degree_;
  const int pad_span = static_cast<int>(interval) + k + 1;
  std::array<double, kMaxSplineDegree + 1> vals{};
  basis_funs(padded_, pad_span, x, k, vals.data());

  // Active real indices: [j + 1 - k, j + 1] clipped to [0, n_basis - 1].
  const int lo_raw = static_cast<int>(interval) + 1 - k;
  const int lo = std::max(0, lo_raw);
  const int hi = std::min(n_basis_ - 1, static_cast<int>(interval) + 1);

  Active act;
  act.first = lo;
  act.count = hi - lo + 1;
  for (int c = 0; c < act.count; ++c) {
    act.value[c] = vals[lo - lo_raw + c];
  }

  if (with_derivative) {
    // d/dx B_{i,k} = k * ( B_{i,k-1}/(t_{i+k}-t_i) - B_{i+1,k-1}/(t_{i+k+1}-t_{i+1}) )
    std::array<double, kMaxSplineDegree + 1> lower{};
    if (k >= 1) {
      basis_funs(padded_, pad_span, x, k - 1, lower.data());
    }
    auto lower_at = [&](int real_idx) -> double {
      // degree k-1 active real indices at this span: [j + 2 - k, j + 1]
      const int off = real_idx - (static_cast<int>(interval) + 2 - k);
      if (off < 0 || off >= k) return 0.0;
      return lower[off];
    };
    for (int c = 0; c < act.count; ++c) {
      const int i = lo + c;
      const int pi = i + k;  // padded index of basis i's first knot
      const double d1 = padded_[pi + k] - padded_[pi];
      const double d2 = padded_[pi + k + 1] - padded_[pi + 1];
      act.deriv[c] = k * (lower_at(i) / d1 - lower_at(i + 1) / d2);
    }
  }
  return act;
}

Eigen::RowVectorXd SplineBasis::dense_row(double x) const {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n_basis_);
  const Active act = eval(x, false);
  for (int c = 0; c < act.count; ++c) row(act.first + c) = act.value[c];
  return row;
}

Spline1d::Spline1d(int degree, std::vector<double> grid)
    : basis_(degree, std::move(grid)),
      coeffs_(Eigen::VectorXd::Zero(basis_.basis_count())) {}

double Spline1d::eval(double x) const {
  const auto act = basis_.eval(x, false);
  double acc = 0.0;
  for (int c = 0; c < act.count; ++c) acc += coeffs_(act.first + c) * act.value[c];
  return acc;
}

double Spline1d::eval(double x, double* derivative) const {
  const auto act = basis_.eval(x, true);
  double acc = 0.0, dacc = 0.0;
  for (int c = 0; c < act.count; ++c) {
    acc += coeffs_(act.first + c) * act.value[c];
    dacc += coeffs_(act.first + c) * act.deriv[c];
  }
  if (derivative) *derivative = dacc;
  return acc;
}

double Spline1d::eval_at_interval(std::size_t interval, double x) const {
  const auto act = basis_.eval_at_interval(interval, x, false);
  double acc = 0.0;
  for (int c = 0; c < act.count; ++c) acc += coeffs_(act.first + c) * act.value[c];
  return acc;
}

void Spline1d::regrid(std::vector<double> new_grid, int samples_per_knot) {
  SplineBasis next(basis_.degree(), std::move(new_grid));
  const int n_samples =
      samples_per_knot * static_cast<int>(next.grid().size());
  const double lo = next.grid().front();
  const double hi = next.grid().back();
  Eigen::MatrixXd design(n_samples, next.basis_count());
  Eigen::VectorXd rhs(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    const double x = lo + (hi - lo) * s / (n_samples - 1);
    design.row(s) = next.dense_row(x);
    rhs(s) = eval(x);
  }
  coeffs_ = design.colPivHouseholderQr().solve(rhs);
  basis_ = std::move(next);
}

KanLayer::KanLayer(int degree, int in_dim, int out_dim)
    : degree_(degree), out_dim_(out_dim) {
  // Placeholder uniform grids; callers install real grids before use.
  std::vector<double> unit(static_cast<std::size_t>(std::max(2, degree)) + 1);
  for (std::size_t i = 0; i < unit.size(); ++i) {
    unit[i] = -1.0 + 2.0 * static_cast<double>(i) / (unit.size() - 1);
  }
  bases_.reserve(in_dim);
  for (int i = 0; i < in_dim; ++i) bases_.emplace_back(degree, unit);
  coeffs_.assign(out_dim, {});
  for (auto& row : coeffs_) {
    row.reserve(in_dim);
    for (int i = 0; i < in_dim; ++i) {
      row.push_back(Eigen::VectorXd::Zero(bases_[i].basis_count()));
    }
  }
}

void KanLayer::set_grid(int input, std::vector<double> grid) {
  bases_[input] = SplineBasis(degree_, std::move(grid));
  for (int r = 0; r < out_dim_; ++r) {
    coeffs_[r][input] = Eigen::VectorXd::Zero(bases_[input].basis_count());
  }
}

void KanLayer::set_grids_refit(const std::vector<std::vector<double>>& grids,
                               int samples_per_knot) {
  if (static_cast<int>(grids.size()) != in_dim()) {
    throw DimensionMismatch("one grid per layer input required");
  }
  for (int i = 0; i < in_dim(); ++i) {
    SplineBasis next(degree_, grids[i]);
    const int n_samples =
        samples_per_knot * static_cast<int>(next.grid().size());
    const double lo = next.grid().front();
    const double hi = next.grid().back();
    Eigen::MatrixXd design(n_samples, next.basis_count());
    Eigen::MatrixXd rhs(n_samples, out_dim_);
    for (int s = 0; s < n_samples; ++s) {
      const double x = lo + (hi - lo) * s / (n_samples - 1);
      design.row(s) = next.dense_row(x);
      const auto act = bases_[i].eval(x, false);
      for (int r = 0; r < out_dim_; ++r) {
        double acc = 0.0;
        for (int c = 0; c < act.count; ++c) {
          acc += coeffs_[r][i](act.first + c) * act.value[c];
        }
        rhs(s, r) = acc;
      }
    }
    const auto qr = design.colPivHouseholderQr();
    for (int r = 0; r < out_dim_; ++r) {
      coeffs_[r][i] = qr.solve(rhs.col(r));
    }
    bases_[i] = std::move(next);
  }
}

void KanLayer::init_coeffs(Rng& rng, double scale) {
  for (auto& row : coeffs_) {
    for (auto& c : row) {
      for (Eigen::Index j = 0; j < c.size(); ++j) {
        c(j) = rng.uniform(-scale, scale);
      }
    }
  }
}

Eigen::VectorXd KanLayer::forward(const Eigen::VectorXd& in) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(out_dim_);
  for (int i = 0; i < in_dim(); ++i) {
    const auto act = bases_[i].eval(in(i), false);
    for (int r = 0; r < out_dim_; ++r) {
      const auto& c = coeffs_[r][i];
      double acc = 0.0;
      for (int b = 0; b < act.count; ++b) acc += c(act.first + b) * act.value[b];
      out(r) += acc;
    }
  }
  return out;
}

void KanLayer::forward_cached(const Eigen::VectorXd& in, Cache& cache,
                              Eigen::VectorXd& out) const {
  cache.active.resize(bases_.size());
  out.setZero(out_dim_);
  for (int i = 0; i < in_dim(); ++i) {
    cache.active[i] = bases_[i].eval(in(i), true);
    const auto& act = cache.active[i];
    for (int r = 0; r < out_dim_; ++r) {
      const auto& c = coeffs_[r][i];
      double acc = 0.0;
      for (int b = 0; b < act.count; ++b) acc += c(act.first + b) * act.value[b];
      out(r) += acc;
    }
  }
}

KanLayer::CoeffGrad KanLayer::zero_coeff_grad() const {
  CoeffGrad g(out_dim_);
  for (int r = 0; r < out_dim_; ++r) {
    g[r].reserve(in_dim());
    for (int i = 0; i < in_dim(); ++i) {
      g[r].push_back(Eigen::VectorXd::Zero(bases_[i].basis_count()));
    }
  }
  return g;
}

void KanLayer::backward(const Cache& cache, const Eigen::VectorXd& grad_out,
                        CoeffGrad& grad, Eigen::VectorXd* grad_in) const {
  if (grad_in) grad_in->setZero(in_dim());
  for (int i = 0; i < in_dim(); ++i) {
    const auto& act = cache.active[i];
    double gin = 0.0;
    for (int r = 0; r < out_dim_; ++r) {
      const double g = grad_out(r);
      auto& gc = grad[r][i];
      const auto& c = coeffs_[r][i];
      for (int b = 0; b < act.count; ++b) {
        gc(act.first + b) += g * act.value[b];
        gin += g * c(act.first + b) * act.deriv[b];
      }
    }
    if (grad_in) (*grad_in)(i) = gin;
  }
}

std::size_t KanLayer::param_count() const {
  std::size_t n = 0;
  for (const auto& row : coeffs_) {
    for (const auto& c : row) n += static_cast<std::size_t>(c.size());
  }
  return n;
}

std::size_t KanLayer::write_params(double* dst) const {
  std::size_t n = 0;
  for (const auto& row : coeffs_) {
    for (const auto& c : row) {
      for (Eigen::Index j = 0; j < c.size(); ++j) dst[n++] = c(j);
    }
  }
  return n;
}

std::size_t KanLayer::read_params(const double* src) {
  std::size_t n = 0;
  for (auto& row : coeffs_) {
    for (auto& c : row) {
      for (Eigen::Index j = 0; j < c.size(); ++j) c(j) = src[n++];
    }
  }
  return n;
}

SortedColumn sorted_feature_grid(const Eigen::VectorXd& values) {
  SortedColumn col;
  const int n = static_cast<int>(values.size());
  col.perm.resize(n);
  std::iota(col.perm.begin(), col.perm.end(), 0);
  std::stable_sort(col.perm.begin(), col.perm.end(),
                   [&](int a, int b) { return values(a) < values(b); });
  col.knots.resize(n);
  for (int j = 0; j < n; ++j) col.knots[j] = values(col.perm[j]);

  const double range = col.knots.back() - col.knots.front();
  const double min_gap = 1e-10 * range;
  const double jitter = 1e-9 * (range > 0.0 ? range : 1.0);
  for (int j = 1; j < n; ++j) {
    const double gap = col.knots[j] - col.knots[j - 1];
    if (gap <= 0.0 || gap < min_gap) {
      col.knots[j] = col.knots[j - 1] + jitter;
      col.repaired = true;
    }
  }
  return col;
}

}  // namespace kdarek::net
