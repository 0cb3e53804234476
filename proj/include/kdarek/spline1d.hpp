#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <vector>

#include "kdarek/rng.hpp"

namespace kdarek::net {

inline constexpr int kMaxSplineDegree = 7;

// B-spline basis of degree k over a strictly increasing grid of m knots.
// The knot vector is the grid extended by one knot at each end (spaced by
// the edge gap), giving m - k + 1 basis functions. Every piece is a
// polynomial of degree <= k over [grid[j], grid[j+1]) and the curve is
// C^{k-1} at interior knots. Out-of-range points are evaluated on the
// clamped edge piece, i.e. the edge polynomial extrapolates.
class SplineBasis {
 public:
  SplineBasis() = default;
  SplineBasis(int degree, std::vector<double> grid);

  int degree() const { return degree_; }
  int basis_count() const { return n_basis_; }
  const std::vector<double>& grid() const { return grid_; }
  std::size_t interval_count() const { return grid_.size() - 1; }

  // Clamped interval index for x (first/last piece outside the grid).
  std::size_t interval_of(double x) const;

  struct Active {
    int first = 0;  // index of the first active basis function
    int count = 0;
    std::array<double, kMaxSplineDegree + 1> value{};
    std::array<double, kMaxSplineDegree + 1> deriv{};
  };

  // Active basis values (+ first derivatives when requested) at x using the
  // piece of interval_of(x).
  Active eval(double x, bool with_derivative) const;
  // Same but with the piece forced; used for continuity checks and edge
  // extrapolation.
  Active eval_at_interval(std::size_t interval, double x,
                          bool with_derivative) const;

  // Dense row of all basis_count() values at x (least-squares fitting).
  Eigen::RowVectorXd dense_row(double x) const;

 private:
  int degree_ = 3;
  int n_basis_ = 0;
  std::vector<double> grid_;
  std::vector<double> padded_;  // degree extra knots on each side of the
                                // extended vector, for the triangular
                                // recursion near the edges
};

// One univariate spline: a basis plus its coefficient vector.
class Spline1d {
 public:
  Spline1d() = default;
  Spline1d(int degree, std::vector<double> grid);

  const SplineBasis& basis() const { return basis_; }
  Eigen::VectorXd& coeffs() { return coeffs_; }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }

  double eval(double x) const;
  double eval(double x, double* derivative) const;
  double eval_at_interval(std::size_t interval, double x) const;

  // Replace the grid, refitting coefficients by least squares of the old
  // curve sampled at samples_per_knot * m points over the new grid span.
  void regrid(std::vector<double> new_grid, int samples_per_knot = 4);

 private:
  SplineBasis basis_;
  Eigen::VectorXd coeffs_;
};

// Layer of univariate splines mapping in_dim -> out_dim:
// out[r] = sum_i s_{r,i}(in[i]). Splines reading input i share that input's
// grid, so a grid update affects one column of the coefficient table.
class KanLayer {
 public:
  KanLayer() = default;
  KanLayer(int degree, int in_dim, int out_dim);

  int in_dim() const { return static_cast<int>(bases_.size()); }
  int out_dim() const { return out_dim_; }
  int degree() const { return degree_; }

  const SplineBasis& basis(int input) const { return bases_[input]; }
  Eigen::VectorXd& coeffs(int out, int input) { return coeffs_[out][input]; }
  const Eigen::VectorXd& coeffs(int out, int input) const {
    return coeffs_[out][input];
  }

  // Sets one input's grid and zeroes the affected coefficients.
  void set_grid(int input, std::vector<double> grid);
  // Replaces every grid, refitting all coefficients from the old curves.
  void set_grids_refit(const std::vector<std::vector<double>>& grids,
                       int samples_per_knot = 4);
  void init_coeffs(Rng& rng, double scale);

  Eigen::VectorXd forward(const Eigen::VectorXd& in) const;

  struct Cache {
    std::vector<SplineBasis::Active> active;  // per input, with derivatives
  };
  void forward_cached(const Eigen::VectorXd& in, Cache& cache,
                      Eigen::VectorXd& out) const;

  using CoeffGrad = std::vector<std::vector<Eigen::VectorXd>>;
  CoeffGrad zero_coeff_grad() const;
  // Accumulates dL/dcoeffs into grad; writes dL/din into grad_in when given.
  void backward(const Cache& cache, const Eigen::VectorXd& grad_out,
                CoeffGrad& grad, Eigen::VectorXd* grad_in) const;

  std::size_t param_count() const;
  std::size_t write_params(double* dst) const;
  std::size_t read_params(const double* src);

 private:
  int degree_ = 3;
  int out_dim_ = 0;
  std::vector<SplineBasis> bases_;                   // in_dim
  std::vector<std::vector<Eigen::VectorXd>> coeffs_;  // out x in
};

// Sorted-grid construction shared by training-time regridding and the bound
// machinery: sorts a feature column, records the permutation (sorted slot ->
// source row), and repairs near-duplicate knots by a deterministic jitter of
// 1e-9 * range so degenerate feature maps stay usable.
struct SortedColumn {
  std::vector<double> knots;  // sorted, strictly increasing after repair
  std::vector<int> perm;      // knots[j] came from values[perm[j]]
  bool repaired = false;
};
SortedColumn sorted_feature_grid(const Eigen::VectorXd& values);

}  // namespace kdarek::net
