#include "kdarek/interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kdarek/errors.hpp"

namespace kdarek::interp {

namespace {

void check_knots(std::span<const double> knots) {
  if (knots.size() < 2) return;
  const double range = knots.back() - knots.front();
  const double min_gap = kKnotSeparationScale * range;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double gap = knots[i + 1] - knots[i];
    if (gap <= 0.0 || gap < min_gap) {
      throw DuplicateKnots("knots must be strictly increasing with gap >= " +
                           std::to_string(min_gap));
    }
  }
}

}  // namespace

std::vector<double> divided_differences(std::span<const double> knots,
                                        std::span<const double> values) {
  if (knots.size() != values.size()) {
    throw LengthMismatch("knots and values differ in length");
  }
  if (knots.empty()) throw LengthMismatch("need at least one knot");
  check_knots(knots);

  // Standard triangular table, updated in place.
  std::vector<double> coeffs(values.begin(), values.end());
  const std::size_t n = coeffs.size();
  for (std::size_t level = 1; level < n; ++level) {
    for (std::size_t i = n - 1; i >= level; --i) {
      coeffs[i] =
          (coeffs[i] - coeffs[i - 1]) / (knots[i] - knots[i - level]);
    }
  }
  return coeffs;
}

NewtonPoly fit_newton(KnotWindow window) {
  if (static_cast<int>(window.knots.size()) != window.order + 1 ||
      window.values.size() != window.knots.size()) {
    throw LengthMismatch("window needs order+1 knots and values");
  }
  NewtonPoly poly;
  poly.coeffs = divided_differences(window.knots, window.values);
  poly.window = std::move(window);
  return poly;
}

double newton_eval(const NewtonPoly& poly, double x) {
  const auto& knots = poly.window.knots;
  const auto& c = poly.coeffs;
  double acc = c.back();
  for (std::size_t i = c.size() - 1; i-- > 0;) {
    acc = acc * (x - knots[i]) + c[i];
  }
  return acc;
}

std::size_t select_interval(std::span<const double> sorted_knots, double x) {
  if (sorted_knots.size() < 2) {
    throw EmptyKnots("need at least two knots to pick an interval");
  }
  // upper_bound gives the first knot > x; the interval is the one to its
  // left, clamped to [0, m-2] so out-of-range points use the edge piece.
  const auto it =
      std::upper_bound(sorted_knots.begin(), sorted_knots.end(), x);
  const std::ptrdiff_t idx = it - sorted_knots.begin();
  if (idx <= 0) return 0;
  const std::size_t last = sorted_knots.size() - 2;
  return std::min(static_cast<std::size_t>(idx - 1), last);
}

WindowRange window_for(std::span<const double> sorted_knots,
                       std::size_t interval, int order) {
  const std::size_t m = sorted_knots.size();
  const std::size_t count = static_cast<std::size_t>(order) + 1;
  if (m < count) throw TooFewKnots("need at least order+1 knots");
  if (interval + 1 >= m) throw TooFewKnots("interval index out of range");

  const double mid =
      0.5 * (sorted_knots[interval] + sorted_knots[interval + 1]);
  // Candidate starts must keep the window contiguous, inside [0, m), and
  // containing the interval.
  const std::size_t hi = std::min(interval, m - count);
  std::size_t lo = interval + 1 >= count ? interval + 1 - count : 0;
  lo = std::min(lo, hi);

  std::size_t best = lo;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t start = lo; start <= hi; ++start) {
    const double cost = std::max(std::abs(sorted_knots[start] - mid),
                                 std::abs(sorted_knots[start + count - 1] - mid));
    if (cost < best_cost) {
      best_cost = cost;
      best = start;
    }
  }
  return {best, count};
}

KnotWindow make_window(std::span<const double> sorted_knots,
                       std::span<const double> values, WindowRange range,
                       int order) {
  if (values.size() != sorted_knots.size()) {
    throw LengthMismatch("values must pair with knots");
  }
  KnotWindow w;
  w.order = order;
  w.knots.assign(sorted_knots.begin() + range.first,
                 sorted_knots.begin() + range.first + range.count);
  w.values.assign(values.begin() + range.first,
                  values.begin() + range.first + range.count);
  return w;
}

double interpolation_error_bound(double x, const KnotWindow& window,
                                 const LipschitzOrderK& lip) {
  if (lip.order != window.order + 1) {
    throw LengthMismatch("Lipschitz order must be window order + 1");
  }
  double factorial = 1.0;
  for (int i = 2; i <= lip.order; ++i) factorial *= i;
  double prod = 1.0;
  for (double knot : window.knots) prod *= (x - knot);
  return lip.value / factorial * std::abs(prod);
}

double spline_error_bound(double x, const KnotWindow& residual_window,
                          const LipschitzOrderK& lip) {
  const double interp_term =
      interpolation_error_bound(x, residual_window, lip);
  // Residuals are stored signed; the magnitude is taken after evaluating
  // their interpolant.
  const NewtonPoly poly = fit_newton(residual_window);
  return interp_term + std::abs(newton_eval(poly, x));
}

}  // namespace kdarek::interp
