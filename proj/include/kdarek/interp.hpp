#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kdarek::interp {

// A contiguous window of k+1 strictly increasing knots with paired values
// (function samples or residuals). order is the polynomial degree k of the
// interpolant the window carries.
struct KnotWindow {
  std::vector<double> knots;
  std::vector<double> values;
  int order = 0;
};

// Newton-form interpolant over a knot window: coeffs are the divided
// differences, lowest order first.
struct NewtonPoly {
  KnotWindow window;
  std::vector<double> coeffs;
};

// k-th-order Lipschitz constant: bound on the change rate of the (k-1)-th
// derivative of the target function.
struct LipschitzOrderK {
  int order = 1;
  double value = 0.0;
};

// Adjacent knots closer than this fraction of the window span are treated as
// duplicates.
inline constexpr double kKnotSeparationScale = 1e-10;

// Divided-difference coefficients for the Newton interpolant of
// (knots[i], values[i]). Throws LengthMismatch / DuplicateKnots.
std::vector<double> divided_differences(std::span<const double> knots,
                                        std::span<const double> values);

// Builds the NewtonPoly for a window (computes coefficients).
NewtonPoly fit_newton(KnotWindow window);

// Horner-style nested evaluation; extrapolation is permitted.
double newton_eval(const NewtonPoly& poly, double x);

// Index j with knots[j] <= x < knots[j+1], clamped to the first/last
// interval for out-of-range x. Binary search; throws EmptyKnots if fewer
// than two knots.
std::size_t select_interval(std::span<const double> sorted_knots, double x);

struct WindowRange {
  std::size_t first = 0;
  std::size_t count = 0;
};

// Contiguous range of order+1 knots containing interval j, chosen to
// minimize the maximum distance from the interval midpoint; ties shift
// toward lower indices. Throws TooFewKnots.
WindowRange window_for(std::span<const double> sorted_knots,
                       std::size_t interval, int order);

// Assembles a KnotWindow from a sorted knot array and co-indexed values.
KnotWindow make_window(std::span<const double> sorted_knots,
                       std::span<const double> values, WindowRange range,
                       int order);

// Worst-case interpolation error at x for a perfect interpolant on the
// window: L^{k+1}/(k+1)! * |prod(x - knot_i)|. Requires
// lip.order == window.order + 1.
double interpolation_error_bound(double x, const KnotWindow& window,
                                 const LipschitzOrderK& lip);

// Worst-case spline error at x when the approximant carries the given
// residuals at the window knots: interpolation term plus |Newton interpolant
// of the residuals at x|.
double spline_error_bound(double x, const KnotWindow& residual_window,
                          const LipschitzOrderK& lip);

}  // namespace kdarek::interp
