#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <limits>

namespace pdmp::quad {

/// Relative (to the L1 norm of the integrand) termination tolerance. The
/// integrands along the flow are O(1), which keeps absolute errors < 1e-8.
inline constexpr double kTolerance = 1e-11;
/// Absolute error accepted per unit length. Without it, integrands that
/// vanish by cancellation (f = 1 - x near the boundary) never meet the
/// relative test and the bisection runs to full depth.
inline constexpr double kAbsTolerance = 1e-13;
inline constexpr unsigned kMaxDepth = 20;
/// The error estimate returned for one panel never drops below a few ulps of
/// the mean integrand, whatever the panel width; bisecting past that point
/// only burns evaluations.
inline constexpr double kRoundoffUlps = 8.0;

namespace detail {

template <class F>
double adapt(F& f, double a, double b, double tolerance, unsigned depth) {
  double error = 0.0;
  double L1 = 0.0;
  const double estimate = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(
      f, a, b, 0, 0.0, &error, &L1);
  const double width = b - a;
  const double roundoff = kRoundoffUlps * std::numeric_limits<double>::epsilon() * L1 / width;
  if (depth == 0 || error <= std::max({tolerance * L1, kAbsTolerance * width, roundoff})) {
    return estimate;
  }
  const double mid = 0.5 * (a + b);
  return adapt(f, a, mid, tolerance, depth - 1) + adapt(f, mid, b, tolerance, depth - 1);
}

}  // namespace detail

/// Adaptive 21-point Gauss-Kronrod on [a, b] by bisection; zero for empty
/// intervals.
template <class F>
double integrate(F&& f, double a, double b, double tolerance = kTolerance) {
  if (!(b > a)) return 0.0;
  return detail::adapt(f, a, b, tolerance, kMaxDepth);
}

}  // namespace pdmp::quad
