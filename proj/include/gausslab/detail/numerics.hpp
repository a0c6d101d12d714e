#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace gausslab::detail {

/// (a - b)(a + b) / 2, i.e. (a^2 - b^2) / 2 without forming the squares.
inline double half_square_difference(double a, double b) { return 0.5 * (a - b) * (a + b); }

/// exp(x^2 / 2) with the rounding error of x*x folded back in through fma.
inline double exp_half_square(double x) {
  const double sq = x * x;
  const double err = std::fma(x, x, -sq);
  return std::exp(0.5 * sq) * (1.0 + 0.5 * err);
}

/// Safeguarded Newton iteration on a bracket [lo, hi] where f(lo) and f(hi)
/// have opposite signs. Falls back to bisection whenever the Newton step
/// leaves the bracket or fails to shrink it fast enough.
template <class F, class DF>
double bracketed_newton(F&& f, DF&& df, double lo, double hi, double x0, double xtol,
                        int max_iter = 200) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) throw std::domain_error("bracketed_newton: root not bracketed");
  const bool increasing = fhi > 0.0;
  double x = (x0 > lo && x0 < hi) ? x0 : 0.5 * (lo + hi);
  for (int it = 0; it < max_iter; ++it) {
    const double fx = f(x);
    if (fx == 0.0) return x;
    if ((fx > 0.0) == increasing) {
      hi = x;
    } else {
      lo = x;
    }
    const double d = df(x);
    double next = (d != 0.0 && std::isfinite(d)) ? x - fx / d : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= xtol || hi - lo <= xtol) return next;
    x = next;
  }
  return x;
}

/// Plain bisection for a sign change of f on [lo, hi]; returns the midpoint of
/// the final bracket.
template <class F>
double bisect(F&& f, double lo, double hi, double xtol, int max_iter = 400) {
  double flo = f(lo);
  const double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) throw std::domain_error("bisect: root not bracketed");
  for (int it = 0; it < max_iter && hi - lo > xtol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Golden-section search for a minimum of a unimodal f on [lo, hi].
/// Returns (argmin, min).
template <class F>
std::pair<double, double> golden_section(F&& f, double lo, double hi, double xtol) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > xtol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

}  // namespace gausslab::detail
