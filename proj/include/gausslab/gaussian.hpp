#pragma once

// One-dimensional Gaussian primitives that stay accurate deep in the upper
// tail. Every quantity the rest of the library compares lives at scale
// exp(-s^2/2), so the tail is carried either as a Mills ratio or as a log.

#include <cmath>
#include <limits>
#include <string>
#include <numbers>
#include <stdexcept>

#include "gausslab/detail/numerics.hpp"

namespace gausslab {

inline constexpr double kSqrtTwoPi = 2.5066282746310002;    // sqrt(2 pi)
inline constexpr double kSqrtHalfPi = 1.2533141373155003;   // sqrt(pi / 2)
inline constexpr double kLn2 = std::numbers::ln2;

namespace detail {

inline void require_finite(double s, const char* where) {
  if (!std::isfinite(s)) throw std::domain_error(std::string(where) + ": non-finite argument");
}

// Above this point erfc(s / sqrt 2) is close enough to underflow that the
// asymptotic Mills series takes over.
inline constexpr double kMillsSeriesCutoff = 26.0;

// m(s) = 1/s * sum_k (-1)^k (2k-1)!! / s^(2k). At s >= 26 the term ratio is
// below 0.06 for the first dozen terms, so the truncation error is far below
// one ulp before the series starts to diverge.
inline double mills_asymptotic(double s) {
  const double inv_s2 = 1.0 / (s * s);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    term *= -(2.0 * k - 1.0) * inv_s2;
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum / s;
}

}  // namespace detail

/// T(s) = integral of exp(-t^2/2) over (s, inf). Underflows to 0 past s ~ 38.
inline double tail(double s) {
  detail::require_finite(s, "tail");
  return kSqrtHalfPi * std::erfc(s / std::numbers::sqrt2);
}

/// Mills ratio m(s) = exp(s^2/2) T(s), the scaled complementary error function
/// in Gaussian units. Finite for every s > -37.
inline double mills_ratio(double s) {
  detail::require_finite(s, "mills_ratio");
  if (s >= detail::kMillsSeriesCutoff) return detail::mills_asymptotic(s);
  if (s <= 1.0) return detail::exp_half_square(s) * tail(s);
  // erfc(x) has relative condition number ~2x^2, so the rounding of
  // x = s / sqrt 2 alone would cost s^2 ulps. Split 1/sqrt 2 into two doubles
  // and apply the first-order correction -2/sqrt(pi) exp(-x^2) dx.
  constexpr double k_hi = 0.7071067811865476;
  constexpr double k_lo = -4.8336466567264565e-17;
  const double x = s * k_hi;
  const double dx = std::fma(s, k_hi, -x) + s * k_lo;
  const double scale = detail::exp_half_square(s);
  const double erfc_x = std::erfc(x);
  // exp(s^2/2) exp(-x^2) = exp(x0^2 - x^2) with x0 = x + dx the exact argument.
  const double cross = std::exp(dx * (2.0 * x + dx));
  return kSqrtHalfPi * (scale * erfc_x - 1.1283791670955126 * cross * dx);
}

/// ln T(s), finite for every finite s.
inline double log_tail(double s) {
  detail::require_finite(s, "log_tail");
  if (s <= 1.0) return std::log(tail(s));
  return -0.5 * s * s + std::log(mills_ratio(s));
}

/// exp(s^2/2) T(u): the tail beyond u expressed in units of exp(-s^2/2).
/// Both arguments may be large; the exponent is formed as a difference.
inline double reduced_tail(double u, double s) {
  if (u == std::numeric_limits<double>::infinity()) return 0.0;
  detail::require_finite(u, "reduced_tail");
  if (u >= 0.0) return std::exp(detail::half_square_difference(s, u)) * mills_ratio(u);
  return detail::exp_half_square(s) * tail(u);
}

/// Standard normal CDF; phi(-inf) = 0 and phi(inf) = 1.
inline double phi(double s) {
  if (std::isnan(s)) throw std::domain_error("phi: NaN argument");
  return 0.5 * std::erfc(-s / std::numbers::sqrt2);
}

/// Upper tail probability 1 - phi(s), without cancellation for large s.
inline double phi_upper(double s) {
  if (std::isnan(s)) throw std::domain_error("phi_upper: NaN argument");
  return 0.5 * std::erfc(s / std::numbers::sqrt2);
}

/// Standard normal density.
inline double normal_pdf(double s) { return std::exp(-0.5 * s * s) / kSqrtTwoPi; }

namespace detail {

// Acklam's rational approximation of the normal quantile (relative error
// about 1e-9). Used only as the starting point for the bracketed refinement.
inline double quantile_guess(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549671010429342e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

inline double refine_quantile(double guess, double xtol, auto&& residual) {
  double lo = guess - 1.0;
  double hi = guess + 1.0;
  while (residual(lo) > 0.0) lo -= 2.0 * (hi - lo);
  while (residual(hi) < 0.0) hi += 2.0 * (hi - lo);
  return bracketed_newton(residual, [](double x) { return normal_pdf(x); }, lo, hi, guess, xtol);
}

}  // namespace detail

/// Inverse of phi on (0, 1), refined to 1e-14 absolute in the argument.
inline double phi_inv(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("phi_inv: probability outside (0, 1)");
  const double guess = detail::quantile_guess(p);
  if (p > 0.5) {
    // Work with the upper tail so the residual keeps its relative precision.
    const double q = 1.0 - p;
    return detail::refine_quantile(guess, 1e-14, [q](double x) { return q - phi_upper(x); });
  }
  return detail::refine_quantile(guess, 1e-14, [p](double x) { return phi(x) - p; });
}

/// Inverse of phi_upper: the x with 1 - phi(x) = q. Keeps full precision for
/// q close to 0, where phi_inv(1 - q) cannot.
inline double phi_upper_inv(double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::domain_error("phi_upper_inv: probability outside (0, 1)");
  const double guess = -detail::quantile_guess(q);
  return detail::refine_quantile(guess, 1e-14, [q](double x) { return q - phi_upper(x); });
}

/// Solves log_tail(x) = target for x. The map is strictly decreasing with
/// derivative -1/m(x), so Newton converges from any bracket.
inline double log_tail_inv(double target, double lo, double hi, double xtol = 1e-15) {
  auto f = [target](double x) { return target - log_tail(x); };
  auto df = [](double x) { return 1.0 / mills_ratio(x); };
  while (f(lo) > 0.0) lo -= 2.0 * (hi - lo) + 1.0;
  while (f(hi) < 0.0) hi += 2.0 * (hi - lo) + 1.0;
  return detail::bracketed_newton(f, df, lo, hi, 0.5 * (lo + hi), xtol);
}

/// Solves reduced_tail(x, s) = value for x >= 0, i.e. exp(s^2/2) T(x) = value.
/// The residual (s^2 - x^2)/2 + ln m(x) - ln(value) is formed as a difference
/// of O(1) terms, so the root keeps full precision even where ln T(x) itself
/// is of order s^2.
inline double reduced_tail_inv(double value, double s, double lo, double hi, double xtol = 1e-15) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw std::domain_error("reduced_tail_inv: value must be positive and finite");
  const double log_value = std::log(value);
  auto f = [&](double x) {
    return detail::half_square_difference(s, x) + std::log(mills_ratio(x)) - log_value;
  };
  auto df = [](double x) { return -1.0 / mills_ratio(x); };
  lo = std::max(lo, 0.0);
  while (f(lo) < 0.0 && lo > 0.0) lo = std::max(0.0, lo - (hi - lo) - 1.0);
  while (f(hi) > 0.0) hi += 2.0 * (hi - lo) + 1.0;
  double x = detail::bracketed_newton(f, df, lo, hi, 0.5 * (lo + hi), xtol);
  // The stopping test can leave the iterate one ulp off; settle on the
  // neighbouring double with the smallest residual.
  for (int step = 0; step < 4; ++step) {
    const double down = std::nextafter(x, -INFINITY);
    const double up = std::nextafter(x, INFINITY);
    const double r = std::abs(f(x));
    if (std::abs(f(up)) < r) {
      x = up;
    } else if (std::abs(f(down)) < r) {
      x = down;
    } else {
      break;
    }
  }
  return x;
}

}  // namespace gausslab
