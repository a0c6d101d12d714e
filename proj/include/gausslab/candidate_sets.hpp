#pragma once

// Closed-form geometry of the candidate families: half-spaces, symmetric
// strips, intervals on the line and centered balls. Perimeters and
// barycenters are reported in reduced units, i.e. multiplied by exp(s^2/2),
// so that quantities of order exp(-s^2/2) stay O(1) even for s = 40.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "gausslab/detail/numerics.hpp"
#include "gausslab/gaussian.hpp"

namespace gausslab {

using Vec2 = std::array<double, 2>;

inline double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec2& a) { return std::hypot(a[0], a[1]); }

/// Volume level s and reduced repulsion eps0. The raw repulsion is
/// eps = eps0 * sqrt(2 pi) * exp(s^2/2) / s^2 and is never formed.
class ProblemContext {
 public:
  ProblemContext(double s, double eps0) : s_(s), eps0_(eps0) {
    if (!std::isfinite(s) || s < 0.0) throw std::invalid_argument("ProblemContext: s must be >= 0");
    if (!std::isfinite(eps0) || eps0 < 0.0)
      throw std::invalid_argument("ProblemContext: eps0 must be >= 0");
  }

  double s() const { return s_; }
  double eps0() const { return eps0_; }
  /// Volume penalty strength, s + 1.
  double lambda_cap() const { return s_ + 1.0; }
  /// Target Gaussian volume phi(s).
  double target_volume() const { return phi(s_); }
  /// exp(s^2/2) T(s): the target's complement in reduced units, over sqrt(2 pi).
  double target_reduced_tail() const { return mills_ratio(s_); }
  /// Whether eps0 lies in the window [6/5, 7/5] the analysis works in.
  bool in_eps_window() const { return eps0_ >= 1.2 && eps0_ <= 1.4; }

 private:
  double s_;
  double eps0_;
};

namespace detail {
inline Vec2 checked_direction(const Vec2& w) {
  const double n = norm(w);
  if (!(std::abs(n - 1.0) <= 1e-12))
    throw std::invalid_argument("candidate set: direction must have unit norm");
  return w;
}
}  // namespace detail

/// {x : <x, w> < level}.
class HalfSpace {
 public:
  explicit HalfSpace(double level, Vec2 direction = {1.0, 0.0})
      : direction_(detail::checked_direction(direction)), level_(level) {
    if (std::isnan(level)) throw std::invalid_argument("HalfSpace: level is NaN");
  }
  const Vec2& direction() const { return direction_; }
  double level() const { return level_; }

 private:
  Vec2 direction_;
  double level_;
};

/// {x : |<x, w>| < half_width}.
class SymmetricStrip {
 public:
  explicit SymmetricStrip(double half_width, Vec2 direction = {1.0, 0.0})
      : direction_(detail::checked_direction(direction)), half_width_(half_width) {
    if (!(half_width > 0.0) || !std::isfinite(half_width))
      throw std::invalid_argument("SymmetricStrip: half_width must be positive and finite");
  }
  const Vec2& direction() const { return direction_; }
  double half_width() const { return half_width_; }

 private:
  Vec2 direction_;
  double half_width_;
};

/// (left, right) on the real line; either end may be infinite.
class Interval1D {
 public:
  Interval1D(double left, double right) : left_(left), right_(right) {
    if (std::isnan(left) || std::isnan(right) || !(left < right))
      throw std::invalid_argument("Interval1D: endpoints must satisfy left < right");
    if (left == std::numeric_limits<double>::infinity() ||
        right == -std::numeric_limits<double>::infinity())
      throw std::invalid_argument("Interval1D: empty interval");
  }
  double left() const { return left_; }
  double right() const { return right_; }

 private:
  double left_;
  double right_;
};

/// Centered ball of radius r in R^2 or R^3, or its complement.
class Ball {
 public:
  Ball(int dimension, double radius, bool complement = false)
      : dimension_(dimension), radius_(radius), complement_(complement) {
    if (dimension != 2 && dimension != 3) throw std::invalid_argument("Ball: dimension must be 2 or 3");
    if (!(radius > 0.0) || !std::isfinite(radius))
      throw std::invalid_argument("Ball: radius must be positive and finite");
  }
  int dimension() const { return dimension_; }
  double radius() const { return radius_; }
  bool complement() const { return complement_; }

 private:
  int dimension_;
  double radius_;
  bool complement_;
};

using CandidateSet = std::variant<HalfSpace, SymmetricStrip, Interval1D, Ball>;

enum class Degeneracy { none, empty, full };

struct ReducedGeometry {
  double measure = 0.0;
  double p_hat = 0.0;
  Vec2 b_hat{0.0, 0.0};
  /// sqrt(2 pi) exp(s^2/2) (1 - measure), kept separately so that volume
  /// deficits near measure 1 do not cancel.
  double reduced_complement = 0.0;
  Degeneracy degeneracy = Degeneracy::none;
};

namespace detail {

// 64-point Gauss-Legendre rule on [-1, 1], nodes by Newton on P_64.
struct GaussLegendre64 {
  std::array<double, 64> nodes{};
  std::array<double, 64> weights{};

  GaussLegendre64() {
    constexpr int n = 64;
    for (int i = 0; i < n / 2; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      nodes[i] = -x;
      nodes[n - 1 - i] = x;
      weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }

  template <class F>
  double integrate(F&& f, double a, double b) const {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (int i = 0; i < 64; ++i) sum += weights[i] * f(mid + half * nodes[i]);
    return sum * half;
  }
};

inline const GaussLegendre64& gauss_legendre64() {
  static const GaussLegendre64 rule;
  return rule;
}

template <class F>
double adaptive_gl64(F&& f, double a, double b, double tol, int depth = 0) {
  const auto& rule = gauss_legendre64();
  const double whole = rule.integrate(f, a, b);
  const double mid = 0.5 * (a + b);
  const double split = rule.integrate(f, a, mid) + rule.integrate(f, mid, b);
  if (std::abs(whole - split) <= tol * std::max(1.0, std::abs(split)) || depth > 20) return split;
  return adaptive_gl64(f, a, mid, tol, depth + 1) + adaptive_gl64(f, mid, b, tol, depth + 1);
}

// Gaussian measure of the centered 3-ball: sqrt(2/pi) int_0^r rho^2 exp(-rho^2/2).
inline double ball3_measure(double r) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  auto density = [c](double rho) { return c * rho * rho * std::exp(-0.5 * rho * rho); };
  return adaptive_gl64(density, 0.0, r, 1e-14);
}

inline double ball3_outer_measure(double r) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  auto density = [c](double rho) { return c * rho * rho * std::exp(-0.5 * rho * rho); };
  return adaptive_gl64(density, r, r + 40.0, 1e-14);
}

// exp((s^2 - u^2) / 2), zero for infinite u.
inline double reduced_weight(double u, double s) {
  if (std::isinf(u)) return 0.0;
  return std::exp(half_square_difference(s, u));
}

}  // namespace detail

/// Half-width a(s) of the symmetric strip with the same Gaussian volume as
/// the half-space at level s: 2 T(a) = T(s).
inline double a_of_s(double s) {
  if (!(s >= 0.0) || !std::isfinite(s)) throw std::domain_error("a_of_s: s must be >= 0");
  return reduced_tail_inv(0.5 * mills_ratio(s), s, s, s + 1.0);
}

/// Measure, reduced perimeter and reduced barycenter of a candidate set.
inline ReducedGeometry geometry(const CandidateSet& set, const ProblemContext& ctx) {
  const double s = ctx.s();
  ReducedGeometry g;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, HalfSpace>) {
          const double u = c.level();
          if (u == std::numeric_limits<double>::infinity()) {
            g.measure = 1.0;
            g.degeneracy = Degeneracy::full;
            return;
          }
          if (u == -std::numeric_limits<double>::infinity()) {
            g.measure = 0.0;
            g.reduced_complement = kSqrtTwoPi * detail::exp_half_square(s);
            g.degeneracy = Degeneracy::empty;
            return;
          }
          const double w = detail::reduced_weight(u, s);
          g.measure = phi(u);
          g.p_hat = w;
          g.b_hat = {-c.direction()[0] * w, -c.direction()[1] * w};
          g.reduced_complement = reduced_tail(u, s);
        } else if constexpr (std::is_same_v<T, SymmetricStrip>) {
          const double a = c.half_width();
          g.measure = 1.0 - 2.0 * phi_upper(a);
          g.p_hat = 2.0 * detail::reduced_weight(a, s);
          g.reduced_complement = 2.0 * reduced_tail(a, s);
        } else if constexpr (std::is_same_v<T, Interval1D>) {
          const double lo = c.left();
          const double hi = c.right();
          if (std::isinf(lo) && std::isinf(hi)) {
            g.measure = 1.0;
            g.degeneracy = Degeneracy::full;
            return;
          }
          const double wl = detail::reduced_weight(lo, s);
          const double wr = detail::reduced_weight(hi, s);
          g.measure = phi(hi) - phi(lo);
          g.p_hat = wl + wr;
          g.b_hat = {wl - wr, 0.0};
          const double below = std::isinf(lo) ? 0.0 : reduced_tail(-lo, s);
          const double above = std::isinf(hi) ? 0.0 : reduced_tail(hi, s);
          g.reduced_complement = below + above;
        } else if constexpr (std::is_same_v<T, Ball>) {
          const double r = c.radius();
          const double scale = kSqrtTwoPi * detail::exp_half_square(s);
          double inside = 0.0;
          double outside = 0.0;
          // Outer mass in reduced units, formed without exp(s^2/2) so that it
          // stays finite for large s.
          double reduced_outside = 0.0;
          if (c.dimension() == 2) {
            outside = std::exp(-0.5 * r * r);
            inside = -std::expm1(-0.5 * r * r);
            reduced_outside = kSqrtTwoPi * detail::reduced_weight(r, s);
            g.p_hat = kSqrtTwoPi * r * detail::reduced_weight(r, s);
          } else {
            inside = detail::ball3_measure(r);
            outside = inside > 0.5 ? detail::ball3_outer_measure(r) : 1.0 - inside;
            reduced_outside = detail::adaptive_gl64(
                [s](double rho) { return 2.0 * rho * rho * detail::reduced_weight(rho, s); }, r, r + 40.0,
                1e-14);
            // (2 pi)^-1 * 4 pi r^2 * exp(-r^2/2) on the sphere, in reduced units.
            g.p_hat = 2.0 * r * r * detail::reduced_weight(r, s);
          }
          if (c.complement()) {
            g.measure = outside;
            g.reduced_complement = scale * inside;
          } else {
            g.measure = inside;
            g.reduced_complement = reduced_outside;
          }
        }
      },
      set);
  return g;
}

/// A straight boundary line {<x, w> = offset} in the plane with outward
/// normal normal_sign * w. Its Gaussian-weighted length, in reduced units,
/// is exp((s^2 - offset^2) / 2).
struct BoundaryLine {
  Vec2 direction{1.0, 0.0};
  double offset = 0.0;
  double normal_sign = 1.0;
  double reduced_weight = 0.0;
};

/// Boundary lines of a half-space or strip; nullopt for other candidates.
inline std::optional<std::vector<BoundaryLine>> boundary_lines(const CandidateSet& set,
                                                               const ProblemContext& ctx) {
  const double s = ctx.s();
  if (const auto* h = std::get_if<HalfSpace>(&set)) {
    if (!std::isfinite(h->level())) return std::nullopt;
    return std::vector<BoundaryLine>{
        {h->direction(), h->level(), 1.0, detail::reduced_weight(h->level(), s)}};
  }
  if (const auto* d = std::get_if<SymmetricStrip>(&set)) {
    const double a = d->half_width();
    const double w = detail::reduced_weight(a, s);
    return std::vector<BoundaryLine>{{d->direction(), a, 1.0, w}, {d->direction(), -a, -1.0, w}};
  }
  return std::nullopt;
}

struct CaccioppoliReport {
  bool applicable = false;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  double centered_lhs = 0.0;
  double centered_rhs = 0.0;
  bool centered_holds = false;
};

/// Both boundary Caccioppoli inequalities for a half-space or strip in the
/// plane, evaluated in closed form along the boundary lines:
///   int x_w^2          <= (s+2)^2 int nu_w^2          + 8 P
///   int (x_w - mean)^2 <= (s+2)^2 int (nu_w - mean)^2 + 8 P
/// On a line the transverse coordinate carries unit Gaussian second moment.
inline CaccioppoliReport caccioppoli_check(const CandidateSet& set, const ProblemContext& ctx,
                                           const Vec2& omega) {
  CaccioppoliReport report;
  const auto lines = boundary_lines(set, ctx);
  if (!lines) return report;
  detail::checked_direction(omega);
  report.applicable = true;

  double mass = 0.0;
  double x_mean = 0.0;
  double nu_mean = 0.0;
  for (const auto& line : *lines) {
    const double c = dot(omega, line.direction);
    mass += line.reduced_weight;
    x_mean += line.reduced_weight * line.offset * c;
    nu_mean += line.reduced_weight * line.normal_sign * c;
  }
  x_mean /= mass;
  nu_mean /= mass;

  double x2 = 0.0;
  double nu2 = 0.0;
  double x2_centered = 0.0;
  double nu2_centered = 0.0;
  for (const auto& line : *lines) {
    const double c = dot(omega, line.direction);
    const double c_perp = omega[0] * -line.direction[1] + omega[1] * line.direction[0];
    const double w = line.reduced_weight;
    const double normal_part = line.offset * c;
    x2 += w * (normal_part * normal_part + c_perp * c_perp);
    nu2 += w * c * c;
    x2_centered += w * ((normal_part - x_mean) * (normal_part - x_mean) + c_perp * c_perp);
    const double dnu = line.normal_sign * c - nu_mean;
    nu2_centered += w * dnu * dnu;
  }
  const double k = (ctx.s() + 2.0) * (ctx.s() + 2.0);
  report.lhs = x2;
  report.rhs = k * nu2 + 8.0 * mass;
  report.holds = report.lhs <= report.rhs;
  report.centered_lhs = x2_centered;
  report.centered_rhs = k * nu2_centered + 8.0 * mass;
  report.centered_holds = report.centered_lhs <= report.centered_rhs;
  return report;
}

/// Radius of the centered disk in R^2 with Gaussian volume phi(s).
inline double disk_radius_for_level(double s) {
  // exp(-r^2/2) = T(s) / sqrt(2 pi)
  return std::sqrt(-2.0 * (log_tail(s) - std::log(kSqrtTwoPi)));
}

/// Radius of the centered ball in R^3 with Gaussian volume phi(s).
inline double ball3_radius_for_level(double s) {
  const double target = phi(s);
  const double upper = phi_upper(s);
  auto f = [&](double r) {
    if (target > 0.5) return upper - detail::ball3_outer_measure(r);
    return detail::ball3_measure(r) - target;
  };
  double hi = 2.0;
  while (f(hi) < 0.0) hi *= 2.0;
  return detail::bisect(f, 0.0, hi, 1e-15);
}

}  // namespace gausslab
