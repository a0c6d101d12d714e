#pragma once

// The penalized functional in reduced units:
//
//   F_hat = p_hat + eps0 |b_hat|^2 / (2 s^2) + (s + 1) |v_hat|
//
// which is exp(s^2/2) times  P + eps sqrt(pi/2) |b|^2 + (s+1) sqrt(2 pi) |vol - phi(s)|
// once eps = eps0 sqrt(2 pi) exp(s^2/2) / s^2 and b = b_hat exp(-s^2/2) / sqrt(2 pi)
// are substituted.

#include <cfloat>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gausslab/candidate_sets.hpp"
#include "gausslab/gaussian.hpp"

namespace gausslab {

struct EnergyBreakdown {
  double p_hat = 0.0;
  double barycenter_term = 0.0;
  /// sqrt(2 pi) exp(s^2/2) (vol - phi(s)), signed.
  double volume_deficit = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

/// eps0 |b_hat|^2 / (2 s^2); zero when eps0 is zero so that s = 0 stays usable
/// for pure perimeter comparisons.
inline double barycenter_term(double b_hat_sq, const ProblemContext& ctx) {
  if (ctx.eps0() == 0.0) return 0.0;
  if (!(ctx.s() > 0.0)) throw std::domain_error("barycenter term needs s > 0 when eps0 > 0");
  return ctx.eps0() * b_hat_sq / (2.0 * ctx.s() * ctx.s());
}

/// Deficits below this magnitude are indistinguishable from rounding in the
/// endpoint (an ulp of an endpoint near s moves v_hat by about s * ulp(s)).
inline double volume_deficit_tolerance(double s) { return 64.0 * DBL_EPSILON * (1.0 + s * s); }

inline double reduced_volume_deficit(const ReducedGeometry& g, const ProblemContext& ctx) {
  const double v = ctx.target_reduced_tail() - g.reduced_complement;
  return std::abs(v) <= volume_deficit_tolerance(ctx.s()) ? 0.0 : v;
}

inline EnergyBreakdown evaluate(const ReducedGeometry& g, const ProblemContext& ctx) {
  EnergyBreakdown e;
  e.p_hat = g.p_hat;
  e.barycenter_term = barycenter_term(dot(g.b_hat, g.b_hat), ctx);
  e.volume_deficit = reduced_volume_deficit(g, ctx);
  e.penalty = ctx.lambda_cap() * std::abs(e.volume_deficit);
  e.total = e.p_hat + e.barycenter_term + e.penalty;
  return e;
}

inline EnergyBreakdown evaluate(const CandidateSet& set, const ProblemContext& ctx) {
  return evaluate(geometry(set, ctx), ctx);
}

/// p_hat(D) - 1 = 2 exp((s^2 - a^2)/2) - 1, formed without cancellation.
inline double strip_perimeter_excess(double s) {
  const double a = a_of_s(s);
  return std::expm1(kLn2 + detail::half_square_difference(s, a));
}

/// Reduced perimeter of the symmetric strip at level s.
inline double strip_p_hat(double s) { return 1.0 + strip_perimeter_excess(s); }

/// The eps0 at which half-space and strip have equal energy:
/// 1 + eps0 / (2 s^2) = p_hat(D).
inline double threshold_eps0(double s) {
  if (!(s > 0.0)) throw std::domain_error("threshold_eps0: s must be positive");
  return 2.0 * s * s * strip_perimeter_excess(s);
}

/// Optimal constant of the quantitative inequality,
/// sqrt(2 pi) exp(s^2/2) (P(D) - P(H)).
inline double quantitative_constant(double s) {
  if (!(s > 0.0)) throw std::domain_error("quantitative_constant: s must be positive");
  return kSqrtTwoPi * strip_perimeter_excess(s);
}

struct Asymmetry {
  /// | |b_hat| - 1 |: distance to the nearest half-space barycenter in reduced units.
  double reduced = 0.0;
  /// ln(beta) with beta = reduced * exp(-s^2/2) / sqrt(2 pi); -inf when beta = 0.
  double log_beta = -std::numeric_limits<double>::infinity();
};

/// Strong asymmetry: min over directions w of |b(E) - b(H_{w,s})|. Since
/// b_hat(H_{w,s}) = -w, the minimum is attained along b(E) itself.
inline Asymmetry strong_asymmetry(const CandidateSet& set, const ProblemContext& ctx) {
  const auto g = geometry(set, ctx);
  Asymmetry a;
  a.reduced = std::abs(norm(g.b_hat) - 1.0);
  if (a.reduced > 0.0)
    a.log_beta = std::log(a.reduced) - 0.5 * ctx.s() * ctx.s() - std::log(kSqrtTwoPi);
  return a;
}

}  // namespace gausslab
