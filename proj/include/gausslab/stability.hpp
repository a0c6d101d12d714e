#pragma once

// Second variation of the penalized functional on the flat boundaries of a
// half-space or a strip in the plane. On each boundary line a test function
// is expanded in orthonormal probabilists' Hermite polynomials of the
// transverse coordinate, which diagonalize the Ornstein-Uhlenbeck part; the
// barycenter term adds a rank <= 2 coupling through the zeroth and first
// moments. Everything is in reduced units (multiplied by exp(s^2/2)).

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gausslab/candidate_sets.hpp"
#include "gausslab/energy.hpp"

namespace gausslab {

struct GaussHermiteRule {
  std::vector<double> nodes;
  /// Weights for the standard normal density; they sum to one.
  std::vector<double> weights;
};

/// n-point Gauss rule for the standard normal density by Golub-Welsch: the
/// nodes are the eigenvalues of the Jacobi matrix of the probabilists'
/// Hermite recurrence (off-diagonal sqrt(k)), the weights the squared first
/// components of its normalized eigenvectors.
inline GaussHermiteRule gauss_hermite_rule(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite_rule: n must be positive");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.nodes[i] = es.eigenvalues()[i];
    rule.weights[i] = v0 * v0;
  }
  // The eigensolver leaves errors of a few ulps times the spectral radius;
  // polish each node by Newton on h_n and take the weight from the
  // Christoffel function 1 / sum_k h_k(x)^2, both relatively accurate.
  for (int i = 0; i < n && n > 1; ++i) {
    double x = rule.nodes[i];
    for (int it = 0; it < 3; ++it) {
      double h0 = 1.0;
      double h1 = x;
      for (int k = 2; k <= n; ++k) {
        const double h2 = (x * h1 - std::sqrt(k - 1.0) * h0) / std::sqrt(static_cast<double>(k));
        h0 = h1;
        h1 = h2;
      }
      // h1 = h_n, h0 = h_{n-1}; h_n' = sqrt(n) h_{n-1}.
      const double step = h1 / (std::sqrt(static_cast<double>(n)) * h0);
      if (!std::isfinite(step)) break;
      x -= step;
    }
    rule.nodes[i] = x;
    double sum = 0.0;
    double h0 = 1.0;
    double h1 = x;
    sum += 1.0 + x * x;
    for (int k = 2; k < n; ++k) {
      const double h2 = (x * h1 - std::sqrt(k - 1.0) * h0) / std::sqrt(static_cast<double>(k));
      h0 = h1;
      h1 = h2;
      sum += h2 * h2;
    }
    rule.weights[i] = 1.0 / sum;
  }
  return rule;
}

/// He_k(x) / sqrt(k!) for k = 0 .. n-1, orthonormal under the standard normal.
inline std::vector<double> hermite_orthonormal(double x, int n) {
  std::vector<double> h(static_cast<std::size_t>(n), 0.0);
  if (n > 0) h[0] = 1.0;
  if (n > 1) h[1] = x;
  for (int k = 2; k < n; ++k)
    h[k] = (x * h[k - 1] - std::sqrt(k - 1.0) * h[k - 2]) / std::sqrt(static_cast<double>(k));
  return h;
}

/// The assembled form on per-line Hermite coefficients c, ordered line-major.
/// Q(c) = c^T (local + coupling * nonlocal) c, and the L2 norm of the test
/// function in reduced units is c^T diag(mass_weight) c.
struct SecondVariation {
  std::vector<BoundaryLine> lines;
  int basis_size = 0;
  Eigen::MatrixXd local;
  /// Gram matrix of the first moment M_hat = sum_lines w (u c_0, c_1).
  Eigen::MatrixXd nonlocal;
  double coupling = 0.0;  // eps0 / s^2
  /// int phi dH_gamma as a linear functional of c.
  Eigen::VectorXd mass;
  /// Per-coefficient weight w of the line it belongs to.
  Eigen::VectorXd norm_weight;
  /// Coefficients of the rotation field <x^perp, nu>, which the form maps to zero.
  Eigen::VectorXd rotation;
  /// Coefficients of the translation field <omega, nu>.
  Eigen::VectorXd translation;

  Eigen::MatrixXd matrix() const { return local + coupling * nonlocal; }
  int size() const { return static_cast<int>(lines.size()) * basis_size; }
  int index(int line, int k) const { return line * basis_size + k; }
};

/// Assembles the form by Gauss-Hermite quadrature on each boundary line:
///   sum_lines w int (phi'^2 - phi^2 + (eps0/s^2) <b_hat, nu> phi^2) dgamma_1
///   + (eps0/s^2) |sum_lines w int phi x dgamma_1|^2.
/// The curvature term vanishes on straight lines.
inline SecondVariation assemble_second_variation(const CandidateSet& set, const ProblemContext& ctx,
                                                 int basis_size) {
  if (basis_size < 4) throw std::invalid_argument("second variation: basis_size must be >= 4");
  if (!(ctx.s() > 0.0)) throw std::domain_error("second variation: s must be positive");
  const auto lines = boundary_lines(set, ctx);
  if (!lines) throw std::invalid_argument("second variation: only half-spaces and strips are supported");

  const double s = ctx.s();
  const auto geom = geometry(set, ctx);
  SecondVariation sv;
  sv.lines = *lines;
  sv.basis_size = basis_size;
  sv.coupling = ctx.eps0() / (s * s);
  const int n = sv.size();
  sv.local = Eigen::MatrixXd::Zero(n, n);
  sv.nonlocal = Eigen::MatrixXd::Zero(n, n);
  sv.mass = Eigen::VectorXd::Zero(n);
  sv.norm_weight = Eigen::VectorXd::Zero(n);
  sv.rotation = Eigen::VectorXd::Zero(n);
  sv.translation = Eigen::VectorXd::Zero(n);

  // Exact for polynomial integrands of degree 2 * basis_size + 1.
  const auto rule = gauss_hermite_rule(basis_size + 2);
  // Rows of the moment functionals: normal and tangential component of M_hat.
  Eigen::MatrixXd moments = Eigen::MatrixXd::Zero(2, n);

  for (int l = 0; l < static_cast<int>(sv.lines.size()); ++l) {
    const auto& line = sv.lines[l];
    const double w = line.reduced_weight;
    const Vec2 normal{line.normal_sign * line.direction[0], line.normal_sign * line.direction[1]};
    const double b_nu = dot(geom.b_hat, normal);
    const double potential = -1.0 + sv.coupling * b_nu;
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(basis_size, basis_size);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double x = rule.nodes[q];
      const double wq = rule.weights[q];
      const auto h = hermite_orthonormal(x, basis_size);
      // d/dx h_k = sqrt(k) h_{k-1}.
      std::vector<double> dh(basis_size, 0.0);
      for (int k = 1; k < basis_size; ++k) dh[k] = std::sqrt(static_cast<double>(k)) * h[k - 1];
      for (int j = 0; j < basis_size; ++j) {
        for (int k = 0; k < basis_size; ++k) block(j, k) += wq * (dh[j] * dh[k] + potential * h[j] * h[k]);
        sv.mass[sv.index(l, j)] += w * wq * h[j];
        moments(0, sv.index(l, j)) += w * wq * line.offset * h[j];
        moments(1, sv.index(l, j)) += w * wq * x * h[j];
      }
    }
    sv.local.block(l * basis_size, l * basis_size, basis_size, basis_size) = w * block;
    for (int k = 0; k < basis_size; ++k) sv.norm_weight[sv.index(l, k)] = w;
    // On the line {<x, omega> = u} the transverse coordinate is tau and
    // <x^perp, nu> = normal_sign * tau up to orientation; <omega, nu> = normal_sign.
    sv.rotation[sv.index(l, 1)] = line.normal_sign;
    sv.translation[sv.index(l, 0)] = line.normal_sign;
  }
  sv.nonlocal = moments.transpose() * moments;
  return sv;
}

/// Value of the form for explicit coefficients, after projection onto
/// mean-zero test functions.
struct FormValue {
  double value = 0.0;
  double local = 0.0;
  double nonlocal = 0.0;
  /// The input had nonzero mean and was shifted by a constant.
  bool projected = false;
};

/// Subtracts the constant that makes int phi dH_gamma vanish. Constants live
/// in the k = 0 coefficient of every line.
inline Eigen::VectorXd project_mean_zero(const SecondVariation& sv, const Eigen::VectorXd& c,
                                         bool* changed = nullptr) {
  const double total_mass = sv.mass.dot(c);
  double weight = 0.0;
  for (const auto& line : sv.lines) weight += line.reduced_weight;
  Eigen::VectorXd out = c;
  const double shift = total_mass / weight;
  for (int l = 0; l < static_cast<int>(sv.lines.size()); ++l) out[sv.index(l, 0)] -= shift;
  if (changed) *changed = std::abs(total_mass) > 1e-14 * std::max(1.0, c.norm()) * weight;
  return out;
}

inline FormValue quadratic_form(const CandidateSet& set, const std::vector<std::vector<double>>& coeffs,
                                const ProblemContext& ctx) {
  if (coeffs.empty()) throw std::invalid_argument("quadratic_form: no coefficients");
  std::size_t basis = 4;
  for (const auto& line : coeffs) basis = std::max(basis, line.size());
  const auto sv = assemble_second_variation(set, ctx, static_cast<int>(basis));
  if (coeffs.size() != sv.lines.size())
    throw std::invalid_argument("quadratic_form: one coefficient list per boundary line");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(sv.size());
  for (std::size_t l = 0; l < coeffs.size(); ++l)
    for (std::size_t k = 0; k < coeffs[l].size(); ++k) c[sv.index(static_cast<int>(l), static_cast<int>(k))] = coeffs[l][k];
  FormValue fv;
  c = project_mean_zero(sv, c, &fv.projected);
  fv.local = c.dot(sv.local * c);
  fv.nonlocal = sv.coupling * c.dot(sv.nonlocal * c);
  fv.value = fv.local + fv.nonlocal;
  return fv;
}

struct SpectralReport {
  int basis_size = 0;
  /// Ascending eigenvalues on mean-zero test functions orthogonal to the
  /// rotation field, relative to the reduced L2 norm.
  std::vector<double> eigenvalues;
  double min_eigenvalue = 0.0;
  /// Squared overlap of the minimizing eigenvector with the translation field.
  double translation_overlap = 0.0;
  /// Rayleigh quotient of the rotation field; zero by rotation invariance.
  double rotation_mode_value = 0.0;
  /// Spectrum on all mean-zero test functions, rotation field included.
  std::vector<double> full_eigenvalues;
  /// eps0 at which min_eigenvalue changes sign, when a sign change is bracketed.
  std::optional<double> critical_eps0;
  /// min_eigenvalue changes by at most 1e-8 when basis_size doubles.
  bool converged = false;
  double convergence_delta = 0.0;
};

namespace detail {

// Orthonormal basis (columns) of the complement of span(constraints) in R^n.
inline Eigen::MatrixXd complement_basis(const Eigen::MatrixXd& constraints) {
  const int n = static_cast<int>(constraints.rows());
  const int m = static_cast<int>(constraints.cols());
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(constraints);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return q.rightCols(n - m);
}

struct ReducedSpectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // in normalized coordinates d = sqrt(w) c
};

inline ReducedSpectrum reduced_spectrum(const SecondVariation& sv, bool remove_rotation) {
  const int n = sv.size();
  const Eigen::VectorXd sqrt_w = sv.norm_weight.array().sqrt();
  const Eigen::VectorXd inv_sqrt_w = sqrt_w.cwiseInverse();
  // In d = sqrt(w) c the norm is Euclidean and the form is D^-1 A D^-1.
  const Eigen::MatrixXd a = inv_sqrt_w.asDiagonal() * sv.matrix() * inv_sqrt_w.asDiagonal();
  Eigen::MatrixXd constraints(n, remove_rotation ? 2 : 1);
  constraints.col(0) = inv_sqrt_w.cwiseProduct(sv.mass);
  if (remove_rotation) constraints.col(1) = sqrt_w.cwiseProduct(sv.rotation);
  const Eigen::MatrixXd q = complement_basis(constraints);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.transpose() * a * q);
  return {es.eigenvalues(), q * es.eigenvectors()};
}

inline double min_eigenvalue_only(const CandidateSet& set, const ProblemContext& ctx, int basis_size) {
  return reduced_spectrum(assemble_second_variation(set, ctx, basis_size), true).values[0];
}

}  // namespace detail

/// Spectrum of the second-variation form of a half-space or strip. The
/// rotation field is an exact zero mode for every eps0 (the functional is
/// rotation invariant), so min_eigenvalue is taken on its orthogonal
/// complement; full_eigenvalues keeps it.
inline SpectralReport min_eigenvalue(const CandidateSet& set, const ProblemContext& ctx, int basis_size = 16) {
  const auto sv = assemble_second_variation(set, ctx, basis_size);
  SpectralReport report;
  report.basis_size = basis_size;

  const auto reduced = detail::reduced_spectrum(sv, true);
  report.eigenvalues.assign(reduced.values.data(), reduced.values.data() + reduced.values.size());
  report.min_eigenvalue = reduced.values[0];
  const Eigen::VectorXd sqrt_w = sv.norm_weight.array().sqrt();
  const Eigen::VectorXd t = sqrt_w.cwiseProduct(sv.translation);
  if (t.norm() > 0.0) {
    const double overlap = reduced.vectors.col(0).dot(t) / t.norm();
    report.translation_overlap = overlap * overlap;
  }

  const auto full = detail::reduced_spectrum(sv, false);
  report.full_eigenvalues.assign(full.values.data(), full.values.data() + full.values.size());
  const Eigen::VectorXd r = sv.rotation;
  report.rotation_mode_value = r.dot(sv.matrix() * r) / r.dot(sv.norm_weight.cwiseProduct(r));

  const double doubled = detail::min_eigenvalue_only(set, ctx, 2 * basis_size);
  report.convergence_delta = std::abs(doubled - report.min_eigenvalue);
  report.converged = report.convergence_delta <= 1e-8;

  // Locate the sign change in eps0 with the geometry held fixed.
  auto at = [&](double e0) { return detail::min_eigenvalue_only(set, ProblemContext(ctx.s(), e0), basis_size); };
  double lo = 0.0;
  double hi = 1.0;
  const double f_lo = at(lo);
  double f_hi = at(hi);
  while ((f_lo > 0.0) == (f_hi > 0.0) && hi < 1e4) {
    lo = hi;
    hi *= 2.0;
    f_hi = at(hi);
  }
  if ((at(lo) > 0.0) != (f_hi > 0.0)) report.critical_eps0 = detail::bisect(at, lo, hi, 1e-12);
  return report;
}

/// eps0 at which the strip's translation mode becomes neutral:
/// s^2 / (a(s)^2 p_hat_D(s)).
inline double strip_stability_threshold(double s) {
  if (!(s > 0.0)) throw std::domain_error("strip_stability_threshold: s must be positive");
  const double a = a_of_s(s);
  return s * s / (a * a * strip_p_hat(s));
}

/// Rayleigh quotient of the strip's translation mode: eps0 a^2 p_hat_D / s^2 - 1.
inline double strip_translation_eigenvalue(double s, double eps0) {
  const double a = a_of_s(s);
  return eps0 * a * a * strip_p_hat(s) / (s * s) - 1.0;
}

}  // namespace gausslab
