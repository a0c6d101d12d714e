#pragma once

// Planar sets written as graphs over the x2-axis, t = x2 in [-T, T]:
//   single: {x1 < u(t)}            double: {u_lower(t) < x1 < u_upper(t)}
// The penalized functional is evaluated in reduced units by the trapezoid
// rule at the nodes. The arc-length factor sqrt(1 + u'^2) is formed at the
// midpoints from sixth-order staggered differences and interpolated back to
// the nodes; even reflection at the ends gives u' = 0 there. Each integrand carries the factor
//   rho w = exp(((s - u)(s + u) - t^2) / 2) / sqrt(2 pi)
// built in the log domain.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "gausslab/candidate_sets.hpp"
#include "gausslab/energy.hpp"
#include "gausslab/gaussian.hpp"

namespace gausslab {

enum class Topology { single, double_graph };

inline const char* to_string(Topology t) { return t == Topology::single ? "single" : "double"; }

class RefinementRequired : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMinProfileNodes = 65;
inline constexpr double kMinHalfLength = 8.0;
inline constexpr double kGapMin = 1e-3;

struct Profile {
  Topology topology = Topology::single;
  double half_length = kMinHalfLength;
  /// u for a single graph, u_upper for a double one.
  std::vector<double> upper;
  /// u_lower; empty for a single graph.
  std::vector<double> lower;

  int size() const { return static_cast<int>(upper.size()); }
  double spacing() const { return 2.0 * half_length / (size() - 1); }
  double node(int i) const { return -half_length + spacing() * i; }
  int graphs() const { return topology == Topology::single ? 1 : 2; }
};

/// The node count must be odd so that every other node forms the coarse
/// grid of the quadrature error estimate.
inline void validate(const Profile& p) {
  const int n = p.size();
  if (n < kMinProfileNodes || n % 2 == 0)
    throw std::invalid_argument("profile: need an odd number of nodes, at least 65");
  if (!(p.half_length >= kMinHalfLength)) throw std::invalid_argument("profile: half_length must be >= 8");
  for (double u : p.upper)
    if (!std::isfinite(u)) throw std::invalid_argument("profile: non-finite value");
  if (p.topology == Topology::single) {
    if (!p.lower.empty()) throw std::invalid_argument("profile: single graph has no lower values");
    return;
  }
  if (static_cast<int>(p.lower.size()) != n) throw std::invalid_argument("profile: lower and upper sizes differ");
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(p.lower[i])) throw std::invalid_argument("profile: non-finite value");
    if (!(p.upper[i] - p.lower[i] >= kGapMin)) throw std::invalid_argument("profile: graphs closer than the minimum gap");
  }
}

inline Profile make_profile(Topology topology, const std::function<double(double)>& upper,
                            const std::function<double(double)>& lower = {}, int nodes = 257,
                            double half_length = kMinHalfLength) {
  Profile p;
  p.topology = topology;
  p.half_length = half_length;
  p.upper.resize(nodes);
  for (int i = 0; i < nodes; ++i) p.upper[i] = upper(p.node(i));
  if (topology == Topology::double_graph) {
    if (!lower) throw std::invalid_argument("make_profile: double graph needs a lower function");
    p.lower.resize(nodes);
    for (int i = 0; i < nodes; ++i) p.lower[i] = lower(p.node(i));
  }
  validate(p);
  return p;
}

/// u = s for a single graph, (-a(s), a(s)) for a double one.
inline Profile flat_profile(Topology topology, double s, int nodes = 257, double half_length = kMinHalfLength) {
  if (topology == Topology::single) return make_profile(topology, [s](double) { return s; }, {}, nodes, half_length);
  const double a = a_of_s(s);
  return make_profile(
      topology, [a](double) { return a; }, [a](double) { return -a; }, nodes, half_length);
}

/// The flat profile plus a random trigonometric perturbation of sup-norm at
/// most `amplitude` on each graph: a few modes sin(k t / 2), cos(k t / 2),
/// k = 1..4, with Gaussian coefficients rescaled to the amplitude.
inline Profile perturbed_profile(Topology topology, double s, std::uint64_t seed, double amplitude = 0.1,
                                 int nodes = 257, double half_length = kMinHalfLength) {
  Profile p = flat_profile(topology, s, nodes, half_length);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto perturb = [&](std::vector<double>& u) {
    std::array<double, 8> c{};
    for (double& x : c) x = normal(rng);
    std::vector<double> d(u.size(), 0.0);
    double sup = 0.0;
    for (int i = 0; i < p.size(); ++i) {
      const double t = p.node(i);
      for (int k = 1; k <= 4; ++k) d[i] += c[2 * k - 2] * std::sin(0.5 * k * t) + c[2 * k - 1] * std::cos(0.5 * k * t);
      sup = std::max(sup, std::abs(d[i]));
    }
    const double scale = sup > 0.0 ? amplitude / sup : 0.0;
    for (int i = 0; i < p.size(); ++i) u[i] += scale * d[i];
  };
  perturb(p.upper);
  if (topology == Topology::double_graph) perturb(p.lower);
  validate(p);
  return p;
}

/// Plain-text snapshot: one row per node, "t u" or "t u_lower u_upper".
inline void write_profile_table(std::ostream& os, const Profile& p) {
  const auto old = os.precision(17);
  for (int i = 0; i < p.size(); ++i) {
    os << p.node(i);
    if (p.topology == Topology::double_graph) os << ' ' << p.lower[i];
    os << ' ' << p.upper[i] << '\n';
  }
  os.precision(old);
}

namespace detail {

// Even reflection past the ends, u(-T - kh) = u(-T + kh): the natural
// boundary condition u' = 0. Node index that position j refers to.
inline int reflect(int j, int n) {
  if (j < 0) return -j;
  if (j >= n) return 2 * (n - 1) - j;
  return j;
}

// Sixth-order central first-derivative weights for offsets 1, 2, 3.
inline constexpr double kFd6[3] = {3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0};

// u' at the nodes. Used for diagnostics and the descent metric; the energy
// itself uses the staggered derivative below.
inline std::vector<double> fd_derivative(const std::vector<double>& u, double h) {
  const int n = static_cast<int>(u.size());
  std::vector<double> d(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 1; k <= 3; ++k) acc += kFd6[k - 1] * (u[reflect(i + k, n)] - u[reflect(i - k, n)]);
    d[i] = acc / h;
  }
  return d;
}

// Sixth-order staggered weights for the node pairs (i + 1, i), (i + 2, i - 1),
// (i + 3, i - 2) around the midpoint between nodes i and i + 1: first
// derivative from differences of a pair (divided by h), and midpoint-to-node
// interpolation from sums of a pair. Unlike central differences at the nodes,
// the staggered derivative sees the alternating mode (-1)^i, so the
// perimeter controls it.
inline constexpr double kStag6[3] = {2250.0 / 1920.0, -125.0 / 1920.0, 9.0 / 1920.0};
inline constexpr double kMid6[3] = {150.0 / 256.0, -25.0 / 256.0, 3.0 / 256.0};

// Arc-length factor at the nodes: slope[m] is u' at the midpoint between
// nodes m - 3 and m - 2 (midpoints -3 .. n + 1, the outer ones ghosts),
// root[m] = sqrt(1 + slope^2), and factor[j] interpolates root back to node j.
struct ArcFactor {
  std::vector<double> slope;
  std::vector<double> root;
  std::vector<double> factor;
};

inline constexpr int kMidOffset = 3;

inline ArcFactor arc_factor(const std::vector<double>& u, double h) {
  const int n = static_cast<int>(u.size());
  ArcFactor a;
  a.slope.assign(n + 2 * kMidOffset - 1, 0.0);
  a.root.assign(a.slope.size(), 1.0);
  for (int m = 0; m < static_cast<int>(a.slope.size()); ++m) {
    const int i = m - kMidOffset;
    double d = 0.0;
    for (int k = 1; k <= 3; ++k) d += kStag6[k - 1] * (u[reflect(i + k, n)] - u[reflect(i + 1 - k, n)]);
    a.slope[m] = d / h;
    a.root[m] = std::sqrt(1.0 + a.slope[m] * a.slope[m]);
  }
  a.factor.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double f = 0.0;
    for (int k = 1; k <= 3; ++k) f += kMid6[k - 1] * (a.root[j - k + kMidOffset] + a.root[j + k - 1 + kMidOffset]);
    a.factor[j] = f;
  }
  return a;
}

// out += (d factor / d u)^T y.
inline void add_arc_factor_transpose(const ArcFactor& a, const std::vector<double>& y, double h,
                                     std::vector<double>& out) {
  const int n = static_cast<int>(out.size());
  std::vector<double> dslope(a.slope.size(), 0.0);
  for (int j = 0; j < n; ++j) {
    for (int k = 1; k <= 3; ++k) {
      dslope[j - k + kMidOffset] += kMid6[k - 1] * y[j];
      dslope[j + k - 1 + kMidOffset] += kMid6[k - 1] * y[j];
    }
  }
  for (int m = 0; m < static_cast<int>(a.slope.size()); ++m) {
    const double g = dslope[m] * a.slope[m] / a.root[m] / h;
    if (g == 0.0) continue;
    const int i = m - kMidOffset;
    for (int k = 1; k <= 3; ++k) {
      out[reflect(i + k, n)] += kStag6[k - 1] * g;
      out[reflect(i + 1 - k, n)] -= kStag6[k - 1] * g;
    }
  }
}

inline double trapezoid_weight(int i, int n, double h) { return (i == 0 || i == n - 1) ? 0.5 * h : h; }

// rho(t) w(u) with w(u) = exp((s^2 - u^2)/2), rho the standard normal density.
inline double weight_density(double u, double t, double s) {
  return std::exp(0.5 * ((s - u) * (s + u) - t * t)) / kSqrtTwoPi;
}

inline double normal_density_at(double t) { return std::exp(-0.5 * t * t) / kSqrtTwoPi; }

// Integrals contributed by one graph. sigma = +1 when the set lies below the
// graph (x1 < u), -1 when above.
struct GraphSums {
  double p = 0.0;   // reduced perimeter
  double b1 = 0.0;  // reduced barycenter, normal component
  double b2 = 0.0;  // reduced barycenter, tangential component
  double c = 0.0;   // reduced complement measure
};

inline GraphSums graph_sums(const std::vector<double>& u, double sigma, double half_length, double s) {
  const int n = static_cast<int>(u.size());
  const double h = 2.0 * half_length / (n - 1);
  const auto arc = arc_factor(u, h);
  GraphSums g;
  for (int i = 0; i < n; ++i) {
    const double t = -half_length + h * i;
    const double c = trapezoid_weight(i, n, h);
    const double rw = weight_density(u[i], t, s);
    const double tail = reduced_tail(sigma * u[i], s) * normal_density_at(t);
    g.p += c * rw * arc.factor[i];
    g.b1 -= c * sigma * rw;
    g.c += c * tail;
    g.b2 -= c * t * tail;
  }
  return g;
}

inline std::vector<double> every_other(const std::vector<double>& u) {
  std::vector<double> out;
  for (std::size_t i = 0; i < u.size(); i += 2) out.push_back(u[i]);
  return out;
}

struct ProfileTotals {
  double p = 0.0;
  Vec2 b{0.0, 0.0};
  double c = 0.0;
};

inline ProfileTotals profile_totals(const Profile& p, double s, bool coarse = false) {
  ProfileTotals tot;
  auto add = [&](const std::vector<double>& u, double sigma) {
    const auto g = graph_sums(coarse ? every_other(u) : u, sigma, p.half_length, s);
    tot.p += g.p;
    tot.b[0] += g.b1;
    tot.b[1] += g.b2;
    tot.c += g.c;
  };
  add(p.upper, 1.0);
  if (p.topology == Topology::double_graph) add(p.lower, -1.0);
  return tot;
}

inline double smoothed_abs(double v, double delta) { return std::sqrt(v * v + delta * delta) - delta; }

}  // namespace detail

struct ProfileEnergy : EnergyBreakdown {
  Vec2 b_hat{0.0, 0.0};
  double reduced_complement = 0.0;
  /// |F_h - F_2h| / 63, the error of the sixth-order scheme on the fine grid.
  double quadrature_error = 0.0;
};

namespace detail {

inline ProfileEnergy assemble_energy(const ProfileTotals& tot, const ProblemContext& ctx) {
  ReducedGeometry g;
  g.p_hat = tot.p;
  g.b_hat = tot.b;
  g.reduced_complement = tot.c;
  ProfileEnergy e;
  static_cast<EnergyBreakdown&>(e) = evaluate(g, ctx);
  e.b_hat = tot.b;
  e.reduced_complement = tot.c;
  return e;
}

}  // namespace detail

/// Reduced energy of a graph profile. Throws RefinementRequired when the
/// estimated quadrature error exceeds 1e-8 p_hat.
namespace detail {
inline ProfileEnergy estimated_energy(const Profile& p, const ProblemContext& ctx) {
  auto e = assemble_energy(profile_totals(p, ctx.s()), ctx);
  const auto coarse = assemble_energy(profile_totals(p, ctx.s(), true), ctx);
  e.quadrature_error = std::abs(e.total - coarse.total) / 63.0;
  return e;
}
}  // namespace detail

inline ProfileEnergy profile_energy(const Profile& p, const ProblemContext& ctx) {
  validate(p);
  if (!(ctx.s() > 0.0)) throw std::domain_error("profile_energy: s must be positive");
  auto e = detail::estimated_energy(p, ctx);
  if (e.quadrature_error > 1e-8 * e.p_hat)
    throw RefinementRequired("profile_energy: grid too coarse for 1e-8 relative accuracy");
  return e;
}

struct FirstVariation {
  /// Derivative of the smoothed energy with respect to each nodal value.
  std::vector<double> upper;
  std::vector<double> lower;
  /// The same divided by the node's quadrature mass c_i rho(t_i) w(u_i), and
  /// multiplied by the orientation so that it is the first variation per unit
  /// outward normal displacement: k - <x, nu> + eps <b, x> + penalty.
  std::vector<double> upper_density;
  std::vector<double> lower_density;
  /// Weighted mean of the normal density over both graphs (the fitted lambda).
  double multiplier = 0.0;
  /// L2(H_gamma) norm of the normal density minus the multiplier.
  double euler_residual = 0.0;
  /// Derivative of the smoothed volume penalty with respect to the volume
  /// deficit; the gradient holds it times the complement's gradient.
  double penalty_slope = 0.0;
};

/// Analytic gradient of the discrete reduced energy, with the volume penalty's
/// kink smoothed to sqrt(v^2 + delta^2) - delta.
inline FirstVariation first_variation(const Profile& p, const ProblemContext& ctx, double smoothing = 1e-10) {
  validate(p);
  const double s = ctx.s();
  if (!(s > 0.0)) throw std::domain_error("first_variation: s must be positive");
  const auto tot = detail::profile_totals(p, s);
  const double v = ctx.target_reduced_tail() - tot.c;
  const double k = ctx.eps0() / (s * s);
  const double penalty_slope = ctx.lambda_cap() * v / std::sqrt(v * v + smoothing * smoothing);
  const int n = p.size();
  const double h = p.spacing();

  FirstVariation fv;
  fv.penalty_slope = penalty_slope;
  double mean_num = 0.0;
  double mean_den = 0.0;
  auto one_graph = [&](const std::vector<double>& u, double sigma, std::vector<double>& grad,
                       std::vector<double>& density) {
    grad.assign(n, 0.0);
    density.assign(n, 0.0);
    const auto arc = detail::arc_factor(u, h);
    std::vector<double> mass(n);
    for (int i = 0; i < n; ++i)
      mass[i] = detail::trapezoid_weight(i, n, h) * detail::weight_density(u[i], p.node(i), s);
    detail::add_arc_factor_transpose(arc, mass, h, grad);
    for (int i = 0; i < n; ++i) {
      const double t = p.node(i);
      const double c = detail::trapezoid_weight(i, n, h);
      const double rw = detail::weight_density(u[i], t, s);
      grad[i] -= u[i] * mass[i] * arc.factor[i];
      const double db1 = sigma * c * rw * u[i];
      const double dc = -sigma * c * rw;
      const double db2 = -t * dc;
      grad[i] += k * (tot.b[0] * db1 + tot.b[1] * db2) - penalty_slope * dc;
    }
    for (int i = 0; i < n; ++i) {
      const double mass = detail::trapezoid_weight(i, n, h) * detail::weight_density(u[i], p.node(i), s);
      density[i] = sigma * grad[i] / mass;
      mean_num += mass * density[i];
      mean_den += mass;
    }
  };
  one_graph(p.upper, 1.0, fv.upper, fv.upper_density);
  if (p.topology == Topology::double_graph) one_graph(p.lower, -1.0, fv.lower, fv.lower_density);
  fv.multiplier = mean_num / mean_den;

  double sq = 0.0;
  auto residual = [&](const std::vector<double>& u, const std::vector<double>& density) {
    const auto du = detail::fd_derivative(u, h);
    for (int i = 0; i < n; ++i) {
      const double r = density[i] - fv.multiplier;
      sq += detail::trapezoid_weight(i, n, h) * detail::weight_density(u[i], p.node(i), s) *
            std::sqrt(1.0 + du[i] * du[i]) * r * r;
    }
  };
  residual(p.upper, fv.upper_density);
  if (p.topology == Topology::double_graph) residual(p.lower, fv.lower_density);
  fv.euler_residual = std::sqrt(sq);
  return fv;
}

struct DescentOptions {
  int max_steps = 3000;
  /// Stop when the constrained gradient norm falls to this.
  double gradient_tol = 1e-8;
  /// ... and the largest nodal move of a unit preconditioned step to this.
  double step_tol = 1e-6;
  double smoothing = 1e-10;
  double armijo = 1e-4;
};

struct DescentResult {
  Profile profile;
  /// Energy after every accepted step, starting from the initial profile
  /// with its volume restored. The volume is held only to rounding, and that
  /// residue times the multiplier moves the plain energy by a few 1e-15; the
  /// history removes it to first order (each entry adds the accepted merit
  /// change, from cancellation-free differences), so it is nonincreasing.
  std::vector<double> history;
  int steps = 0;
  bool converged = false;
  bool line_search_failed = false;
  /// L2(H_gamma) norm of the gradient density after removing the volume and
  /// tilt multipliers.
  double gradient_norm = 0.0;
  /// Largest nodal displacement of the last preconditioned gradient step.
  double step_norm = 0.0;
  double euler_residual = 0.0;
  /// sup |u - mean(u)| per graph, upper first.
  std::vector<double> flatness;
  /// Coefficient of the tilt correction t exp(-t^2/4) removed from the
  /// initial profile.
  double removed_tilt = 0.0;
  /// Energy of the final profile; check energy.quadrature_error.
  ProfileEnergy energy;
};

namespace detail {

// Flattened state, upper nodes then lower nodes. Node values are held as a
// constant per graph plus an offset: near convergence the offsets are tiny,
// so steps are not rounded to the spacing of doubles near s, and energy
// changes can be resolved far below 1e-16 of the energy.
struct FlowState {
  const Profile* shape = nullptr;
  double s = 0.0;
  std::vector<double> base;
  std::vector<double> x;
  std::vector<double> sigma;
  std::vector<double> t;
  std::vector<double> c;

  int n() const { return shape->size(); }
  int graphs() const { return shape->graphs(); }
  std::vector<double> graph(const std::vector<double>& y, int g) const {
    return std::vector<double>(y.begin() + g * n(), y.begin() + (g + 1) * n());
  }
  std::vector<double> absolute(const std::vector<double>& y) const {
    std::vector<double> u(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) u[j] = base[j] + y[j];
    return u;
  }
};

inline FlowState make_state(const Profile& p, double s) {
  FlowState st;
  st.shape = &p;
  st.s = s;
  const int n = p.size();
  for (int g = 0; g < p.graphs(); ++g) {
    const auto& u = g == 0 ? p.upper : p.lower;
    for (int i = 0; i < n; ++i) {
      st.base.push_back(0.0);
      st.x.push_back(u[i]);
      st.sigma.push_back(g == 0 ? 1.0 : -1.0);
      st.t.push_back(p.node(i));
      st.c.push_back(trapezoid_weight(i, n, p.spacing()));
    }
  }
  return st;
}

// Moves the mean of each graph into the base.
inline void rebase(FlowState& st) {
  for (int g = 0; g < st.graphs(); ++g) {
    double mean = 0.0;
    for (int i = 0; i < st.n(); ++i) mean += st.base[g * st.n() + i] + st.x[g * st.n() + i];
    mean /= st.n();
    for (int i = 0; i < st.n(); ++i) {
      const int j = g * st.n() + i;
      st.x[j] = (st.base[j] + st.x[j]) - mean;
      st.base[j] = mean;
    }
  }
}

inline void store(const FlowState& st, Profile& p) {
  const auto u = st.absolute(st.x);
  p.upper = st.graph(u, 0);
  if (p.topology == Topology::double_graph) p.lower = st.graph(u, 1);
}

inline double complement_of(const FlowState& st, const std::vector<double>& x) {
  double c = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    c += st.c[j] * reduced_tail(st.sigma[j] * (st.base[j] + x[j]), st.s) * normal_density_at(st.t[j]);
  return c;
}

// Moves every graph outward by the same amount until the reduced complement
// equals the target; uniform shifts leave the tilt moment unchanged.
inline bool retract_volume(const FlowState& st, std::vector<double>& x, double target) {
  // Newton on log(c / target), which is close to linear in the shift, down
  // to the rounding floor of the complement sum: stop once the residual no
  // longer shrinks.
  double prev = INFINITY;
  for (int it = 0; it < 100; ++it) {
    const double c = complement_of(st, x);
    const double f = std::log(c / target);
    if (!std::isfinite(f)) return false;
    if (!(std::abs(f) < prev)) return std::abs(f) <= 1e-13;
    prev = std::abs(f);
    if (f == 0.0) return true;
    double dc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dc -= st.c[j] * weight_density(st.base[j] + x[j], st.t[j], st.s);
    // Cap the shift: one unit moves the complement by a factor of about e^s.
    const double step = std::clamp(-f * c / dc, -1.0, 1.0);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += st.sigma[j] * step;
  }
  return false;
}

// int_{a}^{a + delta} exp((s^2 - x^2)/2) dx, accurate relative to itself
// when delta is small.
inline double weight_integral(double a, double delta, double s) {
  const double half = 0.5 * delta;
  const double mid = a + half;
  if (std::abs(half) * (std::abs(mid) + 1.0) <= 0.25) {
    static constexpr double nodes[5] = {0.0, 0.5384693101056831, -0.5384693101056831, 0.9061798459386640,
                                        -0.9061798459386640};
    static constexpr double weights[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                          0.2369268850561891, 0.2369268850561891};
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) {
      const double x = mid + half * nodes[i];
      acc += weights[i] * std::exp(0.5 * (s - x) * (s + x));
    }
    return half * acc;
  }
  // d/du reduced_tail(u, s) = -exp((s^2 - u^2)/2).
  return reduced_tail(a, s) - reduced_tail(a + delta, s);
}

// As retract_volume, but measures the complement of x as c_old plus the
// change from x_old summed node by node. Recomputing the sum from absolute
// values would jitter at the rounding level of the complement and move the
// shift by as much, which swamps the energy decrease of a small step.
inline bool retract_volume_from(const FlowState& st, const std::vector<double>& xo, std::vector<double>& x,
                                double c_old, double target) {
  double prev = INFINITY;
  for (int it = 0; it < 100; ++it) {
    double c = c_old;
    double dc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double uo = st.base[j] + xo[j];
      c -= st.c[j] * normal_density_at(st.t[j]) * weight_integral(st.sigma[j] * uo, st.sigma[j] * (x[j] - xo[j]), st.s);
      dc -= st.c[j] * weight_density(st.base[j] + x[j], st.t[j], st.s);
    }
    const double f = std::log(c / target);
    if (!std::isfinite(f)) return false;
    // A shift that only chases rounding would change the energy by more than
    // a small step does.
    if (std::abs(f) <= 1e-15) return true;
    if (!(std::abs(f) < prev)) return std::abs(f) <= 1e-13;
    prev = std::abs(f);
    const double step = std::clamp(-f * c / dc, -1.0, 1.0);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += st.sigma[j] * step;
  }
  return false;
}


struct SmoothParts {
  double p = 0.0;
  Vec2 b{0.0, 0.0};
  double c = 0.0;
};

// Change of (p, b, c) from x_old to x_new, summed from per-node differences
// that do not cancel.
inline SmoothParts parts_change(const FlowState& st, const std::vector<double>& xo, const std::vector<double>& xn) {
  SmoothParts d;
  const double h = st.shape->spacing();
  for (int g = 0; g < st.graphs(); ++g) {
    // The base is constant on a graph, so slopes come from the offsets alone.
    const auto xog = st.graph(xo, g);
    const auto xng = st.graph(xn, g);
    const auto ao = arc_factor(xog, h);
    const auto an = arc_factor(xng, h);
    // Change of the midpoint roots without cancellation.
    std::vector<double> droot(ao.root.size());
    for (std::size_t m = 0; m < droot.size(); ++m)
      droot[m] = (an.slope[m] - ao.slope[m]) * (an.slope[m] + ao.slope[m]) / (ao.root[m] + an.root[m]);
    const double sigma = g == 0 ? 1.0 : -1.0;
    for (int i = 0; i < st.n(); ++i) {
      const int j = g * st.n() + i;
      const double uo = st.base[j] + xo[j];
      const double step = xn[j] - xo[j];
      const double rw = st.c[j] * weight_density(uo, st.t[j], st.s);
      const double growth = std::expm1(-0.5 * step * (2.0 * st.base[j] + xo[j] + xn[j]));
      double dfactor = 0.0;
      for (int k = 1; k <= 3; ++k)
        dfactor += kMid6[k - 1] * (droot[i - k + kMidOffset] + droot[i + k - 1 + kMidOffset]);
      d.p += rw * (growth * an.factor[i] + dfactor);
      d.b[0] -= sigma * rw * growth;
      // reduced_tail(sigma u) changes by -int of w over the moved interval.
      const double dc = -st.c[j] * normal_density_at(st.t[j]) *
                        weight_integral(sigma * uo, sigma * step, st.s);
      d.c += dc;
      d.b[1] -= st.t[j] * dc;
    }
  }
  return d;
}

inline double smooth_energy_change(const ProfileTotals& old_tot, const SmoothParts& d, const ProblemContext& ctx,
                                   double smoothing) {
  const double k = ctx.eps0() / (2.0 * ctx.s() * ctx.s());
  const double bar = k * (d.b[0] * (2.0 * old_tot.b[0] + d.b[0]) + d.b[1] * (2.0 * old_tot.b[1] + d.b[1]));
  const double vo = ctx.target_reduced_tail() - old_tot.c;
  const double vn = vo - d.c;
  const double pen = ctx.lambda_cap() * (vn - vo) * (vn + vo) /
                     (std::sqrt(vn * vn + smoothing * smoothing) + std::sqrt(vo * vo + smoothing * smoothing));
  return d.p + bar + pen;
}

// Solves (M A + K) z = r per graph, with M = diag(c rho w), K the
// second-order stiffness matrix weighted by rho w at cell midpoints, and A
// the zeroth-order part of the Lagrangian Hessian, q^2 - 1 - lambda sigma q
// with q = <x, nu>, shifted to equal one on the flat critical profile and
// floored at one. x holds absolute node values.
// Nodes far out in the tails barely register in the energy, so the line
// search cannot see an overshoot there; A keeps the step stable anyway.
inline std::vector<double> sobolev_solve(const FlowState& st, const std::vector<double>& x,
                                         const std::vector<double>& r, double lambda, double eps0) {
  const int n = st.n();
  const double h = st.shape->spacing();
  std::vector<double> z(r.size(), 0.0);
  for (int g = 0; g < st.graphs(); ++g) {
    std::vector<double> diag(n), off(n - 1), rhs(n);
    const auto du = fd_derivative(st.graph(x, g), h);
    for (int i = 0; i < n; ++i) {
      const int j = g * n + i;
      // Signed distance of the tangent line from the origin, which stays
      // constant along a rotated flat graph.
      const double q = (x[j] - st.t[j] * du[i]) / std::sqrt(1.0 + du[i] * du[i]);
      const double potential = q * q - 1.0 - lambda * st.sigma[j] * q;
      diag[i] = st.c[j] * weight_density(x[j], st.t[j], st.s) * std::max(1.0, potential + 2.0 + eps0);
      rhs[i] = r[j];
    }
    for (int i = 0; i + 1 < n; ++i) {
      const int j = g * n + i;
      const double um = 0.5 * (x[j] + x[j + 1]);
      const double kappa = weight_density(um, st.t[j] + 0.5 * h, st.s) / h;
      diag[i] += kappa;
      diag[i + 1] += kappa;
      off[i] = -kappa;
    }
    // Thomas algorithm; the matrix is symmetric and diagonally dominant.
    for (int i = 1; i < n; ++i) {
      const double m = off[i - 1] / diag[i - 1];
      diag[i] -= m * off[i - 1];
      rhs[i] -= m * rhs[i - 1];
    }
    std::vector<double> sol(n);
    sol[n - 1] = rhs[n - 1] / diag[n - 1];
    for (int i = n - 2; i >= 0; --i) sol[i] = (rhs[i] - off[i] * sol[i + 1]) / diag[i];
    for (int i = 0; i < n; ++i) z[g * n + i] = sol[i];
  }
  return z;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace detail

/// sup |u - mean(u)| per graph, upper first.
inline std::vector<double> flatness(const Profile& p) {
  std::vector<double> out;
  auto one = [&](const std::vector<double>& u) {
    double mean = 0.0;
    for (double x : u) mean += x;
    mean /= static_cast<double>(u.size());
    double sup = 0.0;
    for (double x : u) sup = std::max(sup, std::abs(x - mean));
    out.push_back(sup);
  };
  one(p.upper);
  if (p.topology == Topology::double_graph) one(p.lower);
  return out;
}

/// Gradient descent on the penalized reduced energy in the metric of a
/// weighted H^1 inner product, projected onto directions that keep the
/// volume, with a uniform outward shift restoring the exact volume after
/// each step and Armijo backtracking.
///
/// The functional is rotation invariant, so the tilt of a profile is a zero
/// mode. The Gaussian first moment of the profile, sum rho(t) t u(t), is
/// removed from the initial profile with a correction proportional to
/// t exp(-t^2/4) and held at zero; the flow then converges to an untilted
/// flat profile instead of a rotated one. A rotated line is not a critical
/// point of the truncated problem, whose natural boundary condition is
/// u' = 0, and a globally linear correction would move the far tails by O(1).
inline DescentResult descend(const Profile& p0, const ProblemContext& ctx, const DescentOptions& opt = {}) {
  validate(p0);
  const double s = ctx.s();
  if (!(s > 0.0)) throw std::domain_error("descend: s must be positive");
  DescentResult res;
  res.profile = p0;
  Profile& p = res.profile;
  auto st = detail::make_state(p, s);
  const std::size_t total = st.x.size();
  const double target = ctx.target_reduced_tail();
  // Tilt moment gradient, independent of the profile.
  std::vector<double> tvec(total);
  for (std::size_t j = 0; j < total; ++j) tvec[j] = st.c[j] * detail::normal_density_at(st.t[j]) * st.t[j];
  {
    std::vector<double> psi(total);
    for (std::size_t j = 0; j < total; ++j) psi[j] = st.t[j] * std::exp(-0.25 * st.t[j] * st.t[j]);
    res.removed_tilt = detail::dot(tvec, st.x) / detail::dot(tvec, psi);
    for (std::size_t j = 0; j < total; ++j) st.x[j] -= res.removed_tilt * psi[j];
  }
  if (!detail::retract_volume(st, st.x, target))
    throw std::runtime_error("descend: cannot restore the volume of the initial profile");
  detail::rebase(st);
  detail::store(st, p);
  validate(p);

  auto totals = detail::profile_totals(p, s);
  // From here on the complement is carried forward by exact differences.
  double complement = totals.c;
  double tracked = detail::assemble_energy(totals, ctx).total;
  res.history.push_back(tracked);

  double tau = 1.0;
  std::vector<double> prev_r, prev_zr, prev_d;
  for (;;) {
    const auto fv = first_variation(p, ctx, opt.smoothing);
    std::vector<double> g = fv.upper;
    g.insert(g.end(), fv.lower.begin(), fv.lower.end());
    // Volume constraint gradient: d c / d x_j = -sigma c rho w.
    const auto ux = st.absolute(st.x);
    std::vector<double> nvec(total);
    for (std::size_t j = 0; j < total; ++j)
      nvec[j] = -st.sigma[j] * st.c[j] * detail::weight_density(ux[j], st.t[j], s);

    // Multiplier for the merit function, taken along the uniform shift the
    // retraction makes, so that the retraction does not change the merit to
    // first order. Steps tangent to the volume constraint see no difference.
    // The merit leaves out the volume penalty: on the constraint its residue
    // sits inside the smoothing width, where it is quadratic and a retraction
    // that clears it changes it by more than its slope predicts.
    double gs = 0.0, ns = 0.0;
    for (std::size_t j = 0; j < total; ++j) {
      gs += st.sigma[j] * g[j];
      ns += st.sigma[j] * nvec[j];
    }
    const double mu = gs / ns + fv.penalty_slope;
    // fv.multiplier is minus the Lagrange multiplier of the volume constraint.
    const double lambda = -fv.multiplier;
    const auto zn = detail::sobolev_solve(st, ux, nvec, lambda, ctx.eps0());
    const auto zt = detail::sobolev_solve(st, ux, tvec, lambda, ctx.eps0());
    // Gram matrix of the two constraints in the inverse metric.
    const double a11 = detail::dot(nvec, zn), a12 = detail::dot(nvec, zt), a22 = detail::dot(tvec, zt);
    const double det = a11 * a22 - a12 * a12;
    // g is nearly parallel to the constraint span close to a critical point;
    // projecting twice keeps the small remainder accurate.
    std::vector<double> r = g;
    std::vector<double> zr;
    for (int pass = 0; pass < 2; ++pass) {
      zr = detail::sobolev_solve(st, ux, r, lambda, ctx.eps0());
      const double b1 = detail::dot(nvec, zr), b2 = detail::dot(tvec, zr);
      const double m = (a22 * b1 - a12 * b2) / det;
      const double k = (a11 * b2 - a12 * b1) / det;
      for (std::size_t j = 0; j < total; ++j) {
        r[j] -= m * nvec[j] + k * tvec[j];
        zr[j] -= m * zn[j] + k * zt[j];
      }
    }

    double norm_sq = 0.0;
    for (std::size_t j = 0; j < total; ++j)
      norm_sq += r[j] * r[j] / (st.c[j] * detail::weight_density(ux[j], st.t[j], s));
    res.gradient_norm = std::sqrt(norm_sq);
    // The nodes near t = +-T carry almost no Gaussian weight, so the norm
    // above barely sees them; the preconditioned step is a displacement and
    // does.
    res.step_norm = 0.0;
    for (double z : zr) res.step_norm = std::max(res.step_norm, std::abs(z));
    res.euler_residual = fv.euler_residual;
    if (res.gradient_norm <= opt.gradient_tol && res.step_norm <= opt.step_tol) {
      res.converged = true;
      break;
    }
    if (res.steps >= opt.max_steps) break;

    // Preconditioned Polak-Ribiere+ conjugate gradients. The strip has soft
    // modes (opposite tilts of its two lines are held only by the barycenter
    // term) on which plain descent crawls.
    std::vector<double> d(total);
    double beta = 0.0;
    if (!prev_r.empty()) {
      double num = 0.0;
      for (std::size_t j = 0; j < total; ++j) num += r[j] * (zr[j] - prev_zr[j]);
      beta = std::max(0.0, num / detail::dot(prev_r, prev_zr));
    }
    for (std::size_t j = 0; j < total; ++j) d[j] = beta > 0.0 ? beta * prev_d[j] - zr[j] : -zr[j];
    if (beta > 0.0) {
      // Back onto the tangent space of both constraints at the current point.
      const double b1 = detail::dot(nvec, d), b2 = detail::dot(tvec, d);
      const double m = (a22 * b1 - a12 * b2) / det;
      const double k = (a11 * b2 - a12 * b1) / det;
      for (std::size_t j = 0; j < total; ++j) d[j] -= m * zn[j] + k * zt[j];
    }
    double slope = detail::dot(r, d);
    if (beta > 0.0 && !(slope < 0.0)) {
      for (std::size_t j = 0; j < total; ++j) d[j] = -zr[j];
      slope = detail::dot(r, d);
    }
    if (!(slope < 0.0)) {
      res.line_search_failed = true;
      break;
    }
    prev_r = r;
    prev_zr = zr;
    prev_d = d;

    tau = std::min(1.5, 2.0 * tau);
    bool accepted = false;
    while (tau >= 1e-12) {
      std::vector<double> xn(total);
      for (std::size_t j = 0; j < total; ++j) xn[j] = st.x[j] + tau * d[j];
      bool ok = detail::retract_volume_from(st, st.x, xn, complement, target);
      for (int i = 0; ok && p.topology == Topology::double_graph && i < st.n(); ++i)
        ok = (st.base[i] + xn[i]) - (st.base[st.n() + i] + xn[st.n() + i]) >= kGapMin;
      if (ok) {
        const auto change = detail::parts_change(st, st.x, xn);
        // The retraction restores the volume only to rounding; the
        // multiplier term removes the first-order effect of its shift.
        const double merit = detail::smooth_energy_change(totals, {change.p, change.b, 0.0}, ctx, opt.smoothing) -
                             mu * change.c;
        if (merit <= opt.armijo * tau * slope) {
          st.x = std::move(xn);
          detail::store(st, p);
          totals = detail::profile_totals(p, s);
          complement += change.c;
          totals.c = complement;
          tracked += merit;
          res.history.push_back(tracked);
          accepted = true;
          break;
        }
      }
      tau *= 0.5;
    }
    if (!accepted) {
      if (beta > 0.0) {
        // Retry from plain preconditioned descent before giving up.
        prev_r.clear();
        tau = 1.0;
        continue;
      }
      res.line_search_failed = true;
      break;
    }
    ++res.steps;
  }
  res.flatness = flatness(p);
  // Not converged runs can stop on profiles the grid does not resolve; the
  // error estimate is reported rather than thrown.
  res.energy = detail::estimated_energy(p, ctx);
  return res;
}

}  // namespace gausslab
