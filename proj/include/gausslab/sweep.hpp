#pragma once

// Batch evaluation behind the command-line tool: one table per task over a
// grid of (s, eps0), rendered as CSV or JSON. Grid points run on a worker
// pool (GAUSSLAB_WORKERS, default the hardware concurrency) and rows come out
// in grid order. Nothing is written unless every task finished; files are
// written to a temporary name and renamed into place.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "gausslab/candidate_sets.hpp"
#include "gausslab/energy.hpp"
#include "gausslab/gaussian.hpp"
#include "gausslab/profile_flow.hpp"
#include "gausslab/solver1d.hpp"
#include "gausslab/stability.hpp"

namespace gausslab::sweep {

inline constexpr const char* kVersion = "0.1.0";

enum class Task { phase, asymptotics, threshold, solve1d, stability, flow, compare_ball };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::phase: return "phase";
    case Task::asymptotics: return "asymptotics";
    case Task::threshold: return "threshold";
    case Task::solve1d: return "solve1d";
    case Task::stability: return "stability";
    case Task::flow: return "flow";
    case Task::compare_ball: return "compare-ball";
  }
  return "?";
}

inline Task parse_task(const std::string& name) {
  for (Task t : {Task::phase, Task::asymptotics, Task::threshold, Task::solve1d, Task::stability, Task::flow,
                 Task::compare_ball})
    if (name == to_string(t)) return t;
  throw std::invalid_argument("unknown task '" + name + "'");
}

enum class Format { csv, json };

struct SweepSpec {
  std::vector<double> s_values;
  std::vector<double> eps0_values;
  std::vector<Task> tasks;
  /// Empty: standard output.
  std::string output;
  Format format = Format::csv;
  std::uint64_t seed = 0;
  /// flow: runs per (s, eps0, topology), seeds seed, seed + 1, ...
  int flow_seeds = 1;
  double amplitude = 0.1;
  int nodes = 257;
  int max_steps = DescentOptions{}.max_steps;
  /// flow: when set, each final profile is written here as a node table.
  std::string snapshot_dir;
  /// flow: which topologies; both when empty.
  std::vector<Topology> topologies;
  /// compare-ball: Gaussian volumes in [1/2, 1).
  std::vector<double> volumes{0.5};
  /// stability and the min_eig column of phase.
  int basis_size = 16;
};

/// "lo:hi:step" or a comma list, or a comma list of either. Ranges include hi
/// when it lies on the grid; values are lo + i step, not accumulated.
inline std::vector<double> parse_values(const std::string& text) {
  auto number = [](const std::string& item) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("not a number: '" + item + "'");
    }
    if (used != item.size() || !std::isfinite(v)) throw std::invalid_argument("not a number: '" + item + "'");
    return v;
  };
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) throw std::invalid_argument("empty entry in list '" + text + "'");
    const auto c1 = item.find(':');
    if (c1 == std::string::npos) {
      out.push_back(number(item));
      continue;
    }
    const auto c2 = item.find(':', c1 + 1);
    if (c2 == std::string::npos || item.find(':', c2 + 1) != std::string::npos)
      throw std::invalid_argument("range must be lo:hi:step, got '" + item + "'");
    const double lo = number(item.substr(0, c1));
    const double hi = number(item.substr(c1 + 1, c2 - c1 - 1));
    const double step = number(item.substr(c2 + 1));
    if (!(step > 0.0)) throw std::invalid_argument("range step must be positive: '" + item + "'");
    if (hi < lo) throw std::invalid_argument("range has hi < lo: '" + item + "'");
    const double count = std::floor((hi - lo) / step + 1e-9);
    if (count > 1e7) throw std::invalid_argument("range too long: '" + item + "'");
    for (int i = 0; i <= static_cast<int>(count); ++i) out.push_back(lo + i * step);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

/// 17 significant digits, enough to read back the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Cell = std::variant<std::monostate, double, std::int64_t, bool, std::string>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

struct Report {
  std::vector<Table> tables;
  /// Internal consistency checks that did not hold.
  std::vector<std::string> failures;
  /// File name and final profile of each flow run, when snapshots are asked for.
  std::vector<std::pair<std::string, Profile>> snapshots;
};

inline int worker_count() {
  if (const char* env = std::getenv("GAUSSLAB_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(std::min(n, 256L));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// f(0), ..., f(n - 1) on the worker pool, results in index order. The first
/// exception by index is rethrown after all workers stop.
template <class F>
auto parallel_map(std::size_t n, F&& f, int workers = worker_count()) {
  using R = decltype(f(std::size_t{0}));
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max(1, workers));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < std::min(count, n); ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Smallest s in (0, 40] past which the strip's reduced perimeter is below
/// that of the centered ball of the same Gaussian volume phi(s), in R^2 or R^3.
/// Found by a scan at spacing 1/4 and bisection.
inline std::optional<double> ball_crossover(int dimension) {
  auto gap = [dimension](double s) {
    const ProblemContext ctx(s, 0.0);
    const double r = dimension == 2 ? disk_radius_for_level(s) : ball3_radius_for_level(s);
    return strip_p_hat(s) - geometry(Ball(dimension, r), ctx).p_hat;
  };
  double prev_s = 0.0;
  double prev = gap(prev_s);
  for (int i = 1; i <= 160; ++i) {
    const double s = 0.25 * i;
    const double cur = gap(s);
    if (prev > 0.0 && cur <= 0.0) return gausslab::detail::bisect(gap, prev_s, s, 1e-12);
    prev = cur;
    prev_s = s;
  }
  return std::nullopt;
}

namespace detail {

inline bool needs_eps0(Task t) {
  return t == Task::phase || t == Task::solve1d || t == Task::stability || t == Task::flow;
}

inline std::vector<std::pair<double, double>> grid(const SweepSpec& spec) {
  std::vector<std::pair<double, double>> g;
  for (double s : spec.s_values)
    for (double e : spec.eps0_values) g.emplace_back(s, e);
  return g;
}

inline Cell optional_cell(const std::optional<double>& v) { return v ? Cell{*v} : Cell{}; }

inline Table phase_table(const SweepSpec& spec, std::vector<std::string>& failures) {
  Table t{"phase",
          {"s", "eps0", "winner", "F_hat_H", "F_hat_D", "threshold_eps0", "c_s", "eps0_stab", "min_eig"},
          {}};
  const auto g = grid(spec);
  struct Row {
    Solve1DResult r;
    double f_h, f_d, min_eig;
  };
  const auto rows = parallel_map(g.size(), [&](std::size_t i) {
    const auto [s, e] = g[i];
    const ProblemContext ctx(s, e);
    Row row{minimize1d(ctx), evaluate(HalfSpace(s), ctx).total, evaluate(SymmetricStrip(a_of_s(s)), ctx).total,
            gausslab::detail::min_eigenvalue_only(SymmetricStrip(a_of_s(s)), ctx, spec.basis_size)};
    return row;
  });
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto [s, e] = g[i];
    const auto& row = rows[i];
    t.rows.push_back({s, e, to_string(row.r.winner), row.f_h, row.f_d, threshold_eps0(s), quantitative_constant(s),
                      strip_stability_threshold(s), row.min_eig});
    if (row.r.upper_boundary_defect)
      failures.push_back("phase: family minimum at the window edge at s=" + format_number(s) +
                         " eps0=" + format_number(e));
    if (row.r.winner == Winner::Interval)
      failures.push_back("phase: an asymmetric interval wins at s=" + format_number(s) + " eps0=" + format_number(e));
  }
  // Per s, the winner must be the half-line below the threshold and the
  // strip above it, so it switches at most once, at the threshold.
  for (double s : spec.s_values) {
    const double thr = threshold_eps0(s);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i].first != s) continue;
      const double e = g[i].second;
      const Winner w = rows[i].r.winner;
      const bool ok = w == Winner::Tie || (e < thr && w == Winner::HalfLine) ||
                      (e > thr && w == Winner::SymmetricInterval) ||
                      std::abs(e - thr) <= 1e-9 * thr;
      if (!ok)
        failures.push_back("phase: winner " + to_string(w) + " on the wrong side of the threshold at s=" +
                           format_number(s) + " eps0=" + format_number(e));
    }
  }
  return t;
}

inline Table asymptotics_table(const SweepSpec& spec) {
  Table t{"asymptotics",
          {"s", "a", "s_a_minus_s", "s2_pD_minus_1", "threshold_eps0", "s2_c_s_over_sqrt2pi", "eps0_stab"},
          {}};
  for (double s : spec.s_values) {
    const double a = a_of_s(s);
    t.rows.push_back({s, a, s * (a - s), s * s * strip_perimeter_excess(s), threshold_eps0(s),
                      s * s * quantitative_constant(s) / kSqrtTwoPi, strip_stability_threshold(s)});
  }
  return t;
}

inline Table threshold_table(const SweepSpec& spec, std::vector<std::string>& failures) {
  Table t{"threshold", {"s", "threshold_eps0", "F_hat_H_at_threshold", "F_hat_D", "eps0_stab"}, {}};
  for (double s : spec.s_values) {
    const double thr = threshold_eps0(s);
    const double fh = 1.0 + thr / (2.0 * s * s);
    const double fd = strip_p_hat(s);
    t.rows.push_back({s, thr, fh, fd, strip_stability_threshold(s)});
    if (std::abs(fh - fd) > 1e-13 * fd) failures.push_back("threshold: energies differ at s=" + format_number(s));
  }
  return t;
}

inline Table solve1d_table(const SweepSpec& spec, std::vector<std::string>& failures) {
  Table t{"solve1d",
          {"s", "eps0", "winner", "F_half_line", "F_symmetric", "F_interior", "t_star", "g_at_a", "g_sign_changes",
           "interior_minima", "outside_validated_range"},
          {}};
  const auto g = grid(spec);
  struct Row {
    Solve1DResult r;
    GCensus census;
  };
  const auto rows = parallel_map(g.size(), [&](std::size_t i) {
    const ProblemContext ctx(g[i].first, g[i].second);
    return Row{minimize1d(ctx), g_census(ctx)};
  });
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& [r, census] = rows[i];
    t.rows.push_back({g[i].first, g[i].second, to_string(r.winner), r.f_half_line, r.f_symmetric, r.f_interior,
                      r.t_star, census.g_at_a, static_cast<std::int64_t>(census.sign_changes),
                      static_cast<std::int64_t>(census.interior_minima.size()), r.outside_validated_range});
    if (r.upper_boundary_defect)
      failures.push_back("solve1d: family minimum at the window edge at s=" + format_number(g[i].first));
  }
  return t;
}

inline Table stability_table(const SweepSpec& spec, std::vector<std::string>& failures) {
  Table t{"stability",
          {"s", "eps0", "set", "min_eig", "translation_overlap", "rotation_mode_value", "critical_eps0", "eps0_stab",
           "converged"},
          {}};
  const auto g = grid(spec);
  const auto rows = parallel_map(2 * g.size(), [&](std::size_t i) {
    const auto [s, e] = g[i / 2];
    const ProblemContext ctx(s, e);
    const CandidateSet set = i % 2 == 0 ? CandidateSet{SymmetricStrip(a_of_s(s))} : CandidateSet{HalfSpace(s)};
    return min_eigenvalue(set, ctx, spec.basis_size);
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto [s, e] = g[i / 2];
    const auto& r = rows[i];
    t.rows.push_back({s, e, std::string(i % 2 == 0 ? "strip" : "halfspace"), r.min_eigenvalue,
                      r.translation_overlap, r.rotation_mode_value, optional_cell(r.critical_eps0),
                      i % 2 == 0 ? Cell{strip_stability_threshold(s)} : Cell{}, r.converged});
    if (!r.converged)
      failures.push_back("stability: basis doubling moved min_eig at s=" + format_number(s) +
                         " eps0=" + format_number(e));
  }
  return t;
}

inline Table flow_table(const SweepSpec& spec, std::vector<std::string>& failures,
                        std::vector<std::pair<std::string, Profile>>& snapshots) {
  Table t{"flow",
          {"s", "eps0", "topology", "seed", "steps", "converged", "line_search_failed", "flatness", "F_hat",
           "closed_form", "energy_error", "euler_residual", "quadrature_error"},
          {}};
  const auto topologies = spec.topologies.empty() ? std::vector<Topology>{Topology::single, Topology::double_graph}
                                                  : spec.topologies;
  struct Job {
    double s, e;
    Topology topology;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& [s, e] : grid(spec))
    for (Topology top : topologies)
      for (int k = 0; k < spec.flow_seeds; ++k) jobs.push_back({s, e, top, spec.seed + k});
  const auto results = parallel_map(jobs.size(), [&](std::size_t i) {
    const auto& j = jobs[i];
    DescentOptions opt;
    opt.max_steps = spec.max_steps;
    return descend(perturbed_profile(j.topology, j.s, j.seed, spec.amplitude, spec.nodes), ProblemContext(j.s, j.e),
                   opt);
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& j = jobs[i];
    const auto& r = results[i];
    const double closed = j.topology == Topology::single ? 1.0 + j.e / (2.0 * j.s * j.s) : strip_p_hat(j.s);
    const double flat = *std::max_element(r.flatness.begin(), r.flatness.end());
    t.rows.push_back({j.s, j.e, std::string(to_string(j.topology)), static_cast<std::int64_t>(j.seed),
                      static_cast<std::int64_t>(r.steps), r.converged, r.line_search_failed, flat, r.energy.total,
                      closed, r.energy.total - closed, r.euler_residual, r.energy.quadrature_error});
    const std::string where = " (" + std::string(to_string(j.topology)) + ", s=" + format_number(j.s) +
                              ", eps0=" + format_number(j.e) + ", seed=" + std::to_string(j.seed) + ")";
    if (!r.converged) failures.push_back("flow: descent did not converge" + where);
    if (r.energy.quadrature_error > 1e-8 * r.energy.p_hat) failures.push_back("flow: grid too coarse" + where);
    if (!spec.snapshot_dir.empty())
      snapshots.emplace_back("flow_" + std::string(to_string(j.topology)) + "_s" + format_number(j.s) + "_eps0_" +
                                 format_number(j.e) + "_seed" + std::to_string(j.seed) + ".txt",
                             r.profile);
  }
  return t;
}

inline Table compare_ball_table(const SweepSpec& spec, std::vector<std::string>& failures) {
  Table t{"compare-ball",
          {"volume", "s", "p_hat_halfspace", "p_hat_strip", "p_hat_disk", "p_hat_ball3", "disk_below_strip",
           "ball3_below_strip", "disk_crossover_s", "ball3_crossover_s"},
          {}};
  const auto disk_cross = ball_crossover(2);
  const auto ball_cross = ball_crossover(3);
  if (!disk_cross) failures.push_back("compare-ball: no crossover against the disk in (0, 40]");
  for (double v : spec.volumes) {
    const double s = v == 0.5 ? 0.0 : phi_inv(v);
    const ProblemContext ctx(s, 0.0);
    const double strip = geometry(SymmetricStrip(a_of_s(s)), ctx).p_hat;
    const double disk = geometry(Ball(2, disk_radius_for_level(s)), ctx).p_hat;
    const double ball = geometry(Ball(3, ball3_radius_for_level(s)), ctx).p_hat;
    const double half = geometry(HalfSpace(s), ctx).p_hat;
    t.rows.push_back({v, s, half, strip, disk, ball, disk < strip, ball < strip, optional_cell(disk_cross),
                      optional_cell(ball_cross)});
  }
  return t;
}

inline void write_cell_csv(std::ostream& os, const Cell& c) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          os << format_number(v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          os << v;
        } else if constexpr (std::is_same_v<T, bool>) {
          os << (v ? "true" : "false");
        } else if constexpr (std::is_same_v<T, std::string>) {
          os << v;
        }
      },
      c);
}

inline nlohmann::ordered_json cell_json(const Cell& c) {
  return std::visit(
      [](const auto& v) -> nlohmann::ordered_json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          // JSON has no infinities or NaN; they become strings.
          if (!std::isfinite(v)) return format_number(v);
          return v;
        } else {
          return v;
        }
      },
      c);
}

inline void write_atomically(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot move output into '" + path + "'");
  }
}

}  // namespace detail

/// Throws std::invalid_argument on an unusable spec.
inline void validate(const SweepSpec& spec) {
  if (spec.tasks.empty()) throw std::invalid_argument("no tasks requested");
  bool needs_s = false;
  bool needs_eps0 = false;
  for (Task t : spec.tasks) {
    needs_s = needs_s || t != Task::compare_ball;
    needs_eps0 = needs_eps0 || detail::needs_eps0(t);
  }
  if (needs_s && spec.s_values.empty()) throw std::invalid_argument("empty s grid");
  for (double s : spec.s_values)
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("s values must be positive");
  if (needs_eps0 && spec.eps0_values.empty()) throw std::invalid_argument("empty eps0 grid");
  for (double e : spec.eps0_values)
    if (!(e >= 0.0) || !std::isfinite(e)) throw std::invalid_argument("eps0 values must be >= 0");
  for (double v : spec.volumes)
    if (!(v >= 0.5 && v < 1.0)) throw std::invalid_argument("volumes must lie in [0.5, 1)");
  if (spec.flow_seeds < 1) throw std::invalid_argument("need at least one flow seed");
  if (!(spec.amplitude >= 0.0 && spec.amplitude <= 0.3)) throw std::invalid_argument("amplitude must lie in [0, 0.3]");
  if (spec.nodes < kMinProfileNodes || spec.nodes % 2 == 0)
    throw std::invalid_argument("nodes must be odd and at least 65");
  if (spec.max_steps < 1) throw std::invalid_argument("max_steps must be positive");
  if (spec.basis_size < 4) throw std::invalid_argument("basis size must be at least 4");
}

/// Runs every requested task. Throws on invalid input or when a task fails
/// outright; consistency problems are collected in Report::failures.
inline Report compute(const SweepSpec& spec) {
  validate(spec);
  Report rep;
  for (Task t : spec.tasks) {
    switch (t) {
      case Task::phase: rep.tables.push_back(detail::phase_table(spec, rep.failures)); break;
      case Task::asymptotics: rep.tables.push_back(detail::asymptotics_table(spec)); break;
      case Task::threshold: rep.tables.push_back(detail::threshold_table(spec, rep.failures)); break;
      case Task::solve1d: rep.tables.push_back(detail::solve1d_table(spec, rep.failures)); break;
      case Task::stability: rep.tables.push_back(detail::stability_table(spec, rep.failures)); break;
      case Task::flow: rep.tables.push_back(detail::flow_table(spec, rep.failures, rep.snapshots)); break;
      case Task::compare_ball: rep.tables.push_back(detail::compare_ball_table(spec, rep.failures)); break;
    }
  }
  return rep;
}

inline std::string render_csv(const Table& t) {
  std::ostringstream os;
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      detail::write_cell_csv(os, row[i]);
    }
    os << '\n';
  }
  return os.str();
}

inline nlohmann::ordered_json spec_json(const SweepSpec& spec) {
  nlohmann::ordered_json j;
  j["s_values"] = spec.s_values;
  j["eps0_values"] = spec.eps0_values;
  auto& tasks = j["tasks"] = nlohmann::ordered_json::array();
  for (Task t : spec.tasks) tasks.push_back(to_string(t));
  j["format"] = spec.format == Format::csv ? "csv" : "json";
  j["seed"] = spec.seed;
  j["flow_seeds"] = spec.flow_seeds;
  j["amplitude"] = spec.amplitude;
  j["nodes"] = spec.nodes;
  j["max_steps"] = spec.max_steps;
  auto& tops = j["topologies"] = nlohmann::ordered_json::array();
  for (Topology t : spec.topologies) tops.push_back(to_string(t));
  j["volumes"] = spec.volumes;
  j["basis_size"] = spec.basis_size;
  return j;
}

/// {"version", "spec", "tables": {task: [row objects]}}.
inline std::string render_json(const Report& rep, const SweepSpec& spec) {
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["spec"] = spec_json(spec);
  auto& tables = j["tables"] = nlohmann::ordered_json::object();
  for (const auto& t : rep.tables) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : t.rows) {
      nlohmann::ordered_json obj;
      for (std::size_t i = 0; i < row.size(); ++i) obj[t.columns[i]] = detail::cell_json(row[i]);
      rows.push_back(std::move(obj));
    }
    tables[t.name] = std::move(rows);
  }
  return j.dump(2) + "\n";
}

/// Writes the report: JSON as one document; CSV as one file per table, named
/// stem.task.ext when there is more than one table. Without an output path
/// everything goes to `out`, tables separated by a blank line.
inline void write_report(const Report& rep, const SweepSpec& spec, std::ostream& out = std::cout) {
  std::vector<std::pair<std::string, std::string>> files;
  if (spec.format == Format::json) {
    files.emplace_back(spec.output, render_json(rep, spec));
  } else if (rep.tables.size() == 1 || spec.output.empty()) {
    std::string all;
    for (std::size_t i = 0; i < rep.tables.size(); ++i) all += (i ? "\n" : "") + render_csv(rep.tables[i]);
    files.emplace_back(spec.output, all);
  } else {
    const std::filesystem::path p(spec.output);
    for (const auto& t : rep.tables) {
      auto name = p;
      name.replace_filename(p.stem().string() + "." + t.name + p.extension().string());
      files.emplace_back(name.string(), render_csv(t));
    }
  }
  for (const auto& [name, profile] : rep.snapshots) {
    std::ostringstream os;
    write_profile_table(os, profile);
    files.emplace_back((std::filesystem::path(spec.snapshot_dir) / name).string(), os.str());
  }
  for (const auto& [path, content] : files) {
    if (path.empty()) {
      out << content;
    } else {
      detail::write_atomically(path, content);
    }
  }
}

/// Exit status of a run: 0 success, 1 consistency failure (results are
/// still written), 2 invalid spec or a failed task (nothing is written).
inline int run(const SweepSpec& spec, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Report rep;
  try {
    rep = compute(spec);
    write_report(rep, spec, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  for (const auto& f : rep.failures) err << "check failed: " << f << '\n';
  return rep.failures.empty() ? 0 : 1;
}

}  // namespace gausslab::sweep
