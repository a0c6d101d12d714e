#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gausslab/sweep.hpp"

using namespace gausslab;
using namespace gausslab::sweep;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("gausslab_sweep_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const Table& table(const Report& rep, const std::string& name) {
  for (const auto& t : rep.tables)
    if (t.name == name) return t;
  throw std::runtime_error("no table " + name);
}

std::size_t column(const Table& t, const std::string& name) {
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    if (t.columns[i] == name) return i;
  throw std::runtime_error("no column " + name);
}

double num(const Cell& c) { return std::get<double>(c); }

SweepSpec phase_spec() {
  SweepSpec sp;
  sp.s_values = {10.0, 15.0, 20.0};
  sp.eps0_values = parse_values("1.0:1.6:0.01");
  sp.tasks = {Task::phase};
  return sp;
}

}  // namespace

TEST(ParseValues, RangesIncludeTheEndpoint) {
  const auto v = parse_values("1.0:1.6:0.01");
  ASSERT_EQ(v.size(), 61u);
  EXPECT_EQ(v.front(), 1.0);
  EXPECT_NEAR(v.back(), 1.6, 1e-12);
  EXPECT_EQ(v[30], 1.0 + 30 * 0.01);
  EXPECT_EQ(parse_values("5:40:5").size(), 8u);
  EXPECT_EQ(parse_values("1:1.5:1"), std::vector<double>{1.0});
}

TEST(ParseValues, ListsAndMixtures) {
  EXPECT_EQ(parse_values("10,15,20"), (std::vector<double>{10, 15, 20}));
  EXPECT_EQ(parse_values(" 3 , 1:2:0.5"), (std::vector<double>{3, 1, 1.5, 2}));
  EXPECT_EQ(parse_values("1e1"), std::vector<double>{10});
}

TEST(ParseValues, RejectsMalformedInput) {
  for (const char* bad : {"", "1,,2", "abc", "1:2", "1:2:3:4", "2:1:0.1", "1:2:0", "1:2:-1", "1x", "nan", "inf"})
    EXPECT_THROW(parse_values(bad), std::invalid_argument) << bad;
}

TEST(FormatNumber, RoundTripsExactly) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = std::ldexp(u(rng), static_cast<int>(rng() % 200) - 100);
    EXPECT_EQ(std::strtod(format_number(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(format_number(INFINITY), "inf");
  EXPECT_EQ(format_number(NAN), "nan");
}

TEST(ParallelMap, KeepsIndexOrder) {
  for (int workers : {1, 2, 7}) {
    const auto out = parallel_map(100, [](std::size_t i) { return static_cast<int>(i * i); }, workers);
    ASSERT_EQ(out.size(), 100u);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  }
}

TEST(ParallelMap, RethrowsTheFirstFailureByIndex) {
  auto f = [](std::size_t i) -> int {
    if (i == 3 || i == 40) throw std::runtime_error("boom " + std::to_string(i));
    return 0;
  };
  try {
    parallel_map(50, f, 4);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "boom 3");
  }
}

TEST(WorkerCount, ReadsTheEnvironment) {
  ::setenv("GAUSSLAB_WORKERS", "3", 1);
  EXPECT_EQ(worker_count(), 3);
  ::setenv("GAUSSLAB_WORKERS", "zero", 1);
  EXPECT_GE(worker_count(), 1);
  ::unsetenv("GAUSSLAB_WORKERS");
  EXPECT_GE(worker_count(), 1);
}

TEST(Validate, RejectsBadSpecs) {
  auto base = phase_spec();
  EXPECT_NO_THROW(validate(base));
  auto sp = base;
  sp.tasks.clear();
  EXPECT_THROW(validate(sp), std::invalid_argument);
  sp = base;
  sp.s_values = {10.0, 0.0};
  EXPECT_THROW(validate(sp), std::invalid_argument);
  sp = base;
  sp.s_values.clear();
  EXPECT_THROW(validate(sp), std::invalid_argument);
  sp = base;
  sp.eps0_values = {-0.1};
  EXPECT_THROW(validate(sp), std::invalid_argument);
  sp = base;
  sp.eps0_values.clear();
  EXPECT_THROW(validate(sp), std::invalid_argument);
  sp = base;
  sp.nodes = 256;
  EXPECT_THROW(validate(sp), std::invalid_argument);
  sp = base;
  sp.tasks = {Task::compare_ball};
  sp.s_values.clear();
  EXPECT_NO_THROW(validate(sp));
  sp.volumes = {0.3};
  EXPECT_THROW(validate(sp), std::invalid_argument);
}

TEST(Phase, WinnerSwitchesOnceAtTheThreshold) {
  const auto rep = compute(phase_spec());
  EXPECT_TRUE(rep.failures.empty());
  const auto& t = table(rep, "phase");
  ASSERT_EQ(t.rows.size(), 3u * 61u);
  const auto ws = column(t, "winner");
  for (double s : {10.0, 15.0, 20.0}) {
    int switches = 0;
    std::string prev;
    double last_half = -1.0;
    double first_strip = -1.0;
    for (const auto& row : t.rows) {
      if (num(row[0]) != s) continue;
      const auto& w = std::get<std::string>(row[ws]);
      if (!prev.empty() && w != prev) ++switches;
      prev = w;
      if (w == "HalfLine") last_half = num(row[1]);
      if (w == "SymmetricInterval" && first_strip < 0) first_strip = num(row[1]);
    }
    EXPECT_EQ(switches, 1) << s;
    const double thr = threshold_eps0(s);
    EXPECT_LT(last_half, thr);
    EXPECT_GT(first_strip, thr);
    EXPECT_LE(first_strip - last_half, 0.01 + 1e-12);
  }
}

TEST(Phase, ColumnsAreTheDocumentedOnes) {
  auto sp = phase_spec();
  sp.s_values = {10.0};
  sp.eps0_values = {1.3};
  const auto csv = render_csv(compute(sp).tables.at(0));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "s,eps0,winner,F_hat_H,F_hat_D,threshold_eps0,c_s,eps0_stab,min_eig");
}

TEST(Phase, OutputDoesNotDependOnTheWorkerCount) {
  auto sp = phase_spec();
  sp.eps0_values = parse_values("1.2:1.45:0.05");
  sp.tasks = {Task::phase, Task::solve1d};
  ::setenv("GAUSSLAB_WORKERS", "1", 1);
  const auto one = compute(sp);
  ::setenv("GAUSSLAB_WORKERS", "5", 1);
  const auto five = compute(sp);
  ::unsetenv("GAUSSLAB_WORKERS");
  for (std::size_t i = 0; i < one.tables.size(); ++i)
    EXPECT_EQ(render_csv(one.tables[i]), render_csv(five.tables[i]));
}

TEST(Asymptotics, ColumnsApproachTheirLimits) {
  SweepSpec sp;
  sp.s_values = parse_values("5:40:5");
  sp.tasks = {Task::asymptotics};
  const auto rep = compute(sp);
  const auto& t = rep.tables.at(0);
  const double ln2 = std::numbers::ln2;
  double prev_a = INFINITY, prev_p = INFINITY, prev_thr = INFINITY;
  for (const auto& row : t.rows) {
    const double ea = std::abs(num(row[column(t, "s_a_minus_s")]) - ln2);
    const double ep = std::abs(num(row[column(t, "s2_pD_minus_1")]) - ln2);
    const double et = std::abs(num(row[column(t, "threshold_eps0")]) - 2 * ln2);
    EXPECT_LT(ea, prev_a);
    EXPECT_LT(ep, prev_p);
    EXPECT_LT(et, prev_thr);
    prev_a = ea;
    prev_p = ep;
    prev_thr = et;
  }
  EXPECT_LT(prev_a, 0.002);
  EXPECT_LT(prev_thr, 0.01);
}

TEST(Threshold, EnergiesTie) {
  SweepSpec sp;
  sp.s_values = parse_values("10:40:5");
  sp.tasks = {Task::threshold};
  const auto rep = compute(sp);
  EXPECT_TRUE(rep.failures.empty());
  for (const auto& row : rep.tables.at(0).rows) EXPECT_NEAR(num(row[2]), num(row[3]), 1e-14);
}

TEST(Solve1d, CensusColumns) {
  SweepSpec sp;
  sp.s_values = {10.0, 15.0};
  sp.eps0_values = {1.25, 1.35};
  sp.tasks = {Task::solve1d};
  const auto rep = compute(sp);
  EXPECT_TRUE(rep.failures.empty());
  const auto& t = rep.tables.at(0);
  for (const auto& row : t.rows) {
    EXPECT_GT(num(row[column(t, "g_at_a")]), 0.0);
    EXPECT_EQ(std::get<std::int64_t>(row[column(t, "g_sign_changes")]), 1);
    EXPECT_EQ(std::get<std::int64_t>(row[column(t, "interior_minima")]), 0);
    EXPECT_FALSE(std::get<bool>(row[column(t, "outside_validated_range")]));
  }
}

TEST(Stability, StripAndHalfSpaceRows) {
  SweepSpec sp;
  sp.s_values = {10.0};
  sp.eps0_values = {0.9, 1.3};
  sp.tasks = {Task::stability};
  const auto rep = compute(sp);
  EXPECT_TRUE(rep.failures.empty());
  const auto& t = rep.tables.at(0);
  ASSERT_EQ(t.rows.size(), 4u);
  const auto me = column(t, "min_eig");
  EXPECT_EQ(std::get<std::string>(t.rows[0][2]), "strip");
  EXPECT_LT(num(t.rows[0][me]), 0.0);  // below eps0_stab
  EXPECT_GT(num(t.rows[2][me]), 0.0);
  EXPECT_NEAR(num(t.rows[0][column(t, "critical_eps0")]), strip_stability_threshold(10.0), 1e-6);
  EXPECT_TRUE(std::holds_alternative<std::monostate>(t.rows[1][column(t, "eps0_stab")]));
}

TEST(Flow, SingleRunConverges) {
  SweepSpec sp;
  sp.s_values = {10.0};
  sp.eps0_values = {1.3};
  sp.tasks = {Task::flow};
  sp.topologies = {Topology::single};
  sp.seed = 4;
  const auto rep = compute(sp);
  EXPECT_TRUE(rep.failures.empty());
  const auto& t = rep.tables.at(0);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_TRUE(std::get<bool>(t.rows[0][column(t, "converged")]));
  EXPECT_EQ(std::get<std::int64_t>(t.rows[0][column(t, "seed")]), 4);
  EXPECT_LE(num(t.rows[0][column(t, "flatness")]), 1e-5);
  EXPECT_LE(std::abs(num(t.rows[0][column(t, "energy_error")])), 1e-7);
}

TEST(CompareBall, BallsBeatTheStripAtVolumeHalf) {
  SweepSpec sp;
  sp.tasks = {Task::compare_ball};
  sp.volumes = {0.5, 0.9};
  const auto rep = compute(sp);
  EXPECT_TRUE(rep.failures.empty());
  const auto& t = rep.tables.at(0);
  const auto& half = t.rows[0];
  EXPECT_NEAR(num(half[column(t, "p_hat_disk")]), std::sqrt(std::numbers::pi * std::numbers::ln2), 1e-12);
  EXPECT_NEAR(num(half[column(t, "p_hat_strip")]), 2.0 * std::exp(-0.5 * std::pow(phi_inv(0.75), 2)), 1e-12);
  EXPECT_TRUE(std::get<bool>(half[column(t, "disk_below_strip")]));
  EXPECT_TRUE(std::get<bool>(half[column(t, "ball3_below_strip")]));
  EXPECT_NEAR(num(t.rows[1][1]), phi_inv(0.9), 1e-14);
}

TEST(CompareBall, StripWinsPastTheCrossover) {
  const auto cross = ball_crossover(2);
  ASSERT_TRUE(cross.has_value());
  EXPECT_GT(*cross, 0.0);
  auto gap = [](double s) {
    return strip_p_hat(s) - geometry(Ball(2, disk_radius_for_level(s)), ProblemContext(s, 0.0)).p_hat;
  };
  EXPECT_NEAR(gap(*cross), 0.0, 1e-10);
  for (double s = 0.0; s < *cross - 1e-6; s += 0.01) EXPECT_GT(gap(s), 0.0) << s;
  for (double s = *cross + 1e-6; s <= 40.0; s += 0.05) EXPECT_LT(gap(s), 0.0) << s;
}

TEST(Output, MultiTaskCsvGoesToOneFilePerTask) {
  const auto dir = scratch_dir("csv");
  SweepSpec sp;
  sp.s_values = {10.0, 20.0};
  sp.eps0_values = {1.3};
  sp.tasks = {Task::threshold, Task::asymptotics};
  sp.output = (dir / "out.csv").string();
  std::ostringstream out, err;
  EXPECT_EQ(run(sp, out, err), 0) << err.str();
  EXPECT_TRUE(out.str().empty());
  EXPECT_TRUE(fs::exists(dir / "out.threshold.csv"));
  EXPECT_TRUE(fs::exists(dir / "out.asymptotics.csv"));
  EXPECT_FALSE(fs::exists(dir / "out.csv"));
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
  // Same spec, same bytes.
  const auto first = slurp(dir / "out.threshold.csv");
  EXPECT_EQ(run(sp, out, err), 0);
  EXPECT_EQ(slurp(dir / "out.threshold.csv"), first);
}

TEST(Output, JsonCarriesVersionAndSpec) {
  const auto dir = scratch_dir("json");
  SweepSpec sp;
  sp.s_values = {10.0};
  sp.eps0_values = {1.3};
  sp.tasks = {Task::phase, Task::stability};
  sp.format = Format::json;
  sp.output = (dir / "out.json").string();
  std::ostringstream out, err;
  ASSERT_EQ(run(sp, out, err), 0) << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "out.json"));
  EXPECT_EQ(j["version"], kVersion);
  EXPECT_EQ(j["spec"]["s_values"][0], 10.0);
  EXPECT_EQ(j["spec"]["tasks"][1], "stability");
  EXPECT_EQ(j["tables"]["phase"][0]["winner"], "HalfLine");
  EXPECT_DOUBLE_EQ(j["tables"]["phase"][0]["threshold_eps0"].get<double>(), threshold_eps0(10.0));
  EXPECT_TRUE(j["tables"]["stability"][1]["eps0_stab"].is_null());
}

TEST(Output, InvalidSpecWritesNothing) {
  const auto dir = scratch_dir("invalid");
  SweepSpec sp;
  sp.s_values = {-1.0};
  sp.tasks = {Task::threshold};
  sp.output = (dir / "out.csv").string();
  std::ostringstream out, err;
  EXPECT_EQ(run(sp, out, err), 2);
  EXPECT_NE(err.str().find("error"), std::string::npos);
  EXPECT_TRUE(fs::is_empty(dir));
}

TEST(Output, UnwritablePathFails) {
  SweepSpec sp;
  sp.s_values = {10.0};
  sp.tasks = {Task::threshold};
  sp.output = "/nonexistent_dir_gausslab/out.csv";
  std::ostringstream out, err;
  EXPECT_EQ(run(sp, out, err), 2);
}

TEST(Output, ConsistencyFailureStillWritesAndExitsOne) {
  SweepSpec sp;
  sp.s_values = {10.0};
  sp.eps0_values = {1.3};
  sp.tasks = {Task::flow};
  sp.topologies = {Topology::double_graph};
  sp.max_steps = 3;
  std::ostringstream out, err;
  EXPECT_EQ(run(sp, out, err), 1);
  EXPECT_NE(out.str().find("s,eps0,topology"), std::string::npos);
  EXPECT_NE(err.str().find("check failed: flow: descent did not converge"), std::string::npos);
}
