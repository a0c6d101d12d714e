// gausslab: tables for the Gaussian isoperimetric problem with a barycenter
// term. Each subcommand evaluates one task over an (s, eps0) grid and prints
// CSV (or JSON) to stdout or --out. GAUSSLAB_WORKERS sets the thread count.
//
//   gausslab phase --s 10,15,20 --eps0 1.0:1.6:0.01
//   gausslab asymptotics --s 5:40:5
//   gausslab flow --s 10 --eps0 1.2,1.4 --seeds 5 --snapshot snaps/
//   gausslab compare-ball --volume 0.5
//   gausslab sweep --tasks phase,stability --s 10 --eps0 1.2:1.4:0.1 --out run.csv

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "gausslab/sweep.hpp"

namespace sw = gausslab::sweep;

namespace {

struct Args {
  std::string s;
  std::string eps0;
  std::string tasks;
  std::string out;
  std::string format = "csv";
  std::uint64_t seed = 0;
  int seeds = 1;
  double amplitude = 0.1;
  int nodes = 257;
  int max_steps = gausslab::DescentOptions{}.max_steps;
  std::string topology = "both";
  std::string snapshot;
  std::string volume = "0.5";
  int basis = 16;
};

void output_options(CLI::App* app, Args& a) {
  app->add_option("--out,-o", a.out, "output file; stdout when omitted");
  app->add_option("--format", a.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

void flow_options(CLI::App* app, Args& a) {
  app->add_option("--seed", a.seed, "first random seed");
  app->add_option("--seeds", a.seeds, "runs per (s, eps0, topology)");
  app->add_option("--amplitude", a.amplitude, "sup-norm of the initial perturbation");
  app->add_option("--nodes", a.nodes, "grid nodes per graph (odd, >= 65)");
  app->add_option("--max-steps", a.max_steps, "descent step limit");
  app->add_option("--topology", a.topology, "single, double or both")
      ->check(CLI::IsMember({"single", "double", "both"}));
  app->add_option("--snapshot", a.snapshot, "directory for the final profiles");
}

sw::SweepSpec to_spec(const Args& a, const std::vector<sw::Task>& tasks) {
  sw::SweepSpec spec;
  spec.tasks = tasks;
  if (!a.s.empty()) spec.s_values = sw::parse_values(a.s);
  if (!a.eps0.empty()) spec.eps0_values = sw::parse_values(a.eps0);
  spec.output = a.out;
  spec.format = a.format == "json" ? sw::Format::json : sw::Format::csv;
  spec.seed = a.seed;
  spec.flow_seeds = a.seeds;
  spec.amplitude = a.amplitude;
  spec.nodes = a.nodes;
  spec.max_steps = a.max_steps;
  if (a.topology == "single") spec.topologies = {gausslab::Topology::single};
  if (a.topology == "double") spec.topologies = {gausslab::Topology::double_graph};
  spec.snapshot_dir = a.snapshot;
  spec.volumes = sw::parse_values(a.volume);
  spec.basis_size = a.basis;
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian isoperimetry with a barycenter penalty: phase diagram, asymptotics, stability, flows"};
  app.set_version_flag("--version", std::string(sw::kVersion));
  app.require_subcommand(1);

  Args a;
  std::vector<sw::Task> tasks;

  auto grid = [&](const char* name, const char* help, sw::Task task, const char* s_default,
                  const char* eps0_default) {
    auto* sub = app.add_subcommand(name, help);
    a.s = s_default;
    sub->add_option("--s", a.s, "s values: list or lo:hi:step")->capture_default_str();
    if (eps0_default) {
      sub->add_option("--eps0", a.eps0, "eps0 values: list or lo:hi:step")->default_str(eps0_default);
    }
    output_options(sub, a);
    sub->callback([&, task, s_default, eps0_default] {
      tasks = {task};
      if (a.s.empty()) a.s = s_default;
      if (eps0_default && a.eps0.empty()) a.eps0 = eps0_default;
    });
    return sub;
  };

  auto* phase = grid("phase", "winner of the 1D problem and the strip's stability over a grid", sw::Task::phase,
                     "10,15,20", "1.0:1.6:0.01");
  phase->add_option("--basis", a.basis, "Hermite basis size per line");
  grid("asymptotics", "strip half-width, perimeter and threshold against s", sw::Task::asymptotics, "5:40:5",
       nullptr);
  grid("threshold", "the eps0 at which strip and half-line tie", sw::Task::threshold, "10:40:5", nullptr);
  grid("solve1d", "1D family minimization and the census of g", sw::Task::solve1d, "10", "1.3");
  auto* stab = grid("stability", "second-variation spectrum of strip and half-space", sw::Task::stability, "10",
                    "1.2,1.3,1.4");
  stab->add_option("--basis", a.basis, "Hermite basis size per line");
  auto* flow = grid("flow", "constrained descent from perturbed graphs", sw::Task::flow, "10", "1.3");
  flow_options(flow, a);

  auto* ball = app.add_subcommand("compare-ball", "centered disk and 3-ball against the strip at equal volume");
  ball->add_option("--volume", a.volume, "Gaussian volumes in [0.5, 1)")->capture_default_str();
  output_options(ball, a);
  ball->callback([&] { tasks = {sw::Task::compare_ball}; });

  auto* sweep = app.add_subcommand("sweep", "several tasks over one grid");
  sweep->add_option("--tasks", a.tasks, "comma list of tasks")->required();
  sweep->add_option("--s", a.s, "s values")->required();
  sweep->add_option("--eps0", a.eps0, "eps0 values");
  sweep->add_option("--volume", a.volume, "compare-ball volumes");
  sweep->add_option("--basis", a.basis, "Hermite basis size per line");
  output_options(sweep, a);
  flow_options(sweep, a);
  sweep->callback([&] {
    tasks.clear();
    std::stringstream ss(a.tasks);
    std::string item;
    while (std::getline(ss, item, ',')) tasks.push_back(sw::parse_task(item));
  });

  // Empty until the chosen subcommand's callback fills it in.
  a.s.clear();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  sw::SweepSpec spec;
  try {
    spec = to_spec(a, tasks);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (!spec.snapshot_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(spec.snapshot_dir, ec);
  }
  return sw::run(spec);
}
