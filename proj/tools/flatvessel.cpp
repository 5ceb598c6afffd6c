// Copyright 2026 The flatvessel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command line front end: plan, track, guess and validate scenarios.
//
//   flatvessel plan  scenarios/ipan-2021.json --out out/plan --plot
//   flatvessel track scenarios/ipan-2021.json --out out/track
//   flatvessel validate scenarios/ipan-2021.json
//
// Exit codes: 0 success, 1 run finished without a certified result,
// 2 invalid scenario, 3 internal error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "flatvessel/scenario.hpp"

namespace fs = std::filesystem;
using namespace flatvessel;

namespace {

struct Options {
  std::string scenario;
  std::string out = "out";
  bool plot = false;
  bool verbose = false;
};

void write_metrics(const fs::path& dir, const RunLog& log) {
  std::ofstream(dir / "metrics.json") << metrics_json(log).dump(2) << '\n';
}

void summarize(const char* what, const RunLog& log) {
  std::printf("%s: %s  energy %.4f  distance %.4f  max violation %.3g  solver time %.3f s\n", what,
              log.status.c_str(), log.metrics.energy, log.metrics.distance, log.metrics.max_violation,
              log.metrics.solver_time);
}

int do_plan(const Options& o) {
  Scenario s = load_scenario(o.scenario);
  s.solver.verbose = o.verbose;
  const PlanRun run = run_plan(s);
  fs::create_directories(o.out);
  write_rows_csv(fs::path(o.out) / "trajectory.csv", run.log.rows);
  write_metrics(o.out, run.log);
  if (o.plot) {
    const auto guess = FlatTrajectory::from_decision(run.result.guess.xi, s.ocp_spec().grid);
    const std::vector<PlotTrace> traces{{"initial guess", "#2ca02c", knot_rows(guess, s.params), true},
                                        {"optimal plan", "#d62728", run.log.rows, false}};
    write_path_svg(fs::path(o.out) / "path.svg", s.static_field(), s.planning.bounds, traces);
    write_series_svg(fs::path(o.out) / "series.svg", traces);
  }
  summarize("plan", run.log);
  std::printf("iterations %d, endpoint error %.3g m, dense obstacle violation %.3g\n",
              run.result.report.iterations, run.result.endpoint_position_error,
              run.result.dense_obstacle_violation);
  return run.log.success ? 0 : 1;
}

int do_track(const Options& o) {
  Scenario s = load_scenario(o.scenario);
  s.solver.verbose = o.verbose;
  const TrackRun run = run_track(s);
  fs::create_directories(o.out);
  write_rows_csv(fs::path(o.out) / "trajectory.csv", run.log.rows);
  write_rows_csv(fs::path(o.out) / "reference.csv", knot_rows(run.reference.trajectory, s.params));
  write_iterations_csv(fs::path(o.out) / "iterations.csv", run.log.iterations);
  write_metrics(o.out, run.log);
  if (o.plot) {
    const std::vector<PlotTrace> traces{
        {"reference", "#555555", knot_rows(run.reference.trajectory, s.params), true},
        {"closed loop", "#1f77b4", run.log.rows, false}};
    write_path_svg(fs::path(o.out) / "path.svg", s.tracking_field(), s.planning.bounds, traces);
    write_series_svg(fs::path(o.out) / "series.svg", traces);
  }
  summarize("track", run.log);
  std::printf("iterates %zu, fallbacks %d, max slack %.3g, max penetration %.3g, mean step %.3f s\n",
              run.loop.iterates.size(), run.loop.fallback_count, run.loop.max_slack,
              std::max(0.0, run.loop.max_penetration), run.loop.mean_step_time);
  return run.log.success ? 0 : 1;
}

int do_guess(const Options& o) {
  const Scenario s = load_scenario(o.scenario);
  const GuessRun run = run_guess(s);
  fs::create_directories(o.out);
  write_rows_csv(fs::path(o.out) / "trajectory.csv", run.log.rows);
  write_metrics(o.out, run.log);
  if (o.plot) {
    const std::vector<PlotTrace> traces{{"initial guess", "#2ca02c", run.log.rows, false}};
    write_path_svg(fs::path(o.out) / "path.svg", s.static_field(), s.planning.bounds, traces);
    write_series_svg(fs::path(o.out) / "series.svg", traces);
  }
  summarize("guess", run.log);
  return 0;
}

int do_validate(const Options& o) {
  const Scenario s = load_scenario(o.scenario);
  std::cout << scenario_to_json(s).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flatness based trajectory planning and tracking for a 3DOF surface vessel"};
  app.require_subcommand(1);
  Options o;
  auto add = [&](const char* name, const char* help, bool outputs) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("scenario", o.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
    if (outputs) {
      sub->add_option("--out", o.out, "output directory")->capture_default_str();
      sub->add_flag("--plot", o.plot, "write path.svg and series.svg");
      sub->add_flag("-v,--verbose", o.verbose, "print solver iterations");
    }
    return sub;
  };
  CLI::App* plan_cmd = add("plan", "solve the point to point optimal control problem", true);
  CLI::App* track_cmd = add("track", "run the closed loop tracking controller", true);
  CLI::App* guess_cmd = add("guess", "build only the A* based initial guess", true);
  CLI::App* validate_cmd = add("validate", "check a scenario and print its normalized form", false);
  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan_cmd) return do_plan(o);
    if (*track_cmd) return do_track(o);
    if (*guess_cmd) return do_guess(o);
    if (*validate_cmd) return do_validate(o);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "invalid scenario: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 3;
}
