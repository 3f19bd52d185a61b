/*
  dpmpc_main.cpp
  --------------
  Command-line entry point: batch runs, episode traces, and scenario checks.
*/
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpmpc/global_planner.hpp"
#include "dpmpc/simulator.hpp"

namespace {

using namespace dpmpc;

int cmd_plan(const std::string& scenario_path,
             const std::vector<std::string>& variant_names,
             const std::vector<double>& scales, int seeds, int threads,
             const std::string& out_path) {
  const Scenario sc = load_scenario(scenario_path);
  std::vector<Variant> variants;
  for (const std::string& name : variant_names) {
    variants.push_back(variant_from_string(name));
  }
  const BatchResult batch = run_batch(sc, variants, scales, seeds, threads);
  if (out_path.empty() || out_path == "-") {
    write_metrics_csv(batch, std::cout);
  } else {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot open " << out_path << "\n";
      return 1;
    }
    write_metrics_csv(batch, out);
  }
  int failures = 0;
  for (const BatchRow& row : batch.rows) {
    if (!row.metrics.success) {
      ++failures;
    }
  }
  std::cerr << batch.rows.size() << " episodes, " << failures << " failures\n";
  return 0;
}

int cmd_trace(const std::string& scenario_path, const std::string& variant_name,
              double scale, std::uint64_t seed, const std::string& out_path,
              const std::string& static_out) {
  Scenario sc = load_scenario(scenario_path);
  sc.uncertainty_scale = scale;
  TraceWriter trace;
  const EpisodeMetrics metrics =
      run_episode(sc, variant_from_string(variant_name), seed, &trace);
  if (out_path.empty() || out_path == "-") {
    trace.write_csv(std::cout);
  } else {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot open " << out_path << "\n";
      return 1;
    }
    trace.write_csv(out);
  }
  if (!static_out.empty()) {
    const OccupancyGrid grid =
        build_grid(sc.boxes, {sc.bounds_min, sc.bounds_max}, sc.resolution);
    const auto cells = plan_grid_path(grid, sc.start, sc.goal, sc.robot_radius);
    if (cells.has_value()) {
      WaypointPath wp = prune_waypoints(*cells, grid, sc.robot_radius);
      wp.waypoints.front() = sc.start;
      wp.waypoints.back() = sc.goal;
      const StaticPlanResult plan =
          plan_static(grid, wp, sc.static_plan, sc.robot_radius);
      if (plan.ok()) {
        std::ofstream out(static_out);
        write_trajectory_csv(*plan.trajectory, sc.mpc.dt, out);
      }
    }
  }
  std::cerr << "success=" << metrics.success << " collision=" << metrics.collision
            << " timeout=" << metrics.timeout << " d_min=" << metrics.d_min
            << " length=" << metrics.traj_length << " time=" << metrics.traj_time
            << "\n";
  return metrics.success ? 0 : 1;
}

bool report(const char* name, bool ok, const std::string& detail = "") {
  std::printf("  %-44s %s%s%s\n", name, ok ? "[OK]" : "[FAIL]",
              detail.empty() ? "" : "  ", detail.c_str());
  return ok;
}

int cmd_check(const std::string& scenario_path) {
  const Scenario sc = load_scenario(scenario_path);
  std::printf("checking %s\n", sc.name.c_str());
  bool all_ok = report("scenario invariants", true);

  const OccupancyGrid grid =
      build_grid(sc.boxes, {sc.bounds_min, sc.bounds_max}, sc.resolution);
  const auto cells = plan_grid_path(grid, sc.start, sc.goal, sc.robot_radius);
  all_ok &= report("global path reachable", cells.has_value());
  if (!cells.has_value()) {
    return 1;
  }
  WaypointPath wp = prune_waypoints(*cells, grid, sc.robot_radius);
  wp.waypoints.front() = sc.start;
  wp.waypoints.back() = sc.goal;
  all_ok &= report("pruned waypoints sphere-free", [&] {
    for (const Vec3& w : wp.waypoints) {
      if (!is_sphere_free(grid, w, sc.robot_radius)) {
        return false;
      }
    }
    return true;
  }());

  const StaticPlanResult plan =
      plan_static(grid, wp, sc.static_plan, sc.robot_radius);
  all_ok &= report("static plan", plan.ok(),
                   "iterations=" + std::to_string(plan.iterations));
  if (!plan.ok()) {
    std::printf("%s", plan.diagnostics.c_str());
    return 1;
  }
  const PolyTrajectory& traj = *plan.trajectory;

  // waypoint interpolation and derivative continuity
  const std::vector<double> knots =
      allocate_segment_times(wp, sc.static_plan.desired_velocity);
  double wp_err = 0.0;
  for (std::size_t i = 0; i < wp.waypoints.size(); ++i) {
    wp_err = std::max(wp_err,
                      (eval_position(traj, knots[i]) - wp.waypoints[i]).norm());
  }
  all_ok &= report("waypoint interpolation <= 1e-6", wp_err <= 1e-6);
  double cont_err = 0.0;
  for (std::size_t j = 1; j + 1 < knots.size(); ++j) {
    for (int m = 1; m <= 3; ++m) {
      const Vec3 left = eval_derivative(traj, knots[j] - 1e-12, m);
      const Vec3 right = eval_derivative(traj, knots[j], m);
      cont_err = std::max(cont_err, (left - right).norm());
    }
  }
  all_ok &= report("derivative continuity <= 1e-6", cont_err <= 1e-6);

  const SampledTrajectory st = sample_uniform(traj, sc.static_plan.sample_dt);
  all_ok &= report("trajectory collision-free",
                   !first_collision(grid, st, sc.robot_radius).has_value());

  // short closed-loop smoke run
  Scenario smoke = sc;
  smoke.time_budget = std::min(sc.time_budget, 3.0);
  const EpisodeMetrics m = run_episode(smoke, Variant::Proposed, 0);
  all_ok &= report("closed-loop smoke run", !m.collision,
                   "steps=" + std::to_string(static_cast<int>(m.traj_time / sc.mpc.dt)));
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-layer quadrotor planner: minimum-snap static trajectories "
               "with corridor shrinking plus chance-constrained MPC"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::vector<std::string> variants{"proposed"};
  std::vector<double> scales{1.0};
  int seeds = 1;
  int threads = 0;
  std::string out_path;
  std::uint64_t seed = 0;
  std::string variant = "proposed";
  double scale = 1.0;
  std::string static_out;

  CLI::App* plan = app.add_subcommand("plan", "run a metrics batch");
  plan->add_option("--scenario", scenario_path, "scenario file")->required();
  plan->add_option("--variant", variants,
                   "proposed|deterministic|no-temporal-goal (repeatable)");
  plan->add_option("--uncertainty", scales, "uncertainty scales (repeatable)");
  plan->add_option("--seeds", seeds, "seeds per cell");
  plan->add_option("--threads", threads, "worker threads (0 = hardware)");
  plan->add_option("--out", out_path, "metrics CSV path ('-' for stdout)");

  CLI::App* trace = app.add_subcommand("trace", "emit a per-step episode trace");
  trace->add_option("--scenario", scenario_path, "scenario file")->required();
  trace->add_option("--seed", seed, "episode seed");
  trace->add_option("--variant", variant, "episode variant");
  trace->add_option("--uncertainty", scale, "uncertainty scale");
  trace->add_option("--out", out_path, "trace CSV path ('-' for stdout)");
  trace->add_option("--static-out", static_out, "also export the static trajectory CSV");

  CLI::App* check = app.add_subcommand("check", "run the invariant suite on a scenario");
  check->add_option("--scenario", scenario_path, "scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed()) {
      return cmd_plan(scenario_path, variants, scales, seeds, threads, out_path);
    }
    if (trace->parsed()) {
      return cmd_trace(scenario_path, variant, scale, seed, out_path, static_out);
    }
    if (check->parsed()) {
      return cmd_check(scenario_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
