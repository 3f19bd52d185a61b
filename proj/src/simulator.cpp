/*
  simulator.cpp
  -------------
  Closed-loop batch simulator: scripted obstacles with injected measurement
  noise, the two-layer planning pipeline in the loop, metrics collection and
  CSV emission.
*/
#include "dpmpc/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dpmpc/csv_util.hpp"
#include "dpmpc/global_planner.hpp"

namespace dpmpc {

namespace {

constexpr double kGoalTolerance = 0.3;
constexpr double kBrakeTimeConstant = 0.5;  // s, emergency deceleration

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t episode_stream(std::uint64_t seed, Variant variant, double scale) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(variant) + 1));
  h = splitmix64(h ^ std::bit_cast<std::uint64_t>(scale));
  return h;
}

// Deterministic normal sampler (Box-Muller over mt19937_64 bits), so episode
// outcomes do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  Vec3 gaussian3() {
    const double a = gaussian();
    const double b = gaussian();
    const double c = gaussian();
    return Vec3(a, b, c);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Ground-truth obstacle motion.
struct ObstacleSim {
  const ObstacleScript* script = nullptr;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  std::size_t target = 0;

  void init(const ObstacleScript& s) {
    script = &s;
    position = s.initial_position;
    if (s.loop_waypoints.empty()) {
      velocity = s.velocity;
    } else {
      const Vec3 d = s.loop_waypoints[0] - position;
      velocity = d.norm() > 1e-12 ? Vec3(s.speed * d.normalized()) : Vec3::Zero();
    }
  }

  void step(double dt) {
    if (script->loop_waypoints.empty()) {
      position += velocity * dt;
      return;
    }
    double remaining = script->speed * dt;
    std::size_t guard = 0;
    while (remaining > 1e-12 && guard < script->loop_waypoints.size() + 2) {
      const Vec3 to_target = script->loop_waypoints[target] - position;
      const double dist = to_target.norm();
      if (dist <= remaining) {
        position = script->loop_waypoints[target];
        remaining -= dist;
        target = (target + 1) % script->loop_waypoints.size();
        ++guard;
      } else {
        const Vec3 dir = to_target / dist;
        position += remaining * dir;
        velocity = script->speed * dir;
        remaining = 0.0;
      }
    }
  }
};

// Measurement pipeline: noisy position, finite-difference velocity smoothed
// by an exponential moving average (factor 0.5).
struct BeliefTracker {
  bool has_previous = false;
  Vec3 previous = Vec3::Zero();
  Vec3 velocity_estimate = Vec3::Zero();

  DynamicObstacle measure(const ObstacleSim& sim, double scale, double dt,
                          Rng& rng) {
    const Vec3 stddev = (scale * sim.script->sigma_o.array()).sqrt();
    const Vec3 measured = sim.position + Vec3(stddev.array() * rng.gaussian3().array());
    if (has_previous) {
      const Vec3 fd = (measured - previous) / dt;
      velocity_estimate = 0.5 * velocity_estimate + 0.5 * fd;
    }
    previous = measured;
    has_previous = true;

    DynamicObstacle o;
    o.position = measured;
    o.velocity = velocity_estimate;
    o.position_cov = (scale * sim.script->sigma_o).asDiagonal();
    o.velocity_cov = (scale * sim.script->sigma_ov).asDiagonal();
    o.bbox_half_extents = sim.script->bbox_half_extents;
    return o;
  }
};

// Surface distance along the center ray in the planner's ellipsoid metric:
// zero exactly on the inflated surface |p_r - p_o|_Qc = 1.
double surface_distance(const Vec3& robot, const Vec3& obstacle,
                        const Mat3& qc) {
  const Vec3 diff = robot - obstacle;
  const double q = (qc.diagonal().cwiseSqrt().asDiagonal() * diff).norm();
  if (q <= 1.0) {
    return 0.0;
  }
  return (1.0 - 1.0 / q) * diff.norm();
}

double percentile95(std::vector<double> values) {
  if (values.empty()) {
    return 0.0;
  }
  std::sort(values.begin(), values.end());
  const std::size_t idx = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(values.size()))) - 1;
  return values[std::min(idx, values.size() - 1)];
}

TimingStats make_stats(const std::vector<double>& values) {
  TimingStats stats;
  stats.count = static_cast<int>(values.size());
  if (values.empty()) {
    return stats;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  stats.mean_ms = sum / static_cast<double>(values.size());
  stats.p95_ms = percentile95(values);
  return stats;
}

Vec3 braking_jerk(const RobotState& state, const MpcConfig& cfg) {
  const Vec3 a_des = -state.velocity / kBrakeTimeConstant;
  Vec3 u = (a_des - state.acceleration) / cfg.dt;
  return u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Proposed:
      return "proposed";
    case Variant::Deterministic:
      return "deterministic";
    case Variant::NoTemporalGoal:
      return "no-temporal-goal";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "proposed") return Variant::Proposed;
  if (s == "deterministic") return Variant::Deterministic;
  if (s == "no-temporal-goal") return Variant::NoTemporalGoal;
  throw std::invalid_argument("unknown variant: " + s);
}

void TraceWriter::write_csv(std::ostream& out) const {
  const std::size_t n_obs = rows_.empty() ? 0 : rows_.front().obstacle_true.size();
  out << "t,mode,status,px,py,pz,vx,vy,vz,ax,ay,az";
  for (std::size_t i = 0; i < n_obs; ++i) {
    out << ",obs" << i << "_x,obs" << i << "_y,obs" << i << "_z"
        << ",obs" << i << "_mx,obs" << i << "_my,obs" << i << "_mz";
  }
  out << '\n';
  for (const Row& r : rows_) {
    out << format_double(r.t) << ',' << r.mode << ',' << r.status;
    for (int q = 0; q < 3; ++q) out << ',' << format_double(r.robot.position(q));
    for (int q = 0; q < 3; ++q) out << ',' << format_double(r.robot.velocity(q));
    for (int q = 0; q < 3; ++q) out << ',' << format_double(r.robot.acceleration(q));
    for (std::size_t i = 0; i < n_obs; ++i) {
      for (int q = 0; q < 3; ++q) out << ',' << format_double(r.obstacle_true[i](q));
      for (int q = 0; q < 3; ++q) out << ',' << format_double(r.obstacle_measured[i](q));
    }
    out << '\n';
  }
}

EpisodeMetrics run_episode(const Scenario& sc, Variant variant,
                           std::uint64_t seed, TraceWriter* trace) {
  EpisodeMetrics metrics;
  Rng rng(episode_stream(seed, variant, sc.uncertainty_scale));

  const OccupancyGrid grid =
      build_grid(sc.boxes, {sc.bounds_min, sc.bounds_max}, sc.resolution);

  // global waypoint path, snapped to the exact start/goal points
  const auto cells = plan_grid_path(grid, sc.start, sc.goal, sc.robot_radius);
  if (!cells.has_value() || cells->size() < 2) {
    return metrics;  // unreachable goal: failed episode
  }
  WaypointPath wp = prune_waypoints(*cells, grid, sc.robot_radius);
  wp.waypoints.front() = sc.start;
  wp.waypoints.back() = sc.goal;

  const auto t_static0 = std::chrono::steady_clock::now();
  const StaticPlanResult plan =
      plan_static(grid, wp, sc.static_plan, sc.robot_radius);
  metrics.static_layer_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - t_static0)
                                .count();
  if (!plan.ok()) {
    return metrics;  // static layer failed
  }

  MpcConfig mpc_cfg = sc.mpc;
  if (variant == Variant::Deterministic) {
    mpc_cfg.deterministic_constraints = true;
  }
  if (variant == Variant::NoTemporalGoal) {
    mpc_cfg.use_temporal_goal = false;
  }
  ReactivePlanner planner(&grid, *plan.trajectory, mpc_cfg,
                          sc.static_plan.sample_dt);
  const SampledTrajectory& static_samples = planner.sampled_static();

  std::vector<ObstacleSim> sims(sc.obstacles.size());
  std::vector<BeliefTracker> trackers(sc.obstacles.size());
  std::vector<Mat3> true_qc(sc.obstacles.size());
  for (std::size_t i = 0; i < sc.obstacles.size(); ++i) {
    sims[i].init(sc.obstacles[i]);
    true_qc[i] = qc_matrix(sc.robot_radius,
                           ellipsoid_from_bbox(sc.obstacles[i].bbox_half_extents));
  }

  RobotState state;
  state.position = sc.start;
  RobotBelief belief;
  belief.position_cov = sc.robot_sigma * Mat3::Identity();
  belief.radius = sc.robot_radius;

  std::vector<double> track_ms;
  std::vector<double> meet_ms;
  ControlMode previous_mode = ControlMode::Tracking;
  double reference_clock = 0.0;  // progress along the static trajectory
  double t = 0.0;
  const double dt = mpc_cfg.dt;

  const auto a_step = [&](const RobotState& s, const Vec3& u) {
    RobotState n;
    n.position = s.position + dt * s.velocity + 0.5 * dt * dt * s.acceleration +
                 (dt * dt * dt / 6.0) * u;
    n.velocity = s.velocity + dt * s.acceleration + 0.5 * dt * dt * u;
    n.acceleration = s.acceleration + dt * u;
    return n;
  };

  while (t < sc.time_budget) {
    // measure obstacles
    std::vector<DynamicObstacle> beliefs;
    beliefs.reserve(sims.size());
    for (std::size_t i = 0; i < sims.size(); ++i) {
      beliefs.push_back(trackers[i].measure(sims[i], sc.uncertainty_scale, dt, rng));
    }

    // reference clock advances with trajectory progress, never backwards
    const std::size_t near_idx =
        nearest_sample_to_point(static_samples, state.position);
    reference_clock = std::max(reference_clock, static_samples.times[near_idx]);

    belief.state = state;
    const auto solve_t0 = std::chrono::steady_clock::now();
    const ReactivePlanner::Result step =
        planner.plan(belief, reference_clock, beliefs);
    const double solve_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - solve_t0)
                                .count();
    if (step.mode == ControlMode::Avoidance) {
      meet_ms.push_back(solve_ms);
      if (previous_mode == ControlMode::Tracking) {
        ++metrics.avoidance_activations;
      }
    } else {
      track_ms.push_back(solve_ms);
    }
    previous_mode = step.mode;
    if (step.solution.status == MpcStatus::Softened) {
      ++metrics.softened_steps;
    }

    // execute the first committed control, or brake
    Vec3 u;
    if (step.solution.status == MpcStatus::Emergency ||
        step.committed_steps < 1) {
      u = braking_jerk(state, mpc_cfg);
      ++metrics.emergency_steps;
    } else {
      u = step.solution.controls.front();
    }

    if (trace != nullptr) {
      TraceWriter::Row row;
      row.t = t;
      row.mode = step.mode == ControlMode::Avoidance ? 1 : 0;
      row.status = static_cast<int>(step.solution.status);
      row.robot = state;
      for (std::size_t i = 0; i < sims.size(); ++i) {
        row.obstacle_true.push_back(sims[i].position);
        row.obstacle_measured.push_back(beliefs[i].position);
      }
      trace->add(row);
    }

    const RobotState next = a_step(state, u);
    metrics.traj_length += (next.position - state.position).norm();
    state = next;
    for (ObstacleSim& sim : sims) {
      sim.step(dt);
    }
    t += dt;

    // adjudicate on true states
    bool collided = !is_sphere_free(grid, state.position, sc.robot_radius);
    for (std::size_t i = 0; i < sims.size(); ++i) {
      const double d = surface_distance(state.position, sims[i].position, true_qc[i]);
      metrics.d_min = std::min(metrics.d_min, d);
      if (d <= 0.0) {
        collided = true;
      }
    }
    if (collided) {
      metrics.collision = true;
      break;
    }
    if ((state.position - sc.goal).norm() <= kGoalTolerance) {
      metrics.success = true;
      break;
    }
  }
  metrics.traj_time = t;
  if (!metrics.success && !metrics.collision) {
    metrics.timeout = true;
  }
  metrics.mpc_tracking = make_stats(track_ms);
  metrics.mpc_meeting = make_stats(meet_ms);
  return metrics;
}

BatchResult run_batch(const Scenario& sc, const std::vector<Variant>& variants,
                      const std::vector<double>& scales, int n_seeds,
                      int threads) {
  if (n_seeds < 1) {
    throw std::invalid_argument("run_batch: n_seeds must be positive");
  }
  BatchResult result;
  result.variants = variants;
  result.scales = scales;
  result.n_seeds = n_seeds;
  result.rows.resize(variants.size() * scales.size() * n_seeds);

  struct Job {
    std::size_t row;
    Variant variant;
    double scale;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  jobs.reserve(result.rows.size());
  std::size_t row = 0;
  for (Variant v : variants) {
    for (double s : scales) {
      for (int k = 0; k < n_seeds; ++k) {
        jobs.push_back({row++, v, s, static_cast<std::uint64_t>(k)});
      }
    }
  }

  int n_threads = threads > 0
                      ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(jobs.size())));

  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) {
        return;
      }
      const Job& job = jobs[j];
      Scenario cell = sc;
      cell.uncertainty_scale = job.scale;
      BatchRow& out = result.rows[job.row];
      out.variant = job.variant;
      out.uncertainty = job.scale;
      out.seed = job.seed;
      out.metrics = run_episode(cell, job.variant, job.seed);
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int i = 0; i < n_threads; ++i) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) {
      th.join();
    }
  }
  return result;
}

std::vector<Aggregate> aggregate_batch(const BatchResult& batch) {
  std::vector<Aggregate> out;
  for (Variant v : batch.variants) {
    for (double s : batch.scales) {
      Aggregate agg;
      agg.variant = v;
      agg.uncertainty = s;
      int n = 0;
      int n_success = 0;
      double sum_dmin = 0.0, sum_len = 0.0, sum_time = 0.0;
      double sum_static = 0.0, sum_track = 0.0, sum_meet = 0.0;
      for (const BatchRow& row : batch.rows) {
        if (row.variant != v || row.uncertainty != s) {
          continue;
        }
        ++n;
        sum_dmin += row.metrics.d_min;
        sum_static += row.metrics.static_layer_ms;
        sum_track += row.metrics.mpc_tracking.p95_ms;
        sum_meet += row.metrics.mpc_meeting.p95_ms;
        if (row.metrics.success) {
          ++n_success;
          sum_len += row.metrics.traj_length;
          sum_time += row.metrics.traj_time;
        }
      }
      if (n == 0) {
        continue;
      }
      agg.success_rate = static_cast<double>(n_success) / n;
      agg.mean_d_min = sum_dmin / n;
      agg.mean_traj_length =
          n_success > 0 ? sum_len / n_success : std::nan("");
      agg.mean_traj_time =
          n_success > 0 ? sum_time / n_success : std::nan("");
      agg.mean_static_ms = sum_static / n;
      agg.mean_track_p95 = sum_track / n;
      agg.mean_meet_p95 = sum_meet / n;
      out.push_back(agg);
    }
  }
  return out;
}

void write_metrics_csv(const BatchResult& batch, std::ostream& out) {
  out << "variant,uncertainty,seed,success,d_min,traj_length,traj_time,"
         "static_ms,mpc_track_ms_p95,mpc_meet_ms_p95\n";
  for (const BatchRow& row : batch.rows) {
    out << to_string(row.variant) << ',' << format_double(row.uncertainty)
        << ',' << row.seed << ',' << (row.metrics.success ? 1 : 0) << ','
        << format_double(row.metrics.d_min) << ','
        << format_double(row.metrics.traj_length) << ','
        << format_double(row.metrics.traj_time) << ','
        << format_double(row.metrics.static_layer_ms) << ','
        << format_double(row.metrics.mpc_tracking.p95_ms) << ','
        << format_double(row.metrics.mpc_meeting.p95_ms) << '\n';
  }
  for (const Aggregate& agg : aggregate_batch(batch)) {
    out << to_string(agg.variant) << ',' << format_double(agg.uncertainty)
        << ",mean," << format_double(agg.success_rate) << ','
        << format_double(agg.mean_d_min) << ','
        << format_double(agg.mean_traj_length) << ','
        << format_double(agg.mean_traj_time) << ','
        << format_double(agg.mean_static_ms) << ','
        << format_double(agg.mean_track_p95) << ','
        << format_double(agg.mean_meet_p95) << '\n';
  }
}

std::string metrics_csv(const BatchResult& batch) {
  std::ostringstream out;
  write_metrics_csv(batch, out);
  return out.str();
}

}  // namespace dpmpc
