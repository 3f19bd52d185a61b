/*
  mpc.cpp
  -------
  Chance-constrained MPC with temporal-goal tracking. The dynamics are a
  per-axis triple integrator discretized exactly at dt (state p, v, a; input
  jerk), condensed so every convex subproblem has only the controls as
  decision variables.
*/
#include "dpmpc/mpc.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "dpmpc/qp_solver.hpp"

namespace dpmpc {

namespace {

constexpr int kStateDim = 9;

struct Condensed {
  Eigen::MatrixXd phi;    // 9N x 9
  Eigen::MatrixXd gamma;  // 9N x 3N
};

Eigen::Matrix<double, 9, 9> step_matrix(double dt) {
  Eigen::Matrix<double, 9, 9> a = Eigen::Matrix<double, 9, 9>::Identity();
  a.block<3, 3>(0, 3) = dt * Mat3::Identity();
  a.block<3, 3>(0, 6) = 0.5 * dt * dt * Mat3::Identity();
  a.block<3, 3>(3, 6) = dt * Mat3::Identity();
  return a;
}

Eigen::Matrix<double, 9, 3> input_matrix(double dt) {
  Eigen::Matrix<double, 9, 3> b = Eigen::Matrix<double, 9, 3>::Zero();
  b.block<3, 3>(0, 0) = (dt * dt * dt / 6.0) * Mat3::Identity();
  b.block<3, 3>(3, 0) = (0.5 * dt * dt) * Mat3::Identity();
  b.block<3, 3>(6, 0) = dt * Mat3::Identity();
  return b;
}

Condensed build_condensed(int horizon, double dt) {
  const Eigen::Matrix<double, 9, 9> a = step_matrix(dt);
  const Eigen::Matrix<double, 9, 3> b = input_matrix(dt);
  std::vector<Eigen::Matrix<double, 9, 9>> powers(horizon + 1);
  powers[0].setIdentity();
  for (int i = 1; i <= horizon; ++i) {
    powers[i] = a * powers[i - 1];
  }
  Condensed c;
  c.phi.resize(kStateDim * horizon, kStateDim);
  c.gamma = Eigen::MatrixXd::Zero(kStateDim * horizon, 3 * horizon);
  for (int k = 1; k <= horizon; ++k) {
    c.phi.middleRows(kStateDim * (k - 1), kStateDim) = powers[k];
    for (int j = 1; j <= k; ++j) {
      c.gamma.block(kStateDim * (k - 1), 3 * (j - 1), kStateDim, 3) =
          powers[k - j] * b;
    }
  }
  return c;
}

Eigen::Matrix<double, 9, 1> stack_state(const RobotState& s) {
  Eigen::Matrix<double, 9, 1> x;
  x << s.position, s.velocity, s.acceleration;
  return x;
}

RobotState unstack_state(const Eigen::Ref<const Eigen::VectorXd>& x) {
  RobotState s;
  s.position = x.segment<3>(0);
  s.velocity = x.segment<3>(3);
  s.acceleration = x.segment<3>(6);
  return s;
}

struct ObstacleRow {
  int obstacle = 0;
  int step = 0;  // 1-based horizon step
  Eigen::VectorXd column;
  double ci0 = 0.0;
};

}  // namespace

void MpcConfig::validate() const {
  if (horizon < 2) {
    throw std::invalid_argument("MpcConfig: horizon must be at least 2");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("MpcConfig: dt must be positive");
  }
  if (!(delta > 0.0 && delta <= 0.5)) {
    throw std::invalid_argument("MpcConfig: delta must lie in (0, 0.5]");
  }
  if ((u_min.array() >= u_max.array()).any()) {
    throw std::invalid_argument("MpcConfig: u_min must be below u_max");
  }
  if (w_pos < 0.0 || w_vel < 0.0 || w_acc < 0.0 || !(r_u > 0.0)) {
    throw std::invalid_argument("MpcConfig: weights must be nonnegative, r_u positive");
  }
  const double ratio = static_cast<double>(temporal_split) / horizon;
  if (ratio < 0.25 - 1e-12 || ratio > 0.75 + 1e-12) {
    throw std::invalid_argument("MpcConfig: temporal_split/horizon must lie in [1/4, 3/4]");
  }
  if (scp_iterations < 1) {
    throw std::invalid_argument("MpcConfig: scp_iterations must be positive");
  }
  if (!(soft_penalty > 0.0)) {
    throw std::invalid_argument("MpcConfig: soft_penalty must be positive");
  }
}

bool meets_obstacle(const RobotBelief& rb, const DynamicObstacle& o,
                    double threshold) {
  const Vec3& v = rb.state.velocity;
  if (v.norm() <= 1e-6) {
    return false;
  }
  const Vec3 to_obstacle = o.position - rb.state.position;
  if (to_obstacle.norm() >= threshold) {
    return false;
  }
  return v.dot(to_obstacle) > 0.0;
}

AvoidanceTarget select_avoidance_target(const SampledTrajectory& st,
                                        const Vec3& robot_pos,
                                        const Vec3& obstacle_pos,
                                        double delta_distance) {
  if (st.empty()) {
    throw std::invalid_argument("select_avoidance_target: empty trajectory");
  }
  if (!(delta_distance > 0.0)) {
    throw std::invalid_argument("select_avoidance_target: threshold must be positive");
  }
  const std::size_t last = st.size() - 1;
  const auto tangent = [&](std::size_t i) -> Vec3 {
    if (st.size() < 2) {
      return Vec3::Zero();
    }
    if (i + 1 < st.size()) {
      return st.positions[i + 1] - st.positions[i];
    }
    return st.positions[i] - st.positions[i - 1];
  };
  // moving-away condition: angle between the local tangent and the
  // point->obstacle direction is at least 90 degrees
  const auto moving_away = [&](std::size_t i) {
    const Vec3 tan = tangent(i);
    if (tan.norm() <= 1e-9) {
      return true;  // effectively stationary sample
    }
    return tan.dot(obstacle_pos - st.positions[i]) <= 0.0;
  };

  const std::size_t near_obstacle = nearest_sample_to_point(st, obstacle_pos);
  const std::size_t near_robot = nearest_sample_to_point(st, robot_pos);

  AvoidanceTarget out;
  out.candidate_near = last;
  out.near_exhausted = true;
  for (std::size_t i = near_obstacle; i < st.size(); ++i) {
    if (arc_distance_between(st, near_obstacle, i) >= delta_distance &&
        moving_away(i)) {
      out.candidate_near = i;
      out.near_exhausted = false;
      break;
    }
  }
  out.candidate_robot = last;
  out.robot_exhausted = true;
  for (std::size_t i = near_robot; i < st.size(); ++i) {
    if ((obstacle_pos - st.positions[i]).norm() >= delta_distance &&
        moving_away(i)) {
      out.candidate_robot = i;
      out.robot_exhausted = false;
      break;
    }
  }
  const auto arc_from_robot = [&](std::size_t i) {
    return std::abs(st.cumulative_arc[i] - st.cumulative_arc[near_robot]);
  };
  out.index = arc_from_robot(out.candidate_near) >= arc_from_robot(out.candidate_robot)
                  ? out.candidate_near
                  : out.candidate_robot;
  return out;
}

std::vector<RefState> build_temporal_goal(const PolyTrajectory& traj,
                                          double t_a, const MpcConfig& cfg) {
  if (t_a < traj.start_time() || t_a > traj.end_time()) {
    throw std::out_of_range("build_temporal_goal: t_a outside trajectory domain");
  }
  const int n_repeat = cfg.horizon - cfg.temporal_split;
  std::vector<RefState> out;
  out.reserve(cfg.horizon);
  const RefState hold{eval_position(traj, t_a), Vec3::Zero()};
  for (int k = 1; k <= cfg.horizon; ++k) {
    if (k <= n_repeat) {
      out.push_back(hold);
    } else {
      const double t = std::min(t_a + (k - n_repeat) * cfg.dt, traj.end_time());
      out.push_back({eval_position(traj, t), eval_derivative(traj, t, 1)});
    }
  }
  return out;
}

MpcSolution solve_mpc(const RobotBelief& rb,
                      const std::vector<RefState>& reference,
                      const std::vector<DynamicObstacle>& obstacles,
                      const OccupancyGrid* grid, const MpcConfig& cfg,
                      const std::vector<Vec3>* linearization_hint) {
  (void)grid;
  const auto t_begin = std::chrono::steady_clock::now();
  const int horizon = cfg.horizon;
  if (static_cast<int>(reference.size()) != horizon) {
    throw std::invalid_argument("solve_mpc: reference length must equal the horizon");
  }
  if (!is_finite(rb.state.position) || !is_finite(rb.state.velocity) ||
      !is_finite(rb.state.acceleration)) {
    throw std::invalid_argument("solve_mpc: non-finite robot state");
  }

  const int nu = 3 * horizon;
  const Condensed cd = build_condensed(horizon, cfg.dt);
  const Eigen::Matrix<double, 9, 1> x0 = stack_state(rb.state);
  const Eigen::VectorXd xbar = cd.phi * x0;

  Eigen::VectorXd xref(kStateDim * horizon);
  Eigen::VectorXd wdiag(kStateDim * horizon);
  for (int k = 0; k < horizon; ++k) {
    xref.segment<3>(kStateDim * k + 0) = reference[k].position;
    xref.segment<3>(kStateDim * k + 3) = reference[k].velocity;
    xref.segment<3>(kStateDim * k + 6).setZero();
    wdiag.segment<3>(kStateDim * k + 0).setConstant(cfg.w_pos);
    wdiag.segment<3>(kStateDim * k + 3).setConstant(cfg.w_vel);
    wdiag.segment<3>(kStateDim * k + 6).setConstant(cfg.w_acc);
  }

  const Eigen::MatrixXd w_gamma = wdiag.asDiagonal() * cd.gamma;
  Eigen::MatrixXd g_hard = 2.0 * (cd.gamma.transpose() * w_gamma);
  g_hard.diagonal().array() += 2.0 * cfg.r_u;
  g_hard = 0.5 * (g_hard + g_hard.transpose());
  const Eigen::VectorXd g0_hard =
      2.0 * (w_gamma.transpose() * (xbar - xref));

  // input box bounds
  const int n_bounds = 2 * nu;
  Eigen::MatrixXd ci_bounds = Eigen::MatrixXd::Zero(nu, n_bounds);
  Eigen::VectorXd ci0_bounds(n_bounds);
  for (int t = 0; t < nu; ++t) {
    const int axis = t % 3;
    ci_bounds(t, 2 * t) = 1.0;
    ci0_bounds(2 * t) = -cfg.u_min(axis);
    ci_bounds(t, 2 * t + 1) = -1.0;
    ci0_bounds(2 * t + 1) = cfg.u_max(axis);
  }

  // obstacle geometry and beliefs over the horizon
  const Mat3 zero_cov = Mat3::Zero();
  const Mat3& robot_cov =
      cfg.deterministic_constraints ? zero_cov : rb.position_cov;
  struct ObstacleData {
    Mat3 qc;
    std::vector<PropagatedBelief> beliefs;
  };
  std::vector<ObstacleData> odata;
  odata.reserve(obstacles.size());
  for (const DynamicObstacle& o : obstacles) {
    ObstacleData d;
    d.qc = qc_matrix(rb.radius, ellipsoid_from_bbox(o.bbox_half_extents));
    d.beliefs = propagate_obstacle(o, horizon, cfg.dt);
    odata.push_back(std::move(d));
  }

  std::vector<Vec3> lin_pts(horizon);
  if (linearization_hint != nullptr &&
      static_cast<int>(linearization_hint->size()) == horizon) {
    lin_pts = *linearization_hint;
  } else {
    for (int k = 0; k < horizon; ++k) {
      lin_pts[k] = reference[k].position;
    }
  }

  MpcSolution sol;
  sol.active_obstacles_per_step.assign(horizon, {});
  Eigen::VectorXd u = Eigen::VectorXd::Zero(nu);
  std::vector<ObstacleRow> rows;
  QpSolution qp_sol;
  bool solved = false;
  bool softened = false;

  for (int scp = 0; scp < cfg.scp_iterations; ++scp) {
    sol.scp_iterations_run = scp + 1;
    rows.clear();
    for (std::size_t i = 0; i < odata.size(); ++i) {
      const ObstacleData& od = odata[i];
      for (int k = 1; k <= horizon; ++k) {
        const PropagatedBelief& pb = od.beliefs[k - 1];
        const Vec3 sqrt_qc = od.qc.diagonal().cwiseSqrt();
        const Vec3 diff_t =
            sqrt_qc.asDiagonal() * (lin_pts[k - 1] - pb.mean);
        if (diff_t.norm() < 1e-9) {
          continue;  // degenerate direction; skip this obstacle step
        }
        const Mat3& obst_cov =
            cfg.deterministic_constraints ? zero_cov : pb.cov;
        const Halfspace hs = chance_constraint_halfspace(
            lin_pts[k - 1], robot_cov, pb.mean, obst_cov, od.qc, cfg.delta);
        ObstacleRow row;
        row.obstacle = static_cast<int>(i);
        row.step = k;
        row.column =
            cd.gamma.middleRows(kStateDim * (k - 1), 3).transpose() * hs.normal;
        row.ci0 =
            hs.normal.dot(xbar.segment<3>(kStateDim * (k - 1))) - hs.offset;
        rows.push_back(std::move(row));
      }
    }

    // hard problem
    QpProblem hard;
    hard.G = g_hard;
    hard.g0 = g0_hard;
    hard.CE.resize(nu, 0);
    hard.ce0.resize(0);
    hard.CI.resize(nu, n_bounds + static_cast<int>(rows.size()));
    hard.ci0.resize(n_bounds + static_cast<int>(rows.size()));
    hard.CI.leftCols(n_bounds) = ci_bounds;
    hard.ci0.head(n_bounds) = ci0_bounds;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      hard.CI.col(n_bounds + static_cast<int>(r)) = rows[r].column;
      hard.ci0(n_bounds + static_cast<int>(r)) = rows[r].ci0;
    }

    qp_sol = solve_qp(hard);
    softened = false;
    if (qp_sol.status != QpStatus::Optimal) {
      // soften the obstacle rows with quadratically penalized slacks
      const int ns = static_cast<int>(rows.size());
      const int nv = nu + ns;
      QpProblem soft;
      soft.G = Eigen::MatrixXd::Zero(nv, nv);
      soft.G.topLeftCorner(nu, nu) = g_hard;
      soft.G.bottomRightCorner(ns, ns) =
          2.0 * cfg.soft_penalty * Eigen::MatrixXd::Identity(ns, ns);
      soft.g0 = Eigen::VectorXd::Zero(nv);
      soft.g0.head(nu) = g0_hard;
      soft.CE.resize(nv, 0);
      soft.ce0.resize(0);
      soft.CI = Eigen::MatrixXd::Zero(nv, n_bounds + 2 * ns);
      soft.ci0.resize(n_bounds + 2 * ns);
      soft.CI.topLeftCorner(nu, n_bounds) = ci_bounds;
      soft.ci0.head(n_bounds) = ci0_bounds;
      for (int r = 0; r < ns; ++r) {
        soft.CI.col(n_bounds + r).head(nu) = rows[r].column;
        soft.CI(nu + r, n_bounds + r) = 1.0;  // slack relaxes the half-space
        soft.ci0(n_bounds + r) = rows[r].ci0;
        soft.CI(nu + r, n_bounds + ns + r) = 1.0;  // slack >= 0
        soft.ci0(n_bounds + ns + r) = 0.0;
      }
      const QpSolution soft_sol = solve_qp(soft);
      if (soft_sol.status != QpStatus::Optimal) {
        // irrecoverable: report emergency with a zero-input rollout
        sol.status = MpcStatus::Emergency;
        sol.controls.assign(horizon, Vec3::Zero());
        sol.states.clear();
        RobotState s = rb.state;
        const auto a = step_matrix(cfg.dt);
        for (int k = 0; k < horizon; ++k) {
          const Eigen::Matrix<double, 9, 1> nx = a * stack_state(s);
          s = unstack_state(nx);
          sol.states.push_back(s);
        }
        sol.solve_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t_begin)
                           .count();
        return sol;
      }
      softened = true;
      sol.softened_constraints = 0;
      for (int r = 0; r < ns; ++r) {
        if (soft_sol.x(nu + r) > 1e-6) {
          ++sol.softened_constraints;
        }
      }
      u = soft_sol.x.head(nu);
      qp_sol = soft_sol;
    } else {
      u = qp_sol.x;
    }
    solved = true;

    const Eigen::VectorXd xpred = xbar + cd.gamma * u;
    for (int k = 0; k < horizon; ++k) {
      lin_pts[k] = xpred.segment<3>(kStateDim * k);
    }
  }

  if (!solved) {
    sol.status = MpcStatus::Emergency;
    return sol;
  }

  // roll the dynamics forward for the reported states
  sol.controls.resize(horizon);
  sol.states.resize(horizon);
  {
    const auto a = step_matrix(cfg.dt);
    const auto b = input_matrix(cfg.dt);
    Eigen::Matrix<double, 9, 1> x = x0;
    for (int k = 0; k < horizon; ++k) {
      sol.controls[k] = u.segment<3>(3 * k);
      x = a * x + b * sol.controls[k];
      sol.states[k] = unstack_state(x);
    }
  }
  sol.status = softened ? MpcStatus::Softened : MpcStatus::Optimal;
  sol.objective = qp_sol.objective;
  for (int idx : qp_sol.active_set) {
    if (idx >= n_bounds) {
      const std::size_t r = static_cast<std::size_t>(idx - n_bounds);
      if (r < rows.size()) {
        sol.active_obstacles_per_step[rows[r].step - 1].push_back(rows[r].obstacle);
      }
    }
  }
  sol.solve_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t_begin)
                     .count();
  return sol;
}

ReactivePlanner::ReactivePlanner(const OccupancyGrid* grid,
                                 PolyTrajectory static_traj,
                                 const MpcConfig& cfg, double traj_sample_dt)
    : grid_(grid),
      traj_(std::move(static_traj)),
      sampled_(sample_uniform(traj_, traj_sample_dt)),
      cfg_(cfg) {
  cfg_.validate();
}

ReactivePlanner::Result ReactivePlanner::plan(
    const RobotBelief& rb, double clock,
    const std::vector<DynamicObstacle>& obstacles) {
  const double t = std::clamp(clock, traj_.start_time(), traj_.end_time());

  // meeting condition: nearest obstacle both ahead and within threshold
  const DynamicObstacle* meeting = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const DynamicObstacle& o : obstacles) {
    if (!meets_obstacle(rb, o, cfg_.meet_distance)) {
      continue;
    }
    const double dist = (o.position - rb.state.position).norm();
    if (dist < best_dist) {
      best_dist = dist;
      meeting = &o;
    }
  }

  Result res;
  res.mode = meeting != nullptr ? ControlMode::Avoidance : ControlMode::Tracking;

  std::vector<RefState> reference;
  if (meeting != nullptr && cfg_.use_temporal_goal) {
    res.target = select_avoidance_target(sampled_, rb.state.position,
                                         meeting->position, cfg_.avoid_distance);
    const double t_a = sampled_.times[res.target->index];
    reference = build_temporal_goal(traj_, t_a, cfg_);
  } else {
    reference.reserve(cfg_.horizon);
    for (int k = 1; k <= cfg_.horizon; ++k) {
      const double tq = std::min(t + k * cfg_.dt, traj_.end_time());
      reference.push_back({eval_position(traj_, tq), eval_derivative(traj_, tq, 1)});
    }
  }

  std::vector<Vec3> hint;
  const std::vector<Vec3>* hint_ptr = nullptr;
  if (previous_.has_value()) {
    hint.reserve(cfg_.horizon);
    for (int k = 0; k < cfg_.horizon; ++k) {
      const int src = std::min(k + 1, cfg_.horizon - 1);
      hint.push_back(previous_->states[src].position);
    }
    hint_ptr = &hint;
  }

  res.solution = solve_mpc(rb, reference, obstacles, grid_, cfg_, hint_ptr);

  // commit only the collision-free part of the reactive trajectory
  res.committed_steps = cfg_.horizon;
  if (grid_ != nullptr && !res.solution.states.empty()) {
    std::vector<double> times;
    std::vector<Vec3> positions;
    times.reserve(res.solution.states.size());
    positions.reserve(res.solution.states.size());
    for (std::size_t k = 0; k < res.solution.states.size(); ++k) {
      times.push_back(t + (static_cast<double>(k) + 1.0) * cfg_.dt);
      positions.push_back(res.solution.states[k].position);
    }
    const auto st = SampledTrajectory::from_positions(std::move(times),
                                                      std::move(positions));
    const auto hit = first_collision(*grid_, st, rb.radius);
    if (hit.has_value()) {
      res.committed_steps = static_cast<int>(*hit);
    }
  }

  previous_ = res.solution;
  return res;
}

}  // namespace dpmpc
