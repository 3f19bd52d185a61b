/*
  static_planner.cpp
  ------------------
  Minimum-snap trajectory optimization through corridor constraints with the
  iterative corridor shrinking loop.

  The QP decision vector holds per-segment monomial coefficients on
  normalized time s = (t - t_n) / T_n. Solutions are rescaled to
  segment-local time before being returned as a PolyTrajectory.
*/
#include "dpmpc/static_planner.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dpmpc {

namespace {

constexpr double kMinSegmentDuration = 0.1;

double falling_factorial(int i, int m) {
  double f = 1.0;
  for (int j = 0; j < m; ++j) {
    f *= static_cast<double>(i - j);
  }
  return f;
}

// index of the coefficient i of axis a in segment n
int coeff_index(int segment, int axis, int i, int n_coeffs) {
  return (segment * 3 + axis) * n_coeffs + i;
}

// segment containing time t; ties resolve to the later segment
int segment_of_time(const std::vector<double>& knots, double t) {
  const int n_seg = static_cast<int>(knots.size()) - 1;
  int seg = n_seg - 1;
  for (int n = 0; n < n_seg; ++n) {
    if (t < knots[n + 1]) {
      seg = n;
      break;
    }
  }
  return seg;
}

}  // namespace

void StaticPlanConfig::validate() const {
  if (degree < 4) {
    throw std::invalid_argument("StaticPlanConfig: degree must be at least 4");
  }
  if (deriv_order < 1 || 2 * deriv_order > degree + 1) {
    throw std::invalid_argument("StaticPlanConfig: requires 2k <= d+1");
  }
  if (regularization < 0.0) {
    throw std::invalid_argument("StaticPlanConfig: negative regularization");
  }
  if (!(desired_velocity > 0.0)) {
    throw std::invalid_argument("StaticPlanConfig: desired_velocity must be positive");
  }
  if (!(initial_corridor > 0.0)) {
    throw std::invalid_argument("StaticPlanConfig: initial_corridor must be positive");
  }
  if (shrink_factor < 0.5 || shrink_factor >= 1.0) {
    throw std::invalid_argument("StaticPlanConfig: shrink_factor must lie in [0.5, 1)");
  }
  if (!(sample_dt > 0.0)) {
    throw std::invalid_argument("StaticPlanConfig: sample_dt must be positive");
  }
  if (max_iterations < 1) {
    throw std::invalid_argument("StaticPlanConfig: max_iterations must be positive");
  }
}

std::vector<double> allocate_segment_times(const WaypointPath& wp,
                                           double desired_velocity) {
  if (!(desired_velocity > 0.0)) {
    throw std::invalid_argument("allocate_segment_times: velocity must be positive");
  }
  if (wp.waypoints.size() < 2) {
    throw std::invalid_argument("allocate_segment_times: need at least two waypoints");
  }
  std::vector<double> knots;
  knots.reserve(wp.waypoints.size());
  knots.push_back(0.0);
  for (std::size_t i = 0; i + 1 < wp.waypoints.size(); ++i) {
    const double dist = (wp.waypoints[i + 1] - wp.waypoints[i]).norm();
    knots.push_back(knots.back() +
                    std::max(dist / desired_velocity, kMinSegmentDuration));
  }
  return knots;
}

Eigen::MatrixXd snap_cost_block(double duration, int degree, int deriv_order) {
  if (!(duration > 0.0)) {
    throw std::invalid_argument("snap_cost_block: duration must be positive");
  }
  const int nc = degree + 1;
  const int k = deriv_order;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(nc, nc);
  for (int i = k; i <= degree; ++i) {
    for (int j = k; j <= degree; ++j) {
      const int pw = i + j - 2 * k + 1;
      q(i, j) = falling_factorial(i, k) * falling_factorial(j, k) *
                std::pow(duration, pw) / static_cast<double>(pw);
    }
  }
  return q;
}

CorridorConstraintSet make_corridor(const WaypointPath& wp,
                                    const std::vector<double>& knots,
                                    double sample_dt, double half_width) {
  if (knots.size() != wp.waypoints.size()) {
    throw std::invalid_argument("make_corridor: knot/waypoint count mismatch");
  }
  CorridorConstraintSet out;
  for (double t : uniform_sample_times(knots.front(), knots.back(), sample_dt)) {
    const int n = segment_of_time(knots, t);
    const double span = knots[n + 1] - knots[n];
    const double u = (t - knots[n]) / span;
    CorridorSample cs;
    cs.t = t;
    cs.interp_point =
        (1.0 - u) * wp.waypoints[n] + u * wp.waypoints[n + 1];
    cs.half_width = half_width;
    out.push_back(cs);
  }
  return out;
}

QpProblem build_minsnap_qp(const WaypointPath& wp,
                           const std::vector<double>& knots,
                           const StaticPlanConfig& cfg,
                           const CorridorConstraintSet& corridor) {
  cfg.validate();
  const int n_seg = static_cast<int>(wp.waypoints.size()) - 1;
  if (n_seg < 1) {
    throw std::invalid_argument("build_minsnap_qp: need at least two waypoints");
  }
  if (knots.size() != wp.waypoints.size()) {
    throw std::invalid_argument("build_minsnap_qp: knot count mismatch");
  }
  for (int n = 0; n < n_seg; ++n) {
    if (!(knots[n + 1] > knots[n])) {
      throw std::invalid_argument("build_minsnap_qp: knots must increase");
    }
  }
  if (!corridor.empty()) {
    const std::vector<double> expected =
        uniform_sample_times(knots.front(), knots.back(), cfg.sample_dt);
    if (corridor.size() != expected.size()) {
      throw std::invalid_argument("build_minsnap_qp: corridor sample count mismatch");
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (std::abs(corridor[i].t - expected[i]) > 1e-9) {
        throw std::invalid_argument("build_minsnap_qp: corridor sample times mismatch");
      }
    }
  }

  const int d = cfg.degree;
  const int k = cfg.deriv_order;
  const int nc = d + 1;
  const int nv = 3 * n_seg * nc;

  QpProblem prob;
  prob.G = Eigen::MatrixXd::Zero(nv, nv);
  prob.g0 = Eigen::VectorXd::Zero(nv);

  // Snap cost on normalized time: Q_unit scaled by T^(1-2k) per segment.
  const Eigen::MatrixXd q_unit = snap_cost_block(1.0, d, k);
  for (int n = 0; n < n_seg; ++n) {
    const double span = knots[n + 1] - knots[n];
    const Eigen::MatrixXd q = q_unit * std::pow(span, 1 - 2 * k);
    for (int axis = 0; axis < 3; ++axis) {
      const int base = coeff_index(n, axis, 0, nc);
      prob.G.block(base, base, nc, nc) += q;
    }
  }
  prob.G.diagonal().array() += cfg.regularization;

  // equality constraints: waypoint interpolation, continuity, rest boundary
  const int boundary_orders = 3;  // zero velocity/acceleration/jerk at ends
  const int p_eq =
      3 * (2 * n_seg + (k - 1) * (n_seg - 1) + 2 * boundary_orders);
  prob.CE = Eigen::MatrixXd::Zero(nv, p_eq);
  prob.ce0 = Eigen::VectorXd::Zero(p_eq);
  int col = 0;

  for (int n = 0; n < n_seg; ++n) {
    const double span = knots[n + 1] - knots[n];
    (void)span;
    for (int axis = 0; axis < 3; ++axis) {
      // start of segment: s = 0
      prob.CE(coeff_index(n, axis, 0, nc), col) = 1.0;
      prob.ce0(col) = -wp.waypoints[n](axis);
      ++col;
      // end of segment: s = 1
      for (int i = 0; i < nc; ++i) {
        prob.CE(coeff_index(n, axis, i, nc), col) = 1.0;
      }
      prob.ce0(col) = -wp.waypoints[n + 1](axis);
      ++col;
    }
  }
  // derivative continuity at interior knots, orders 1..k-1
  for (int j = 1; j < n_seg; ++j) {
    const double t_left = knots[j] - knots[j - 1];
    const double t_right = knots[j + 1] - knots[j];
    for (int m = 1; m <= k - 1; ++m) {
      const double left_scale = 1.0 / std::pow(t_left, m);
      const double right_scale = 1.0 / std::pow(t_right, m);
      for (int axis = 0; axis < 3; ++axis) {
        for (int i = m; i < nc; ++i) {
          prob.CE(coeff_index(j - 1, axis, i, nc), col) =
              falling_factorial(i, m) * left_scale;
        }
        prob.CE(coeff_index(j, axis, m, nc), col) -=
            falling_factorial(m, m) * right_scale;
        ++col;
      }
    }
  }
  // rest boundary conditions
  for (int m = 1; m <= boundary_orders; ++m) {
    for (int axis = 0; axis < 3; ++axis) {
      prob.CE(coeff_index(0, axis, m, nc), col) = 1.0;
      ++col;
      for (int i = m; i < nc; ++i) {
        prob.CE(coeff_index(n_seg - 1, axis, i, nc), col) =
            falling_factorial(i, m);
      }
      ++col;
    }
  }

  // corridor box inequalities, two per axis per sample
  int n_ineq = 0;
  for (const CorridorSample& cs : corridor) {
    if (std::isfinite(cs.half_width)) {
      n_ineq += 6;
    }
  }
  prob.CI = Eigen::MatrixXd::Zero(nv, n_ineq);
  prob.ci0 = Eigen::VectorXd::Zero(n_ineq);
  int icol = 0;
  for (const CorridorSample& cs : corridor) {
    if (!std::isfinite(cs.half_width)) {
      continue;
    }
    const int n = segment_of_time(knots, cs.t);
    const double span = knots[n + 1] - knots[n];
    const double s = (cs.t - knots[n]) / span;
    Eigen::VectorXd powers(nc);
    double sp = 1.0;
    for (int i = 0; i < nc; ++i) {
      powers(i) = sp;
      sp *= s;
    }
    for (int axis = 0; axis < 3; ++axis) {
      // sigma(t_s) >= P_ip - C
      for (int i = 0; i < nc; ++i) {
        prob.CI(coeff_index(n, axis, i, nc), icol) = powers(i);
      }
      prob.ci0(icol) = cs.half_width - cs.interp_point(axis);
      ++icol;
      // sigma(t_s) <= P_ip + C
      for (int i = 0; i < nc; ++i) {
        prob.CI(coeff_index(n, axis, i, nc), icol) = -powers(i);
      }
      prob.ci0(icol) = cs.half_width + cs.interp_point(axis);
      ++icol;
    }
  }
  return prob;
}

PolyTrajectory trajectory_from_solution(const Eigen::VectorXd& x,
                                        const std::vector<double>& knots,
                                        int degree) {
  const int nc = degree + 1;
  const int n_seg = static_cast<int>(knots.size()) - 1;
  if (x.size() != 3 * n_seg * nc) {
    throw std::invalid_argument("trajectory_from_solution: size mismatch");
  }
  std::vector<PolySegment> segments;
  segments.reserve(n_seg);
  for (int n = 0; n < n_seg; ++n) {
    const double span = knots[n + 1] - knots[n];
    Eigen::VectorXd cx(nc), cy(nc), cz(nc);
    double scale = 1.0;
    for (int i = 0; i < nc; ++i) {
      cx(i) = x(coeff_index(n, 0, i, nc)) / scale;
      cy(i) = x(coeff_index(n, 1, i, nc)) / scale;
      cz(i) = x(coeff_index(n, 2, i, nc)) / scale;
      scale *= span;
    }
    segments.emplace_back(std::move(cx), std::move(cy), std::move(cz),
                          knots[n], knots[n + 1]);
  }
  return PolyTrajectory(std::move(segments));
}

StaticPlanResult plan_static(const OccupancyGrid& grid, const WaypointPath& wp,
                             const StaticPlanConfig& cfg, double radius) {
  cfg.validate();
  for (const Vec3& w : wp.waypoints) {
    if (!is_sphere_free(grid, w, radius)) {
      throw std::invalid_argument("plan_static: waypoint is not sphere-free");
    }
  }
  const std::vector<double> knots =
      allocate_segment_times(wp, cfg.desired_velocity);

  StaticPlanResult res;
  std::ostringstream log;
  double corridor_width = cfg.initial_corridor;
  bool structural_checked = false;

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    res.iterations = iter;
    const CorridorConstraintSet corridor =
        make_corridor(wp, knots, cfg.sample_dt, corridor_width);
    const QpSolution sol = solve_qp(build_minsnap_qp(wp, knots, cfg, corridor));
    if (sol.status != QpStatus::Optimal) {
      if (!structural_checked) {
        structural_checked = true;
        const QpSolution base = solve_qp(build_minsnap_qp(wp, knots, cfg, {}));
        if (base.status != QpStatus::Optimal) {
          res.status = StaticPlanStatus::QpFailure;
          log << "iteration " << iter
              << ": QP infeasible without corridor constraints\n";
          res.diagnostics = log.str();
          return res;
        }
      }
      // infeasibility caused by the corridor bounds counts as a collision
      log << "iteration " << iter << ": corridor " << corridor_width
          << " infeasible\n";
      corridor_width *= cfg.shrink_factor;
      continue;
    }
    PolyTrajectory traj = trajectory_from_solution(sol.x, knots, cfg.degree);
    const SampledTrajectory st = sample_uniform(traj, cfg.sample_dt);
    const auto hit = first_collision(grid, st, radius);
    res.trajectory = std::move(traj);
    res.final_corridor = corridor_width;
    if (!hit.has_value()) {
      res.status = StaticPlanStatus::Success;
      log << "iteration " << iter << ": collision-free at corridor "
          << corridor_width << "\n";
      res.diagnostics = log.str();
      return res;
    }
    log << "iteration " << iter << ": collision at sample " << *hit
        << ", corridor " << corridor_width << "\n";
    corridor_width *= cfg.shrink_factor;
  }
  res.status = StaticPlanStatus::MaxIterationsExceeded;
  log << "gave up after " << cfg.max_iterations << " iterations\n";
  res.diagnostics = log.str();
  return res;
}

}  // namespace dpmpc
