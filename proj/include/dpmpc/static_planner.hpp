#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dpmpc/global_planner.hpp"
#include "dpmpc/occupancy_grid.hpp"
#include "dpmpc/qp_solver.hpp"
#include "dpmpc/trajectory.hpp"

namespace dpmpc {

struct StaticPlanConfig {
  int degree = 7;               // polynomial degree d
  int deriv_order = 4;          // k, minimized derivative (4 = snap)
  double regularization = 1e-6; // eta
  double desired_velocity = 1.5;
  double initial_corridor = 0.5;  // corridor half-width (m)
  double shrink_factor = 0.9;     // alpha in [0.5, 1)
  double sample_dt = 0.25;        // corridor/collision sample spacing (s)
  int max_iterations = 15;

  void validate() const;  // throws std::invalid_argument on bad ranges
};

struct CorridorSample {
  double t = 0.0;
  Vec3 interp_point = Vec3::Zero();  // P_ip on the waypoint chord
  double half_width = 0.0;
};
using CorridorConstraintSet = std::vector<CorridorSample>;

// Knot times: t0 = 0, per-segment duration = max(dist / desired_velocity, 0.1 s).
std::vector<double> allocate_segment_times(const WaypointPath& wp,
                                           double desired_velocity);

// Q[i][j] = integral_0^T d^k(t^i)/dt^k * d^k(t^j)/dt^k dt for i,j >= k, else 0.
Eigen::MatrixXd snap_cost_block(double duration, int degree, int deriv_order);

// Corridor samples at sample_dt spacing over [t0, tN]; the interpolation
// point lies on the chord between the waypoints bounding each sample time.
CorridorConstraintSet make_corridor(const WaypointPath& wp,
                                    const std::vector<double>& knots,
                                    double sample_dt, double half_width);

// Assembles the full minimum-snap QP over all segment coefficients (3 axes),
// in per-segment normalized time for conditioning. An empty corridor set
// drops the box inequality constraints entirely.
QpProblem build_minsnap_qp(const WaypointPath& wp,
                           const std::vector<double>& knots,
                           const StaticPlanConfig& cfg,
                           const CorridorConstraintSet& corridor);

// Converts a QP solution vector into a trajectory in segment-local time.
PolyTrajectory trajectory_from_solution(const Eigen::VectorXd& x,
                                        const std::vector<double>& knots,
                                        int degree);

enum class StaticPlanStatus { Success, MaxIterationsExceeded, QpFailure };

struct StaticPlanResult {
  StaticPlanStatus status = StaticPlanStatus::QpFailure;
  std::optional<PolyTrajectory> trajectory;  // accepted, or last iterate
  int iterations = 0;
  double final_corridor = 0.0;  // half-width used by the returned iterate
  std::string diagnostics;

  bool ok() const { return status == StaticPlanStatus::Success; }
};

// Iterative corridor shrinking: solve, collision-check at sample_dt, shrink
// the corridor by alpha on collision, repeat.
StaticPlanResult plan_static(const OccupancyGrid& grid, const WaypointPath& wp,
                             const StaticPlanConfig& cfg, double radius);

}  // namespace dpmpc
