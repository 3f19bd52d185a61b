#pragma once

#include <string>
#include <vector>

#include "dpmpc/mpc.hpp"
#include "dpmpc/occupancy_grid.hpp"
#include "dpmpc/static_planner.hpp"
#include "dpmpc/types.hpp"

namespace dpmpc {

// Scripted ground-truth obstacle: either a constant-speed waypoint loop or a
// constant-velocity drift. Covariances are diagonal, given as variances.
struct ObstacleScript {
  Vec3 initial_position = Vec3::Zero();
  std::vector<Vec3> loop_waypoints;  // empty -> constant-velocity motion
  double speed = 0.0;
  Vec3 velocity = Vec3::Zero();
  Vec3 bbox_half_extents = Vec3::Constant(0.25);
  Vec3 sigma_o = Vec3::Zero();   // true position variance per axis
  Vec3 sigma_ov = Vec3::Zero();  // velocity variance per axis
};

struct Scenario {
  std::string name;
  Vec3 bounds_min = Vec3::Zero();
  Vec3 bounds_max = Vec3::Zero();
  double resolution = 0.2;
  std::vector<StaticBox> boxes;
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  double robot_radius = 0.3;
  double robot_sigma = 0.0;  // isotropic position variance (Sigma_r scale)
  double uncertainty_scale = 1.0;
  double time_budget = 60.0;
  StaticPlanConfig static_plan;
  MpcConfig mpc;
  std::vector<ObstacleScript> obstacles;
};

// Parses and validates a scenario file; throws std::runtime_error with a
// descriptive, field- or line-identified message on any problem.
Scenario load_scenario(const std::string& path);

// Same, from an in-memory document (origin is used in error messages).
Scenario parse_scenario(const std::string& text, const std::string& origin);

// Invariant checks (bounds, start/goal free, config ranges); throws.
void validate_scenario(const Scenario& sc);

}  // namespace dpmpc
