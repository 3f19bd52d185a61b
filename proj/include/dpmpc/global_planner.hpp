#pragma once

#include <optional>
#include <vector>

#include "dpmpc/occupancy_grid.hpp"
#include "dpmpc/types.hpp"

namespace dpmpc {

struct WaypointPath {
  std::vector<Vec3> waypoints;
};

// A* over 26-connected voxel centers with sphere-inflated occupancy and
// Euclidean edge costs. Returns the voxel-center path from the start cell to
// the goal cell, or nullopt when the goal is unreachable. Throws
// std::invalid_argument when start or goal is not sphere-free.
std::optional<std::vector<Vec3>> plan_grid_path(const OccupancyGrid& grid,
                                                const Vec3& start,
                                                const Vec3& goal,
                                                double radius);

// Greedy line-of-sight shortcutting: each kept waypoint connects to the
// farthest successor whose straight segment passes the swept-sphere check
// sampled at half the grid resolution. Endpoints are always kept.
WaypointPath prune_waypoints(const std::vector<Vec3>& path,
                             const OccupancyGrid& grid, double radius);

// Swept-sphere segment check used by the pruner.
bool segment_sphere_free(const OccupancyGrid& grid, const Vec3& a,
                         const Vec3& b, double radius);

}  // namespace dpmpc
