/*
  global_planner.cpp
  ------------------
  High-level collision-free waypoint path on the occupancy grid.
*/
#include "dpmpc/global_planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace dpmpc {

namespace {

struct Neighbor {
  Eigen::Vector3i offset;
  double cost;  // in voxels, scaled by resolution later
};

std::vector<Neighbor> make_neighbors() {
  std::vector<Neighbor> out;
  out.reserve(26);
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) {
          continue;
        }
        out.push_back({Eigen::Vector3i(dx, dy, dz),
                       std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz))});
      }
    }
  }
  return out;
}

}  // namespace

std::optional<std::vector<Vec3>> plan_grid_path(const OccupancyGrid& grid,
                                                const Vec3& start,
                                                const Vec3& goal,
                                                double radius) {
  if (!is_sphere_free(grid, start, radius)) {
    throw std::invalid_argument("plan_grid_path: start is not sphere-free");
  }
  if (!is_sphere_free(grid, goal, radius)) {
    throw std::invalid_argument("plan_grid_path: goal is not sphere-free");
  }
  const Eigen::Vector3i start_cell = grid.cell_of(start);
  const Eigen::Vector3i goal_cell = grid.cell_of(goal);
  const std::size_t n = grid.cell_count();

  // sphere-inflated free mask over voxel centers
  std::vector<std::uint8_t> free_mask(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    free_mask[i] =
        is_sphere_free(grid, grid.voxel_center(grid.cell_from_index(i)), radius)
            ? 1
            : 0;
  }
  const std::size_t start_idx = grid.linear_index(start_cell);
  const std::size_t goal_idx = grid.linear_index(goal_cell);
  // the cells holding sphere-free start/goal points are treated as free even
  // if their centers sit slightly too close to an obstacle
  free_mask[start_idx] = 1;
  free_mask[goal_idx] = 1;

  if (start_idx == goal_idx) {
    return std::vector<Vec3>{grid.voxel_center(start_cell)};
  }

  static const std::vector<Neighbor> neighbors = make_neighbors();
  const double res = grid.resolution();
  const Vec3 goal_center = grid.voxel_center(goal_cell);

  std::vector<double> g(n, std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> parent(n, -1);
  using Entry = std::tuple<double, double, std::size_t>;  // f, h, index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;

  const double h0 = (grid.voxel_center(start_cell) - goal_center).norm();
  g[start_idx] = 0.0;
  open.emplace(h0, h0, start_idx);

  while (!open.empty()) {
    const auto [f, h, idx] = open.top();
    open.pop();
    const double g_here = f - h;
    if (g_here > g[idx] + 1e-12) {
      continue;  // stale entry
    }
    if (idx == goal_idx) {
      std::vector<Vec3> path;
      std::int64_t cur = static_cast<std::int64_t>(idx);
      while (cur >= 0) {
        path.push_back(grid.voxel_center(grid.cell_from_index(static_cast<std::size_t>(cur))));
        cur = parent[static_cast<std::size_t>(cur)];
      }
      std::reverse(path.begin(), path.end());
      return path;
    }
    const Eigen::Vector3i cell = grid.cell_from_index(idx);
    for (const Neighbor& nb : neighbors) {
      const Eigen::Vector3i nc = cell + nb.offset;
      if (!grid.valid_cell(nc)) {
        continue;
      }
      const std::size_t nidx = grid.linear_index(nc);
      if (!free_mask[nidx]) {
        continue;
      }
      const double cand = g[idx] + res * nb.cost;
      if (cand < g[nidx] - 1e-12) {
        g[nidx] = cand;
        parent[nidx] = static_cast<std::int64_t>(idx);
        const double nh = (grid.voxel_center(nc) - goal_center).norm();
        open.emplace(cand + nh, nh, nidx);
      }
    }
  }
  return std::nullopt;  // goal unreachable
}

bool segment_sphere_free(const OccupancyGrid& grid, const Vec3& a,
                         const Vec3& b, double radius) {
  const double step = 0.5 * grid.resolution();
  const double len = (b - a).norm();
  const int n_steps = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n_steps; ++i) {
    const double s = static_cast<double>(i) / n_steps;
    if (!is_sphere_free(grid, a + s * (b - a), radius)) {
      return false;
    }
  }
  return true;
}

WaypointPath prune_waypoints(const std::vector<Vec3>& path,
                             const OccupancyGrid& grid, double radius) {
  if (path.size() < 2) {
    throw std::invalid_argument("prune_waypoints: need at least two points");
  }
  WaypointPath out;
  out.waypoints.push_back(path.front());
  std::size_t i = 0;
  while (i + 1 < path.size()) {
    std::size_t j = i + 1;
    for (std::size_t k = path.size() - 1; k > i + 1; --k) {
      if (segment_sphere_free(grid, path[i], path[k], radius)) {
        j = k;
        break;
      }
    }
    out.waypoints.push_back(path[j]);
    i = j;
  }
  return out;
}

}  // namespace dpmpc
