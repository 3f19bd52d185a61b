#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dpmpc/trajectory.hpp"
#include "dpmpc/types.hpp"

namespace dpmpc {

struct StaticBox {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Zero();
};

// Dense axis-aligned voxel grid. Queries outside the stored bounds count as
// occupied. Sphere queries test occupied voxel centers, which is adequate
// when the resolution is well below the query radius (expect +-1 voxel).
class OccupancyGrid {
 public:
  OccupancyGrid(const Vec3& origin, double resolution,
                const Eigen::Vector3i& dims, std::vector<std::uint8_t> cells);

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Eigen::Vector3i& dims() const { return dims_; }
  const std::vector<std::uint8_t>& cells() const { return cells_; }
  std::size_t cell_count() const { return cells_.size(); }

  bool in_bounds(const Vec3& p) const;
  bool valid_cell(const Eigen::Vector3i& c) const;
  Eigen::Vector3i cell_of(const Vec3& p) const;
  Vec3 voxel_center(const Eigen::Vector3i& c) const;
  std::size_t linear_index(const Eigen::Vector3i& c) const;
  Eigen::Vector3i cell_from_index(std::size_t idx) const;

  // Out-of-range cells read as occupied.
  bool occupied(const Eigen::Vector3i& c) const;

 private:
  Vec3 origin_;
  double resolution_;
  Eigen::Vector3i dims_;
  std::vector<std::uint8_t> cells_;
};

OccupancyGrid build_grid(const std::vector<StaticBox>& boxes,
                         const std::pair<Vec3, Vec3>& bounds,
                         double resolution);

// True iff center lies inside the grid bounds and no occupied voxel center
// is within radius of it.
bool is_sphere_free(const OccupancyGrid& grid, const Vec3& center,
                    double radius);

// Smallest sample index whose sphere check fails, or nullopt if all free.
std::optional<std::size_t> first_collision(const OccupancyGrid& grid,
                                           const SampledTrajectory& st,
                                           double radius);

}  // namespace dpmpc
