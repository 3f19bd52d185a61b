#include "dpmpc/occupancy_grid.hpp"

#include <cmath>
#include <stdexcept>

namespace dpmpc {

namespace {
// Slack on the radius comparison so queries at exact voxel-center distance
// count as occupied despite rounding.
constexpr double kRadiusSlack = 1e-9;
}  // namespace

OccupancyGrid::OccupancyGrid(const Vec3& origin, double resolution,
                             const Eigen::Vector3i& dims,
                             std::vector<std::uint8_t> cells)
    : origin_(origin), resolution_(resolution), dims_(dims),
      cells_(std::move(cells)) {
  if (!(resolution_ > 0.0)) {
    throw std::invalid_argument("OccupancyGrid: resolution must be positive");
  }
  if (dims_.minCoeff() < 1) {
    throw std::invalid_argument("OccupancyGrid: dims must be at least 1");
  }
  const auto expected = static_cast<std::size_t>(dims_.x()) *
                        static_cast<std::size_t>(dims_.y()) *
                        static_cast<std::size_t>(dims_.z());
  if (cells_.size() != expected) {
    throw std::invalid_argument("OccupancyGrid: cell array size mismatch");
  }
}

bool OccupancyGrid::in_bounds(const Vec3& p) const {
  for (int q = 0; q < 3; ++q) {
    if (p(q) < origin_(q) || p(q) >= origin_(q) + resolution_ * dims_(q)) {
      return false;
    }
  }
  return true;
}

bool OccupancyGrid::valid_cell(const Eigen::Vector3i& c) const {
  return c.x() >= 0 && c.y() >= 0 && c.z() >= 0 && c.x() < dims_.x() &&
         c.y() < dims_.y() && c.z() < dims_.z();
}

Eigen::Vector3i OccupancyGrid::cell_of(const Vec3& p) const {
  Eigen::Vector3i c;
  for (int q = 0; q < 3; ++q) {
    c(q) = static_cast<int>(std::floor((p(q) - origin_(q)) / resolution_));
  }
  return c;
}

Vec3 OccupancyGrid::voxel_center(const Eigen::Vector3i& c) const {
  return origin_ + resolution_ * (c.cast<double>() + Vec3::Constant(0.5));
}

std::size_t OccupancyGrid::linear_index(const Eigen::Vector3i& c) const {
  return static_cast<std::size_t>(c.x()) +
         static_cast<std::size_t>(dims_.x()) *
             (static_cast<std::size_t>(c.y()) +
              static_cast<std::size_t>(dims_.y()) *
                  static_cast<std::size_t>(c.z()));
}

Eigen::Vector3i OccupancyGrid::cell_from_index(std::size_t idx) const {
  const auto nx = static_cast<std::size_t>(dims_.x());
  const auto ny = static_cast<std::size_t>(dims_.y());
  Eigen::Vector3i c;
  c.x() = static_cast<int>(idx % nx);
  c.y() = static_cast<int>((idx / nx) % ny);
  c.z() = static_cast<int>(idx / (nx * ny));
  return c;
}

bool OccupancyGrid::occupied(const Eigen::Vector3i& c) const {
  if (!valid_cell(c)) {
    return true;
  }
  return cells_[linear_index(c)] != 0;
}

OccupancyGrid build_grid(const std::vector<StaticBox>& boxes,
                         const std::pair<Vec3, Vec3>& bounds,
                         double resolution) {
  const Vec3& lo = bounds.first;
  const Vec3& hi = bounds.second;
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("build_grid: resolution must be positive");
  }
  if (!(lo.x() < hi.x() && lo.y() < hi.y() && lo.z() < hi.z())) {
    throw std::invalid_argument("build_grid: empty bounds");
  }
  Eigen::Vector3i dims;
  for (int q = 0; q < 3; ++q) {
    dims(q) = std::max(1, static_cast<int>(std::ceil((hi(q) - lo(q)) / resolution - 1e-9)));
  }
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z(), 0);

  OccupancyGrid grid(lo, resolution, dims, std::move(cells));
  std::vector<std::uint8_t> filled(grid.cell_count(), 0);
  for (const StaticBox& box : boxes) {
    // voxel index range overlapping the box
    Eigen::Vector3i lo_c = grid.cell_of(box.center - box.half_extents);
    Eigen::Vector3i hi_c = grid.cell_of(box.center + box.half_extents);
    for (int q = 0; q < 3; ++q) {
      lo_c(q) = std::max(lo_c(q), 0);
      hi_c(q) = std::min(hi_c(q), dims(q) - 1);
    }
    for (int z = lo_c.z(); z <= hi_c.z(); ++z) {
      for (int y = lo_c.y(); y <= hi_c.y(); ++y) {
        for (int x = lo_c.x(); x <= hi_c.x(); ++x) {
          const Eigen::Vector3i c(x, y, z);
          const Vec3 center = grid.voxel_center(c);
          const Vec3 d = (center - box.center).cwiseAbs();
          if (d.x() <= box.half_extents.x() && d.y() <= box.half_extents.y() &&
              d.z() <= box.half_extents.z()) {
            filled[grid.linear_index(c)] = 1;
          }
        }
      }
    }
  }
  return OccupancyGrid(lo, resolution, dims, std::move(filled));
}

bool is_sphere_free(const OccupancyGrid& grid, const Vec3& center,
                    double radius) {
  if (radius < 0.0) {
    throw std::invalid_argument("is_sphere_free: negative radius");
  }
  if (!grid.in_bounds(center)) {
    return false;
  }
  const double r = radius + kRadiusSlack;
  const double r_sq = r * r;
  Eigen::Vector3i lo_c = grid.cell_of(center - Vec3::Constant(radius));
  Eigen::Vector3i hi_c = grid.cell_of(center + Vec3::Constant(radius));
  for (int q = 0; q < 3; ++q) {
    lo_c(q) = std::max(lo_c(q), 0);
    hi_c(q) = std::min(hi_c(q), grid.dims()(q) - 1);
  }
  for (int z = lo_c.z(); z <= hi_c.z(); ++z) {
    for (int y = lo_c.y(); y <= hi_c.y(); ++y) {
      for (int x = lo_c.x(); x <= hi_c.x(); ++x) {
        const Eigen::Vector3i c(x, y, z);
        if (!grid.occupied(c)) {
          continue;
        }
        if ((grid.voxel_center(c) - center).squaredNorm() <= r_sq) {
          return false;
        }
      }
    }
  }
  return true;
}

std::optional<std::size_t> first_collision(const OccupancyGrid& grid,
                                           const SampledTrajectory& st,
                                           double radius) {
  if (st.empty()) {
    throw std::invalid_argument("first_collision: empty trajectory");
  }
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (!is_sphere_free(grid, st.positions[i], radius)) {
      return i;
    }
  }
  return std::nullopt;
}

}  // namespace dpmpc
