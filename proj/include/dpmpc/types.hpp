#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace dpmpc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

// Triple-integrator robot state shared by the MPC and the simulator.
struct RobotState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

}  // namespace dpmpc
