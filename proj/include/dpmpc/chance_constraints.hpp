#pragma once

#include <vector>

#include "dpmpc/types.hpp"

namespace dpmpc {

struct EllipsoidShape {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

// Obstacle belief: mean position/velocity, covariances, bounding box.
struct DynamicObstacle {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Mat3 position_cov = Mat3::Zero();
  Mat3 velocity_cov = Mat3::Zero();
  Vec3 bbox_half_extents = Vec3::Zero();
};

struct PropagatedBelief {
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Zero();
};

// Inverse error function on (-1, 1), accurate to machine precision.
double erf_inv(double y);

// Smallest axis-aligned ellipsoid enclosing the box: semi-axes sqrt(3) * h.
// All eight box corners lie exactly on the surface.
EllipsoidShape ellipsoid_from_bbox(const Vec3& half_extents);

// diag(1/(r+a)^2, 1/(r+b)^2, 1/(r+c)^2)
Mat3 qc_matrix(double radius, const EllipsoidShape& e);

// Constant-velocity mean chain with covariance growing by vel_cov * dt^2 per
// step; entry k-1 holds the belief at step k (k = 1..steps).
std::vector<PropagatedBelief> propagate_obstacle(const DynamicObstacle& o,
                                                 int steps, double dt);

// Linear collision constraint normal.dot(p_r) >= offset in untransformed
// coordinates, obtained by transforming the ellipsoid to a sphere,
// linearizing the unit-distance condition along the mean separation, and
// backing off by the Gaussian chance margin erf_inv(1-2*delta)*sqrt(2 a'Sa).
struct Halfspace {
  Vec3 normal = Vec3::Zero();
  double offset = 0.0;
};

Halfspace chance_constraint_halfspace(const Vec3& robot_mean,
                                      const Mat3& robot_cov,
                                      const Vec3& obstacle_mean,
                                      const Mat3& obstacle_cov, const Mat3& qc,
                                      double delta);

}  // namespace dpmpc
