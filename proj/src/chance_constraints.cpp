#include "dpmpc/chance_constraints.hpp"

#include <cmath>
#include <stdexcept>

namespace dpmpc {

namespace {
// sqrt(pi)/2, used in the Newton refinement of erf_inv
constexpr double kHalfSqrtPi = 0.8862269254527580137;
}  // namespace

double erf_inv(double y) {
  if (!(y > -1.0 && y < 1.0)) {
    throw std::invalid_argument("erf_inv: argument must lie in (-1, 1)");
  }
  if (y == 0.0) {
    return 0.0;
  }
  // initial guess (Giles 2010), then Newton on erf to full precision
  double w = -std::log((1.0 - y) * (1.0 + y));
  double x;
  if (w < 5.0) {
    w -= 2.5;
    x = 2.81022636e-08;
    x = 3.43273939e-07 + x * w;
    x = -3.5233877e-06 + x * w;
    x = -4.39150654e-06 + x * w;
    x = 0.00021858087 + x * w;
    x = -0.00125372503 + x * w;
    x = -0.00417768164 + x * w;
    x = 0.246640727 + x * w;
    x = 1.50140941 + x * w;
    x *= y;
  } else {
    w = std::sqrt(w) - 3.0;
    x = -0.000200214257;
    x = 0.000100950558 + x * w;
    x = 0.00134934322 + x * w;
    x = -0.00367342844 + x * w;
    x = 0.00573950773 + x * w;
    x = -0.0076224613 + x * w;
    x = 0.00943887047 + x * w;
    x = 1.00167406 + x * w;
    x = 2.83297682 + x * w;
    x *= y;
  }
  for (int it = 0; it < 3; ++it) {
    const double err = std::erf(x) - y;
    x -= err * kHalfSqrtPi * std::exp(x * x);
  }
  return x;
}

EllipsoidShape ellipsoid_from_bbox(const Vec3& half_extents) {
  if (!(half_extents.minCoeff() > 0.0)) {
    throw std::invalid_argument("ellipsoid_from_bbox: half extents must be positive");
  }
  const double s = std::sqrt(3.0);
  return {s * half_extents.x(), s * half_extents.y(), s * half_extents.z()};
}

Mat3 qc_matrix(double radius, const EllipsoidShape& e) {
  if (radius < 0.0) {
    throw std::invalid_argument("qc_matrix: negative radius");
  }
  Mat3 qc = Mat3::Zero();
  qc(0, 0) = 1.0 / ((radius + e.a) * (radius + e.a));
  qc(1, 1) = 1.0 / ((radius + e.b) * (radius + e.b));
  qc(2, 2) = 1.0 / ((radius + e.c) * (radius + e.c));
  return qc;
}

std::vector<PropagatedBelief> propagate_obstacle(const DynamicObstacle& o,
                                                 int steps, double dt) {
  if (steps < 1) {
    throw std::invalid_argument("propagate_obstacle: steps must be positive");
  }
  std::vector<PropagatedBelief> out;
  out.reserve(steps);
  const Mat3 growth = o.velocity_cov * (dt * dt);
  Vec3 mean = o.position;
  Mat3 cov = o.position_cov;
  for (int k = 1; k <= steps; ++k) {
    mean += o.velocity * dt;
    cov += growth;
    out.push_back({mean, cov});
  }
  return out;
}

Halfspace chance_constraint_halfspace(const Vec3& robot_mean,
                                      const Mat3& robot_cov,
                                      const Vec3& obstacle_mean,
                                      const Mat3& obstacle_cov, const Mat3& qc,
                                      double delta) {
  if (!(delta > 0.0 && delta <= 0.5)) {
    throw std::invalid_argument("chance_constraint_halfspace: delta must lie in (0, 0.5]");
  }
  const Vec3 sqrt_qc = qc.diagonal().cwiseSqrt();
  const Mat3 s = sqrt_qc.asDiagonal();
  const Vec3 diff_t = s * (robot_mean - obstacle_mean);
  const double dist_t = diff_t.norm();
  if (dist_t < 1e-9) {
    throw std::domain_error("chance_constraint_halfspace: coincident means");
  }
  const Vec3 a = diff_t / dist_t;
  const Mat3 cov_t = s * (robot_cov + obstacle_cov) * s;
  const double var = std::max(0.0, a.dot(cov_t * a));
  const double margin =
      var > 0.0 ? erf_inv(1.0 - 2.0 * delta) * std::sqrt(2.0 * var) : 0.0;

  Halfspace hs;
  hs.normal = s * a;
  hs.offset = a.dot(s * obstacle_mean) + 1.0 + margin;
  return hs;
}

}  // namespace dpmpc
