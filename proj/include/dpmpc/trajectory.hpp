#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "dpmpc/types.hpp"

namespace dpmpc {

// One polynomial piece in segment-local time: position on axis q is
// sum_i coeffs_q[i] * tau^i with tau = t - t_start.
struct PolySegment {
  Eigen::VectorXd coeffs_x;
  Eigen::VectorXd coeffs_y;
  Eigen::VectorXd coeffs_z;
  double t_start = 0.0;
  double t_end = 0.0;

  PolySegment() = default;
  PolySegment(Eigen::VectorXd cx, Eigen::VectorXd cy, Eigen::VectorXd cz,
              double t0, double t1);

  int degree() const { return static_cast<int>(coeffs_x.size()) - 1; }
  double duration() const { return t_end - t_start; }
};

// Piecewise polynomial trajectory. Segments must be contiguous in time
// (exact knot equality) and position-continuous across knots within 1e-9 m.
class PolyTrajectory {
 public:
  explicit PolyTrajectory(std::vector<PolySegment> segments);

  const std::vector<PolySegment>& segments() const { return segments_; }
  double start_time() const { return segments_.front().t_start; }
  double end_time() const { return segments_.back().t_end; }
  double duration() const { return end_time() - start_time(); }

  // Segment containing t; ties at interior knots resolve to the later segment.
  std::size_t segment_index(double t) const;

 private:
  std::vector<PolySegment> segments_;
};

struct SampledTrajectory {
  std::vector<double> times;
  std::vector<Vec3> positions;
  std::vector<double> cumulative_arc;  // polyline length, starts at 0

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }

  static SampledTrajectory from_positions(std::vector<double> times,
                                          std::vector<Vec3> positions);
};

// Sample instants t0, t0+dt, ... with the final time always included.
std::vector<double> uniform_sample_times(double t0, double t1, double dt);

Vec3 eval_position(const PolyTrajectory& traj, double t);
Vec3 eval_derivative(const PolyTrajectory& traj, double t, int order);
SampledTrajectory sample_uniform(const PolyTrajectory& traj, double dt);
std::size_t nearest_sample_to_point(const SampledTrajectory& st, const Vec3& p);
double arc_distance_between(const SampledTrajectory& st, std::size_t i,
                            std::size_t j);

// CSV export with header "t,x,y,z,vx,vy,vz".
void write_trajectory_csv(const PolyTrajectory& traj, double dt,
                          std::ostream& out);

}  // namespace dpmpc
