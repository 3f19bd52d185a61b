/*
  trajectory.cpp
  --------------
  Piecewise-polynomial trajectory representation shared by both planning
  layers.
*/
#include "dpmpc/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpmpc/csv_util.hpp"

namespace dpmpc {

namespace {

double falling_factorial(int i, int m) {
  double f = 1.0;
  for (int j = 0; j < m; ++j) {
    f *= static_cast<double>(i - j);
  }
  return f;
}

// Horner evaluation of the order-th derivative of sum_i c[i] tau^i.
double eval_poly_derivative(const Eigen::VectorXd& c, double tau, int order) {
  const int deg = static_cast<int>(c.size()) - 1;
  if (order > deg) {
    return 0.0;
  }
  double acc = 0.0;
  for (int i = deg; i >= order; --i) {
    acc = acc * tau + c(i) * falling_factorial(i, order);
  }
  return acc;
}

}  // namespace

PolySegment::PolySegment(Eigen::VectorXd cx, Eigen::VectorXd cy,
                         Eigen::VectorXd cz, double t0, double t1)
    : coeffs_x(std::move(cx)),
      coeffs_y(std::move(cy)),
      coeffs_z(std::move(cz)),
      t_start(t0),
      t_end(t1) {
  if (coeffs_x.size() != coeffs_y.size() || coeffs_x.size() != coeffs_z.size()) {
    throw std::invalid_argument("PolySegment: coefficient arrays differ in length");
  }
  if (coeffs_x.size() < 5) {
    throw std::invalid_argument("PolySegment: degree must be at least 4");
  }
  if (!(t_end > t_start)) {
    throw std::invalid_argument("PolySegment: t_end must exceed t_start");
  }
  if (!coeffs_x.allFinite() || !coeffs_y.allFinite() || !coeffs_z.allFinite()) {
    throw std::invalid_argument("PolySegment: non-finite coefficient");
  }
}

PolyTrajectory::PolyTrajectory(std::vector<PolySegment> segments)
    : segments_(std::move(segments)) {
  if (segments_.empty()) {
    throw std::invalid_argument("PolyTrajectory: no segments");
  }
  for (std::size_t j = 0; j + 1 < segments_.size(); ++j) {
    if (segments_[j].t_end != segments_[j + 1].t_start) {
      throw std::invalid_argument("PolyTrajectory: segments not contiguous in time");
    }
    const double tau = segments_[j].duration();
    const Vec3 end(eval_poly_derivative(segments_[j].coeffs_x, tau, 0),
                   eval_poly_derivative(segments_[j].coeffs_y, tau, 0),
                   eval_poly_derivative(segments_[j].coeffs_z, tau, 0));
    const Vec3 next(segments_[j + 1].coeffs_x(0), segments_[j + 1].coeffs_y(0),
                    segments_[j + 1].coeffs_z(0));
    if ((end - next).norm() > 1e-9) {
      throw std::invalid_argument("PolyTrajectory: position discontinuity at knot");
    }
  }
}

std::size_t PolyTrajectory::segment_index(double t) const {
  if (t < start_time() || t > end_time()) {
    throw std::out_of_range("PolyTrajectory: time outside trajectory domain");
  }
  std::size_t lo = 0;
  std::size_t hi = segments_.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi + 1) / 2;
    if (segments_[mid].t_start <= t) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return lo;
}

SampledTrajectory SampledTrajectory::from_positions(std::vector<double> times,
                                                    std::vector<Vec3> positions) {
  if (times.size() != positions.size()) {
    throw std::invalid_argument("SampledTrajectory: array length mismatch");
  }
  if (times.empty()) {
    throw std::invalid_argument("SampledTrajectory: empty");
  }
  SampledTrajectory st;
  st.times = std::move(times);
  st.positions = std::move(positions);
  st.cumulative_arc.resize(st.times.size());
  st.cumulative_arc[0] = 0.0;
  for (std::size_t i = 1; i < st.positions.size(); ++i) {
    st.cumulative_arc[i] =
        st.cumulative_arc[i - 1] + (st.positions[i] - st.positions[i - 1]).norm();
  }
  return st;
}

std::vector<double> uniform_sample_times(double t0, double t1, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("uniform_sample_times: dt must be positive");
  }
  if (!(t1 > t0)) {
    throw std::invalid_argument("uniform_sample_times: empty interval");
  }
  const double span = t1 - t0;
  const auto steps = static_cast<std::size_t>(std::floor(span / dt + 1e-9));
  std::vector<double> out;
  out.reserve(steps + 2);
  for (std::size_t k = 0; k <= steps; ++k) {
    out.push_back(t0 + static_cast<double>(k) * dt);
  }
  if (t1 - out.back() > 1e-9 * std::max(1.0, dt)) {
    out.push_back(t1);
  } else {
    out.back() = t1;
  }
  return out;
}

Vec3 eval_position(const PolyTrajectory& traj, double t) {
  return eval_derivative(traj, t, 0);
}

Vec3 eval_derivative(const PolyTrajectory& traj, double t, int order) {
  if (order < 0) {
    throw std::invalid_argument("eval_derivative: negative order");
  }
  const PolySegment& seg = traj.segments()[traj.segment_index(t)];
  const double tau = t - seg.t_start;
  return Vec3(eval_poly_derivative(seg.coeffs_x, tau, order),
              eval_poly_derivative(seg.coeffs_y, tau, order),
              eval_poly_derivative(seg.coeffs_z, tau, order));
}

SampledTrajectory sample_uniform(const PolyTrajectory& traj, double dt) {
  std::vector<double> times =
      uniform_sample_times(traj.start_time(), traj.end_time(), dt);
  std::vector<Vec3> positions;
  positions.reserve(times.size());
  for (double t : times) {
    positions.push_back(eval_position(traj, t));
  }
  return SampledTrajectory::from_positions(std::move(times), std::move(positions));
}

std::size_t nearest_sample_to_point(const SampledTrajectory& st, const Vec3& p) {
  if (st.empty()) {
    throw std::invalid_argument("nearest_sample_to_point: empty trajectory");
  }
  std::size_t best = 0;
  double best_sq = (st.positions[0] - p).squaredNorm();
  for (std::size_t i = 1; i < st.positions.size(); ++i) {
    const double d = (st.positions[i] - p).squaredNorm();
    if (d < best_sq) {
      best_sq = d;
      best = i;
    }
  }
  return best;
}

double arc_distance_between(const SampledTrajectory& st, std::size_t i,
                            std::size_t j) {
  if (i > j) {
    throw std::invalid_argument("arc_distance_between: i must not exceed j");
  }
  if (j >= st.size()) {
    throw std::out_of_range("arc_distance_between: index out of range");
  }
  return st.cumulative_arc[j] - st.cumulative_arc[i];
}

void write_trajectory_csv(const PolyTrajectory& traj, double dt,
                          std::ostream& out) {
  out << "t,x,y,z,vx,vy,vz\n";
  for (double t : uniform_sample_times(traj.start_time(), traj.end_time(), dt)) {
    const Vec3 p = eval_position(traj, t);
    const Vec3 v = eval_derivative(traj, t, 1);
    out << format_double(t) << ',' << format_double(p.x()) << ','
        << format_double(p.y()) << ',' << format_double(p.z()) << ','
        << format_double(v.x()) << ',' << format_double(v.y()) << ','
        << format_double(v.z()) << '\n';
  }
}

}  // namespace dpmpc
