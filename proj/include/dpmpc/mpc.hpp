#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dpmpc/chance_constraints.hpp"
#include "dpmpc/occupancy_grid.hpp"
#include "dpmpc/trajectory.hpp"
#include "dpmpc/types.hpp"

namespace dpmpc {

// Robot belief: mean triple-integrator state, position covariance, collision
// sphere radius.
struct RobotBelief {
  RobotState state;
  Mat3 position_cov = Mat3::Zero();
  double radius = 0.3;
};

struct MpcConfig {
  int horizon = 20;   // N
  double dt = 0.1;
  double delta = 0.03;  // chance level, in (0, 0.5]
  Vec3 u_min = Vec3::Constant(-40.0);  // jerk bounds (m/s^3)
  Vec3 u_max = Vec3::Constant(40.0);
  double w_pos = 10.0;
  double w_vel = 1.0;
  double w_acc = 0.0;
  double r_u = 0.1;
  int temporal_split = 10;     // n, with n/N in [1/4, 3/4]
  double meet_distance = 3.0;  // meeting-condition threshold (m)
  double avoid_distance = 2.0; // avoidance-target distance threshold (m)
  int scp_iterations = 2;
  double soft_penalty = 1e6;
  bool deterministic_constraints = false;  // drop the chance margin
  bool use_temporal_goal = true;

  void validate() const;
};

struct RefState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
};

enum class MpcStatus { Optimal, Softened, Emergency };

struct MpcSolution {
  std::vector<RobotState> states;  // x^1..x^N
  std::vector<Vec3> controls;      // controls[k] produces states[k]
  MpcStatus status = MpcStatus::Emergency;
  // active obstacle half-space constraints, entry per step (obstacle ids)
  std::vector<std::vector<int>> active_obstacles_per_step;
  int softened_constraints = 0;
  int scp_iterations_run = 0;
  double objective = 0.0;
  double solve_ms = 0.0;
};

// Meeting condition: obstacle ahead (angle between robot velocity and
// robot->obstacle direction below 90 degrees) and closer than threshold.
// A robot slower than 1e-6 m/s never meets.
bool meets_obstacle(const RobotBelief& rb, const DynamicObstacle& o,
                    double threshold);

struct AvoidanceTarget {
  std::size_t index = 0;           // selected sample
  std::size_t candidate_near = 0;  // scan from the sample nearest the obstacle
  std::size_t candidate_robot = 0; // scan from the sample nearest the robot
  bool near_exhausted = false;
  bool robot_exhausted = false;
};

AvoidanceTarget select_avoidance_target(const SampledTrajectory& st,
                                        const Vec3& robot_pos,
                                        const Vec3& obstacle_pos,
                                        double delta_distance);

// N reference states: the avoidance target repeated N-n times, then the
// following static-trajectory samples at cfg.dt spacing, clamped to the end.
std::vector<RefState> build_temporal_goal(const PolyTrajectory& traj,
                                          double t_a, const MpcConfig& cfg);

// Chance-constrained MPC step over a per-axis triple integrator with jerk
// input. States are condensed out, so the QP decision variables are the
// controls. The grid parameter is unused here: static-map handling lives in
// the static layer and in the reactive planner's commit truncation.
MpcSolution solve_mpc(const RobotBelief& rb,
                      const std::vector<RefState>& reference,
                      const std::vector<DynamicObstacle>& obstacles,
                      const OccupancyGrid* grid, const MpcConfig& cfg,
                      const std::vector<Vec3>* linearization_hint = nullptr);

enum class ControlMode { Tracking, Avoidance };

// Per-episode reactive planner: switches the MPC reference between static
// trajectory tracking and the temporal goal, and truncates the committed
// trajectory at the first static-map collision. Holds warm-start state, so
// one instance serves one episode.
class ReactivePlanner {
 public:
  ReactivePlanner(const OccupancyGrid* grid, PolyTrajectory static_traj,
                  const MpcConfig& cfg, double traj_sample_dt);

  struct Result {
    MpcSolution solution;
    ControlMode mode = ControlMode::Tracking;
    int committed_steps = 0;  // states 1..committed_steps are collision-free
    std::optional<AvoidanceTarget> target;
  };

  Result plan(const RobotBelief& rb, double clock,
              const std::vector<DynamicObstacle>& obstacles);

  const PolyTrajectory& static_trajectory() const { return traj_; }
  const SampledTrajectory& sampled_static() const { return sampled_; }
  const MpcConfig& config() const { return cfg_; }

 private:
  const OccupancyGrid* grid_;
  PolyTrajectory traj_;
  SampledTrajectory sampled_;
  MpcConfig cfg_;
  std::optional<MpcSolution> previous_;
};

}  // namespace dpmpc
