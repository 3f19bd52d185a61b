#pragma once

#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "dpmpc/scenario.hpp"

namespace dpmpc {

enum class Variant { Proposed, Deterministic, NoTemporalGoal };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct TimingStats {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  int count = 0;
};

struct EpisodeMetrics {
  bool success = false;
  bool collision = false;
  bool timeout = false;
  double d_min = std::numeric_limits<double>::max();
  double traj_length = 0.0;
  double traj_time = 0.0;
  double static_layer_ms = 0.0;
  TimingStats mpc_tracking;
  TimingStats mpc_meeting;
  int avoidance_activations = 0;
  int softened_steps = 0;
  int emergency_steps = 0;
};

// Per-step record for plotting; one row per control step.
class TraceWriter {
 public:
  struct Row {
    double t = 0.0;
    int mode = 0;    // 0 tracking, 1 avoidance
    int status = 0;  // 0 optimal, 1 softened, 2 emergency
    RobotState robot;
    std::vector<Vec3> obstacle_true;
    std::vector<Vec3> obstacle_measured;
  };

  void add(Row row) { rows_.push_back(std::move(row)); }
  const std::vector<Row>& rows() const { return rows_; }
  void write_csv(std::ostream& out) const;

 private:
  std::vector<Row> rows_;
};

// Closed-loop episode at the MPC timestep with noisy obstacle measurements.
// The uncertainty scale is taken from the scenario.
EpisodeMetrics run_episode(const Scenario& sc, Variant variant,
                           std::uint64_t seed, TraceWriter* trace = nullptr);

struct BatchRow {
  Variant variant = Variant::Proposed;
  double uncertainty = 1.0;
  std::uint64_t seed = 0;
  EpisodeMetrics metrics;
};

struct BatchResult {
  std::vector<BatchRow> rows;  // variant-major, then scale, then seed
  std::vector<Variant> variants;
  std::vector<double> scales;
  int n_seeds = 0;
};

struct Aggregate {
  Variant variant = Variant::Proposed;
  double uncertainty = 1.0;
  double success_rate = 0.0;
  double mean_d_min = 0.0;           // over all episodes
  double mean_traj_length = 0.0;     // over successful episodes
  double mean_traj_time = 0.0;       // over successful episodes
  double mean_static_ms = 0.0;
  double mean_track_p95 = 0.0;
  double mean_meet_p95 = 0.0;
};

std::vector<Aggregate> aggregate_batch(const BatchResult& batch);

// Cross product of variants x scales x seeds; episodes are independent and
// may run on several threads (0 = hardware concurrency). Results and RNG
// streams depend only on (scenario, variant, scale, seed).
BatchResult run_batch(const Scenario& sc, const std::vector<Variant>& variants,
                      const std::vector<double>& scales, int n_seeds,
                      int threads = 0);

// Metrics CSV with the fixed column order
// variant,uncertainty,seed,success,d_min,traj_length,traj_time,static_ms,
// mpc_track_ms_p95,mpc_meet_ms_p95; aggregate rows use "mean" in the seed
// column.
void write_metrics_csv(const BatchResult& batch, std::ostream& out);
std::string metrics_csv(const BatchResult& batch);

}  // namespace dpmpc
