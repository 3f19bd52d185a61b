/*
  scenario.cpp
  ------------
  Scenario-file ingestion and validation.
*/
#include "dpmpc/scenario.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dpmpc {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& msg) {
  throw std::runtime_error(origin + ": " + msg);
}

const json& require(const json& j, const char* field, const std::string& origin) {
  const auto it = j.find(field);
  if (it == j.end()) {
    fail(origin, std::string("missing field '") + field + "'");
  }
  return *it;
}

Vec3 parse_vec3(const json& j, const char* field, const std::string& origin) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number()) {
    fail(origin, std::string("field '") + field + "' must be an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Vec3 require_vec3(const json& j, const char* field, const std::string& origin) {
  return parse_vec3(require(j, field, origin), field, origin);
}

double require_number(const json& j, const char* field, const std::string& origin) {
  const json& v = require(j, field, origin);
  if (!v.is_number()) {
    fail(origin, std::string("field '") + field + "' must be a number");
  }
  return v.get<double>();
}

int line_of_offset(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
    }
  }
  return line;
}

StaticPlanConfig parse_static_plan(const json& j, const std::string& origin) {
  StaticPlanConfig cfg;
  if (j.contains("degree")) cfg.degree = j["degree"].get<int>();
  if (j.contains("deriv_order")) cfg.deriv_order = j["deriv_order"].get<int>();
  if (j.contains("regularization")) cfg.regularization = j["regularization"].get<double>();
  cfg.desired_velocity = require_number(j, "desired_velocity", origin);
  if (j.contains("initial_corridor")) cfg.initial_corridor = j["initial_corridor"].get<double>();
  if (j.contains("shrink_factor")) cfg.shrink_factor = j["shrink_factor"].get<double>();
  if (j.contains("sample_dt")) cfg.sample_dt = j["sample_dt"].get<double>();
  if (j.contains("max_iterations")) cfg.max_iterations = j["max_iterations"].get<int>();
  return cfg;
}

MpcConfig parse_mpc(const json& j, const std::string& origin) {
  (void)origin;
  MpcConfig cfg;
  if (j.contains("horizon")) cfg.horizon = j["horizon"].get<int>();
  if (j.contains("dt")) cfg.dt = j["dt"].get<double>();
  if (j.contains("delta")) cfg.delta = j["delta"].get<double>();
  if (j.contains("u_min")) cfg.u_min = parse_vec3(j["u_min"], "u_min", origin);
  if (j.contains("u_max")) cfg.u_max = parse_vec3(j["u_max"], "u_max", origin);
  if (j.contains("w_pos")) cfg.w_pos = j["w_pos"].get<double>();
  if (j.contains("w_vel")) cfg.w_vel = j["w_vel"].get<double>();
  if (j.contains("w_acc")) cfg.w_acc = j["w_acc"].get<double>();
  if (j.contains("r_u")) cfg.r_u = j["r_u"].get<double>();
  if (j.contains("temporal_split")) cfg.temporal_split = j["temporal_split"].get<int>();
  if (j.contains("meet_distance")) cfg.meet_distance = j["meet_distance"].get<double>();
  if (j.contains("avoid_distance")) cfg.avoid_distance = j["avoid_distance"].get<double>();
  if (j.contains("scp_iterations")) cfg.scp_iterations = j["scp_iterations"].get<int>();
  if (j.contains("soft_penalty")) cfg.soft_penalty = j["soft_penalty"].get<double>();
  return cfg;
}

ObstacleScript parse_obstacle(const json& j, std::size_t idx,
                              const std::string& origin) {
  const std::string ctx = origin + " obstacle " + std::to_string(idx);
  ObstacleScript script;
  script.initial_position = require_vec3(j, "initial", ctx);
  script.bbox_half_extents = require_vec3(j, "bbox_half_extents", ctx);
  script.sigma_o = require_vec3(j, "sigma_o", ctx);
  script.sigma_ov = require_vec3(j, "sigma_ov", ctx);
  const json& motion = require(j, "motion", ctx);
  const std::string type = require(motion, "type", ctx).get<std::string>();
  if (type == "loop") {
    const json& wps = require(motion, "waypoints", ctx);
    if (!wps.is_array() || wps.empty()) {
      fail(ctx, "field 'waypoints' must be a non-empty array");
    }
    for (const auto& w : wps) {
      script.loop_waypoints.push_back(parse_vec3(w, "waypoints", ctx));
    }
    script.speed = require_number(motion, "speed", ctx);
    if (!(script.speed > 0.0)) {
      fail(ctx, "loop speed must be positive");
    }
  } else if (type == "velocity") {
    script.velocity = require_vec3(motion, "velocity", ctx);
  } else {
    fail(ctx, "motion type must be 'loop' or 'velocity'");
  }
  if (!(script.bbox_half_extents.minCoeff() > 0.0)) {
    fail(ctx, "bbox_half_extents must be positive");
  }
  if (script.sigma_o.minCoeff() < 0.0 || script.sigma_ov.minCoeff() < 0.0) {
    fail(ctx, "variances must be nonnegative");
  }
  return script;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(origin, "parse error at line " +
                     std::to_string(line_of_offset(text, e.byte)) + ": " +
                     e.what());
  }
  Scenario sc;
  sc.name = j.contains("name") ? j["name"].get<std::string>() : origin;
  const json& bounds = require(j, "bounds", origin);
  sc.bounds_min = require_vec3(bounds, "min", origin);
  sc.bounds_max = require_vec3(bounds, "max", origin);
  sc.resolution = require_number(j, "resolution", origin);
  sc.start = require_vec3(j, "start", origin);
  sc.goal = require_vec3(j, "goal", origin);
  sc.robot_radius = require_number(j, "robot_radius", origin);
  if (j.contains("robot_sigma")) sc.robot_sigma = j["robot_sigma"].get<double>();
  if (j.contains("uncertainty_scale")) sc.uncertainty_scale = j["uncertainty_scale"].get<double>();
  if (j.contains("time_budget")) sc.time_budget = j["time_budget"].get<double>();
  if (j.contains("boxes")) {
    for (const auto& b : j["boxes"]) {
      StaticBox box;
      box.center = require_vec3(b, "center", origin);
      box.half_extents = require_vec3(b, "half_extents", origin);
      sc.boxes.push_back(box);
    }
  }
  sc.static_plan = parse_static_plan(require(j, "static_plan", origin), origin);
  sc.mpc = parse_mpc(require(j, "mpc", origin), origin);
  if (j.contains("obstacles")) {
    std::size_t idx = 0;
    for (const auto& o : j["obstacles"]) {
      sc.obstacles.push_back(parse_obstacle(o, idx++, origin));
    }
  }
  validate_scenario(sc);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(path + ": cannot open scenario file");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

void validate_scenario(const Scenario& sc) {
  const std::string& origin = sc.name;
  if (!(sc.bounds_min.x() < sc.bounds_max.x() &&
        sc.bounds_min.y() < sc.bounds_max.y() &&
        sc.bounds_min.z() < sc.bounds_max.z())) {
    fail(origin, "bounds min must be below max");
  }
  if (!(sc.resolution > 0.0)) {
    fail(origin, "resolution must be positive");
  }
  if (!(sc.robot_radius > 0.0)) {
    fail(origin, "robot_radius must be positive");
  }
  if (sc.robot_sigma < 0.0) {
    fail(origin, "robot_sigma must be nonnegative");
  }
  if (!(sc.uncertainty_scale > 0.0)) {
    fail(origin, "uncertainty_scale must be positive");
  }
  if (!(sc.time_budget > 0.0)) {
    fail(origin, "time_budget must be positive");
  }
  for (const StaticBox& b : sc.boxes) {
    if (!(b.half_extents.minCoeff() > 0.0)) {
      fail(origin, "static box half_extents must be positive");
    }
  }
  try {
    sc.static_plan.validate();
    sc.mpc.validate();
  } catch (const std::invalid_argument& e) {
    fail(origin, e.what());
  }
  const OccupancyGrid grid =
      build_grid(sc.boxes, {sc.bounds_min, sc.bounds_max}, sc.resolution);
  if (!grid.in_bounds(sc.start) || !grid.in_bounds(sc.goal)) {
    fail(origin, "start and goal must lie inside the bounds");
  }
  if (!is_sphere_free(grid, sc.start, sc.robot_radius)) {
    fail(origin, "start is inside a static obstacle");
  }
  if (!is_sphere_free(grid, sc.goal, sc.robot_radius)) {
    fail(origin, "goal is inside a static obstacle");
  }
}

}  // namespace dpmpc
