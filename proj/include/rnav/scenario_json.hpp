#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rnav/scenario.hpp"

namespace rnav {

/// Raised on malformed scenario files; the message names the offending path.
class ScenarioError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// JSON cannot carry infinities; bounds at or beyond this magnitude are
// treated as unbounded.
constexpr double kUnboundedSentinel = 1e30;

namespace detail {

inline double to_sentinel(double v) {
  if (std::isinf(v)) return v > 0 ? kUnboundedSentinel : -kUnboundedSentinel;
  return v;
}

inline double from_sentinel(double v) {
  if (v >= 0.1 * kUnboundedSentinel) return std::numeric_limits<double>::infinity();
  if (v <= -0.1 * kUnboundedSentinel) return -std::numeric_limits<double>::infinity();
  return v;
}

/// Strict object view: every expected key must be present, nothing else may.
class StrictObject {
public:
  StrictObject(const nlohmann::json& j, std::string path,
               std::set<std::string> expected)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ScenarioError(path_ + ": expected an object");
    for (const auto& [key, value] : j_.items()) {
      if (!expected.count(key)) {
        throw ScenarioError(path_ + ": unknown field '" + key + "'");
      }
    }
    for (const auto& key : expected) {
      if (!j_.contains(key)) {
        throw ScenarioError(path_ + ": missing field '" + key + "'");
      }
    }
  }

  const nlohmann::json& child(const std::string& key) const { return j_.at(key); }

  double num(const std::string& key) const {
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ScenarioError(path_ + "." + key + ": expected a number");
    return v.get<double>();
  }
  int integer(const std::string& key) const {
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) {
      throw ScenarioError(path_ + "." + key + ": expected an integer");
    }
    return v.get<int>();
  }
  bool boolean(const std::string& key) const {
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ScenarioError(path_ + "." + key + ": expected a bool");
    return v.get<bool>();
  }
  std::string str(const std::string& key) const {
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ScenarioError(path_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }
  Eigen::Vector3d vec3(const std::string& key) const {
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) {
      throw ScenarioError(path_ + "." + key + ": expected [x, y, z]");
    }
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }
  std::uint64_t u64(const std::string& key) const {
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !v.is_number_integer()) {
      throw ScenarioError(path_ + "." + key + ": expected an unsigned integer");
    }
    return v.get<std::uint64_t>();
  }
  const std::string& path() const { return path_; }

private:
  const nlohmann::json& j_;
  std::string path_;
};

inline nlohmann::ordered_json vec3_json(const Eigen::Vector3d& v) {
  return {to_sentinel(v.x()), to_sentinel(v.y()), to_sentinel(v.z())};
}

inline std::string distortion_name(SyntheticDistortion::Kind kind) {
  switch (kind) {
    case SyntheticDistortion::Kind::identity: return "identity";
    case SyntheticDistortion::Kind::affine: return "affine";
    case SyntheticDistortion::Kind::quadratic_inverse: return "quadratic";
    case SyntheticDistortion::Kind::logistic: return "logistic";
  }
  return "identity";
}

inline SyntheticDistortion::Kind distortion_kind(const std::string& name,
                                                 const std::string& path) {
  if (name == "identity") return SyntheticDistortion::Kind::identity;
  if (name == "affine") return SyntheticDistortion::Kind::affine;
  if (name == "quadratic") return SyntheticDistortion::Kind::quadratic_inverse;
  if (name == "logistic") return SyntheticDistortion::Kind::logistic;
  throw ScenarioError(path + ": unknown distortion '" + name + "'");
}

}  // namespace detail

inline nlohmann::ordered_json scenario_to_json(const Scenario& s) {
  using detail::vec3_json;
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["duration_s"] = s.duration;
  j["control_hz"] = s.control_hz;
  j["camera_hz"] = s.camera_hz;

  nlohmann::ordered_json world;
  world["ground_plane"] = s.world.ground_plane;
  world["obstacles"] = nlohmann::ordered_json::array();
  for (const auto& o : s.world.obstacles) {
    nlohmann::ordered_json jo;
    switch (o.kind) {
      case ObstaclePrimitive::Kind::sphere:
        jo["kind"] = "sphere";
        jo["center"] = vec3_json(o.center);
        jo["radius"] = o.radius;
        break;
      case ObstaclePrimitive::Kind::cylinder:
        jo["kind"] = "cylinder";
        jo["center"] = vec3_json(o.center);
        jo["radius"] = o.radius;
        jo["height"] = o.height;
        break;
      case ObstaclePrimitive::Kind::box:
        jo["kind"] = "box";
        jo["center"] = vec3_json(o.center);
        jo["half_extents"] = vec3_json(o.half_extents);
        break;
    }
    world["obstacles"].push_back(std::move(jo));
  }
  j["world"] = std::move(world);

  j["start"] = {{"position", vec3_json(s.start_position)}, {"yaw", s.start_yaw}};

  nlohmann::ordered_json goal;
  goal["waypoints"] = nlohmann::ordered_json::array();
  for (const auto& wp : s.goal_waypoints) {
    goal["waypoints"].push_back(
        {{"position", vec3_json(wp.position)}, {"yaw", wp.yaw}});
  }
  goal["trajectory_duration_s"] = s.trajectory_duration;
  goal["tolerance_m"] = s.goal_tolerance;
  j["goal"] = std::move(goal);

  j["vehicle"] = {{"mass_kg", s.vehicle.mass},
                  {"inertia", vec3_json(s.vehicle.inertia)},
                  {"arm_length_m", s.vehicle.arm_length},
                  {"yaw_torque_coeff_m", s.vehicle.yaw_torque_coeff},
                  {"thrust_min_n", s.vehicle.thrust_min},
                  {"thrust_max_n", s.vehicle.thrust_max},
                  {"gravity_mps2", s.vehicle.gravity},
                  {"footprint_dx_m", s.vehicle.d_x},
                  {"footprint_dy_m", s.vehicle.d_y}};

  nlohmann::ordered_json extr;
  extr["rotation"] = nlohmann::ordered_json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) extr["rotation"].push_back(s.cam_to_body.rotation(r, c));
  }
  extr["translation"] = vec3_json(s.cam_to_body.translation);
  j["camera"] = {{"fx", s.camera.fx},     {"fy", s.camera.fy},
                 {"cx", s.camera.cx},     {"cy", s.camera.cy},
                 {"width", s.camera.width}, {"height", s.camera.height},
                 {"extrinsics", std::move(extr)}};

  j["sensor"] = {{"range_m", detail::to_sentinel(s.sensor.range)},
                 {"dropout_rate", s.sensor.dropout_rate},
                 {"noise_sigma_m", s.sensor.noise_sigma},
                 {"edge_width_px", s.sensor.edge_width},
                 {"edge_jump_m", s.sensor.edge_jump}};

  const auto& d = s.perception.distortion;
  j["perception"] = {
      {"enabled", s.perception.enabled},
      {"pool", s.perception.pool},
      {"top_k", s.perception.top_k},
      {"eps_v", s.perception.eps_v},
      {"fit_order", s.perception.fit_order},
      {"z_min_m", s.perception.clamp.z_min},
      {"z_max_m", s.perception.clamp.z_max},
      {"max_extrapolation_std_m", s.perception.max_extrapolation_std},
      {"retention_time_s", s.perception.retention_time},
      {"retention_radius_scale", s.perception.retention_radius_scale},
      {"distortion",
       {{"kind", detail::distortion_name(d.kind)},
        {"affine_scale", d.affine_scale},
        {"affine_offset", d.affine_offset},
        {"quadratic_a", d.qa},
        {"quadratic_b", d.qb},
        {"quadratic_c", d.qc},
        {"logistic_center", d.logistic_center},
        {"logistic_scale", d.logistic_scale},
        {"noise_sigma", d.noise_sigma},
        {"saturation_depth_m", d.saturation_depth}}}};

  nlohmann::ordered_json qx = nlohmann::ordered_json::array();
  for (int k = 0; k < 12; ++k) qx.push_back(s.controller.weights.qx(k));
  nlohmann::ordered_json qu = nlohmann::ordered_json::array();
  for (int k = 0; k < 4; ++k) qu.push_back(s.controller.weights.qu(k));
  j["controller"] = {{"horizon_steps", s.controller.horizon_steps},
                     {"horizon_seconds", s.controller.horizon_seconds},
                     {"lambda", s.controller.lambda},
                     {"psi_m", s.controller.psi},
                     {"constraint_margin_m", s.controller.constraint_margin},
                     {"sigmoid_alpha", s.controller.sigmoid_alpha},
                     {"sigmoid_beta", s.controller.sigmoid_beta},
                     {"state_weights", std::move(qx)},
                     {"input_weights", std::move(qu)},
                     {"position_min", vec3_json(s.controller.position_min)},
                     {"position_max", vec3_json(s.controller.position_max)},
                     {"velocity_bound", vec3_json(s.controller.velocity_bound)},
                     {"body_rate_bound", vec3_json(s.controller.body_rate_bound)},
                     {"max_sqp_iterations", s.controller.max_sqp_iterations},
                     {"kkt_tolerance", s.controller.kkt_tolerance}};
  return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using detail::StrictObject;
  Scenario s;
  StrictObject root(j, "scenario",
                    {"name", "seed", "duration_s", "control_hz", "camera_hz",
                     "world", "start", "goal", "vehicle", "camera", "sensor",
                     "perception", "controller"});
  s.name = root.str("name");
  s.seed = root.u64("seed");
  s.duration = root.num("duration_s");
  s.control_hz = root.num("control_hz");
  s.camera_hz = root.num("camera_hz");
  if (s.duration <= 0.0) throw ScenarioError("scenario.duration_s: must be positive");
  if (s.control_hz <= 0.0 || s.camera_hz <= 0.0 || s.control_hz < s.camera_hz) {
    throw ScenarioError("scenario: rates must be positive with control_hz >= camera_hz");
  }

  {
    StrictObject world(root.child("world"), "world", {"ground_plane", "obstacles"});
    s.world.ground_plane = world.boolean("ground_plane");
    const auto& obstacles = world.child("obstacles");
    if (!obstacles.is_array()) throw ScenarioError("world.obstacles: expected an array");
    for (std::size_t n = 0; n < obstacles.size(); ++n) {
      const std::string path = "world.obstacles[" + std::to_string(n) + "]";
      const auto& jo = obstacles[n];
      if (!jo.is_object() || !jo.contains("kind")) {
        throw ScenarioError(path + ": expected an object with 'kind'");
      }
      const std::string kind = jo.at("kind").get<std::string>();
      if (kind == "sphere") {
        StrictObject o(jo, path, {"kind", "center", "radius"});
        s.world.obstacles.push_back(
            ObstaclePrimitive::sphere(o.vec3("center"), o.num("radius")));
      } else if (kind == "cylinder") {
        StrictObject o(jo, path, {"kind", "center", "radius", "height"});
        s.world.obstacles.push_back(ObstaclePrimitive::cylinder(
            o.vec3("center"), o.num("radius"), o.num("height")));
      } else if (kind == "box") {
        StrictObject o(jo, path, {"kind", "center", "half_extents"});
        s.world.obstacles.push_back(
            ObstaclePrimitive::box(o.vec3("center"), o.vec3("half_extents")));
      } else {
        throw ScenarioError(path + ": unknown kind '" + kind + "'");
      }
      const auto& added = s.world.obstacles.back();
      if (added.radius <= 0.0 && added.kind != ObstaclePrimitive::Kind::box) {
        throw ScenarioError(path + ": sizes must be positive");
      }
      if (added.kind == ObstaclePrimitive::Kind::box &&
          added.half_extents.minCoeff() <= 0.0) {
        throw ScenarioError(path + ": sizes must be positive");
      }
    }
  }

  {
    StrictObject start(root.child("start"), "start", {"position", "yaw"});
    s.start_position = start.vec3("position");
    s.start_yaw = start.num("yaw");
  }
  {
    StrictObject goal(root.child("goal"), "goal",
                      {"waypoints", "trajectory_duration_s", "tolerance_m"});
    const auto& wps = goal.child("waypoints");
    if (!wps.is_array() || wps.empty()) {
      throw ScenarioError("goal.waypoints: expected a non-empty array");
    }
    for (std::size_t n = 0; n < wps.size(); ++n) {
      StrictObject wp(wps[n], "goal.waypoints[" + std::to_string(n) + "]",
                      {"position", "yaw"});
      s.goal_waypoints.push_back({wp.vec3("position"), wp.num("yaw")});
    }
    s.trajectory_duration = goal.num("trajectory_duration_s");
    s.goal_tolerance = goal.num("tolerance_m");
    if (s.trajectory_duration <= 0.0) {
      throw ScenarioError("goal.trajectory_duration_s: must be positive");
    }
  }
  {
    StrictObject v(root.child("vehicle"), "vehicle",
                   {"mass_kg", "inertia", "arm_length_m", "yaw_torque_coeff_m",
                    "thrust_min_n", "thrust_max_n", "gravity_mps2",
                    "footprint_dx_m", "footprint_dy_m"});
    s.vehicle.mass = v.num("mass_kg");
    s.vehicle.inertia = v.vec3("inertia");
    s.vehicle.arm_length = v.num("arm_length_m");
    s.vehicle.yaw_torque_coeff = v.num("yaw_torque_coeff_m");
    s.vehicle.thrust_min = v.num("thrust_min_n");
    s.vehicle.thrust_max = v.num("thrust_max_n");
    s.vehicle.gravity = v.num("gravity_mps2");
    s.vehicle.d_x = v.num("footprint_dx_m");
    s.vehicle.d_y = v.num("footprint_dy_m");
    if (s.vehicle.mass <= 0.0 || s.vehicle.inertia.minCoeff() <= 0.0 ||
        s.vehicle.thrust_max <= s.vehicle.thrust_min) {
      throw ScenarioError("vehicle: parameters must be positive");
    }
  }
  {
    StrictObject cam(root.child("camera"), "camera",
                     {"fx", "fy", "cx", "cy", "width", "height", "extrinsics"});
    s.camera.fx = cam.num("fx");
    s.camera.fy = cam.num("fy");
    s.camera.cx = cam.num("cx");
    s.camera.cy = cam.num("cy");
    s.camera.width = cam.integer("width");
    s.camera.height = cam.integer("height");
    if (!s.camera.valid()) throw ScenarioError("camera: invalid intrinsics");
    StrictObject extr(cam.child("extrinsics"), "camera.extrinsics",
                      {"rotation", "translation"});
    const auto& rot = extr.child("rotation");
    if (!rot.is_array() || rot.size() != 9) {
      throw ScenarioError("camera.extrinsics.rotation: expected 9 numbers (row-major)");
    }
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        s.cam_to_body.rotation(r, c) = rot[static_cast<std::size_t>(3 * r + c)].get<double>();
      }
    }
    s.cam_to_body.translation = extr.vec3("translation");
    if (s.cam_to_body.orthonormality_error() > 1e-6) {
      throw ScenarioError("camera.extrinsics.rotation: not orthonormal");
    }
    s.cam_to_body = s.cam_to_body.renormalized();
  }
  {
    StrictObject sensor(root.child("sensor"), "sensor",
                        {"range_m", "dropout_rate", "noise_sigma_m",
                         "edge_width_px", "edge_jump_m"});
    s.sensor.range = detail::from_sentinel(sensor.num("range_m"));
    s.sensor.dropout_rate = sensor.num("dropout_rate");
    s.sensor.noise_sigma = sensor.num("noise_sigma_m");
    s.sensor.edge_width = sensor.integer("edge_width_px");
    s.sensor.edge_jump = sensor.num("edge_jump_m");
  }
  {
    StrictObject p(root.child("perception"), "perception",
                   {"enabled", "pool", "top_k", "eps_v", "fit_order", "z_min_m",
                    "z_max_m", "max_extrapolation_std_m", "retention_time_s",
                    "retention_radius_scale", "distortion"});
    s.perception.enabled = p.boolean("enabled");
    s.perception.pool = p.integer("pool");
    s.perception.top_k = p.integer("top_k");
    s.perception.eps_v = p.num("eps_v");
    s.perception.fit_order = p.integer("fit_order");
    s.perception.clamp.z_min = p.num("z_min_m");
    s.perception.clamp.z_max = p.num("z_max_m");
    s.perception.max_extrapolation_std = p.num("max_extrapolation_std_m");
    s.perception.retention_time = p.num("retention_time_s");
    s.perception.retention_radius_scale = p.num("retention_radius_scale");
    if (s.perception.pool < 1 || s.perception.top_k < 1 ||
        s.perception.eps_v <= 0.0 || s.perception.fit_order < 1 ||
        s.perception.fit_order > 3) {
      throw ScenarioError("perception: invalid parameters");
    }
    StrictObject d(p.child("distortion"), "perception.distortion",
                   {"kind", "affine_scale", "affine_offset", "quadratic_a",
                    "quadratic_b", "quadratic_c", "logistic_center",
                    "logistic_scale", "noise_sigma", "saturation_depth_m"});
    s.perception.distortion.kind =
        detail::distortion_kind(d.str("kind"), "perception.distortion.kind");
    s.perception.distortion.affine_scale = d.num("affine_scale");
    s.perception.distortion.affine_offset = d.num("affine_offset");
    s.perception.distortion.qa = d.num("quadratic_a");
    s.perception.distortion.qb = d.num("quadratic_b");
    s.perception.distortion.qc = d.num("quadratic_c");
    s.perception.distortion.logistic_center = d.num("logistic_center");
    s.perception.distortion.logistic_scale = d.num("logistic_scale");
    s.perception.distortion.noise_sigma = d.num("noise_sigma");
    s.perception.distortion.saturation_depth = d.num("saturation_depth_m");
  }
  {
    StrictObject c(root.child("controller"), "controller",
                   {"horizon_steps", "horizon_seconds", "lambda", "psi_m",
                    "constraint_margin_m", "sigmoid_alpha", "sigmoid_beta",
                    "state_weights", "input_weights", "position_min",
                    "position_max", "velocity_bound", "body_rate_bound",
                    "max_sqp_iterations", "kkt_tolerance"});
    s.controller.horizon_steps = c.integer("horizon_steps");
    s.controller.horizon_seconds = c.num("horizon_seconds");
    s.controller.lambda = c.num("lambda");
    s.controller.psi = c.num("psi_m");
    s.controller.constraint_margin = c.num("constraint_margin_m");
    s.controller.sigmoid_alpha = c.num("sigmoid_alpha");
    s.controller.sigmoid_beta = c.num("sigmoid_beta");
    const auto& qx = c.child("state_weights");
    const auto& qu = c.child("input_weights");
    if (!qx.is_array() || qx.size() != 12 || !qu.is_array() || qu.size() != 4) {
      throw ScenarioError("controller: state_weights needs 12 entries, input_weights 4");
    }
    for (int k = 0; k < 12; ++k) s.controller.weights.qx(k) = qx[static_cast<std::size_t>(k)].get<double>();
    for (int k = 0; k < 4; ++k) s.controller.weights.qu(k) = qu[static_cast<std::size_t>(k)].get<double>();
    const auto sentinel_vec = [&](const char* key) {
      const Eigen::Vector3d raw = c.vec3(key);
      return Eigen::Vector3d(detail::from_sentinel(raw.x()),
                             detail::from_sentinel(raw.y()),
                             detail::from_sentinel(raw.z()));
    };
    s.controller.position_min = sentinel_vec("position_min");
    s.controller.position_max = sentinel_vec("position_max");
    s.controller.velocity_bound = c.vec3("velocity_bound");
    s.controller.body_rate_bound = c.vec3("body_rate_bound");
    s.controller.max_sqp_iterations = c.integer("max_sqp_iterations");
    s.controller.kkt_tolerance = c.num("kkt_tolerance");
    if (s.controller.horizon_steps < 1 || s.controller.horizon_seconds <= 0.0 ||
        s.controller.lambda <= 0.0) {
      throw ScenarioError("controller: invalid horizon or lambda");
    }
  }
  return s;
}

/// Applies "dotted.path=value" onto a scenario JSON document. The path must
/// already exist, which catches typos before they become silent defaults.
inline void apply_override(nlohmann::ordered_json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ScenarioError("override '" + spec + "': expected KEY=VALUE");
  }
  const std::string path = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);

  nlohmann::ordered_json* node = &doc;
  std::size_t start = 0;
  std::string walked;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    walked += (walked.empty() ? "" : ".") + key;
    if (!node->is_object() || !node->contains(key)) {
      throw ScenarioError("override: no such field '" + walked + "'");
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    *node = nlohmann::ordered_json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    *node = value;  // bare strings are allowed unquoted
  }
}

/// Parses a scenario file; parse errors are reported with line/column.
inline nlohmann::ordered_json parse_scenario_text(const std::string& text,
                                                  const std::string& origin) {
  try {
    return nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t n = 0; n + 1 < e.byte && n < text.size(); ++n) {
      if (text[n] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream msg;
    msg << origin << ":" << line << ":" << col << ": " << e.what();
    throw ScenarioError(msg.str());
  }
}

inline nlohmann::ordered_json load_scenario_document(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str(), path.string());
}

}  // namespace rnav
