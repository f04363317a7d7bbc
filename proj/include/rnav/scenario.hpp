#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rnav/depth_completion.hpp"
#include "rnav/geometry.hpp"
#include "rnav/nmpc.hpp"
#include "rnav/risk.hpp"
#include "rnav/sim.hpp"
#include "rnav/trajectory.hpp"

namespace rnav {

struct PerceptionConfig {
  bool enabled = true;
  int pool = 17;
  int top_k = 10;
  double eps_v = 0.05;
  int fit_order = 2;
  DepthClamp clamp;  // z_min 0.1, z_max 30
  SyntheticDistortion distortion;
  // A fit whose predictive std at the raster's relative-depth extremes
  // exceeds this is treated as degenerate (the previous fit is reused):
  // extrapolating it across the clamp range would be statistically void.
  double max_extrapolation_std = 3.0;
  // Near-field constraint retention: previously published points stay active
  // while younger than this and within retention_radius_scale * r_safe of
  // the vehicle. Covers the blind phase of a tangential pass, where the
  // footprint filter correctly drops flank pixels but the flank still
  // matters. Zero disables retention.
  double retention_time = 1.0;                // s
  double retention_radius_scale = 2.5;        // x r_safe
};

struct ControllerConfig {
  int horizon_steps = 10;
  double horizon_seconds = 1.0;
  double lambda = 2.0;
  double psi = 0.10;
  // The solver enforces rows against r_safe + margin; the logged barrier
  // stays relative to r_safe. Covers discretization slack and the inward
  // drift of freshly published surface points between frames.
  double constraint_margin = 0.15;
  double sigmoid_alpha = 2.0;
  double sigmoid_beta = 1.5;
  OcpWeights weights = OcpWeights::defaults();
  Vec3 position_min{-std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(), 0.4};
  Vec3 position_max{std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity()};
  Vec3 velocity_bound{5.0, 5.0, 3.0};
  Vec3 body_rate_bound{30.0, 30.0, 30.0};
  int max_sqp_iterations = 12;
  double kkt_tolerance = 1e-5;

  double dt() const { return horizon_seconds / horizon_steps; }

  OcpBounds bounds(const VehicleParams& params) const {
    OcpBounds b = OcpBounds::defaults(params);
    for (int k = 0; k < 3; ++k) {
      b.x_min(k) = position_min(k);
      b.x_max(k) = position_max(k);
      b.x_min(3 + k) = -velocity_bound(k);
      b.x_max(3 + k) = velocity_bound(k);
      b.x_min(10 + k) = -body_rate_bound(k);
      b.x_max(10 + k) = body_rate_bound(k);
    }
    return b;
  }

  SqpSettings sqp_settings() const {
    SqpSettings s;
    s.max_sqp_iterations = max_sqp_iterations;
    s.kkt_tolerance = kkt_tolerance;
    return s;
  }
};

/// Everything needed to run one deterministic closed-loop episode.
struct Scenario {
  std::string name = "unnamed";
  World world;
  Vec3 start_position{0, 0, 1.2};
  double start_yaw = 0.0;
  std::vector<Waypoint> goal_waypoints;
  double trajectory_duration = 8.0;  // min-jerk time allocation, s
  double duration = 10.0;            // episode length, s
  double goal_tolerance = 0.3;       // m
  VehicleParams vehicle;
  CameraIntrinsics camera{84.0, 84.0, 80.0, 60.0, 160, 120};  // ~87 deg hfov
  RigidTransform cam_to_body = forward_camera();
  SensorModel sensor;
  PerceptionConfig perception;
  ControllerConfig controller;
  double control_hz = 200.0;
  double camera_hz = 60.0;
  std::uint64_t seed = 0;

  /// Camera frame (x right, y down, z forward) to body frame (x forward,
  /// y left, z up), forward-facing mount.
  static RigidTransform forward_camera() {
    RigidTransform tf;
    tf.rotation << 0, 0, 1,
                  -1, 0, 0,
                   0, -1, 0;
    tf.translation = Eigen::Vector3d(0.08, 0.0, 0.0);
    return tf;
  }

  RobotFootprint footprint() const {
    return {vehicle.d_x, vehicle.d_y, controller.psi};
  }
};

}  // namespace rnav
