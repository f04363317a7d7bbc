#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rnav/cbf.hpp"
#include "rnav/scenario.hpp"

namespace rnav {

/// One control tick. Wall-clock solve times live outside the record so logs
/// stay bit-reproducible; timing goes to the metrics summary instead.
struct TickRecord {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vec3 w = Vec3::Zero();
  Vec4 u = Vec4::Zero();
  Vec3 p_ref = Vec3::Zero();
  double min_h = std::numeric_limits<double>::infinity();
  double min_residual = std::numeric_limits<double>::infinity();
  double nu = 1.0;
  double min_ttc = std::numeric_limits<double>::infinity();
  int n_risk_points = 0;
  int sqp_iterations = 0;
  double kkt = 0.0;
  double max_slack = 0.0;
  int solver_status = 0;
  bool fell_back = false;
  bool collision = false;
  bool perception_tick = false;
  std::vector<Eigen::Vector3d> risk_points;  // filled on perception ticks
};

struct EpisodeLog {
  std::string scenario_name;
  std::uint64_t seed = 0;
  double control_dt = 0.0;
  std::vector<TickRecord> ticks;
  std::vector<double> solve_times_s;  // per tick, excluded from serialization
  bool collided = false;
};

struct EpisodeMetrics {
  double min_h = std::numeric_limits<double>::infinity();
  double min_residual = std::numeric_limits<double>::infinity();
  double tracking_rmse = 0.0;
  double peak_speed = 0.0;
  double final_goal_distance = 0.0;
  bool collision = false;
  bool goal_reached = false;
  bool success = false;
  double mean_solve_time_s = 0.0;
  double p95_solve_time_s = 0.0;
  double mean_sqp_iterations = 0.0;
  double max_slack = 0.0;
  int fallback_count = 0;
};

/// Deterministic fixed-step closed loop: render/corrupt/complete/select at
/// the camera rate, control and world propagation at the control rate.
inline EpisodeLog run_episode(const Scenario& scenario,
                              std::optional<std::uint64_t> seed_override = {}) {
  if (scenario.goal_waypoints.empty()) {
    throw std::invalid_argument("run_episode: scenario needs goal waypoints");
  }
  const std::uint64_t seed = seed_override.value_or(scenario.seed);
  const double dt = 1.0 / scenario.control_hz;
  const int total_ticks = static_cast<int>(std::round(
      scenario.duration * scenario.control_hz));
  const int cam_every = std::max(
      1, static_cast<int>(std::round(scenario.control_hz / scenario.camera_hz)));

  std::vector<Waypoint> waypoints;
  waypoints.push_back({scenario.start_position, scenario.start_yaw});
  waypoints.insert(waypoints.end(), scenario.goal_waypoints.begin(),
                   scenario.goal_waypoints.end());
  const auto traj =
      MinJerkTrajectory::fit(waypoints, scenario.trajectory_duration);
  if (!traj) throw std::invalid_argument("run_episode: reference fit failed");

  const auto rays = ray_directions(scenario.camera);
  const RobotFootprint footprint = scenario.footprint();
  const SyntheticRelativeDepthProvider provider(scenario.perception.distortion);

  NmpcController controller(
      scenario.vehicle, scenario.controller.weights,
      scenario.controller.bounds(scenario.vehicle),
      scenario.controller.sqp_settings(), scenario.controller.horizon_steps,
      scenario.controller.dt(), scenario.controller.constraint_margin);

  ConstraintChannel channel;
  std::optional<AlignmentPoly> prev_poly;

  struct RetainedPoint {
    Eigen::Vector3d p;
    double born = 0.0;
  };
  std::vector<RetainedPoint> retained;

  EpisodeLog log;
  log.scenario_name = scenario.name;
  log.seed = seed;
  log.control_dt = dt;
  log.ticks.reserve(static_cast<std::size_t>(total_ticks));
  log.solve_times_s.reserve(static_cast<std::size_t>(total_ticks));

  VehicleState x = VehicleState::hover_at(scenario.start_position, scenario.start_yaw);

  for (int tick = 0; tick < total_ticks; ++tick) {
    const double t = tick * dt;
    TickRecord rec;
    rec.t = t;

    if (scenario.perception.enabled && tick % cam_every == 0) {
      const std::uint64_t frame = static_cast<std::uint64_t>(tick / cam_every);
      const RigidTransform body_to_world{x.q_att.toRotationMatrix(), x.p};
      const RigidTransform cam_to_world =
          body_to_world.compose(scenario.cam_to_body);
      const DepthRaster true_depth = render_depth(scenario.world, cam_to_world, rays);
      DepthFrame sensed =
          corrupt(true_depth, scenario.sensor, derive_seed(seed, 2 * frame + 1), t);
      // sensed validity additionally restricted to the working depth range
      sensed.mask = valid_mask(sensed.values, scenario.perception.clamp.z_min,
                               scenario.perception.clamp.z_max);
      const RelativeDepthFrame rel =
          provider.generate(true_depth, derive_seed(seed, 2 * frame + 2));

      FitQuality quality;
      auto poly =
          fit_alignment(sensed, rel, scenario.perception.fit_order, &quality);
      if (poly) {
        float rel_lo = std::numeric_limits<float>::infinity();
        float rel_hi = -std::numeric_limits<float>::infinity();
        for (const float r : rel.values) {
          rel_lo = std::min(rel_lo, r);
          rel_hi = std::max(rel_hi, r);
        }
        if (quality.std_at(rel_lo) > scenario.perception.max_extrapolation_std ||
            quality.std_at(rel_hi) > scenario.perception.max_extrapolation_std) {
          poly.reset();  // extrapolation would be statistically void
        }
      }
      if (!poly) poly = prev_poly;  // reuse the last good fit
      if (!poly) poly = AlignmentPoly::passthrough();
      prev_poly = poly;
      const CompletedDepth completed =
          complete(rel, *poly, scenario.perception.clamp);

      RiskSelectorParams sel_params;
      sel_params.pool = scenario.perception.pool;
      sel_params.top = scenario.perception.top_k;
      sel_params.eps_v = scenario.perception.eps_v;
      sel_params.z_min = scenario.perception.clamp.z_min;
      const RiskSelection sel =
          select_risk_points(completed, x.v, rays, scenario.camera,
                             scenario.cam_to_body, body_to_world, footprint,
                             sel_params);

      ConstraintSet set;
      set.r_safe = footprint.r_safe();
      set.lambda = scenario.controller.lambda;
      set.stamp = t;
      set.points.reserve(sel.points.size());
      for (const auto& pt : sel.points) set.points.push_back(pt.p_world);

      // merge still-relevant points from earlier frames (see PerceptionConfig)
      if (scenario.perception.retention_time > 0.0) {
        const double radius =
            scenario.perception.retention_radius_scale * set.r_safe;
        std::vector<RetainedPoint> keep;
        for (const auto& old : retained) {
          if (t - old.born > scenario.perception.retention_time) continue;
          if ((old.p - x.p).norm() > radius) continue;
          bool duplicate = false;
          for (const auto& fresh : set.points) {
            if ((fresh - old.p).norm() < 0.2) {
              duplicate = true;
              break;
            }
          }
          if (!duplicate) keep.push_back(old);
        }
        for (const auto& old : keep) set.points.push_back(old.p);
        if (static_cast<int>(set.points.size()) > scenario.perception.top_k) {
          std::sort(set.points.begin(), set.points.end(),
                    [&x](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
                      return (a - x.p).squaredNorm() < (b - x.p).squaredNorm();
                    });
          set.points.resize(static_cast<std::size_t>(scenario.perception.top_k));
        }
        retained.clear();
        for (const auto& pt : set.points) {
          double born = t;
          for (const auto& old : keep) {
            if ((old.p - pt).norm() < 1e-12) born = old.born;
          }
          retained.push_back({pt, born});
        }
      }

      const RiskGain gain =
          risk_gain(min_ttc(sel.ttc), scenario.controller.sigmoid_alpha,
                    scenario.controller.sigmoid_beta);
      channel.publish(std::move(set), gain);

      rec.perception_tick = true;
    }

    const auto snap = channel.latest();
    const ReferenceTrajectory ref =
        sample_reference(*traj, t, scenario.controller.horizon_steps,
                         scenario.controller.dt(), scenario.vehicle);
    const ControlInput u =
        controller.control_step(x, ref, snap->constraints, snap->gain);

    rec.p = x.p;
    rec.v = x.v;
    rec.q = x.q_att;
    rec.w = x.w;
    rec.u = u.thrusts;
    rec.p_ref = traj->sample(t).p;
    rec.nu = snap->gain.nu;
    rec.min_ttc = snap->gain.min_ttc;
    rec.n_risk_points = static_cast<int>(snap->constraints.points.size());
    if (rec.perception_tick) rec.risk_points = snap->constraints.points;
    for (const auto& q_pt : snap->constraints.points) {
      rec.min_h = std::min(rec.min_h, h_value(x.p, q_pt, snap->constraints.r_safe));
      rec.min_residual = std::min(
          rec.min_residual,
          cbf_residual(x, u, q_pt, snap->constraints.lambda,
                       snap->constraints.r_safe, scenario.vehicle));
    }
    rec.fell_back = controller.last_step_fell_back();
    if (const auto& res = controller.last_result(); res && !rec.fell_back) {
      rec.sqp_iterations = res->sqp_iterations;
      rec.kkt = res->kkt_residual;
      rec.max_slack = res->max_slack;
      rec.solver_status = static_cast<int>(res->status);
      log.solve_times_s.push_back(res->solve_time_s);
    } else {
      log.solve_times_s.push_back(0.0);
    }

    x = rk4_step(x, u, dt, scenario.vehicle);
    if (scenario.world.surface_distance(x.p) < scenario.vehicle.collision_radius()) {
      log.collided = true;
    }
    rec.collision = log.collided;
    log.ticks.push_back(std::move(rec));
  }
  return log;
}

inline EpisodeMetrics metrics(const EpisodeLog& log, const Vec3& goal,
                              double goal_tolerance) {
  if (log.ticks.empty()) throw std::invalid_argument("metrics: empty log");
  EpisodeMetrics m;
  double se = 0.0;
  double iter_sum = 0.0;
  for (const auto& rec : log.ticks) {
    m.min_h = std::min(m.min_h, rec.min_h);
    m.min_residual = std::min(m.min_residual, rec.min_residual);
    se += (rec.p - rec.p_ref).squaredNorm();
    m.peak_speed = std::max(m.peak_speed, rec.v.norm());
    m.collision = m.collision || rec.collision;
    m.max_slack = std::max(m.max_slack, rec.max_slack);
    iter_sum += rec.sqp_iterations;
    if (rec.fell_back) ++m.fallback_count;
  }
  m.tracking_rmse = std::sqrt(se / static_cast<double>(log.ticks.size()));
  m.mean_sqp_iterations = iter_sum / static_cast<double>(log.ticks.size());
  m.final_goal_distance = (log.ticks.back().p - goal).norm();
  m.goal_reached = m.final_goal_distance <= goal_tolerance;
  m.success = m.goal_reached && !m.collision;

  if (!log.solve_times_s.empty()) {
    std::vector<double> times = log.solve_times_s;
    double sum = 0.0;
    for (const double v : times) sum += v;
    m.mean_solve_time_s = sum / static_cast<double>(times.size());
    std::sort(times.begin(), times.end());
    const std::size_t idx = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(times.size()) - 1.0,
                         std::ceil(0.95 * static_cast<double>(times.size())) - 1.0));
    m.p95_solve_time_s = times[idx];
  }
  return m;
}

inline EpisodeMetrics metrics(const EpisodeLog& log, const Scenario& scenario) {
  return metrics(log, scenario.goal_waypoints.back().position,
                 scenario.goal_tolerance);
}

}  // namespace rnav
