#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "rnav/episode.hpp"
#include "rnav/risk.hpp"

namespace rnav {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline ordered_json vec_json(const Eigen::Vector3d& v) {
  return ordered_json::array({v.x(), v.y(), v.z()});
}

inline ordered_json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace detail

/// One JSON object per tick. Infinities (no active constraint) map to null;
/// wall-clock timings are deliberately absent so logs are bit-reproducible.
inline ordered_json tick_to_json(const TickRecord& rec) {
  ordered_json j;
  j["t"] = rec.t;
  j["p"] = detail::vec_json(rec.p);
  j["v"] = detail::vec_json(rec.v);
  j["q"] = ordered_json::array({rec.q.w(), rec.q.x(), rec.q.y(), rec.q.z()});
  j["w"] = detail::vec_json(rec.w);
  j["u"] = ordered_json::array({rec.u(0), rec.u(1), rec.u(2), rec.u(3)});
  j["p_ref"] = detail::vec_json(rec.p_ref);
  j["min_h"] = detail::finite_or_null(rec.min_h);
  j["min_residual"] = detail::finite_or_null(rec.min_residual);
  j["nu"] = rec.nu;
  j["min_ttc"] = detail::finite_or_null(rec.min_ttc);
  j["n_risk_points"] = rec.n_risk_points;
  j["sqp_iterations"] = rec.sqp_iterations;
  j["kkt"] = detail::finite_or_null(rec.kkt);
  j["max_slack"] = rec.max_slack;
  j["solver_status"] = rec.solver_status;
  j["fell_back"] = rec.fell_back;
  j["collision"] = rec.collision;
  j["perception_tick"] = rec.perception_tick;
  if (rec.perception_tick) {
    ordered_json pts = ordered_json::array();
    for (const auto& p : rec.risk_points) pts.push_back(detail::vec_json(p));
    j["risk_points"] = std::move(pts);
  }
  return j;
}

inline void write_episode_jsonl(const std::filesystem::path& path,
                                const EpisodeLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  for (const auto& rec : log.ticks) {
    out << tick_to_json(rec).dump() << "\n";
  }
}

inline std::string episode_jsonl_string(const EpisodeLog& log) {
  std::string s;
  for (const auto& rec : log.ticks) {
    s += tick_to_json(rec).dump();
    s += "\n";
  }
  return s;
}

inline ordered_json metrics_to_json(const EpisodeMetrics& m,
                                    const EpisodeLog& log) {
  ordered_json j;
  j["scenario"] = log.scenario_name;
  j["seed"] = log.seed;
  j["ticks"] = log.ticks.size();
  j["success"] = m.success;
  j["goal_reached"] = m.goal_reached;
  j["collision"] = m.collision;
  j["final_goal_distance_m"] = m.final_goal_distance;
  j["min_h_m2"] = detail::finite_or_null(m.min_h);
  j["min_residual"] = detail::finite_or_null(m.min_residual);
  j["tracking_rmse_m"] = m.tracking_rmse;
  j["peak_speed_mps"] = m.peak_speed;
  j["max_slack"] = m.max_slack;
  j["fallback_count"] = m.fallback_count;
  j["mean_sqp_iterations"] = m.mean_sqp_iterations;
  j["mean_solve_time_s"] = m.mean_solve_time_s;
  j["p95_solve_time_s"] = m.p95_solve_time_s;
  return j;
}

/// Plot-ready CSVs: barrier value over time and the flown vs reference path.
inline void write_min_h_csv(const std::filesystem::path& path, const EpisodeLog& log) {
  std::ofstream out(path);
  out << "t_s,min_h_m2\n";
  char buf[80];
  for (const auto& rec : log.ticks) {
    if (std::isfinite(rec.min_h)) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.9g\n", rec.t, rec.min_h);
    } else {
      std::snprintf(buf, sizeof(buf), "%.6f,\n", rec.t);
    }
    out << buf;
  }
}

inline void write_path_csv(const std::filesystem::path& path, const EpisodeLog& log) {
  std::ofstream out(path);
  out << "t_s,x_m,y_m,z_m,x_ref_m,y_ref_m,z_ref_m\n";
  char buf[200];
  for (const auto& rec : log.ticks) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", rec.t,
                  rec.p.x(), rec.p.y(), rec.p.z(), rec.p_ref.x(), rec.p_ref.y(),
                  rec.p_ref.z());
    out << buf;
  }
}

/// Debug dump of selected risk points (i, j, ttc_s, depth_m, xw, yw, zw).
inline void write_risk_points_csv(const std::filesystem::path& path,
                                  const std::vector<RiskPoint>& points) {
  std::ofstream out(path);
  out << "i,j,ttc_s,depth_m,xw,yw,zw\n";
  char buf[200];
  for (const auto& pt : points) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  pt.pixel.x(), pt.pixel.y(), pt.ttc, pt.depth, pt.p_world.x(),
                  pt.p_world.y(), pt.p_world.z());
    out << buf;
  }
}

}  // namespace rnav
