#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rnav/depth_completion.hpp"
#include "rnav/geometry.hpp"
#include "rnav/raster.hpp"

namespace rnav {

constexpr float kInfTtc = std::numeric_limits<float>::infinity();

/// Per-pixel time-to-collision in seconds; +inf marks pixels the vehicle is
/// not closing on.
struct TtcMap {
  Raster<float> values;
  Eigen::Vector3d v_cam = Eigen::Vector3d::Zero();
};

struct RobotFootprint {
  double d_x = 0.35;  // physical extent along camera x (m)
  double d_y = 0.35;  // physical extent along camera y (m)
  double psi = 0.10;  // safety tolerance (m)

  double r_safe() const { return std::max(d_x, d_y) + psi; }
};

/// A ranked collision threat carried from pixel space into the world frame.
struct RiskPoint {
  Eigen::Vector2i pixel;  // (i, j)
  double ttc = 0.0;
  double depth = 0.0;
  Eigen::Vector3d p_cam = Eigen::Vector3d::Zero();
  Eigen::Vector3d p_world = Eigen::Vector3d::Zero();
};

/// TTC = depth / closing speed, where the closing speed is the positive part
/// of the velocity projected on the pixel ray. Pixels closing slower than
/// eps_v get +inf: they cannot produce a finite-horizon threat.
inline TtcMap ttc_map(const CompletedDepth& depth, const Eigen::Vector3d& v_cam,
                      const RayField& rays, double eps_v) {
  assert(eps_v > 0.0);
  assert(depth.values.same_shape(rays.width, rays.height));
  TtcMap out;
  out.v_cam = v_cam;
  out.values = Raster<float>(depth.values.width(), depth.values.height(), kInfTtc);
  const float* d = depth.values.data();
  float* t = out.values.data();
  for (std::size_t n = 0; n < out.values.size(); ++n) {
    const double s = v_cam.dot(rays.directions[n]);
    if (s >= eps_v) t[n] = static_cast<float>(d[n] / s);
  }
  return out;
}

/// One argmin coordinate per non-overlapping PxP cell (partial edge cells
/// included); all-inf cells yield nothing. Ties break to the row-major first
/// occurrence.
inline std::vector<Eigen::Vector2i> min_pool(const TtcMap& ttc, int pool) {
  assert(pool >= 1);
  const int w = ttc.values.width();
  const int h = ttc.values.height();
  std::vector<Eigen::Vector2i> out;
  for (int v = 0; v * pool < h; ++v) {
    for (int u = 0; u * pool < w; ++u) {
      float best = kInfTtc;
      Eigen::Vector2i arg(-1, -1);
      const int j_end = std::min((v + 1) * pool, h);
      const int i_end = std::min((u + 1) * pool, w);
      for (int j = v * pool; j < j_end; ++j) {
        for (int i = u * pool; i < i_end; ++i) {
          const float val = ttc.values.at(i, j);
          if (val < best) {
            best = val;
            arg = {i, j};
          }
        }
      }
      if (arg.x() >= 0) out.push_back(arg);
    }
  }
  return out;
}

/// Keeps coordinates whose pixel offset from the principal point lies within
/// the robot's projected extents at that pixel's depth.
inline std::vector<Eigen::Vector2i> footprint_filter(
    const std::vector<Eigen::Vector2i>& coords, const CompletedDepth& depth,
    const CameraIntrinsics& intr, const RobotFootprint& fp, double z_min = 0.1) {
  std::vector<Eigen::Vector2i> out;
  out.reserve(coords.size());
  for (const auto& c : coords) {
    const double z = std::max(static_cast<double>(depth.values.at(c.x(), c.y())), z_min);
    const double half_i = fp.d_x * intr.fx / (2.0 * z);
    const double half_j = fp.d_y * intr.fy / (2.0 * z);
    if (std::abs(c.x() - intr.cx) <= half_i && std::abs(c.y() - intr.cy) <= half_j) {
      out.push_back(c);
    }
  }
  return out;
}

/// The K coordinates with the smallest TTC, ascending; ties break to
/// row-major pixel order. Returns the whole set when it has fewer than K.
inline std::vector<Eigen::Vector2i> top_k(const std::vector<Eigen::Vector2i>& coords,
                                          const TtcMap& ttc, int k) {
  assert(k >= 1);
  std::vector<Eigen::Vector2i> sorted = coords;
  std::sort(sorted.begin(), sorted.end(),
            [&ttc](const Eigen::Vector2i& a, const Eigen::Vector2i& b) {
              const float ta = ttc.values.at(a.x(), a.y());
              const float tb = ttc.values.at(b.x(), b.y());
              if (ta != tb) return ta < tb;
              if (a.y() != b.y()) return a.y() < b.y();
              return a.x() < b.x();
            });
  if (static_cast<int>(sorted.size()) > k) sorted.resize(static_cast<std::size_t>(k));
  return sorted;
}

struct RiskSelection {
  std::vector<RiskPoint> points;  // ascending TTC
  TtcMap ttc;
};

struct RiskSelectorParams {
  int pool = 17;
  int top = 10;
  double eps_v = 0.05;
  double z_min = 0.1;
};

/// Full chain: TTC map, min-pool, footprint filter, top-K, back-projection,
/// camera-to-world transform. The vehicle velocity arrives in the world frame
/// and is rotated into the camera frame internally.
inline RiskSelection select_risk_points(const CompletedDepth& depth,
                                        const Eigen::Vector3d& v_world,
                                        const RayField& rays,
                                        const CameraIntrinsics& intr,
                                        const RigidTransform& cam_to_body,
                                        const RigidTransform& body_to_world,
                                        const RobotFootprint& fp,
                                        const RiskSelectorParams& params) {
  const Eigen::Matrix3d r_wc = body_to_world.rotation * cam_to_body.rotation;
  const Eigen::Vector3d v_cam = r_wc.transpose() * v_world;

  RiskSelection sel;
  sel.ttc = ttc_map(depth, v_cam, rays, params.eps_v);
  const auto pooled = min_pool(sel.ttc, params.pool);
  const auto filtered = footprint_filter(pooled, depth, intr, fp, params.z_min);
  const auto top = top_k(filtered, sel.ttc, params.top);

  sel.points.reserve(top.size());
  for (const auto& c : top) {
    RiskPoint pt;
    pt.pixel = c;
    pt.ttc = sel.ttc.values.at(c.x(), c.y());
    pt.depth = std::max(static_cast<double>(depth.values.at(c.x(), c.y())), params.z_min);
    pt.p_cam = backproject(c.x(), c.y(), pt.depth, intr);
    pt.p_world = cam_to_world(pt.p_cam, cam_to_body, body_to_world);
    sel.points.push_back(pt);
  }
  return sel;
}

/// Minimum TTC over the map; +inf when nothing is closing. Equals the
/// minimum over the pooled candidate set since pooling preserves cell minima.
inline double min_ttc(const TtcMap& ttc) {
  float best = kInfTtc;
  for (const float v : ttc.values) best = std::min(best, v);
  return best;
}

}  // namespace rnav
