#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "rnav/depth_completion.hpp"
#include "rnav/geometry.hpp"
#include "rnav/random.hpp"
#include "rnav/raster.hpp"

namespace rnav {

constexpr float kInfDepth = std::numeric_limits<float>::infinity();

/// Analytic world primitive. Cylinders are vertical (axis +z through the
/// center), boxes are axis-aligned.
struct ObstaclePrimitive {
  enum class Kind { sphere, cylinder, box };
  Kind kind = Kind::sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.5;                                // sphere, cylinder
  double height = 2.0;                                // cylinder
  Eigen::Vector3d half_extents{0.5, 0.5, 0.5};        // box

  static ObstaclePrimitive sphere(const Eigen::Vector3d& c, double r) {
    ObstaclePrimitive o;
    o.kind = Kind::sphere;
    o.center = c;
    o.radius = r;
    return o;
  }
  static ObstaclePrimitive cylinder(const Eigen::Vector3d& c, double r, double h) {
    ObstaclePrimitive o;
    o.kind = Kind::cylinder;
    o.center = c;
    o.radius = r;
    o.height = h;
    return o;
  }
  static ObstaclePrimitive box(const Eigen::Vector3d& c, const Eigen::Vector3d& he) {
    ObstaclePrimitive o;
    o.kind = Kind::box;
    o.center = c;
    o.half_extents = he;
    return o;
  }

  /// Nearest intersection parameter along a unit ray, if any.
  std::optional<double> ray_hit(const Eigen::Vector3d& origin,
                                const Eigen::Vector3d& dir) const {
    switch (kind) {
      case Kind::sphere: {
        const Eigen::Vector3d oc = origin - center;
        const double b = oc.dot(dir);
        const double c = oc.squaredNorm() - radius * radius;
        const double disc = b * b - c;
        if (disc < 0.0) return std::nullopt;
        const double sq = std::sqrt(disc);
        const double t0 = -b - sq;
        if (t0 > 1e-9) return t0;
        const double t1 = -b + sq;
        if (t1 > 1e-9) return t1;
        return std::nullopt;
      }
      case Kind::cylinder: {
        std::optional<double> best;
        const double zlo = center.z() - 0.5 * height;
        const double zhi = center.z() + 0.5 * height;
        const double ox = origin.x() - center.x();
        const double oy = origin.y() - center.y();
        const double a = dir.x() * dir.x() + dir.y() * dir.y();
        if (a > 1e-14) {
          const double b = (ox * dir.x() + oy * dir.y()) / a;
          const double c = (ox * ox + oy * oy - radius * radius) / a;
          const double disc = b * b - c;
          if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            for (const double t : {-b - sq, -b + sq}) {
              if (t > 1e-9) {
                const double z = origin.z() + t * dir.z();
                if (z >= zlo && z <= zhi && (!best || t < *best)) best = t;
              }
            }
          }
        }
        if (std::abs(dir.z()) > 1e-14) {
          for (const double zcap : {zlo, zhi}) {
            const double t = (zcap - origin.z()) / dir.z();
            if (t > 1e-9) {
              const double x = ox + t * dir.x();
              const double y = oy + t * dir.y();
              if (x * x + y * y <= radius * radius && (!best || t < *best)) best = t;
            }
          }
        }
        return best;
      }
      case Kind::box: {
        double tmin = -std::numeric_limits<double>::infinity();
        double tmax = std::numeric_limits<double>::infinity();
        for (int ax = 0; ax < 3; ++ax) {
          const double lo = center(ax) - half_extents(ax);
          const double hi = center(ax) + half_extents(ax);
          if (std::abs(dir(ax)) < 1e-14) {
            if (origin(ax) < lo || origin(ax) > hi) return std::nullopt;
            continue;
          }
          double t0 = (lo - origin(ax)) / dir(ax);
          double t1 = (hi - origin(ax)) / dir(ax);
          if (t0 > t1) std::swap(t0, t1);
          tmin = std::max(tmin, t0);
          tmax = std::min(tmax, t1);
        }
        if (tmin > tmax) return std::nullopt;
        if (tmin > 1e-9) return tmin;
        if (tmax > 1e-9) return tmax;  // origin inside
        return std::nullopt;
      }
    }
    return std::nullopt;
  }

  /// Signed distance to the surface (negative inside).
  double signed_distance(const Eigen::Vector3d& p) const {
    switch (kind) {
      case Kind::sphere:
        return (p - center).norm() - radius;
      case Kind::cylinder: {
        const double dxy = std::hypot(p.x() - center.x(), p.y() - center.y()) - radius;
        const double dz = std::abs(p.z() - center.z()) - 0.5 * height;
        const double ox = std::max(dxy, 0.0);
        const double oz = std::max(dz, 0.0);
        return std::hypot(ox, oz) + std::min(std::max(dxy, dz), 0.0);
      }
      case Kind::box: {
        const Eigen::Vector3d q = (p - center).cwiseAbs() - half_extents;
        const double outside = q.cwiseMax(0.0).norm();
        const double inside = std::min(q.maxCoeff(), 0.0);
        return outside + inside;
      }
    }
    return std::numeric_limits<double>::infinity();
  }
};

struct World {
  std::vector<ObstaclePrimitive> obstacles;
  bool ground_plane = true;  // z = 0

  double surface_distance(const Eigen::Vector3d& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : obstacles) best = std::min(best, o.signed_distance(p));
    if (ground_plane) best = std::min(best, p.z());
    return best;
  }
};

/// Per-pixel z-depth (projection onto the optical axis, RGB-D convention) of
/// the nearest surface; +inf where nothing is hit.
inline DepthRaster render_depth(const World& world, const RigidTransform& cam_to_world,
                                const RayField& rays) {
  DepthRaster out(rays.width, rays.height, kInfDepth);
  const Eigen::Vector3d origin = cam_to_world.translation;
  float* dst = out.data();
  for (std::size_t n = 0; n < out.size(); ++n) {
    const Eigen::Vector3d& dir_cam = rays.directions[n];
    const Eigen::Vector3d dir = cam_to_world.rotation * dir_cam;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : world.obstacles) {
      if (const auto t = o.ray_hit(origin, dir)) best = std::min(best, *t);
    }
    if (world.ground_plane && dir.z() < -1e-14) {
      const double t = -origin.z() / dir.z();
      if (t > 1e-9) best = std::min(best, t);
    }
    if (std::isfinite(best)) {
      dst[n] = static_cast<float>(best * dir_cam.z());
    }
  }
  return out;
}

/// RGB-D style corruption: range clip, seeded random dropout, a dropout band
/// around depth discontinuities, and additive Gaussian noise on survivors.
struct SensorModel {
  double range = 3.0;        // m; beyond this the pixel is invalid
  double dropout_rate = 0.1;
  double noise_sigma = 0.01;  // m
  int edge_width = 2;         // px (Chebyshev) around discontinuities
  double edge_jump = 0.2;     // m jump that counts as a discontinuity
};

inline DepthFrame corrupt(const DepthRaster& truth, const SensorModel& sensor,
                          std::uint64_t seed, double timestamp = 0.0) {
  const int w = truth.width();
  const int h = truth.height();
  DepthFrame out;
  out.timestamp = timestamp;
  out.values = DepthRaster(w, h, std::numeric_limits<float>::quiet_NaN());
  out.mask = MaskRaster(w, h, kMaskInvalid);

  // discontinuity band
  Raster<std::uint8_t> edge(w, h, 0);
  if (sensor.edge_width > 0) {
    const auto jump = [&](float a, float b) {
      const bool fa = std::isfinite(a), fb = std::isfinite(b);
      if (fa != fb) return true;
      if (!fa) return false;
      return std::abs(a - b) > sensor.edge_jump;
    };
    Raster<std::uint8_t> disc(w, h, 0);
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        const float d = truth.at(i, j);
        if ((i + 1 < w && jump(d, truth.at(i + 1, j))) ||
            (j + 1 < h && jump(d, truth.at(i, j + 1)))) {
          disc.at(i, j) = 1;
        }
      }
    }
    const int r = sensor.edge_width;
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        for (int dj = -r; dj <= r && !edge.at(i, j); ++dj) {
          const int jj = j + dj;
          if (jj < 0 || jj >= h) continue;
          for (int di = -r; di <= r; ++di) {
            const int ii = i + di;
            if (ii < 0 || ii >= w) continue;
            if (disc.at(ii, jj)) {
              edge.at(i, j) = 1;
              break;
            }
          }
        }
      }
    }
  }

  auto rng = make_rng(seed, 0xd377ULL);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      // draw per pixel in raster order so the stream is reproducible
      const double drop_draw = uniform(rng);
      const double noise_draw = gauss(rng);
      const float d = truth.at(i, j);
      if (!std::isfinite(d) || d > sensor.range) continue;
      if (edge.at(i, j)) continue;
      if (drop_draw < sensor.dropout_rate) continue;
      const double noisy =
          std::max(static_cast<double>(d) + sensor.noise_sigma * noise_draw, 0.01);
      out.values.at(i, j) = static_cast<float>(noisy);
      out.mask.at(i, j) = kMaskValid;
    }
  }
  return out;
}

}  // namespace rnav
