#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rnav/raster.hpp"

namespace rnav {

/// Pinhole camera. Pixel (i, j) = (column, row); camera frame is
/// x right, y down, z forward (optical axis).
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
           cx < width && cy >= 0.0 && cy < height;
  }
};

/// Rotation + translation. Applies as R * x + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }

  /// this ∘ other: applies `other` first.
  RigidTransform compose(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }

  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
        .cwiseAbs()
        .maxCoeff();
  }

  /// Nearest rotation matrix (polar decomposition via SVD), det forced to +1.
  RigidTransform orthonormalized() const {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    Eigen::Matrix3d r = u * v.transpose();
    if (r.determinant() < 0.0) {
      u.col(2) *= -1.0;
      r = u * v.transpose();
    }
    return {r, translation};
  }

  /// Re-projects onto SO(3) only when drift exceeds `tol`.
  RigidTransform renormalized(double tol = 1e-9) const {
    if (orthonormality_error() > tol || std::abs(rotation.determinant() - 1.0) > tol) {
      return orthonormalized();
    }
    return *this;
  }
};

/// Per-pixel unit ray directions in the camera frame.
struct RayField {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3d> directions;  // row-major

  const Eigen::Vector3d& at(int i, int j) const {
    assert(i >= 0 && i < width && j >= 0 && j < height);
    return directions[static_cast<std::size_t>(j) * width + i];
  }
};

/// Unit ray through pixel (i, j): normalize([(i-cx)/fx, (j-cy)/fy, 1]).
inline Eigen::Vector3d pixel_ray(double i, double j, const CameraIntrinsics& intr) {
  return Eigen::Vector3d((i - intr.cx) / intr.fx, (j - intr.cy) / intr.fy, 1.0)
      .normalized();
}

inline RayField ray_directions(const CameraIntrinsics& intr) {
  assert(intr.valid());
  RayField field;
  field.width = intr.width;
  field.height = intr.height;
  field.directions.reserve(static_cast<std::size_t>(intr.width) * intr.height);
  for (int j = 0; j < intr.height; ++j) {
    for (int i = 0; i < intr.width; ++i) {
      field.directions.push_back(pixel_ray(i, j, intr));
    }
  }
  return field;
}

/// Pixel + z-depth to camera-frame point: ((i-cx)z/fx, (j-cy)z/fy, z).
inline Eigen::Vector3d backproject(double i, double j, double z,
                                   const CameraIntrinsics& intr) {
  if (!(z > 0.0)) {
    throw std::invalid_argument("backproject: depth must be positive");
  }
  return {(i - intr.cx) * z / intr.fx, (j - intr.cy) * z / intr.fy, z};
}

/// Perspective projection; returns (i, j). Requires p.z > 0.
inline Eigen::Vector2d project(const Eigen::Vector3d& p_cam,
                               const CameraIntrinsics& intr) {
  assert(p_cam.z() > 0.0);
  return {intr.cx + intr.fx * p_cam.x() / p_cam.z(),
          intr.cy + intr.fy * p_cam.y() / p_cam.z()};
}

/// Camera-frame point to world frame: R_WB (R_BC p + t_BC) + t_WB.
inline Eigen::Vector3d cam_to_world(const Eigen::Vector3d& pt_cam,
                                    const RigidTransform& cam_to_body,
                                    const RigidTransform& body_to_world) {
  return body_to_world.apply(cam_to_body.apply(pt_cam));
}

}  // namespace rnav
