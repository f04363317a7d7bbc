#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "rnav/quadrotor.hpp"

namespace rnav {

struct Waypoint {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
};

/// Flat outputs (position derivatives through snap, yaw and yaw rate).
struct FlatSample {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Vec3 j = Vec3::Zero();
  Vec3 s = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
};

/// Piecewise-quintic minimum-jerk interpolant through waypoints: position,
/// velocity and acceleration are continuous, boundary velocity/acceleration
/// are zero, and interior knots keep jerk and snap continuous (the
/// first-order optimality condition of the jerk integral).
class MinJerkTrajectory {
public:
  static std::optional<MinJerkTrajectory> fit(std::span<const Waypoint> waypoints,
                                              double duration) {
    if (waypoints.size() < 2 || !(duration > 0.0)) return std::nullopt;
    MinJerkTrajectory traj;
    const int nseg = static_cast<int>(waypoints.size()) - 1;

    // durations proportional to leg length, floored so coincident waypoints
    // cannot produce zero-length segments
    std::vector<double> lengths(nseg);
    double total = 0.0;
    for (int k = 0; k < nseg; ++k) {
      lengths[k] = (waypoints[k + 1].position - waypoints[k].position).norm();
      total += lengths[k];
    }
    traj.seg_duration_.resize(nseg);
    if (total <= 1e-12) {
      for (int k = 0; k < nseg; ++k) traj.seg_duration_[k] = duration / nseg;
    } else {
      const double floor_len = 0.05 * total / nseg;
      double weighted = 0.0;
      for (int k = 0; k < nseg; ++k) weighted += std::max(lengths[k], floor_len);
      for (int k = 0; k < nseg; ++k) {
        traj.seg_duration_[k] = duration * std::max(lengths[k], floor_len) / weighted;
      }
    }
    traj.seg_start_.resize(nseg + 1);
    traj.seg_start_[0] = 0.0;
    for (int k = 0; k < nseg; ++k) {
      traj.seg_start_[k + 1] = traj.seg_start_[k] + traj.seg_duration_[k];
    }

    // unwrap yaw to the closest branch
    std::vector<double> yaw(waypoints.size());
    yaw[0] = waypoints[0].yaw;
    for (std::size_t k = 1; k < waypoints.size(); ++k) {
      double y = waypoints[k].yaw;
      while (y - yaw[k - 1] > M_PI) y -= 2.0 * M_PI;
      while (y - yaw[k - 1] < -M_PI) y += 2.0 * M_PI;
      yaw[k] = y;
    }

    for (int ch = 0; ch < 4; ++ch) {
      std::vector<double> values(waypoints.size());
      for (std::size_t k = 0; k < waypoints.size(); ++k) {
        values[k] = ch < 3 ? waypoints[k].position(ch) : yaw[k];
      }
      if (!traj.solve_channel(ch, values)) return std::nullopt;
    }
    return traj;
  }

  double duration() const { return seg_start_.back(); }

  /// Segment boundary times, including 0 and the total duration.
  const std::vector<double>& knot_times() const { return seg_start_; }

  FlatSample sample(double t) const {
    FlatSample out;
    if (t >= duration()) {
      // hold the terminal waypoint
      const int k = static_cast<int>(seg_duration_.size()) - 1;
      for (int ch = 0; ch < 4; ++ch) {
        const double val = eval(ch, k, 1.0, 0);
        if (ch < 3) {
          out.p(ch) = val;
        } else {
          out.yaw = val;
        }
      }
      return out;
    }
    const double tc = std::max(t, 0.0);
    int k = 0;
    while (k + 1 < static_cast<int>(seg_duration_.size()) && tc >= seg_start_[k + 1]) {
      ++k;
    }
    const double tau = (tc - seg_start_[k]) / seg_duration_[k];
    for (int ch = 0; ch < 4; ++ch) {
      double d[5];
      for (int m = 0; m <= 4; ++m) {
        d[m] = eval(ch, k, tau, m) / std::pow(seg_duration_[k], m);
      }
      if (ch < 3) {
        out.p(ch) = d[0];
        out.v(ch) = d[1];
        out.a(ch) = d[2];
        out.j(ch) = d[3];
        out.s(ch) = d[4];
      } else {
        out.yaw = d[0];
        out.yaw_rate = d[1];
      }
    }
    return out;
  }

private:
  // coeffs_[ch][k*6 + i]: channel ch, segment k, coefficient of tau^i
  std::array<std::vector<double>, 4> coeffs_;
  std::vector<double> seg_duration_;
  std::vector<double> seg_start_;

  // m-th derivative in normalized time at tau
  double eval(int ch, int k, double tau, int m) const {
    const double* c = coeffs_[static_cast<std::size_t>(ch)].data() + 6 * k;
    double acc = 0.0;
    for (int i = 5; i >= m; --i) {
      double f = 1.0;
      for (int r = 0; r < m; ++r) f *= (i - r);
      acc = acc * tau + f * c[i];
    }
    return acc;
  }

  bool solve_channel(int ch, const std::vector<double>& values) {
    const int nseg = static_cast<int>(seg_duration_.size());
    const int n = 6 * nseg;
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    int row = 0;

    const auto basis = [](double tau, int m, double* b) {
      for (int i = 0; i < 6; ++i) {
        if (i < m) {
          b[i] = 0.0;
          continue;
        }
        double f = 1.0;
        for (int r = 0; r < m; ++r) f *= (i - r);
        b[i] = f * std::pow(tau, i - m);
      }
    };

    double b[6];
    for (int k = 0; k < nseg; ++k) {
      basis(0.0, 0, b);
      for (int i = 0; i < 6; ++i) sys(row, 6 * k + i) = b[i];
      rhs(row++) = values[static_cast<std::size_t>(k)];
      basis(1.0, 0, b);
      for (int i = 0; i < 6; ++i) sys(row, 6 * k + i) = b[i];
      rhs(row++) = values[static_cast<std::size_t>(k) + 1];
    }
    // zero boundary velocity and acceleration
    for (int m : {1, 2}) {
      basis(0.0, m, b);
      for (int i = 0; i < 6; ++i) sys(row, i) = b[i] / std::pow(seg_duration_[0], m);
      rhs(row++) = 0.0;
      basis(1.0, m, b);
      for (int i = 0; i < 6; ++i) {
        sys(row, 6 * (nseg - 1) + i) = b[i] / std::pow(seg_duration_[nseg - 1], m);
      }
      rhs(row++) = 0.0;
    }
    // interior continuity of derivatives 1..4
    for (int k = 0; k + 1 < nseg; ++k) {
      for (int m = 1; m <= 4; ++m) {
        basis(1.0, m, b);
        for (int i = 0; i < 6; ++i) {
          sys(row, 6 * k + i) = b[i] / std::pow(seg_duration_[k], m);
        }
        basis(0.0, m, b);
        for (int i = 0; i < 6; ++i) {
          sys(row, 6 * (k + 1) + i) = -b[i] / std::pow(seg_duration_[k + 1], m);
        }
        rhs(row++) = 0.0;
      }
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (!lu.isInvertible()) return false;
    const Eigen::VectorXd sol = lu.solve(rhs);
    auto& c = coeffs_[static_cast<std::size_t>(ch)];
    c.assign(sol.data(), sol.data() + n);
    return true;
  }
};

/// Reference for one NMPC horizon: N+1 states, N inputs.
struct ReferenceTrajectory {
  std::vector<VehicleState> states;
  std::vector<ControlInput> inputs;
};

/// Maps a flat sample to a full state and nominal input via differential
/// flatness: attitude from the thrust direction and yaw, body rates from the
/// jerk projection, collective thrust split equally across motors. Rejects
/// samples near the free-fall singularity.
inline std::optional<std::pair<VehicleState, ControlInput>> flat_to_reference(
    const FlatSample& flat, const VehicleParams& params) {
  const Vec3 thrust_vec = flat.a + Vec3(0, 0, params.gravity);
  const double c = thrust_vec.norm();
  if (c < 0.05 * params.gravity) return std::nullopt;

  const Vec3 zb = thrust_vec / c;
  const Vec3 xc(std::cos(flat.yaw), std::sin(flat.yaw), 0.0);
  Vec3 yb = zb.cross(xc);
  const double yb_norm = yb.norm();
  if (yb_norm < 1e-6) return std::nullopt;  // pitched onto the yaw axis
  yb /= yb_norm;
  const Vec3 xb = yb.cross(zb);

  Eigen::Matrix3d rot;
  rot.col(0) = xb;
  rot.col(1) = yb;
  rot.col(2) = zb;

  VehicleState x;
  x.p = flat.p;
  x.v = flat.v;
  x.q_att = Eigen::Quaterniond(rot).normalized();
  x.w = Vec3(-yb.dot(flat.j) / c, xb.dot(flat.j) / c, flat.yaw_rate * zb.z());

  ControlInput u;
  u.thrusts = Vec4::Constant(params.mass * c / 4.0);
  return std::make_pair(x, u);
}

/// Samples an NMPC reference window starting at t0. Falls back to a hover
/// sample at the trajectory position when the flat map rejects a sample.
inline ReferenceTrajectory sample_reference(const MinJerkTrajectory& traj, double t0,
                                            int n, double dt,
                                            const VehicleParams& params) {
  ReferenceTrajectory ref;
  ref.states.reserve(static_cast<std::size_t>(n) + 1);
  ref.inputs.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k <= n; ++k) {
    const FlatSample flat = traj.sample(t0 + k * dt);
    auto mapped = flat_to_reference(flat, params);
    if (!mapped) {
      VehicleState hover = VehicleState::hover_at(flat.p, flat.yaw);
      hover.v = flat.v;
      mapped = std::make_pair(hover, ControlInput::hover(params));
    }
    ref.states.push_back(mapped->first);
    if (k < n) ref.inputs.push_back(mapped->second);
  }
  return ref;
}

}  // namespace rnav
