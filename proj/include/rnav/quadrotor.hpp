#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>

namespace rnav {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec13 = Eigen::Matrix<double, 13, 1>;
using Mat13 = Eigen::Matrix<double, 13, 13>;
using Mat13x4 = Eigen::Matrix<double, 13, 4>;

/// Quadrotor parameters. Defaults model a 1.2 kg platform with a 25 cm motor
/// span and thrust-to-weight ratio 4.
struct VehicleParams {
  double mass = 1.2;                    // kg
  Vec3 inertia{0.01, 0.01, 0.02};      // diagonal, kg m^2
  double arm_length = 0.125;            // m, center to motor
  double yaw_torque_coeff = 0.016;      // m
  double thrust_min = 0.0;              // N per motor
  double thrust_max = 1.2 * 9.81;       // N per motor (sum = 4 m g)
  double gravity = 9.81;                // m/s^2
  double d_x = 0.35;                    // footprint extent, m
  double d_y = 0.35;

  double hover_thrust_per_motor() const { return mass * gravity / 4.0; }
  double collision_radius() const { return std::max(d_x, d_y) / 2.0; }

  /// Torque rows of the X-configuration mixer, tau = mix * thrusts.
  /// Motors: 0 front-left (+x,+y), 1 back-left (-x,+y), 2 back-right (-x,-y),
  /// 3 front-right (+x,-y); diagonal pairs share spin direction.
  Eigen::Matrix<double, 3, 4> torque_mixer() const {
    const double l = arm_length / std::sqrt(2.0);
    const double c = yaw_torque_coeff;
    Eigen::Matrix<double, 3, 4> mix;
    mix << l, l, -l, -l,
          -l, l, l, -l,
           c, -c, c, -c;
    return mix;
  }
};

/// Rigid-body state. The quaternion is the internal attitude representation;
/// rotation matrices are derived on demand.
struct VehicleState {
  Vec3 p = Vec3::Zero();                               // position, world
  Vec3 v = Vec3::Zero();                               // velocity, world
  Eigen::Quaterniond q_att = Eigen::Quaterniond::Identity();  // body -> world
  Vec3 w = Vec3::Zero();                               // angular rate, body

  static VehicleState hover_at(const Vec3& position, double yaw = 0.0) {
    VehicleState x;
    x.p = position;
    x.q_att = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    return x;
  }

  Vec13 to_vector() const {
    Vec13 x;
    x.segment<3>(0) = p;
    x.segment<3>(3) = v;
    x(6) = q_att.w();
    x(7) = q_att.x();
    x(8) = q_att.y();
    x(9) = q_att.z();
    x.segment<3>(10) = w;
    return x;
  }

  static VehicleState from_vector(const Vec13& x) {
    VehicleState s;
    s.p = x.segment<3>(0);
    s.v = x.segment<3>(3);
    s.q_att = Eigen::Quaterniond(x(6), x(7), x(8), x(9));
    s.w = x.segment<3>(10);
    return s;
  }

  VehicleState normalized() const {
    VehicleState s = *this;
    s.q_att.normalize();
    return s;
  }
};

struct ControlInput {
  Vec4 thrusts = Vec4::Zero();  // N per motor

  static ControlInput hover(const VehicleParams& params) {
    return {Vec4::Constant(params.hover_thrust_per_motor())};
  }
};

namespace detail {

/// Body z axis in world coordinates, written out for the unit-norm quaternion
/// formula (polynomial in the raw components, so finite differences on the
/// raw state agree with the analytic partials).
inline Vec3 body_z_axis(double qw, double qx, double qy, double qz) {
  return {2.0 * (qx * qz + qw * qy), 2.0 * (qy * qz - qw * qx),
          1.0 - 2.0 * (qx * qx + qy * qy)};
}

inline Eigen::Matrix<double, 3, 4> body_z_axis_jacobian(double qw, double qx,
                                                        double qy, double qz) {
  Eigen::Matrix<double, 3, 4> jac;
  jac << 2 * qy, 2 * qz, 2 * qw, 2 * qx,
        -2 * qx, -2 * qw, 2 * qz, 2 * qy,
         0.0, -4 * qx, -4 * qy, 0.0;
  return jac;
}

inline Eigen::Matrix3d skew(const Vec3& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace detail

/// Translational acceleration induced by the thrusts at the given attitude.
inline Vec3 translational_acceleration(const VehicleState& x, const ControlInput& u,
                                       const VehicleParams& params) {
  const double total = u.thrusts.sum();
  const Vec3 zb = detail::body_z_axis(x.q_att.w(), x.q_att.x(), x.q_att.y(),
                                      x.q_att.z());
  return Vec3(0, 0, -params.gravity) + zb * (total / params.mass);
}

/// Continuous rigid-body dynamics on the raw 13-vector
/// [p, v, q(w,x,y,z), w].
inline Vec13 dynamics(const Vec13& x, const Vec4& u, const VehicleParams& params) {
  const double qw = x(6), qx = x(7), qy = x(8), qz = x(9);
  const Vec3 omega = x.segment<3>(10);
  const double total = u.sum();

  Vec13 dx;
  dx.segment<3>(0) = x.segment<3>(3);
  dx.segment<3>(3) = Vec3(0, 0, -params.gravity) +
                     detail::body_z_axis(qw, qx, qy, qz) * (total / params.mass);
  // qdot = 0.5 q (x) (0, w)
  dx(6) = 0.5 * (-qx * omega.x() - qy * omega.y() - qz * omega.z());
  dx(7) = 0.5 * (qw * omega.x() + qy * omega.z() - qz * omega.y());
  dx(8) = 0.5 * (qw * omega.y() + qz * omega.x() - qx * omega.z());
  dx(9) = 0.5 * (qw * omega.z() + qx * omega.y() - qy * omega.x());

  const Vec3 tau = params.torque_mixer() * u;
  const Vec3 j = params.inertia;
  const Vec3 jw(j.x() * omega.x(), j.y() * omega.y(), j.z() * omega.z());
  const Vec3 wdot = (tau - omega.cross(jw)).cwiseQuotient(j);
  dx.segment<3>(10) = wdot;
  return dx;
}

inline Vec13 dynamics(const VehicleState& x, const ControlInput& u,
                      const VehicleParams& params) {
  return dynamics(x.to_vector(), u.thrusts, params);
}

/// Analytic Jacobians of the continuous dynamics.
inline void dynamics_jacobians(const Vec13& x, const Vec4& u,
                               const VehicleParams& params, Mat13& jx,
                               Mat13x4& ju) {
  const double qw = x(6), qx = x(7), qy = x(8), qz = x(9);
  const Vec3 omega = x.segment<3>(10);
  const double total = u.sum();

  jx.setZero();
  ju.setZero();

  // pdot = v
  jx.block<3, 3>(0, 3).setIdentity();

  // vdot = -g e3 + zb(q) * total / m
  jx.block<3, 4>(3, 6) =
      detail::body_z_axis_jacobian(qw, qx, qy, qz) * (total / params.mass);
  const Vec3 zb_over_m = detail::body_z_axis(qw, qx, qy, qz) / params.mass;
  for (int col = 0; col < 4; ++col) ju.block<3, 1>(3, col) = zb_over_m;

  // qdot = 0.5 * Mr(0, w) q   (right-multiplication matrix of (0, w))
  Eigen::Matrix4d mr;
  mr << 0, -omega.x(), -omega.y(), -omega.z(),
        omega.x(), 0, omega.z(), -omega.y(),
        omega.y(), -omega.z(), 0, omega.x(),
        omega.z(), omega.y(), -omega.x(), 0;
  jx.block<4, 4>(6, 6) = 0.5 * mr;
  // dqdot/dw = 0.5 * vector columns of the left-multiplication matrix of q
  Eigen::Matrix<double, 4, 3> ml;
  ml << -qx, -qy, -qz,
         qw, -qz, qy,
         qz, qw, -qx,
        -qy, qx, qw;
  jx.block<4, 3>(6, 10) = 0.5 * ml;

  // wdot = J^-1 (tau - w x (J w))
  const Vec3 j = params.inertia;
  const Vec3 jw(j.x() * omega.x(), j.y() * omega.y(), j.z() * omega.z());
  const Eigen::Matrix3d dcross =
      detail::skew(omega) * j.asDiagonal().toDenseMatrix() - detail::skew(jw);
  jx.block<3, 3>(10, 10) = j.cwiseInverse().asDiagonal() * (-dcross);
  ju.block<3, 4>(10, 0) = j.cwiseInverse().asDiagonal() * params.torque_mixer();
}

/// Classical RK4 step; the quaternion is renormalized afterwards. Both the
/// simulator and the NMPC prediction model call this one function.
inline VehicleState rk4_step(const VehicleState& x, const ControlInput& u, double dt,
                             const VehicleParams& params) {
  assert(dt > 0.0);
  const Vec13 x0 = x.to_vector();
  const Vec4& uu = u.thrusts;
  const Vec13 k1 = dynamics(x0, uu, params);
  const Vec13 k2 = dynamics(Vec13(x0 + 0.5 * dt * k1), uu, params);
  const Vec13 k3 = dynamics(Vec13(x0 + 0.5 * dt * k2), uu, params);
  const Vec13 k4 = dynamics(Vec13(x0 + dt * k3), uu, params);
  const Vec13 out = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return VehicleState::from_vector(out).normalized();
}

/// Discrete Jacobians of rk4_step (including the renormalization projection).
inline void rk4_jacobians(const VehicleState& x, const ControlInput& u, double dt,
                          const VehicleParams& params, Mat13& ad, Mat13x4& bd) {
  const Vec13 x0 = x.to_vector();
  const Vec4& uu = u.thrusts;

  Mat13 a1, a2, a3, a4;
  Mat13x4 b1, b2, b3, b4;

  const Vec13 k1 = dynamics(x0, uu, params);
  dynamics_jacobians(x0, uu, params, a1, b1);
  const Mat13 dk1 = a1;
  const Mat13x4 dk1u = b1;

  const Vec13 x1 = x0 + 0.5 * dt * k1;
  const Vec13 k2 = dynamics(x1, uu, params);
  dynamics_jacobians(x1, uu, params, a2, b2);
  const Mat13 dk2 = a2 * (Mat13::Identity() + 0.5 * dt * dk1);
  const Mat13x4 dk2u = a2 * (0.5 * dt * dk1u) + b2;

  const Vec13 x2 = x0 + 0.5 * dt * k2;
  const Vec13 k3 = dynamics(x2, uu, params);
  dynamics_jacobians(x2, uu, params, a3, b3);
  const Mat13 dk3 = a3 * (Mat13::Identity() + 0.5 * dt * dk2);
  const Mat13x4 dk3u = a3 * (0.5 * dt * dk2u) + b3;

  const Vec13 x3 = x0 + dt * k3;
  dynamics_jacobians(x3, uu, params, a4, b4);
  const Mat13 dk4 = a4 * (Mat13::Identity() + dt * dk3);
  const Mat13x4 dk4u = a4 * (dt * dk3u) + b4;

  ad = Mat13::Identity() + (dt / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4);
  bd = (dt / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u);

  // renormalization projection on the quaternion block
  const Vec13 k4v = dynamics(x3, uu, params);
  const Vec13 raw = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4v);
  const Eigen::Vector4d q = raw.segment<4>(6);
  const double norm = q.norm();
  const Eigen::Vector4d qn = q / norm;
  const Eigen::Matrix4d proj =
      (Eigen::Matrix4d::Identity() - qn * qn.transpose()) / norm;
  ad.middleRows<4>(6) = proj * ad.middleRows<4>(6);
  bd.middleRows<4>(6) = proj * bd.middleRows<4>(6);
}

}  // namespace rnav
