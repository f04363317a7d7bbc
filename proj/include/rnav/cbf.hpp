#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <vector>

#include "rnav/quadrotor.hpp"
#include "rnav/risk.hpp"

namespace rnav {

/// An immutable snapshot of world-frame avoidance points plus barrier
/// parameters; published by the perception side, consumed by the controller.
struct ConstraintSet {
  std::vector<Eigen::Vector3d> points;
  double r_safe = 0.45;  // max(d_x, d_y) + psi
  double lambda = 2.0;   // 1/s
  double stamp = 0.0;    // s
};

/// Tracking-weight relaxation driven by the minimum time-to-collision.
struct RiskGain {
  double nu = 1.0;      // in (0, 1]
  double min_ttc = std::numeric_limits<double>::infinity();
  double alpha_nu = 2.0;  // sigmoid slope (1/s)
  double beta_nu = 1.5;   // sigmoid midpoint (s)
};

/// Barrier value: squared clearance beyond the safety radius.
inline double h_value(const Vec3& p, const Vec3& q, double r_safe) {
  return (q - p).squaredNorm() - r_safe * r_safe;
}

/// Exact time derivative of h for a static point q.
inline double h_dot(const Vec3& p, const Vec3& v, const Vec3& q) {
  return -2.0 * (q - p).dot(v);
}

/// Exact second derivative of h for a static q; accel is the vehicle's
/// translational acceleration induced by the input.
inline double h_ddot(const Vec3& p, const Vec3& v, const Vec3& q, const Vec3& accel) {
  return 2.0 * v.dot(v) - 2.0 * (q - p).dot(accel);
}

/// Second-order barrier residual hdd + 2 lambda hd + lambda^2 h; the
/// constraint is satisfied when the residual is non-negative.
inline double cbf_residual(const Vec3& p, const Vec3& v, const Vec3& accel,
                           const Vec3& q, double lambda, double r_safe) {
  return h_ddot(p, v, q, accel) + 2.0 * lambda * h_dot(p, v, q) +
         lambda * lambda * h_value(p, q, r_safe);
}

inline double cbf_residual(const VehicleState& x, const ControlInput& u,
                           const Vec3& q, double lambda, double r_safe,
                           const VehicleParams& params) {
  return cbf_residual(x.p, x.v, translational_acceleration(x, u, params), q,
                      lambda, r_safe);
}

constexpr double kRiskGainFloor = 0.02;

/// Sigmoid weight heuristic: near-zero minimum TTC relaxes tracking, large
/// TTC restores it. An empty (infinite-TTC) map maps to 1. The floor keeps
/// the tracking objective from vanishing entirely.
inline RiskGain risk_gain(double min_ttc_s, double alpha_nu = 2.0,
                          double beta_nu = 1.5) {
  RiskGain g;
  g.min_ttc = min_ttc_s;
  g.alpha_nu = alpha_nu;
  g.beta_nu = beta_nu;
  if (std::isinf(min_ttc_s)) {
    g.nu = 1.0;
  } else {
    g.nu = 1.0 / (1.0 + std::exp(-alpha_nu * (min_ttc_s - beta_nu)));
    g.nu = std::max(g.nu, kRiskGainFloor);
  }
  return g;
}

/// Risk-scaled weights: the state weights shrink with nu, the input weights
/// stay fixed.
inline std::pair<Eigen::Matrix<double, 12, 1>, Vec4> scale_weights(
    const Eigen::Matrix<double, 12, 1>& base_qx, const Vec4& base_qu, double nu) {
  return {nu * base_qx, base_qu};
}

/// Single-slot channel carrying (ConstraintSet, RiskGain) snapshots from the
/// perception rate-domain to the control rate-domain. The consumer always
/// sees a complete snapshot; swaps are whole-pointer.
class ConstraintChannel {
public:
  struct Snapshot {
    ConstraintSet constraints;
    RiskGain gain;
  };

  void publish(ConstraintSet constraints, RiskGain gain) {
    auto next = std::make_shared<const Snapshot>(
        Snapshot{std::move(constraints), gain});
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
  }

  std::shared_ptr<const Snapshot> latest() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

private:
  mutable std::mutex mutex_;
  std::shared_ptr<const Snapshot> current_ =
      std::make_shared<const Snapshot>();  // empty set until first publish
};

}  // namespace rnav
