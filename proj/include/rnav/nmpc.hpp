#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rnav/cbf.hpp"
#include "rnav/qp.hpp"
#include "rnav/quadrotor.hpp"
#include "rnav/trajectory.hpp"

namespace rnav {

using Vec12 = Eigen::Matrix<double, 12, 1>;

struct OcpWeights {
  Vec12 qx;  // p(3) | v(3) | attitude(3) | w(3)
  Vec4 qu;

  static OcpWeights defaults() {
    OcpWeights w;
    w.qx << 20, 20, 20, 5, 5, 5, 5, 5, 5, 1, 1, 1;
    w.qu = Vec4::Constant(0.1);
    return w;
  }
};

struct OcpBounds {
  Vec13 x_min = Vec13::Constant(-std::numeric_limits<double>::infinity());
  Vec13 x_max = Vec13::Constant(std::numeric_limits<double>::infinity());
  Vec4 u_min = Vec4::Zero();
  Vec4 u_max = Vec4::Constant(11.772);

  static OcpBounds defaults(const VehicleParams& params) {
    OcpBounds b;
    b.u_min = Vec4::Constant(params.thrust_min);
    b.u_max = Vec4::Constant(params.thrust_max);
    for (int k = 3; k < 6; ++k) {
      b.x_min(k) = -20.0;  // velocity box
      b.x_max(k) = 20.0;
    }
    for (int k = 10; k < 13; ++k) {
      b.x_min(k) = -30.0;  // body-rate box
      b.x_max(k) = 30.0;
    }
    return b;
  }
};

/// Discretized NMPC problem over one horizon.
struct OcpProblem {
  int horizon_steps = 10;  // N
  double dt = 0.1;
  VehicleState x0;
  ReferenceTrajectory reference;  // N+1 states, N inputs
  OcpWeights weights;
  OcpBounds bounds;
  ConstraintSet constraints;
  VehicleParams params;
};

struct SqpSettings {
  int max_sqp_iterations = 25;
  double kkt_tolerance = 1e-7;
  double lm_mu_init = 1e-4;
  double lm_mu_max = 1e8;
  double line_search_shrink = 0.5;
  int max_line_search_steps = 16;
  int qp_max_iterations = 4000;
  double slack_penalty_scale = 1e3;  // scaled by max state weight
  double slack_tolerance = 1e-6;
  double merit_progress_tol = 1e-9;  // relative; stop once steps stop paying
};

enum class SolveStatus { optimal, max_iterations, infeasible_relaxed, diverged };

struct SolveResult {
  SolveStatus status = SolveStatus::diverged;
  std::vector<ControlInput> inputs;   // N
  std::vector<VehicleState> states;   // N+1, rollout under the inputs
  double kkt_residual = std::numeric_limits<double>::infinity();
  double solve_time_s = 0.0;
  int sqp_iterations = 0;
  int qp_iterations = 0;
  int cbf_row_count = 0;
  double objective = 0.0;
  double max_slack = 0.0;
  Eigen::VectorXd slack_per_constraint;  // stage-major: (j, k) -> j*K + k
  std::vector<double> merit_history;     // merit after each accepted step
};

inline OcpProblem build_ocp(const VehicleState& x0, const ReferenceTrajectory& reference,
                            const OcpWeights& weights, const OcpBounds& bounds,
                            const ConstraintSet& constraints, int horizon_steps,
                            double dt, const VehicleParams& params) {
  if (horizon_steps < 1 || !(dt > 0.0)) {
    throw std::invalid_argument("build_ocp: bad horizon");
  }
  if (reference.states.size() != static_cast<std::size_t>(horizon_steps) + 1 ||
      reference.inputs.size() != static_cast<std::size_t>(horizon_steps)) {
    throw std::invalid_argument("build_ocp: reference length mismatch");
  }
  if (weights.qx.minCoeff() < 0.0 || weights.qu.minCoeff() < 0.0) {
    throw std::invalid_argument("build_ocp: negative weights");
  }
  OcpProblem ocp;
  ocp.horizon_steps = horizon_steps;
  ocp.dt = dt;
  ocp.x0 = x0;
  ocp.reference = reference;
  ocp.weights = weights;
  ocp.bounds = bounds;
  ocp.constraints = constraints;
  ocp.params = params;
  return ocp;
}

namespace detail {

/// State deviation against a reference state: position/velocity/body-rate
/// differences plus the small-angle attitude surrogate 2 * vec(q_des^-1 * q),
/// sign-aligned to the closer quaternion representation.
inline Vec12 state_deviation(const VehicleState& x, const VehicleState& x_des) {
  Vec12 e;
  e.segment<3>(0) = x.p - x_des.p;
  e.segment<3>(3) = x.v - x_des.v;
  Eigen::Quaterniond err = x_des.q_att.conjugate() * x.q_att;
  const double sign = err.w() < 0.0 ? -1.0 : 1.0;
  e.segment<3>(6) = 2.0 * sign * Eigen::Vector3d(err.x(), err.y(), err.z());
  e.segment<3>(9) = x.w - x_des.w;
  return e;
}

/// Jacobian of state_deviation w.r.t. the raw 13-dim state.
inline Eigen::Matrix<double, 12, 13> state_deviation_jacobian(
    const VehicleState& x, const VehicleState& x_des) {
  Eigen::Matrix<double, 12, 13> jac = Eigen::Matrix<double, 12, 13>::Zero();
  jac.block<3, 3>(0, 0).setIdentity();
  jac.block<3, 3>(3, 3).setIdentity();
  const Eigen::Quaterniond err = x_des.q_att.conjugate() * x.q_att;
  const double sign = err.w() < 0.0 ? -1.0 : 1.0;
  // vector rows of the left-multiplication matrix of q_des^-1
  const Eigen::Quaterniond a = x_des.q_att.conjugate();
  Eigen::Matrix<double, 3, 4> ml;
  ml << a.x(), a.w(), -a.z(), a.y(),
        a.y(), a.z(), a.w(), -a.x(),
        a.z(), -a.y(), a.x(), a.w();
  jac.block<3, 4>(6, 6) = 2.0 * sign * ml;
  jac.block<3, 3>(9, 10).setIdentity();
  return jac;
}

/// Gradient of the CBF residual w.r.t. state and input at (x, u).
inline void cbf_residual_gradient(const VehicleState& x, const ControlInput& u,
                                  const Eigen::Vector3d& q_pt, double lambda,
                                  const VehicleParams& params, Vec13& gx, Vec4& gu) {
  const Vec3 diff = q_pt - x.p;
  const Vec3 accel = translational_acceleration(x, u, params);
  gx.setZero();
  gx.segment<3>(0) = 2.0 * accel + 4.0 * lambda * x.v - 2.0 * lambda * lambda * diff;
  gx.segment<3>(3) = 4.0 * x.v - 4.0 * lambda * diff;
  const double total = u.thrusts.sum();
  const Eigen::Matrix<double, 3, 4> dzb = body_z_axis_jacobian(
      x.q_att.w(), x.q_att.x(), x.q_att.y(), x.q_att.z());
  gx.segment<4>(6) = -2.0 * (total / params.mass) * (dzb.transpose() * diff);
  const Vec3 zb = body_z_axis(x.q_att.w(), x.q_att.x(), x.q_att.y(), x.q_att.z());
  gu = Vec4::Constant(-2.0 * diff.dot(zb) / params.mass);
}

struct SqpWork {
  std::vector<VehicleState> states;              // rollout, N+1
  std::vector<Eigen::Matrix<double, 13, Eigen::Dynamic>> sens;  // dx_j/dU
  Eigen::MatrixXd hess;
  Eigen::VectorXd grad_qp;
  Eigen::VectorXd grad_tracking;                 // over U only
  Eigen::MatrixXd rows;
  Eigen::VectorXd rhs;
  Eigen::VectorXd cbf_values;                    // stage-major
  double cost = 0.0;
  double violation_l1 = 0.0;
  double violation_inf = 0.0;
  int n_cbf = 0;
};

inline std::vector<VehicleState> rollout(const VehicleState& x0,
                                         const std::vector<ControlInput>& inputs,
                                         double dt, const VehicleParams& params) {
  std::vector<VehicleState> states;
  states.reserve(inputs.size() + 1);
  states.push_back(x0);
  for (const auto& u : inputs) {
    states.push_back(rk4_step(states.back(), u, dt, params));
  }
  return states;
}

inline double tracking_cost(const OcpProblem& ocp,
                            const std::vector<VehicleState>& states,
                            const std::vector<ControlInput>& inputs) {
  double cost = 0.0;
  const int n = ocp.horizon_steps;
  for (int j = 0; j <= n; ++j) {
    const Vec12 e = state_deviation(states[static_cast<std::size_t>(j)],
                                    ocp.reference.states[static_cast<std::size_t>(j)]);
    cost += e.dot(ocp.weights.qx.asDiagonal() * e);
  }
  for (int j = 0; j < n; ++j) {
    const Vec4 du = inputs[static_cast<std::size_t>(j)].thrusts -
                    ocp.reference.inputs[static_cast<std::size_t>(j)].thrusts;
    cost += du.dot(ocp.weights.qu.asDiagonal() * du);
  }
  return cost;
}

/// CBF residuals for all (stage, point) pairs; the terminal stage reuses the
/// last input, since no input exists at stage N.
inline Eigen::VectorXd cbf_values(const OcpProblem& ocp,
                                  const std::vector<VehicleState>& states,
                                  const std::vector<ControlInput>& inputs) {
  const int n = ocp.horizon_steps;
  const int k = static_cast<int>(ocp.constraints.points.size());
  Eigen::VectorXd vals(k * (n + 1));
  for (int j = 0; j <= n; ++j) {
    const auto& u = inputs[static_cast<std::size_t>(std::min(j, n - 1))];
    const auto& x = states[static_cast<std::size_t>(j)];
    for (int c = 0; c < k; ++c) {
      vals(j * k + c) =
          cbf_residual(x, u, ocp.constraints.points[static_cast<std::size_t>(c)],
                       ocp.constraints.lambda, ocp.constraints.r_safe, ocp.params);
    }
  }
  return vals;
}

}  // namespace detail

/// Receding-horizon warm start: shift one stage, duplicate the terminal one.
inline SolveResult shift_warm_start(const SolveResult& prev) {
  SolveResult shifted = prev;
  if (!prev.inputs.empty()) {
    shifted.inputs.erase(shifted.inputs.begin());
    shifted.inputs.push_back(prev.inputs.back());
  }
  if (!prev.states.empty()) {
    shifted.states.erase(shifted.states.begin());
    shifted.states.push_back(prev.states.back());
  }
  return shifted;
}

/// Gauss-Newton SQP with Levenberg-Marquardt regularization on the condensed
/// input-space problem. CBF rows carry per-stage L1-penalized slack so a
/// momentarily infeasible constraint set degrades the solution instead of
/// aborting the control loop.
inline SolveResult solve_sqp(const OcpProblem& ocp,
                             const SolveResult* warm = nullptr,
                             const SqpSettings& settings = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n = ocp.horizon_steps;
  const int nu = 4 * n;
  const int npts = static_cast<int>(ocp.constraints.points.size());
  bool finite_state_bounds = false;
  for (int c = 0; c < 13; ++c) {
    finite_state_bounds = finite_state_bounds ||
                          std::isfinite(ocp.bounds.x_min(c)) ||
                          std::isfinite(ocp.bounds.x_max(c));
  }
  // one slack per stage, shared by that stage's CBF and state-box rows, so a
  // transiently inconsistent linearization degrades instead of stalling
  const int nslack = (npts > 0 || finite_state_bounds) ? n + 1 : 0;
  const int nz = nu + nslack;
  const int ncbf = npts * (n + 1);

  SolveResult result;
  result.cbf_row_count = ncbf;
  result.slack_per_constraint = Eigen::VectorXd::Zero(ncbf);

  const auto finish = [&](SolveStatus status) {
    result.status = status;
    result.solve_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    return result;
  };

  if (!ocp.x0.to_vector().allFinite()) return finish(SolveStatus::diverged);

  // initial guess: warm-started inputs, else the reference feedforward
  std::vector<ControlInput> inputs;
  if (warm && warm->inputs.size() == static_cast<std::size_t>(n)) {
    inputs = warm->inputs;
  } else {
    inputs = ocp.reference.inputs;
  }
  for (auto& u : inputs) {
    u.thrusts = u.thrusts.cwiseMax(ocp.bounds.u_min).cwiseMin(ocp.bounds.u_max);
  }

  const double rho = settings.slack_penalty_scale *
                     std::max(ocp.weights.qx.maxCoeff(), 1.0);
  double mu = settings.lm_mu_init;

  detail::SqpWork work;
  work.sens.assign(static_cast<std::size_t>(n) + 1,
                   Eigen::Matrix<double, 13, Eigen::Dynamic>::Zero(13, nu));
  Eigen::MatrixXd hess_u_cache;  // Gauss-Newton block before LM damping

  // Violation measure matching the per-stage slack: the worst violation of
  // each stage over its CBF and state-box rows, summed over stages.
  const auto violation = [&](const std::vector<VehicleState>& states,
                             const std::vector<ControlInput>& u) {
    double total = 0.0;
    Eigen::VectorXd vals;
    if (ncbf > 0) vals = detail::cbf_values(ocp, states, u);
    for (int j = 0; j <= n; ++j) {
      double worst = 0.0;
      for (int c = 0; c < npts; ++c) {
        worst = std::max(worst, -vals(j * npts + c));
      }
      if (j >= 1) {
        const Vec13 x = states[static_cast<std::size_t>(j)].to_vector();
        for (int c = 0; c < 13; ++c) {
          if (std::isfinite(ocp.bounds.x_min(c))) {
            worst = std::max(worst, ocp.bounds.x_min(c) - x(c));
          }
          if (std::isfinite(ocp.bounds.x_max(c))) {
            worst = std::max(worst, x(c) - ocp.bounds.x_max(c));
          }
        }
      }
      total += worst;
    }
    return total;
  };

  const auto merit = [&](const std::vector<VehicleState>& states,
                         const std::vector<ControlInput>& u) {
    return detail::tracking_cost(ocp, states, u) + rho * violation(states, u);
  };

  // linearize around the current iterate and assemble the condensed QP
  const auto linearize = [&]() -> bool {
    work.states = detail::rollout(ocp.x0, inputs, ocp.dt, ocp.params);
    for (const auto& s : work.states) {
      if (!s.to_vector().allFinite()) return false;
    }
    // sensitivities dx_j/dU
    work.sens[0].setZero();
    for (int j = 0; j < n; ++j) {
      Mat13 ad;
      Mat13x4 bd;
      rk4_jacobians(work.states[static_cast<std::size_t>(j)],
                    inputs[static_cast<std::size_t>(j)], ocp.dt, ocp.params, ad, bd);
      work.sens[static_cast<std::size_t>(j) + 1].noalias() =
          ad * work.sens[static_cast<std::size_t>(j)];
      work.sens[static_cast<std::size_t>(j) + 1].middleCols<4>(4 * j) += bd;
    }

    Eigen::MatrixXd hess_u = Eigen::MatrixXd::Zero(nu, nu);
    Eigen::VectorXd grad_u = Eigen::VectorXd::Zero(nu);
    for (int j = 0; j <= n; ++j) {
      const auto& x = work.states[static_cast<std::size_t>(j)];
      const auto& xd = ocp.reference.states[static_cast<std::size_t>(j)];
      const Vec12 e = detail::state_deviation(x, xd);
      const Eigen::Matrix<double, 12, 13> ejac =
          detail::state_deviation_jacobian(x, xd);
      const Eigen::MatrixXd jfull = ejac * work.sens[static_cast<std::size_t>(j)];
      hess_u.noalias() += 2.0 * jfull.transpose() *
                          ocp.weights.qx.asDiagonal() * jfull;
      grad_u.noalias() +=
          2.0 * jfull.transpose() * (ocp.weights.qx.asDiagonal() * e);
    }
    for (int j = 0; j < n; ++j) {
      const Vec4 du = inputs[static_cast<std::size_t>(j)].thrusts -
                      ocp.reference.inputs[static_cast<std::size_t>(j)].thrusts;
      hess_u.block<4, 4>(4 * j, 4 * j) +=
          (2.0 * ocp.weights.qu).asDiagonal().toDenseMatrix();
      grad_u.segment<4>(4 * j) += 2.0 * ocp.weights.qu.asDiagonal() * du;
    }
    work.grad_tracking = grad_u;
    work.cost = detail::tracking_cost(ocp, work.states, inputs);

    // rows: CBF (with slack), slack positivity, state boxes, input boxes
    int nrows = ncbf + nslack + 8 * n;
    std::vector<std::pair<int, double>> state_rows;  // (state index, sign*bound)
    for (int c = 0; c < 13; ++c) {
      if (std::isfinite(ocp.bounds.x_min(c))) state_rows.push_back({c, +1});
      if (std::isfinite(ocp.bounds.x_max(c))) state_rows.push_back({c, -1});
    }
    nrows += static_cast<int>(state_rows.size()) * n;  // stages 1..N

    work.rows = Eigen::MatrixXd::Zero(nrows, nz);
    work.rhs = Eigen::VectorXd::Zero(nrows);
    int row = 0;

    work.violation_l1 = 0.0;
    work.violation_inf = 0.0;
    if (ncbf > 0) {
      work.cbf_values = detail::cbf_values(ocp, work.states, inputs);
      Vec13 gx;
      Vec4 gu;
      for (int j = 0; j <= n; ++j) {
        const int ustage = std::min(j, n - 1);
        const auto& x = work.states[static_cast<std::size_t>(j)];
        const auto& u = inputs[static_cast<std::size_t>(ustage)];
        for (int c = 0; c < npts; ++c) {
          detail::cbf_residual_gradient(
              x, u, ocp.constraints.points[static_cast<std::size_t>(c)],
              ocp.constraints.lambda, ocp.params, gx, gu);
          work.rows.block(row, 0, 1, nu).noalias() =
              gx.transpose() * work.sens[static_cast<std::size_t>(j)];
          work.rows.block<1, 4>(row, 4 * ustage) += gu.transpose();
          work.rows(row, nu + j) = 1.0;  // per-stage slack
          const double val = work.cbf_values(j * npts + c);
          work.rhs(row) = -val;
          work.violation_l1 += std::max(0.0, -val);
          work.violation_inf = std::max(work.violation_inf, -val);
          ++row;
        }
      }
    }
    for (int j = 0; j < nslack; ++j) {
      work.rows(row, nu + j) = 1.0;  // s_j >= 0
      work.rhs(row) = 0.0;
      ++row;
    }
    for (int j = 1; j <= n; ++j) {
      const Vec13 xj = work.states[static_cast<std::size_t>(j)].to_vector();
      for (const auto& [idx, sign] : state_rows) {
        work.rows.block(row, 0, 1, nu).noalias() =
            sign * work.sens[static_cast<std::size_t>(j)].row(idx);
        if (nslack > 0) work.rows(row, nu + j) = 1.0;
        const double bound =
            sign > 0 ? ocp.bounds.x_min(idx) : -ocp.bounds.x_max(idx);
        work.rhs(row) = bound - sign * xj(idx);
        work.violation_l1 += std::max(0.0, work.rhs(row));
        work.violation_inf = std::max(work.violation_inf, work.rhs(row));
        ++row;
      }
    }
    for (int j = 0; j < n; ++j) {
      for (int c = 0; c < 4; ++c) {
        const double uc = inputs[static_cast<std::size_t>(j)].thrusts(c);
        work.rows(row, 4 * j + c) = 1.0;
        work.rhs(row) = ocp.bounds.u_min(c) - uc;
        ++row;
        work.rows(row, 4 * j + c) = -1.0;
        work.rhs(row) = uc - ocp.bounds.u_max(c);
        ++row;
      }
    }
    work.n_cbf = ncbf;
    hess_u_cache = hess_u;
    return work.rows.allFinite() && grad_u.allFinite() && hess_u.allFinite() &&
           std::isfinite(work.cost);
  };

  // assembled into work.hess / work.grad_qp with the current LM mu
  const auto build_qp_matrices = [&]() {
    work.hess = Eigen::MatrixXd::Zero(nz, nz);
    work.hess.topLeftCorner(nu, nu) = hess_u_cache;
    work.hess.topLeftCorner(nu, nu).diagonal().array() += mu;
    work.grad_qp = Eigen::VectorXd::Zero(nz);
    work.grad_qp.head(nu) = work.grad_tracking;
    if (nslack > 0) {
      work.hess.bottomRightCorner(nslack, nslack).diagonal().array() = rho;
      work.grad_qp.tail(nslack).array() = rho;
    }
  };

  DenseQpSolver qp;
  double current_merit = 0.0;
  bool have_merit = false;

  bool stalled = false;
  for (int iter = 0; iter < settings.max_sqp_iterations; ++iter) {
    if (!linearize()) return finish(SolveStatus::diverged);
    const double current_violation = violation(work.states, inputs);
    if (!have_merit) {
      current_merit = work.cost + rho * current_violation;
      have_merit = true;
    }

    build_qp_matrices();
    const QpResult qpres = qp.solve(work.hess, work.grad_qp, work.rows, work.rhs,
                                    settings.qp_max_iterations);
    ++result.sqp_iterations;
    result.qp_iterations += qpres.iterations;
    if (qpres.status == QpStatus::infeasible) {
      // linearized state boxes inconsistent; keep the current iterate
      stalled = true;
      break;
    }
    if (qpres.status == QpStatus::max_iterations || !qpres.x.allFinite() ||
        qpres.x.size() != nz) {
      mu *= 100.0;  // factorization or cycling trouble: stiffen and retry
      if (mu > settings.lm_mu_max) {
        stalled = true;
        break;
      }
      continue;
    }

    const Eigen::VectorXd du = qpres.x.head(nu);

    // KKT residual of the nonlinear problem at the current iterate using the
    // QP multipliers (equals ||H du|| by QP stationarity)
    const Eigen::VectorXd stationarity =
        work.grad_tracking -
        work.rows.leftCols(nu).transpose() * qpres.lambda;
    result.kkt_residual =
        std::max(stationarity.cwiseAbs().maxCoeff(), work.violation_inf);

    if (result.kkt_residual <= settings.kkt_tolerance) break;

    // L1 merit line search. The expected violation decrease is measured
    // against the slack the QP itself had to retain: irreducible violations
    // (a stage-0 row no input can fix) do not count against the step.
    const double predicted_violation =
        nslack > 0 ? qpres.x.tail(nslack).sum() : 0.0;
    const double dir_deriv =
        work.grad_tracking.dot(du) -
        rho * std::max(0.0, current_violation - predicted_violation);
    if (dir_deriv > -1e-12 && du.cwiseAbs().maxCoeff() < 1e-9) break;

    // stop when the QP's own model predicts no meaningful merit decrease
    const double model_change =
        work.grad_tracking.dot(du) + 0.5 * du.dot(hess_u_cache * du);
    const double predicted_decrease =
        -model_change + rho * (current_violation - predicted_violation);
    if (predicted_decrease <=
        settings.merit_progress_tol * (1.0 + std::abs(current_merit))) {
      break;
    }

    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < settings.max_line_search_steps; ++ls) {
      std::vector<ControlInput> trial = inputs;
      for (int j = 0; j < n; ++j) {
        trial[static_cast<std::size_t>(j)].thrusts += alpha * du.segment<4>(4 * j);
        trial[static_cast<std::size_t>(j)].thrusts =
            trial[static_cast<std::size_t>(j)]
                .thrusts.cwiseMax(ocp.bounds.u_min)
                .cwiseMin(ocp.bounds.u_max);
      }
      const auto states = detail::rollout(ocp.x0, trial, ocp.dt, ocp.params);
      bool finite = true;
      for (const auto& s : states) finite = finite && s.to_vector().allFinite();
      if (finite) {
        const double phi = merit(states, trial);
        if (phi <= current_merit + 1e-4 * alpha * std::min(dir_deriv, 0.0)) {
          inputs = trial;
          current_merit = phi;
          result.merit_history.push_back(phi);
          accepted = true;
          break;
        }
      }
      alpha *= settings.line_search_shrink;
    }

    if (accepted) {
      mu = std::max(mu / 10.0, settings.lm_mu_init);
    } else {
      mu *= 10.0;  // rejected step: stiffen and retry from the same iterate
      if (mu > settings.lm_mu_max) {
        stalled = true;  // no productive step left; return the iterate
        break;
      }
    }

    if (du.cwiseAbs().maxCoeff() < 1e-9 && work.violation_inf <= 1e-12) break;
  }

  // final rollout and diagnostics
  work.states = detail::rollout(ocp.x0, inputs, ocp.dt, ocp.params);
  result.inputs = inputs;
  result.states = work.states;
  result.objective = detail::tracking_cost(ocp, work.states, inputs);
  if (ncbf > 0) {
    const Eigen::VectorXd vals = detail::cbf_values(ocp, work.states, inputs);
    result.slack_per_constraint = (-vals).cwiseMax(0.0);
    result.max_slack = result.slack_per_constraint.maxCoeff();
  }

  SolveStatus status;
  if (result.max_slack > settings.slack_tolerance) {
    status = SolveStatus::infeasible_relaxed;
  } else if (result.kkt_residual <= settings.kkt_tolerance) {
    status = SolveStatus::optimal;
  } else {
    status = SolveStatus::max_iterations;
  }
  (void)stalled;
  return finish(status);
}

/// Stateful receding-horizon controller: scales weights by the risk gain,
/// rebuilds constraint rows from the latest snapshot, solves, applies u[0].
/// Solver divergence replays the previous input and raises a flag.
class NmpcController {
public:
  NmpcController(const VehicleParams& params, const OcpWeights& base_weights,
                 const OcpBounds& bounds, const SqpSettings& settings,
                 int horizon_steps, double dt, double constraint_margin = 0.0)
      : params_(params), base_weights_(base_weights), bounds_(bounds),
        settings_(settings), horizon_steps_(horizon_steps), dt_(dt),
        constraint_margin_(constraint_margin),
        last_input_(ControlInput::hover(params)) {}

  ControlInput control_step(const VehicleState& x0, const ReferenceTrajectory& ref,
                            const ConstraintSet& constraints, const RiskGain& gain) {
    OcpWeights weights = base_weights_;
    std::tie(weights.qx, weights.qu) =
        scale_weights(base_weights_.qx, base_weights_.qu, gain.nu);

    // tightened radius: enforcement carries a margin over the published one
    ConstraintSet tightened = constraints;
    tightened.r_safe += constraint_margin_;

    const OcpProblem ocp = build_ocp(x0, ref, weights, bounds_, tightened,
                                     horizon_steps_, dt_, params_);
    std::optional<SolveResult> warm;
    if (last_result_ &&
        last_result_->inputs.size() == static_cast<std::size_t>(horizon_steps_)) {
      warm = shift_warm_start(*last_result_);
    }
    SolveResult res = solve_sqp(ocp, warm ? &*warm : nullptr, settings_);
    if (res.status == SolveStatus::diverged || res.inputs.empty()) {
      fell_back_ = true;
      return last_input_;
    }
    fell_back_ = false;
    last_result_ = std::move(res);
    last_input_ = last_result_->inputs.front();
    return last_input_;
  }

  const std::optional<SolveResult>& last_result() const { return last_result_; }
  bool last_step_fell_back() const { return fell_back_; }
  void reset() {
    last_result_.reset();
    last_input_ = ControlInput::hover(params_);
    fell_back_ = false;
  }

private:
  VehicleParams params_;
  OcpWeights base_weights_;
  OcpBounds bounds_;
  SqpSettings settings_;
  int horizon_steps_;
  double dt_;
  double constraint_margin_ = 0.0;
  std::optional<SolveResult> last_result_;
  ControlInput last_input_;
  bool fell_back_ = false;
};

}  // namespace rnav
