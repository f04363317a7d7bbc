#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace rnav {

enum class QpStatus { optimal, infeasible, max_iterations };

struct QpResult {
  QpStatus status = QpStatus::optimal;
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;     // per-row multiplier, >= 0 on active rows
  std::vector<int> active;    // indices of active rows
  int iterations = 0;         // active-set changes
  double objective = 0.0;
};

/// Dense dual active-set solver for
///   min 1/2 x' H x + g' x   s.t.  A x >= b,
/// with H symmetric positive definite. Starts from the unconstrained
/// minimizer and adds violated constraints one at a time (Goldfarb & Idnani,
/// Math. Programming 27, 1983), so no feasible initial point is needed and
/// an inconsistent constraint set is detected instead of looped on.
class DenseQpSolver {
public:
  QpResult solve(const Eigen::MatrixXd& hess, const Eigen::VectorXd& grad,
                 const Eigen::MatrixXd& rows, const Eigen::VectorXd& rhs,
                 int max_iter = 0) {
    const int n = static_cast<int>(hess.rows());
    const int m = static_cast<int>(rows.rows());
    assert(grad.size() == n);
    assert(rhs.size() == m);
    if (max_iter <= 0) max_iter = 50 * (m + 5);

    QpResult result;
    result.lambda = Eigen::VectorXd::Zero(m);
    result.x = Eigen::VectorXd::Zero(n);

    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) {
      result.status = QpStatus::max_iterations;  // H not SPD; treat as failure
      return result;
    }

    // J = L^-T so that H^-1 = J J'
    Eigen::MatrixXd j_mat = Eigen::MatrixXd::Identity(n, n);
    llt.matrixL().transpose().template solveInPlace<Eigen::OnTheLeft>(j_mat);

    Eigen::VectorXd x = -llt.solve(grad);

    Eigen::MatrixXd r_mat = Eigen::MatrixXd::Zero(n, n);  // upper triangular
    std::vector<int> active;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);  // active multipliers
    int q = 0;

    Eigen::VectorXd d(n), z(n), r(n), np(n);
    const double inf = std::numeric_limits<double>::infinity();

    int iter = 0;
    while (true) {
      // pick the most violated inactive row
      int ip = -1;
      double worst = 0.0;
      for (int i = 0; i < m; ++i) {
        if (std::find(active.begin(), active.end(), i) != active.end()) continue;
        const double s = rows.row(i).dot(x) - rhs(i);
        const double tol = 1e-10 * (1.0 + std::abs(rhs(i)));
        if (s < -tol && s < worst) {
          worst = s;
          ip = i;
        }
      }
      if (ip < 0) break;  // all rows satisfied

      np = rows.row(ip).transpose();
      double s_ip = worst;
      double u_plus = 0.0;

      while (true) {
        if (++iter > max_iter) {
          result.iterations = iter;
          finish(result, x, hess, grad, active, u, q, QpStatus::max_iterations);
          return result;
        }

        d.noalias() = j_mat.transpose() * np;
        z.setZero();
        if (q < n) z.noalias() = j_mat.rightCols(n - q) * d.tail(n - q);
        if (q > 0) {
          r.head(q) = r_mat.topLeftCorner(q, q)
                          .triangularView<Eigen::Upper>()
                          .solve(d.head(q));
        }

        // partial step: first active constraint whose multiplier hits zero
        double t1 = inf;
        int drop = -1;
        for (int k = 0; k < q; ++k) {
          if (r(k) > 1e-12) {
            const double step = u(k) / r(k);
            if (step < t1) {
              t1 = step;
              drop = k;
            }
          }
        }
        // full step: reach the violated constraint boundary
        const double zn = z.dot(np);
        const double t2 = (zn > 1e-11 * (1.0 + np.norm())) ? -s_ip / zn : inf;
        const double t = std::min(t1, t2);

        if (t >= inf) {
          // constraint cannot be satisfied: dual unbounded
          result.iterations = iter;
          finish(result, x, hess, grad, active, u, q, QpStatus::infeasible);
          return result;
        }

        if (t2 >= inf) {
          // dual-only step, drop the blocking constraint and retry
          for (int k = 0; k < q; ++k) u(k) -= t * r(k);
          u_plus += t;
          remove_constraint(r_mat, j_mat, active, u, q, drop);
          continue;
        }

        x += t * z;
        for (int k = 0; k < q; ++k) u(k) -= t * r(k);
        u_plus += t;

        if (t == t2) {
          u(q) = u_plus;
          active.push_back(ip);
          add_constraint(r_mat, j_mat, d, q);
          break;  // look for the next violated row
        }
        remove_constraint(r_mat, j_mat, active, u, q, drop);
        s_ip = np.dot(x) - rhs(ip);
      }
    }

    finish(result, x, hess, grad, active, u, q, QpStatus::optimal);
    result.iterations = iter;
    return result;
  }

private:
  static void finish(QpResult& result, const Eigen::VectorXd& x,
                     const Eigen::MatrixXd& hess, const Eigen::VectorXd& grad,
                     const std::vector<int>& active, const Eigen::VectorXd& u,
                     int q, QpStatus status) {
    result.status = status;
    result.x = x;
    result.active = active;
    for (int k = 0; k < q; ++k) result.lambda(active[static_cast<std::size_t>(k)]) = u(k);
    result.objective = 0.5 * x.dot(hess * x) + grad.dot(x);
  }

  /// Appends column q of R from d, zeroing d(q+1..n-1) with Givens rotations
  /// carried into the columns of J.
  static void add_constraint(Eigen::MatrixXd& r_mat, Eigen::MatrixXd& j_mat,
                             Eigen::VectorXd& d, int& q) {
    const int n = static_cast<int>(j_mat.rows());
    for (int k = n - 1; k > q; --k) {
      double cc = d(k - 1);
      double ss = d(k);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      d(k) = 0.0;
      ss /= h;
      cc /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d(k - 1) = -h;
      } else {
        d(k - 1) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int i = 0; i < n; ++i) {
        const double t1 = j_mat(i, k - 1);
        const double t2 = j_mat(i, k);
        j_mat(i, k - 1) = t1 * cc + t2 * ss;
        j_mat(i, k) = xny * (t1 + j_mat(i, k - 1)) - t2;
      }
    }
    ++q;
    r_mat.col(q - 1).head(q) = d.head(q);
  }

  /// Removes active constraint at position `drop`, restoring R to upper
  /// triangular form.
  static void remove_constraint(Eigen::MatrixXd& r_mat, Eigen::MatrixXd& j_mat,
                                std::vector<int>& active, Eigen::VectorXd& u,
                                int& q, int drop) {
    const int n = static_cast<int>(j_mat.rows());
    active.erase(active.begin() + drop);
    for (int k = drop; k + 1 < q; ++k) u(k) = u(k + 1);
    u(q - 1) = 0.0;

    // shift columns of R left over the removed one
    for (int col = drop; col + 1 < q; ++col) {
      r_mat.col(col).head(q) = r_mat.col(col + 1).head(q);
    }
    r_mat.col(q - 1).head(q).setZero();
    --q;

    // re-triangularize: zero the subdiagonal introduced by the shift
    for (int k = drop; k < q; ++k) {
      double cc = r_mat(k, k);
      double ss = r_mat(k + 1, k);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      r_mat(k, k) = h;
      r_mat(k + 1, k) = 0.0;
      if (cc < 0.0) {
        r_mat(k, k) = -h;
        cc = -cc;
        ss = -ss;
      }
      const double xny = ss / (1.0 + cc);
      for (int col = k + 1; col < q; ++col) {
        const double t1 = r_mat(k, col);
        const double t2 = r_mat(k + 1, col);
        r_mat(k, col) = t1 * cc + t2 * ss;
        r_mat(k + 1, col) = xny * (t1 + r_mat(k, col)) - t2;
      }
      for (int i = 0; i < n; ++i) {
        const double t1 = j_mat(i, k);
        const double t2 = j_mat(i, k + 1);
        j_mat(i, k) = t1 * cc + t2 * ss;
        j_mat(i, k + 1) = xny * (j_mat(i, k) + t1) - t2;
      }
    }
  }
};

/// Convenience wrapper; box bounds fold into inequality rows.
inline QpResult qp_solve(const Eigen::MatrixXd& hess, const Eigen::VectorXd& grad,
                         const Eigen::MatrixXd& rows, const Eigen::VectorXd& rhs,
                         int max_iter = 0) {
  DenseQpSolver solver;
  return solver.solve(hess, grad, rows, rhs, max_iter);
}

}  // namespace rnav
