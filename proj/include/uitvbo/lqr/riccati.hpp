#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "uitvbo/errors.hpp"

namespace uitvbo::lqr {

struct DareOptions {
  int max_iterations = 200000;
  double max_residual = 1e-10;
};

struct DareSolution {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;  // m x n, u = -K x
  double residual = 0.0;
  int iterations = 0;
};

// One Riccati value-iteration step f(P).
inline Eigen::MatrixXd riccati_map(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd bpa = B.transpose() * P * A;
  const Eigen::MatrixXd s = R + B.transpose() * P * B;
  Eigen::MatrixXd next = Q + A.transpose() * P * A - bpa.transpose() * s.ldlt().solve(bpa);
  return 0.5 * (next + next.transpose());
}

/// Riccati residual ||P - f(P)||_F.
inline double dare_residual(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  return (riccati_map(P, A, B, Q, R) - P).norm();
}

/// Discrete-time algebraic Riccati equation by value iteration from P = Q.
inline DareSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& R, const DareOptions& opt = {}) {
  detail::require(A.rows() == A.cols() && B.rows() == A.rows(), "solve_dare: shape mismatch");
  detail::require(Q.rows() == A.rows() && Q.cols() == A.rows(), "solve_dare: Q shape");
  detail::require(R.rows() == B.cols() && R.cols() == B.cols(), "solve_dare: R shape");

  DareSolution sol;
  Eigen::MatrixXd P = Q;
  double best = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_p = P;
  int stalled = 0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::MatrixXd next = riccati_map(P, A, B, Q, R);
    if (!next.allFinite()) break;
    const double change = (next - P).norm();
    P = next;
    sol.iterations = it + 1;
    if (change < best) {
      best = change;
      best_p = P;
      stalled = 0;
    } else if (++stalled > 200) {
      break;  // at the rounding floor
    }
    if (change == 0.0) break;
  }
  sol.P = best_p;
  sol.residual = dare_residual(sol.P, A, B, Q, R);
  if (!(sol.residual < opt.max_residual))
    throw NumericalFailure("solve_dare: residual " + std::to_string(sol.residual) + " after " +
                           std::to_string(sol.iterations) + " iterations");
  const Eigen::MatrixXd s = R + B.transpose() * sol.P * B;
  sol.K = s.ldlt().solve(B.transpose() * sol.P * A);
  return sol;
}

inline double spectral_radius(const Eigen::MatrixXd& M) {
  return M.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace uitvbo::lqr
