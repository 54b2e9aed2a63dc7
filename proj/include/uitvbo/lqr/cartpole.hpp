#pragma once

// Linearized cart-pole (upper equilibrium) with a scheduled bearing-friction increase.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <utility>

#include "uitvbo/errors.hpp"

namespace uitvbo::lqr {

using Matrix4 = Eigen::Matrix4d;
using Vector4 = Eigen::Vector4d;

struct CartPoleParams {
  double m_p = 0.0804;
  double l = 0.147;
  double J_d = 0.5813e-3;
  double tau_p0 = 2.2e-3;
  double T1 = 1.0;
  double K_u = 1.0;
  double g = 9.81;

  void validate() const {
    detail::require(m_p > 0 && l > 0 && J_d > 0 && tau_p0 > 0 && T1 > 0 && K_u > 0 && g > 0,
                    "CartPoleParams: constants must be positive");
  }
};

struct FrictionSchedule {
  int t1 = 50;
  int t2 = 100;
  double tau_p0 = 2.2e-3;

  void validate() const {
    detail::require(0 < t1 && t1 < t2, "FrictionSchedule: need 0 < t1 < t2");
    detail::require(tau_p0 > 0, "FrictionSchedule: tau_p0 must be positive");
  }
};

/// Bearing friction at TVBO step t. The middle and final branches do not meet at t2
/// (4 tau_p0 versus 3 tau_p0); the formula is kept as published.
inline double friction(int t, const FrictionSchedule& s = {}) {
  detail::require(t >= 0, "friction: t must be non-negative");
  const double tau = s.tau_p0;
  const double pi = std::numbers::pi;
  if (t < s.t1) return tau;
  if (t <= s.t2) return tau + 1.5 * tau * (1.0 - std::cos(pi / s.t1 * (t - s.t1)));
  return 3.0 * tau + 0.5 * tau * std::sin(-pi / s.t2 * t);
}

struct SystemMatrices {
  Matrix4 A;
  Vector4 B;
};

/// Continuous-time A(t), B with x = [cart position, cart velocity, pole angle, pole rate].
inline SystemMatrices system_matrices(int t, const CartPoleParams& p = {}, const FrictionSchedule& s = {}) {
  p.validate();
  SystemMatrices m;
  m.A.setZero();
  m.A(0, 1) = 1.0;
  m.A(1, 1) = -1.0 / p.T1;
  m.A(2, 3) = 1.0;
  m.A(3, 1) = 0.5 * p.m_p * p.l / (p.J_d * p.T1);
  m.A(3, 2) = 0.5 * p.m_p * p.l * p.g / p.J_d;
  m.A(3, 3) = -friction(t, s) / p.J_d;
  m.B << 0.0, p.K_u / p.T1, 0.0, -0.5 * (p.m_p * p.l / p.J_d) * (p.K_u / p.T1);
  return m;
}

/// Zero-order-hold discretization, exp([[A, B], [0, 0]] dt) = [[Ad, Bd], [0, I]].
template <typename MatA, typename MatB>
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> discretize(const MatA& A, const MatB& B, double dt) {
  detail::require(dt > 0.0, "discretize: dt must be positive");
  detail::require(A.rows() == A.cols() && B.rows() == A.rows(), "discretize: shape mismatch");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = A;
  aug.topRightCorner(n, m) = B;
  const Eigen::MatrixXd e = (aug * dt).exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

struct DiscreteSystem {
  Matrix4 Ad;
  Vector4 Bd;
};

inline DiscreteSystem discrete_system(int t, double dt, const CartPoleParams& p = {}, const FrictionSchedule& s = {}) {
  const auto c = system_matrices(t, p, s);
  const auto [ad, bd] = discretize(c.A, c.B, dt);
  return {ad, bd};
}

}  // namespace uitvbo::lqr
