#pragma once

// Closed-loop episodes of the discretized cart-pole under u = -K^T x.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "uitvbo/errors.hpp"
#include "uitvbo/lqr/cartpole.hpp"

namespace uitvbo::lqr {

struct EpisodeConfig {
  int M = 1000;
  double dt = 0.02;
  Matrix4 Q = 10.0 * Matrix4::Identity();
  double R = 1.0;
  Vector4 x0 = Vector4::Zero();
  Vector4 process_noise_std = Vector4::Constant(1e-3);

  void validate() const {
    detail::require(M >= 1, "EpisodeConfig: M must be positive");
    detail::require(dt > 0.0, "EpisodeConfig: dt must be positive");
    detail::require(R > 0.0, "EpisodeConfig: R must be positive");
    detail::require((process_noise_std.array() >= 0.0).all(), "EpisodeConfig: noise std must be non-negative");
    const Eigen::LLT<Matrix4> llt(Q);
    detail::require(llt.info() == Eigen::Success && Q.isApprox(Q.transpose()), "EpisodeConfig: Q must be positive definite");
  }
};

// Heuristic instability detector.
struct InstabilityThreshold {
  double cost = std::numeric_limits<double>::infinity();
  double divergence = 1e3;
};

struct EpisodeResult {
  double cost = 0.0;
  bool stable = true;
  double max_state_norm = 0.0;
};

inline bool is_unstable(const EpisodeResult& r, const InstabilityThreshold& th) {
  return !std::isfinite(r.cost) || !std::isfinite(r.max_state_norm) || r.cost > th.cost || r.max_state_norm > th.divergence;
}

/// Simulates M steps of x+ = Ad x + Bd u + w and returns the averaged quadratic cost.
/// A trajectory that leaves the divergence bound is cut short with cost = +inf.
inline EpisodeResult simulate_episode(const Vector4& K, const DiscreteSystem& sys, const EpisodeConfig& cfg,
                                      std::uint64_t seed, const InstabilityThreshold& th = {}) {
  detail::require(K.allFinite(), "simulate_episode: gain must be finite");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const bool noisy = (cfg.process_noise_std.array() > 0.0).any();

  EpisodeResult r;
  Vector4 x = cfg.x0;
  double total = 0.0;
  for (int m = 0; m < cfg.M; ++m) {
    const double u = -K.dot(x);
    total += x.dot(cfg.Q * x) + cfg.R * u * u;
    r.max_state_norm = std::max(r.max_state_norm, x.norm());
    if (!std::isfinite(total) || !(r.max_state_norm <= th.divergence)) {
      r.cost = std::numeric_limits<double>::infinity();
      r.stable = false;
      return r;
    }
    Vector4 next = sys.Ad * x + sys.Bd * u;
    if (noisy)
      for (int i = 0; i < 4; ++i) next(i) += cfg.process_noise_std(i) * z(rng);
    x = next;
  }
  r.cost = total / cfg.M;
  r.stable = !is_unstable(r, th);
  return r;
}

inline EpisodeResult simulate_episode(const Vector4& K, int t, const EpisodeConfig& cfg, const CartPoleParams& p,
                                      const FrictionSchedule& s, std::uint64_t seed, const InstabilityThreshold& th = {}) {
  cfg.validate();
  return simulate_episode(K, discrete_system(t, cfg.dt, p, s), cfg, seed, th);
}

/// Expected episode cost E[J] under the process noise, from the state covariance recursion
/// S+ = Acl S Acl^T + W with S_0 = x0 x0^T. Returns +inf once the covariance overflows.
inline double expected_cost(const Vector4& K, const DiscreteSystem& sys, const EpisodeConfig& cfg) {
  const Matrix4 acl = sys.Ad - sys.Bd * K.transpose();
  const Matrix4 weight = cfg.Q + cfg.R * K * K.transpose();
  const Matrix4 w = cfg.process_noise_std.array().square().matrix().asDiagonal();
  Matrix4 s = cfg.x0 * cfg.x0.transpose();
  double total = 0.0;
  for (int m = 0; m < cfg.M; ++m) {
    total += (weight.cwiseProduct(s)).sum();
    if (!std::isfinite(total)) return std::numeric_limits<double>::infinity();
    s = acl * s * acl.transpose() + w;
  }
  return total / cfg.M;
}

/// Long-run expected episode cost tr((Q + R K K^T) S) with S = Acl S Acl^T + W + x0 x0^T / M, i.e.
/// tr(P_K (W + x0 x0^T / M)) for the closed-loop value matrix P_K. The Riccati gain minimizes it exactly.
/// +inf if Acl is not Schur.
inline double stationary_cost(const Vector4& K, const DiscreteSystem& sys, const EpisodeConfig& cfg) {
  const Matrix4 acl = sys.Ad - sys.Bd * K.transpose();
  if (acl.eigenvalues().cwiseAbs().maxCoeff() >= 1.0) return std::numeric_limits<double>::infinity();
  const Matrix4 w = Matrix4(cfg.process_noise_std.array().square().matrix().asDiagonal()) + cfg.x0 * cfg.x0.transpose() / cfg.M;
  // vec(S) = (I - Acl (x) Acl)^-1 vec(W)
  Eigen::Matrix<double, 16, 16> kron;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) kron.block<4, 4>(4 * i, 4 * j) = acl(i, j) * acl;
  const Eigen::Matrix<double, 16, 1> vec_w = Eigen::Map<const Eigen::Matrix<double, 16, 1>>(w.data());
  const Eigen::Matrix<double, 16, 1> vec_s = (Eigen::Matrix<double, 16, 16>::Identity() - kron).partialPivLu().solve(vec_w);
  const Matrix4 s = Eigen::Map<const Matrix4>(vec_s.data());
  const Matrix4 weight = cfg.Q + cfg.R * K * K.transpose();
  return weight.cwiseProduct(s).sum();
}

}  // namespace uitvbo::lqr
