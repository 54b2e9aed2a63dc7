#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string>
#include <variant>

#include "uitvbo/gp/types.hpp"

namespace uitvbo::gp {

/// Squared-exponential (ARD) spatial kernel
///   k_S(a, b) = sigma_k^2 exp(-1/2 sum_i (a_i - b_i)^2 / sigma_{l,i}^2).
inline double se_kernel(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                        const SpatialKernelParams& p) {
  if (a.size() != b.size() || a.size() != p.lengthscales.size())
    throw ContractViolation("se_kernel: dimension mismatch");
  const double r2 = ((a - b).array() / p.lengthscales.array()).square().sum();
  return p.output_variance * std::exp(-0.5 * r2);
}

/// Wiener-process kernel sigma_w^2 (min(t, t2) - c0). With c0 = -1/sigma_w^2 it is 1 whenever either time is 0.
inline double wiener_kernel(int t, int t2, const WienerParams& p) {
  detail::require(t >= 0 && t2 >= 0, "wiener_kernel: times must be non-negative");
  return p.sigma_w_sq() * (static_cast<double>(std::min(t, t2)) - p.c0());
}

/// Back-to-prior kernel (1 - eps)^{|t - t2| / 2}.
inline double b2p_kernel(int t, int t2, const BackToPriorParams& p) {
  detail::require(t >= 0 && t2 >= 0, "b2p_kernel: times must be non-negative");
  const double lag = std::abs(static_cast<double>(t) - static_cast<double>(t2));
  return std::pow(1.0 - p.epsilon(), 0.5 * lag);
}

inline double temporal_kernel(int t, int t2, const TemporalKernelParams& p) {
  return std::visit(
      [&](const auto& v) -> double {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, WienerParams>) {
          return wiener_kernel(t, t2, v);
        } else if constexpr (std::is_same_v<V, BackToPriorParams>) {
          return b2p_kernel(t, t2, v);
        } else {
          return 1.0;
        }
      },
      p);
}

/// Separable product k_S(theta, theta') k_T(t, t').
inline double spatio_temporal_kernel(const ParamPoint& a, const ParamPoint& b, const SpatialKernelParams& sp,
                                     const TemporalKernelParams& tp) {
  return se_kernel(a.theta, b.theta, sp) * temporal_kernel(a.t, b.t, tp);
}

inline Eigen::MatrixXd cross_covariance(std::span<const ParamPoint> rows, std::span<const ParamPoint> cols,
                                        const SpatialKernelParams& sp, const TemporalKernelParams& tp) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = spatio_temporal_kernel(rows[i], cols[j], sp, tp);
  return k;
}

inline Eigen::MatrixXd gram_matrix(std::span<const ParamPoint> points, const SpatialKernelParams& sp,
                                   const TemporalKernelParams& tp) {
  detail::require(!points.empty(), "gram_matrix: empty point list");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = spatio_temporal_kernel(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(i)], sp, tp);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v =
          spatio_temporal_kernel(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)], sp, tp);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

/// Forgetting strategy as configured by the user. The UI variant stores the forgetting factor
/// sigma_hat_w^2 = sigma_k^2 sigma_w^2, so the Wiener variance follows the output variance.
struct Forgetting {
  enum class Kind { UncertaintyInjection, BackToPrior, TimeInvariant, Fixed };

  Kind kind = Kind::UncertaintyInjection;
  double factor = 0.03;
  TemporalKernelParams fixed = TimeInvariant{};

  static Forgetting ui(double sigma_hat_w_sq) { return {Kind::UncertaintyInjection, sigma_hat_w_sq, TimeInvariant{}}; }
  static Forgetting b2p(double epsilon) { return {Kind::BackToPrior, epsilon, TimeInvariant{}}; }
  static Forgetting time_invariant() { return {Kind::TimeInvariant, 0.0, TimeInvariant{}}; }
  static Forgetting fixed_params(TemporalKernelParams tp) { return {Kind::Fixed, 0.0, std::move(tp)}; }

  [[nodiscard]] TemporalKernelParams resolve(double output_variance) const {
    switch (kind) {
      case Kind::UncertaintyInjection:
        return WienerParams(factor / output_variance);
      case Kind::BackToPrior:
        return BackToPriorParams(factor);
      case Kind::TimeInvariant:
        return TimeInvariant{};
      case Kind::Fixed:
        break;
    }
    return fixed;
  }

  // d k_T(t, t2) / d log sigma_k^2 at fixed forgetting factor.
  [[nodiscard]] double temporal_log_variance_derivative(int t, int t2, double output_variance) const {
    if (kind != Kind::UncertaintyInjection) return 0.0;
    return -(factor / output_variance) * static_cast<double>(std::min(t, t2));
  }

  [[nodiscard]] std::string name() const {
    switch (kind) {
      case Kind::UncertaintyInjection:
        return "ui";
      case Kind::BackToPrior:
        return "b2p";
      case Kind::TimeInvariant:
        return "time-invariant";
      case Kind::Fixed:
        break;
    }
    return "fixed";
  }
};

}  // namespace uitvbo::gp
