#pragma once

// Covariances between function values and second spatial derivatives of a separable
// SE x temporal kernel. The temporal factor does not depend on theta, so every derivative is
// the matching derivative of the SE kernel times k_T.

#include <Eigen/Dense>

#include <optional>
#include <span>

#include "uitvbo/constrained/vops.hpp"
#include "uitvbo/gp/kernels.hpp"

namespace uitvbo::constrained {

namespace detail {

// d^2/da_i^2 of exp(-r_i^2 / (2 ell)) divided by the kernel, r = a - b, ell = sigma_l^2.
inline double se_second_factor(double r, double ell) { return r * r / (ell * ell) - 1.0 / ell; }

// d^4/(da_i^2 db_i^2) of the same, divided by the kernel.
inline double se_fourth_factor(double r, double ell) {
  const double r2 = r * r;
  return r2 * r2 / (ell * ell * ell * ell) - 6.0 * r2 / (ell * ell * ell) + 3.0 / (ell * ell);
}

}  // namespace detail

/// d^2 k / da_i^2 when `j` is empty, d^4 k / (da_i^2 db_j^2) otherwise.
inline double kernel_second_derivatives(const gp::ParamPoint& a, const gp::ParamPoint& b, int i, std::optional<int> j,
                                        const gp::SpatialKernelParams& sp, const gp::TemporalKernelParams& tp) {
  const auto dim = sp.lengthscales.size();
  uitvbo::detail::require(i >= 0 && i < dim, "kernel_second_derivatives: dimension index out of range");
  uitvbo::detail::require(!j || (*j >= 0 && *j < dim), "kernel_second_derivatives: dimension index out of range");
  const double base = gp::spatio_temporal_kernel(a, b, sp, tp);
  const auto ell = [&](int k) { return sp.lengthscales(k) * sp.lengthscales(k); };
  const double ri = a.theta(i) - b.theta(i);
  if (!j) return base * detail::se_second_factor(ri, ell(i));
  if (*j == i) return base * detail::se_fourth_factor(ri, ell(i));
  const double rj = a.theta(*j) - b.theta(*j);
  return base * detail::se_second_factor(ri, ell(i)) * detail::se_second_factor(rj, ell(*j));
}

struct DerivativeGramBlocks {
  Eigen::MatrixXd k_ff;  // data x data (no noise)
  Eigen::MatrixXd k_fc;  // data x constraint
  Eigen::MatrixXd k_cc;  // constraint x constraint
  Eigen::MatrixXd k_fq;  // data x query
  Eigen::MatrixXd k_cq;  // constraint x query
};

/// Covariance of f at `points` with the second derivatives listed by `vops`, in constraint order.
inline Eigen::MatrixXd value_derivative_covariance(std::span<const gp::ParamPoint> points,
                                                   const VirtualObservationSet& vops,
                                                   const gp::SpatialKernelParams& sp, const gp::TemporalKernelParams& tp) {
  const auto m = static_cast<Eigen::Index>(vops.constraint_count());
  Eigen::MatrixXd k(static_cast<Eigen::Index>(points.size()), m);
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (Eigen::Index c = 0; c < m; ++c) {
      const auto [loc, dim] = vops.constraint(static_cast<std::size_t>(c));
      const gp::ParamPoint v{vops.locations[loc], vops.t_slice};
      const double kst = gp::spatio_temporal_kernel(points[p], v, sp, tp);
      const double ell = sp.lengthscales(dim) * sp.lengthscales(dim);
      k(static_cast<Eigen::Index>(p), c) = kst * detail::se_second_factor(points[p].theta(dim) - v.theta(dim), ell);
    }
  }
  return k;
}

inline Eigen::MatrixXd derivative_gram(const VirtualObservationSet& vops, const gp::SpatialKernelParams& sp,
                                       const gp::TemporalKernelParams& tp) {
  const auto m = static_cast<Eigen::Index>(vops.constraint_count());
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto [la, da] = vops.constraint(static_cast<std::size_t>(a));
    const gp::ParamPoint pa{vops.locations[la], vops.t_slice};
    for (Eigen::Index b = a; b < m; ++b) {
      const auto [lb, db] = vops.constraint(static_cast<std::size_t>(b));
      const gp::ParamPoint pb{vops.locations[lb], vops.t_slice};
      const double v = kernel_second_derivatives(pa, pb, da, db, sp, tp);
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

inline DerivativeGramBlocks derivative_gram_blocks(std::span<const gp::ParamPoint> data_points,
                                                   const VirtualObservationSet& vops,
                                                   std::span<const gp::ParamPoint> queries,
                                                   const gp::SpatialKernelParams& sp,
                                                   const gp::TemporalKernelParams& tp) {
  DerivativeGramBlocks b;
  const auto n = static_cast<Eigen::Index>(data_points.size());
  b.k_ff = n > 0 ? gp::gram_matrix(data_points, sp, tp) : Eigen::MatrixXd(0, 0);
  b.k_fc = value_derivative_covariance(data_points, vops, sp, tp);
  b.k_cc = derivative_gram(vops, sp, tp);
  b.k_fq = gp::cross_covariance(data_points, queries, sp, tp);
  b.k_cq = value_derivative_covariance(queries, vops, sp, tp).transpose();
  return b;
}

}  // namespace uitvbo::constrained
