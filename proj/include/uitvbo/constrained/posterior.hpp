#pragma once

// GP posterior under convexity constraints imposed at virtual observation points.
//
// Pipeline: (1) the second derivatives at the VOPs given the data form a Gaussian, which the
// constraints truncate; (2) draw from that truncated normal; (3) for every derivative draw,
// the query values are Gaussian given the data and the drawn derivatives.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "uitvbo/constrained/derivatives.hpp"
#include "uitvbo/constrained/tmvn.hpp"
#include "uitvbo/constrained/vops.hpp"
#include "uitvbo/gp/posterior.hpp"
#include "uitvbo/random.hpp"

namespace uitvbo::constrained {

enum class FunctionDraws {
  Auto,      // joint when the query set is small, marginal otherwise
  Joint,     // full query covariance
  Marginal,  // independent per query
  None,      // summaries only
};

struct ConstrainedOptions {
  TmvnOptions sampler{};
  // Variance of the virtual derivative observations, relative to the mean prior derivative variance.
  double virtual_noise = 1e-6;
  FunctionDraws draws = FunctionDraws::Auto;
  Eigen::Index joint_draw_limit = 512;
};

struct ConstrainedPosteriorSamples {
  Eigen::MatrixXd samples;              // n_samples x n_queries (empty when draws == None)
  Eigen::MatrixXd derivative_samples;   // n_samples x n_constraints
  Eigen::MatrixXd conditional_means;    // n_queries x n_samples: E[f(q) | data, derivatives_s]
  Eigen::VectorXd conditional_variance; // Var[f(q) | data, derivatives] (same for every draw)
  Eigen::VectorXd mean_estimate;
  Eigen::VectorXd std_estimate;
  SamplerDiagnostics diagnostics;
};

/// Draws from the convexity-constrained posterior at `queries`.
///
/// mean_estimate and std_estimate are the Monte Carlo moments of the query values with the
/// Gaussian part integrated analytically: the mean of the conditional means, and the conditional
/// variance plus the spread of the conditional means.
inline ConstrainedPosteriorSamples constrained_posterior_samples(
    const gp::Dataset& data, const VirtualObservationSet& vops, std::span<const gp::ParamPoint> queries,
    const gp::SpatialKernelParams& sp, const gp::TemporalKernelParams& tp, double noise_variance, int n_samples,
    std::uint64_t seed, const ConstrainedOptions& options = {}) {
  uitvbo::detail::require(n_samples >= 1, "constrained_posterior_samples: n_samples must be positive");
  uitvbo::detail::require(!queries.empty(), "constrained_posterior_samples: no queries");
  uitvbo::detail::require(noise_variance > 0.0, "constrained_posterior_samples: noise variance must be positive");
  sp.validate();

  const auto q = static_cast<Eigen::Index>(queries.size());
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto m = static_cast<Eigen::Index>(vops.constraint_count());
  const std::vector<gp::ParamPoint> points = data.points();
  const Eigen::VectorXd y = data.targets();

  ConstrainedPosteriorSamples out;
  out.diagnostics.dimension = m;

  Eigen::VectorXd prior_var(q);
  for (Eigen::Index i = 0; i < q; ++i)
    prior_var(i) = gp::spatio_temporal_kernel(queries[static_cast<std::size_t>(i)], queries[static_cast<std::size_t>(i)], sp, tp);

  // Joint covariance of [f(data); derivatives] and its cross-covariance with the queries.
  const Eigen::Index nm = n + m;
  Eigen::MatrixXd joint(nm, nm);
  Eigen::MatrixXd cross(nm, q);
  double virtual_noise = 0.0;
  Eigen::MatrixXd k_fc;
  Eigen::MatrixXd k_cc;
  if (n > 0) {
    joint.topLeftCorner(n, n) = gp::gram_matrix(points, sp, tp);
    joint.topLeftCorner(n, n).diagonal().array() += noise_variance;
    cross.topRows(n) = gp::cross_covariance(points, queries, sp, tp);
  }
  if (m > 0) {
    uitvbo::detail::require(static_cast<Eigen::Index>(vops.dims.size()) <= sp.lengthscales.size(),
                            "constrained_posterior_samples: VOP dimensions exceed kernel dimension");
    k_fc = value_derivative_covariance(points, vops, sp, tp);
    k_cc = derivative_gram(vops, sp, tp);
    virtual_noise = options.virtual_noise * k_cc.diagonal().mean();
    k_cc.diagonal().array() += virtual_noise;
    if (n > 0) {
      joint.topRightCorner(n, m) = k_fc;
      joint.bottomLeftCorner(m, n) = k_fc.transpose();
    }
    joint.bottomRightCorner(m, m) = k_cc;
    cross.bottomRows(m) = value_derivative_covariance(queries, vops, sp, tp).transpose();
  }

  // Derivative values at the VOPs given the data, then truncated.
  const int s_count = m > 0 ? n_samples : 1;
  Eigen::MatrixXd rhs(nm, s_count);
  if (n > 0) rhs.topRows(n) = y.replicate(1, s_count);
  if (m > 0) {
    Eigen::VectorXd mu_c = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd sigma_c = k_cc;
    if (n > 0) {
      const auto data_factor = gp::jittered_cholesky(joint.topLeftCorner(n, n));
      const Eigen::MatrixXd w = data_factor.llt.matrixL().solve(k_fc);
      mu_c = w.transpose() * data_factor.llt.matrixL().solve(y);
      sigma_c -= w.transpose() * w;
    }
    sigma_c = 0.5 * (sigma_c + sigma_c.transpose()).eval();
    const Eigen::VectorXd lower = Eigen::VectorXd::Constant(m, vops.lower_bound);
    out.derivative_samples = sample_truncated_mvn_auto(mu_c, sigma_c, lower, n_samples, derive_seed(seed, 1), options.sampler,
                                                       out.diagnostics);
    out.diagnostics.dimension = m;
    rhs.bottomRows(m) = out.derivative_samples.transpose();
  }

  // Query values given data and derivatives.
  if (nm > 0) {
    const auto factor = gp::jittered_cholesky(joint);
    const Eigen::MatrixXd v = factor.llt.matrixL().solve(cross);
    const Eigen::MatrixXd b = factor.llt.matrixL().solve(rhs);
    out.conditional_means = v.transpose() * b;
    out.conditional_variance = (prior_var - v.colwise().squaredNorm().transpose()).cwiseMax(0.0);

    if (options.draws != FunctionDraws::None) {
      const bool joint_draws = options.draws == FunctionDraws::Joint ||
                               (options.draws == FunctionDraws::Auto && q <= options.joint_draw_limit);
      detail::Rng rng(derive_seed(seed, 2));
      std::normal_distribution<double> z;
      out.samples.resize(n_samples, q);
      Eigen::MatrixXd lq;
      if (joint_draws) {
        Eigen::MatrixXd cq = gp::gram_matrix(queries, sp, tp) - v.transpose() * v;
        cq = 0.5 * (cq + cq.transpose()).eval();
        lq = gp::jittered_cholesky(cq, {1e-10, 1e-2, 10.0}).llt.matrixL();
      }
      for (int s = 0; s < n_samples; ++s) {
        Eigen::VectorXd e(q);
        for (Eigen::Index i = 0; i < q; ++i) e(i) = z(rng);
        const Eigen::VectorXd mean_s = out.conditional_means.col(m > 0 ? s : 0);
        if (joint_draws)
          out.samples.row(s) = (mean_s + lq * e).transpose();
        else
          out.samples.row(s) = (mean_s + out.conditional_variance.cwiseSqrt().cwiseProduct(e)).transpose();
      }
    }
  } else {
    out.conditional_means = Eigen::MatrixXd::Zero(q, 1);
    out.conditional_variance = prior_var;
  }

  out.mean_estimate = out.conditional_means.rowwise().mean();
  const Eigen::MatrixXd centered = out.conditional_means.colwise() - out.mean_estimate;
  const Eigen::VectorXd spread = centered.rowwise().squaredNorm() / static_cast<double>(centered.cols());
  out.std_estimate = (out.conditional_variance + spread).cwiseSqrt();
  return out;
}

}  // namespace uitvbo::constrained
