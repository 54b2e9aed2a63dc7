#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "uitvbo/errors.hpp"
#include "uitvbo/gp/kernels.hpp"
#include "uitvbo/gp/types.hpp"

namespace uitvbo::gp {

struct JitterPolicy {
  double first = 1e-8;  // relative to the mean diagonal entry
  double last = 1e-4;
  double growth = 10.0;
};

struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // absolute amount added to the diagonal
};

/// Cholesky factor of a symmetric matrix. Tries the matrix as given, then adds
/// first, first*growth, ..., last times the mean diagonal until the factorization succeeds.
inline JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& k, const JitterPolicy& policy = {}) {
  const auto n = k.rows();
  JitteredCholesky out;
  auto ok = [&] {
    if (out.llt.info() != Eigen::Success) return false;
    const auto d = out.llt.matrixLLT().diagonal();
    return d.allFinite() && (d.array() > 0.0).all();
  };
  out.llt.compute(k);
  if (ok()) return out;

  double scale = n > 0 ? k.diagonal().mean() : 1.0;
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  for (double rel = policy.first; rel <= policy.last * (1.0 + 1e-9); rel *= policy.growth) {
    out.jitter = rel * scale;
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += out.jitter;
    out.llt.compute(kj);
    if (ok()) return out;
  }
  throw NumericalFailure("Cholesky factorization failed after jitter escalation");
}

struct MarginalPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Exact zero-mean GP regression with a cached factorization of K + sigma_n^2 I.
class ExactGP {
 public:
  ExactGP(const Dataset& data, SpatialKernelParams sp, TemporalKernelParams tp, double noise_variance)
      : points_(data.points()), sp_(std::move(sp)), tp_(std::move(tp)), noise_variance_(noise_variance) {
    sp_.validate();
    detail::require(noise_variance > 0.0, "ExactGP: noise variance must be positive");
    if (points_.empty()) return;
    detail::require(data.dim() == sp_.lengthscales.size(), "ExactGP: data dimension does not match kernel");
    Eigen::MatrixXd k = gram_matrix(points_, sp_, tp_);
    k.diagonal().array() += noise_variance_;
    factor_ = jittered_cholesky(k);
    alpha_ = factor_.llt.solve(data.targets());
  }

  [[nodiscard]] bool has_data() const { return !points_.empty(); }
  [[nodiscard]] double jitter() const { return factor_.jitter; }
  [[nodiscard]] const SpatialKernelParams& spatial() const { return sp_; }
  [[nodiscard]] const TemporalKernelParams& temporal() const { return tp_; }
  [[nodiscard]] double noise_variance() const { return noise_variance_; }
  [[nodiscard]] const std::vector<ParamPoint>& points() const { return points_; }
  [[nodiscard]] const Eigen::VectorXd& alpha() const { return alpha_; }
  [[nodiscard]] const Eigen::LLT<Eigen::MatrixXd>& factor() const { return factor_.llt; }

  [[nodiscard]] Eigen::VectorXd mean(std::span<const ParamPoint> queries) const {
    if (!has_data()) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(queries.size()));
    return cross_covariance(queries, points_, sp_, tp_) * alpha_;
  }

  [[nodiscard]] MarginalPrediction predict(std::span<const ParamPoint> queries) const {
    const auto q = static_cast<Eigen::Index>(queries.size());
    MarginalPrediction out;
    out.variance.resize(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      const auto& p = queries[static_cast<std::size_t>(i)];
      out.variance(i) = spatio_temporal_kernel(p, p, sp_, tp_);
    }
    if (!has_data()) {
      out.mean = Eigen::VectorXd::Zero(q);
      return out;
    }
    const Eigen::MatrixXd kfq = cross_covariance(points_, queries, sp_, tp_);
    out.mean = kfq.transpose() * alpha_;
    const Eigen::MatrixXd v = factor_.llt.matrixL().solve(kfq);
    out.variance -= v.colwise().squaredNorm().transpose();
    return out;
  }

  [[nodiscard]] GPPosterior posterior(std::span<const ParamPoint> queries) const {
    GPPosterior out;
    out.covariance = gram_matrix(queries, sp_, tp_);
    if (!has_data()) {
      out.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(queries.size()));
      return out;
    }
    const Eigen::MatrixXd kfq = cross_covariance(points_, queries, sp_, tp_);
    out.mean = kfq.transpose() * alpha_;
    const Eigen::MatrixXd v = factor_.llt.matrixL().solve(kfq);
    out.covariance -= v.transpose() * v;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
  }

 private:
  std::vector<ParamPoint> points_;
  SpatialKernelParams sp_;
  TemporalKernelParams tp_;
  double noise_variance_;
  JitteredCholesky factor_;
  Eigen::VectorXd alpha_;
};

/// Predictive distribution at `queries`. With no data this is the prior.
inline GPPosterior posterior(const Dataset& data, std::span<const ParamPoint> queries, const SpatialKernelParams& sp,
                             const TemporalKernelParams& tp, double noise_variance) {
  detail::require(!queries.empty(), "posterior: no query points");
  return ExactGP(data, sp, tp, noise_variance).posterior(queries);
}

inline double log_prior_density(const SpatialKernelParams& sp, const HyperPriors& priors) {
  double lp = priors.output_variance_gamma ? priors.output_variance_gamma->log_density(sp.output_variance) : 0.0;
  if (priors.lengthscale_gamma.empty()) return lp;
  detail::require(static_cast<Eigen::Index>(priors.lengthscale_gamma.size()) == sp.lengthscales.size(),
                  "log_prior_density: prior count does not match dimension");
  for (Eigen::Index i = 0; i < sp.lengthscales.size(); ++i)
    lp += priors.lengthscale_gamma[static_cast<std::size_t>(i)].log_density(sp.lengthscales(i));
  return lp;
}

/// Gaussian log marginal likelihood of the targets plus the Gamma log-densities in `priors`.
/// Pass empty priors to get the bare Gaussian term.
inline double log_marginal_likelihood(const Dataset& data, const SpatialKernelParams& sp,
                                      const TemporalKernelParams& tp, double noise_variance,
                                      const HyperPriors& priors) {
  detail::require(!data.empty(), "log_marginal_likelihood: empty dataset");
  const ExactGP gp(data, sp, tp, noise_variance);
  const Eigen::VectorXd y = data.targets();
  const double n = static_cast<double>(data.size());
  const double log_det_half = gp.factor().matrixLLT().diagonal().array().log().sum();
  const double gaussian = -0.5 * y.dot(gp.alpha()) - log_det_half - 0.5 * n * std::log(2.0 * std::numbers::pi);
  return gaussian + log_prior_density(sp, priors);
}

}  // namespace uitvbo::gp
