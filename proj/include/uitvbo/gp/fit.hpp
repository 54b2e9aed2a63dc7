#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "uitvbo/gp/kernels.hpp"
#include "uitvbo/gp/lbfgs.hpp"
#include "uitvbo/gp/posterior.hpp"
#include "uitvbo/gp/types.hpp"

namespace uitvbo::gp {

struct GpHyperparameters {
  SpatialKernelParams spatial;
  double noise_variance = 0.1;
};

struct FitOptions {
  bool train_noise = true;
  double noise_floor = 1e-6;
  // Box on every log-parameter; keeps the search away from overflow.
  double log_bound = 12.0;
  LbfgsOptions lbfgs{};
};

struct FitResult {
  GpHyperparameters params;
  double objective = 0.0;          // log marginal likelihood + log prior at `params`
  double initial_objective = 0.0;  // same quantity at the starting point
  bool improved = false;           // false: optimizer did not beat the start, initial returned
  int iterations = 0;
};

namespace detail {

// Negative log posterior over u = [log sigma_l (D), log sigma_k^2, log(sigma_n^2 - floor)] with
// pairwise quantities cached once per dataset.
class MapObjective {
 public:
  MapObjective(const Dataset& data, const Forgetting& forgetting, const HyperPriors& priors, const FitOptions& opt)
      : forgetting_(forgetting), priors_(priors), opt_(opt), y_(data.targets()) {
    const auto n = static_cast<Eigen::Index>(data.size());
    dim_ = data.dim();
    times_.resize(static_cast<std::size_t>(n));
    sqdiff_.assign(static_cast<std::size_t>(dim_), Eigen::MatrixXd(n, n));
    for (Eigen::Index a = 0; a < n; ++a) {
      times_[static_cast<std::size_t>(a)] = data[static_cast<std::size_t>(a)].point.t;
      for (Eigen::Index b = 0; b < n; ++b) {
        for (Eigen::Index i = 0; i < dim_; ++i) {
          const double d = data[static_cast<std::size_t>(a)].point.theta(i) - data[static_cast<std::size_t>(b)].point.theta(i);
          sqdiff_[static_cast<std::size_t>(i)](a, b) = d * d;
        }
      }
    }
  }

  [[nodiscard]] Eigen::Index parameter_count() const { return dim_ + 1 + (opt_.train_noise ? 1 : 0); }

  [[nodiscard]] Eigen::VectorXd encode(const GpHyperparameters& h) const {
    Eigen::VectorXd u(parameter_count());
    u.head(dim_) = h.spatial.lengthscales.array().log();
    u(dim_) = std::log(h.spatial.output_variance);
    if (opt_.train_noise) u(dim_ + 1) = std::log(std::max(h.noise_variance - opt_.noise_floor, 1e-12));
    return u;
  }

  [[nodiscard]] GpHyperparameters decode(const Eigen::VectorXd& u, double fixed_noise) const {
    GpHyperparameters h;
    h.spatial.lengthscales = u.head(dim_).array().exp();
    h.spatial.output_variance = std::exp(u(dim_));
    h.noise_variance = opt_.train_noise ? opt_.noise_floor + std::exp(u(dim_ + 1)) : fixed_noise;
    return h;
  }

  // Returns the negative log posterior; writes its gradient.
  double operator()(const Eigen::VectorXd& u, Eigen::VectorXd& grad, double fixed_noise) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if ((u.array().abs() > opt_.log_bound).any()) return inf;
    const GpHyperparameters h = decode(u, fixed_noise);
    const auto n = y_.size();
    const double sk2 = h.spatial.output_variance;
    const TemporalKernelParams tp = forgetting_.resolve(sk2);

    Eigen::MatrixXd expo = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < dim_; ++i) {
      const double l = h.spatial.lengthscales(i);
      expo += sqdiff_[static_cast<std::size_t>(i)] / (l * l);
    }
    const Eigen::MatrixXd s = sk2 * (-0.5 * expo.array()).exp().matrix();
    Eigen::MatrixXd tmat(n, n);
    Eigen::MatrixXd dtmat(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) {
        const int ta = times_[static_cast<std::size_t>(a)];
        const int tb = times_[static_cast<std::size_t>(b)];
        tmat(a, b) = temporal_kernel(ta, tb, tp);
        dtmat(a, b) = forgetting_.temporal_log_variance_derivative(ta, tb, sk2);
      }
    }
    const Eigen::MatrixXd kf = s.cwiseProduct(tmat);
    Eigen::MatrixXd k = kf;
    k.diagonal().array() += h.noise_variance;

    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return inf;
    const auto diag = llt.matrixLLT().diagonal();
    if (!diag.allFinite() || (diag.array() <= 0.0).any()) return inf;

    const Eigen::VectorXd alpha = llt.solve(y_);
    const double lml = -0.5 * y_.dot(alpha) - diag.array().log().sum() -
                       0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    const double lp = log_prior_density(h.spatial, priors_);

    const Eigen::MatrixXd w = alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
    grad.resize(u.size());
    for (Eigen::Index i = 0; i < dim_; ++i) {
      const double l = h.spatial.lengthscales(i);
      const double g_lml = 0.5 * (w.cwiseProduct(kf).cwiseProduct(sqdiff_[static_cast<std::size_t>(i)])).sum() / (l * l);
      double g_prior = 0.0;
      if (!priors_.lengthscale_gamma.empty()) {
        const auto& gp = priors_.lengthscale_gamma[static_cast<std::size_t>(i)];
        g_prior = (gp.shape - 1.0) - gp.rate * l;
      }
      grad(i) = -(g_lml + g_prior);
    }
    grad(dim_) = -0.5 * (w.cwiseProduct(kf + s.cwiseProduct(dtmat))).sum();
    if (priors_.output_variance_gamma)
      grad(dim_) -= (priors_.output_variance_gamma->shape - 1.0) - priors_.output_variance_gamma->rate * sk2;
    if (opt_.train_noise) grad(dim_ + 1) = -0.5 * w.trace() * (h.noise_variance - opt_.noise_floor);

    const double value = -(lml + lp);
    return std::isfinite(value) ? value : inf;
  }

 private:
  Forgetting forgetting_;
  HyperPriors priors_;
  FitOptions opt_;
  Eigen::VectorXd y_;
  Eigen::Index dim_ = 0;
  std::vector<int> times_;
  std::vector<Eigen::MatrixXd> sqdiff_;
};

}  // namespace detail

/// MAP estimate of the spatial kernel parameters (and noise variance when trained) under the Gamma
/// priors in `priors`. The temporal forgetting factor stays fixed. The returned objective is never
/// below the objective at `initial`.
inline FitResult fit_hyperparameters(const Dataset& data, const GpHyperparameters& initial,
                                     const Forgetting& forgetting, const HyperPriors& priors,
                                     const FitOptions& opt = {}) {
  uitvbo::detail::require(data.size() >= 2, "fit_hyperparameters: need at least two observations");
  initial.spatial.validate();
  uitvbo::detail::require(initial.spatial.lengthscales.size() == data.dim(),
                          "fit_hyperparameters: dimension mismatch");
  priors.validate();

  FitOptions options = opt;
  GpHyperparameters start = initial;
  if (options.train_noise) start.noise_variance = std::max(start.noise_variance, options.noise_floor * (1.0 + 1e-6));

  const detail::MapObjective objective(data, forgetting, priors, options);
  const double fixed_noise = start.noise_variance;
  auto f = [&](const Eigen::VectorXd& u, Eigen::VectorXd& g) { return objective(u, g, fixed_noise); };

  FitResult out;
  out.params = initial;
  const Eigen::VectorXd u0 = objective.encode(start);
  Eigen::VectorXd g0;
  const double f0 = f(u0, g0);
  out.initial_objective = std::isfinite(f0) ? -f0 : -std::numeric_limits<double>::infinity();
  out.objective = out.initial_objective;

  const LbfgsResult r = minimize_lbfgs(f, u0, options.lbfgs);
  out.iterations = r.iterations;
  if (std::isfinite(r.value) && -r.value > out.initial_objective) {
    out.params = objective.decode(r.x, fixed_noise);
    out.objective = -r.value;
    out.improved = true;
  }
  return out;
}

/// Spatial-parameter fit with fixed temporal kernel and fixed noise variance.
inline SpatialKernelParams fit_hyperparameters(const Dataset& data, const SpatialKernelParams& initial,
                                               const TemporalKernelParams& tp, const HyperPriors& priors,
                                               double noise_variance) {
  FitOptions opt;
  opt.train_noise = false;
  return fit_hyperparameters(data, GpHyperparameters{initial, noise_variance}, Forgetting::fixed_params(tp), priors,
                             opt)
      .params.spatial;
}

}  // namespace uitvbo::gp
