#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <optional>
#include <vector>

#include "uitvbo/errors.hpp"

namespace uitvbo::gp {

// A location in the spatio-temporal input space: parameter vector and TVBO step.
struct ParamPoint {
  Eigen::VectorXd theta;
  int t = 0;
};

struct Observation {
  ParamPoint point;
  double y = 0.0;
  bool stable = true;
  // y was produced by unstable-observation imputation.
  bool imputed = false;
};

// Ordered observation records. Timestamps never decrease and all parameter vectors share one dimension.
class Dataset {
 public:
  Dataset() = default;

  void push_back(Observation obs) {
    detail::require(obs.point.theta.size() >= 1, "Dataset: empty parameter vector");
    detail::require(obs.point.t >= 0, "Dataset: negative timestamp");
    detail::require(std::isfinite(obs.y), "Dataset: observation must be finite");
    detail::require(!obs.imputed || !obs.stable, "Dataset: imputed observations must be flagged unstable");
    if (!records_.empty()) {
      detail::require(obs.point.theta.size() == dim(), "Dataset: dimension mismatch");
      detail::require(obs.point.t >= records_.back().point.t, "Dataset: timestamps must be non-decreasing");
    }
    records_.push_back(std::move(obs));
  }

  [[nodiscard]] std::size_t size() const { return records_.size(); }
  [[nodiscard]] bool empty() const { return records_.empty(); }
  [[nodiscard]] Eigen::Index dim() const { return records_.empty() ? 0 : records_.front().point.theta.size(); }

  [[nodiscard]] const Observation& operator[](std::size_t i) const { return records_[i]; }
  [[nodiscard]] Observation& operator[](std::size_t i) { return records_[i]; }
  [[nodiscard]] const Observation& back() const { return records_.back(); }

  [[nodiscard]] auto begin() const { return records_.begin(); }
  [[nodiscard]] auto end() const { return records_.end(); }

  [[nodiscard]] Eigen::VectorXd targets() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(records_.size()));
    for (std::size_t i = 0; i < records_.size(); ++i) y(static_cast<Eigen::Index>(i)) = records_[i].y;
    return y;
  }

  [[nodiscard]] std::vector<ParamPoint> points() const {
    std::vector<ParamPoint> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.point);
    return out;
  }

  // The `count` most recent records (all of them when count is 0 or exceeds size()).
  [[nodiscard]] Dataset most_recent(std::size_t count) const {
    if (count == 0 || count >= records_.size()) return *this;
    Dataset out;
    out.records_.assign(records_.end() - static_cast<std::ptrdiff_t>(count), records_.end());
    return out;
  }

 private:
  std::vector<Observation> records_;
};

struct SpatialKernelParams {
  // Per-dimension lengthscales sigma_l (not squared).
  Eigen::VectorXd lengthscales;
  double output_variance = 1.0;

  void validate() const {
    detail::require(lengthscales.size() >= 1, "SpatialKernelParams: no lengthscales");
    detail::require((lengthscales.array() > 0.0).all(), "SpatialKernelParams: lengthscales must be positive");
    detail::require(output_variance > 0.0, "SpatialKernelParams: output variance must be positive");
  }
};

// Wiener-process temporal kernel parameters. The offset c0 is tied to sigma_w^2 so that
// the kernel equals one at t = 0.
class WienerParams {
 public:
  explicit WienerParams(double sigma_w_sq) : sigma_w_sq_(sigma_w_sq), c0_(-1.0 / sigma_w_sq) {
    detail::require(sigma_w_sq > 0.0 && std::isfinite(sigma_w_sq), "WienerParams: sigma_w^2 must be positive");
  }
  [[nodiscard]] double sigma_w_sq() const { return sigma_w_sq_; }
  [[nodiscard]] double c0() const { return c0_; }

 private:
  double sigma_w_sq_;
  double c0_;
};

// Stationary "back to prior" temporal kernel with forgetting factor epsilon in (0, 1).
class BackToPriorParams {
 public:
  explicit BackToPriorParams(double epsilon) : epsilon_(epsilon) {
    detail::require(epsilon > 0.0 && epsilon < 1.0, "BackToPriorParams: epsilon must lie in (0,1)");
  }
  [[nodiscard]] double epsilon() const { return epsilon_; }

 private:
  double epsilon_;
};

struct TimeInvariant {};

using TemporalKernelParams = std::variant<WienerParams, BackToPriorParams, TimeInvariant>;

struct GammaPrior {
  double shape = 3.0;
  double rate = 6.0;

  [[nodiscard]] double log_density(double x) const {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
  }
};

struct HyperPriors {
  std::vector<GammaPrior> lengthscale_gamma;
  std::optional<GammaPrior> output_variance_gamma;

  static HyperPriors uniform(Eigen::Index dim, GammaPrior prior = {}) {
    HyperPriors p;
    p.lengthscale_gamma.assign(static_cast<std::size_t>(dim), prior);
    return p;
  }

  /// Gamma(3, 6) per lengthscale and Gamma(2, 0.15) on the output variance.
  static HyperPriors defaults(Eigen::Index dim) {
    HyperPriors p = uniform(dim);
    p.output_variance_gamma = GammaPrior{2.0, 0.15};
    return p;
  }

  void validate() const {
    for (const auto& g : lengthscale_gamma)
      detail::require(g.shape > 0.0 && g.rate > 0.0, "HyperPriors: Gamma shape and rate must be positive");
    if (output_variance_gamma)
      detail::require(output_variance_gamma->shape > 0.0 && output_variance_gamma->rate > 0.0,
                      "HyperPriors: Gamma shape and rate must be positive");
  }
};

struct GPPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  [[nodiscard]] Eigen::VectorXd variance() const { return covariance.diagonal(); }
};

}  // namespace uitvbo::gp
