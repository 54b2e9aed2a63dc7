#pragma once

// The TVBO loop: refit, acquisition over the (trust) region at t+1, evaluation, imputation of
// unstable outcomes, and the best-estimate update.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "uitvbo/constrained/posterior.hpp"
#include "uitvbo/constrained/vops.hpp"
#include "uitvbo/errors.hpp"
#include "uitvbo/gp/fit.hpp"
#include "uitvbo/gp/kernels.hpp"
#include "uitvbo/gp/posterior.hpp"
#include "uitvbo/random.hpp"
#include "uitvbo/tvbo/acquisition.hpp"
#include "uitvbo/tvbo/region.hpp"

namespace uitvbo::tvbo {

struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  [[nodiscard]] double apply(double raw) const { return (raw - mean) / std; }
  [[nodiscard]] double invert(double normalized) const { return normalized * std + mean; }
};

/// Zero mean, unit population standard deviation.
inline std::pair<Eigen::VectorXd, Normalizer> normalize(const Eigen::VectorXd& raw) {
  uitvbo::detail::require(raw.size() >= 2, "normalize: need at least two values");
  uitvbo::detail::require(raw.allFinite(), "normalize: values must be finite");
  Normalizer n;
  n.mean = raw.mean();
  n.std = std::sqrt((raw.array() - n.mean).square().mean());
  if (!(n.std > 0.0)) throw DegenerateData("normalize: all values are identical");
  return {(raw.array() - n.mean) / n.std, n};
}

struct ObjectiveValue {
  double y_raw = 0.0;
  bool stable = true;
};

// (theta in feasible-set units, t) -> noisy observation.
using Objective = std::function<ObjectiveValue(const Eigen::VectorXd&, int)>;

struct OptimizerConfig {
  TrustRegion feasible;
  AcquisitionConfig acquisition{};
  gp::Forgetting forgetting = gp::Forgetting::ui(0.03);
  // Trust-region width as a fraction of the feasible width (constrained variants only).
  double trust_fraction = 0.15;
  // VOPs per axis; 0 picks 5 for D <= 2 and 3 otherwise.
  int vops_per_dim = 0;
  std::size_t max_constraints = 400;
  double convexity_lower_bound = 0.0;
  CandidateOptions candidates{};
  bool refine = true;
  double imputation_sigmas = 3.0;
  bool refit = true;
  gp::GpHyperparameters initial_hyperparameters{};  // empty lengthscales: 1/3 per axis
  gp::FitOptions fit{};
  constrained::ConstrainedOptions constrained{};

  [[nodiscard]] int resolved_vops_per_dim() const {
    if (vops_per_dim > 0) return vops_per_dim;
    return feasible.dim() <= 2 ? 5 : 3;
  }

  void validate() const {
    feasible.validate();
    uitvbo::detail::require((feasible.width().array() > 0.0).all(), "OptimizerConfig: feasible set is degenerate");
    acquisition.validate();
    uitvbo::detail::require(trust_fraction > 0.0 && trust_fraction <= 1.0, "OptimizerConfig: trust_fraction must be in (0, 1]");
    uitvbo::detail::require(imputation_sigmas >= 0.0, "OptimizerConfig: imputation_sigmas must be non-negative");
  }
};

struct OptimizerState {
  gp::Dataset data;  // unit-cube parameters, normalized targets
  int t = 0;
  Eigen::VectorXd best_estimate;  // feasible-set units
  gp::SpatialKernelParams spatial;
  gp::TemporalKernelParams temporal = gp::TimeInvariant{};
  double noise_variance = 0.1;
  Normalizer normalizer;
};

struct StepRecord {
  int t = 0;
  Eigen::VectorXd query;  // feasible-set units
  double y_raw = 0.0;
  double y_normalized = 0.0;  // value stored in the dataset (imputed when unstable)
  bool stable = true;
  bool imputed = false;
  Eigen::VectorXd best_estimate;
  TrustRegion region;
  constrained::SamplerDiagnostics sampler;
};

namespace detail {

inline Eigen::VectorXd to_unit(const Eigen::VectorXd& x, const TrustRegion& feasible) {
  return ((x - feasible.lower).array() / feasible.width().array()).matrix();
}

inline Eigen::VectorXd from_unit(const Eigen::VectorXd& u, const TrustRegion& feasible) {
  return feasible.lower + u.cwiseProduct(feasible.width());
}

inline TrustRegion to_unit(const TrustRegion& r, const TrustRegion& feasible) {
  TrustRegion u{to_unit(r.lower, feasible), to_unit(r.upper, feasible)};
  u.lower = u.lower.cwiseMax(0.0).cwiseMin(1.0);
  u.upper = u.upper.cwiseMax(u.lower).cwiseMin(1.0);
  return u;
}

inline std::vector<gp::ParamPoint> at_time(const std::vector<Eigen::VectorXd>& xs, int t) {
  std::vector<gp::ParamPoint> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back({x, t});
  return out;
}

inline gp::ExactGP surrogate(const OptimizerState& s) { return {s.data, s.spatial, s.temporal, s.noise_variance}; }

inline Eigen::Index argmin_mean(const Eigen::VectorXd& mean) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < mean.size(); ++i)
    if (mean(i) < mean(best)) best = i;
  return best;
}

inline constexpr std::uint64_t kCandidateStream = 21;
inline constexpr std::uint64_t kSamplerStream = 22;

}  // namespace detail

/// Search region for step t+1 in feasible-set units.
inline TrustRegion step_region(const OptimizerState& state, const OptimizerConfig& config) {
  if (!config.acquisition.use_constraints) return config.feasible;
  return local_region(state.best_estimate, config.trust_fraction * config.feasible.width(), config.feasible);
}

struct QuerySelection {
  Eigen::VectorXd theta;  // feasible-set units
  std::vector<Eigen::VectorXd> candidates;  // unit cube
  constrained::SamplerDiagnostics sampler;
};

/// Minimizer of the LCB at time slice t+1 over `region`.
inline QuerySelection select_query(const OptimizerState& state, const OptimizerConfig& config, const TrustRegion& region,
                                   std::uint64_t seed) {
  const TrustRegion unit_region = detail::to_unit(region, config.feasible);
  QuerySelection out;
  out.candidates = candidate_points(unit_region, config.candidates, derive_seed(seed, detail::kCandidateStream));
  const auto queries = detail::at_time(out.candidates, state.t + 1);
  const double beta = config.acquisition.beta;

  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  const bool constrained_mode = config.acquisition.use_constraints;
  if (constrained_mode) {
    const auto vops = constrained::place_vops(unit_region, config.resolved_vops_per_dim(), state.t + 1,
                                              config.max_constraints, config.convexity_lower_bound);
    auto copt = config.constrained;
    copt.draws = constrained::FunctionDraws::None;
    const auto post = constrained::constrained_posterior_samples(
        state.data, vops, queries, state.spatial, state.temporal, state.noise_variance,
        config.acquisition.n_posterior_samples, derive_seed(seed, detail::kSamplerStream), copt);
    mean = post.mean_estimate;
    std = post.std_estimate;
    out.sampler = post.diagnostics;
  } else {
    const auto pred = detail::surrogate(state).predict(queries);
    mean = pred.mean;
    std = pred.variance.cwiseMax(0.0).cwiseSqrt();
  }
  Eigen::VectorXd best = out.candidates[static_cast<std::size_t>(argmin_lcb(mean, std, beta))];

  if (!constrained_mode && config.refine && (unit_region.width().array() > 0.0).any()) {
    const auto model = detail::surrogate(state);
    const auto f = [&](const Eigen::VectorXd& x) {
      const std::vector<gp::ParamPoint> q{{x, state.t + 1}};
      const auto p = model.predict(q);
      return lcb(p.mean(0), std::sqrt(std::max(p.variance(0), 0.0)), beta);
    };
    const Eigen::VectorXd step = unit_region.width() / static_cast<double>(config.candidates.per_dim - 1);
    best = pattern_search(f, best, unit_region, step);
  }
  out.theta = detail::from_unit(best, config.feasible).cwiseMax(region.lower).cwiseMin(region.upper);
  return out;
}

/// mean + k sigma of the unconstrained posterior at (theta, t), normalized units.
inline double impute_unstable(const Eigen::VectorXd& theta_bar, int t, const OptimizerState& state,
                              const OptimizerConfig& config) {
  const std::vector<gp::ParamPoint> q{{detail::to_unit(theta_bar, config.feasible), t}};
  const auto p = detail::surrogate(state).predict(q);
  return p.mean(0) + config.imputation_sigmas * std::sqrt(std::max(p.variance(0), 0.0));
}

inline void refit(OptimizerState& state, const OptimizerConfig& config) {
  if (config.refit && state.data.size() >= 2) {
    const auto priors = gp::HyperPriors::defaults(state.data.dim());
    const auto fit = gp::fit_hyperparameters(state.data, {state.spatial, state.noise_variance}, config.forgetting,
                                             priors, config.fit);
    state.spatial = fit.params.spatial;
    state.noise_variance = fit.params.noise_variance;
  }
  state.temporal = config.forgetting.resolve(state.spatial.output_variance);
}

/// Normalizes the raw initial dataset (parameters in feasible-set units), fits the surrogate and
/// sets the first best estimate to the initial point with the lowest posterior mean.
inline OptimizerState initialize(const gp::Dataset& raw, const OptimizerConfig& config) {
  config.validate();
  uitvbo::detail::require(raw.size() >= 2, "initialize: need at least two initial observations");
  uitvbo::detail::require(raw.dim() == config.feasible.dim(), "initialize: dimension mismatch");
  OptimizerState s;
  const auto [y, normalizer] = normalize(raw.targets());
  s.normalizer = normalizer;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto obs = raw[i];
    obs.point.theta = detail::to_unit(obs.point.theta, config.feasible);
    obs.y = y(static_cast<Eigen::Index>(i));
    s.data.push_back(std::move(obs));
  }
  s.t = raw.back().point.t;
  const auto& init = config.initial_hyperparameters;
  s.spatial = init.spatial.lengthscales.size() == config.feasible.dim()
                  ? init.spatial
                  : gp::SpatialKernelParams{Eigen::VectorXd::Constant(config.feasible.dim(), 1.0 / 3.0), 1.0};
  s.noise_variance = init.noise_variance;
  refit(s, config);
  // Restricted to the observed locations: the fitted mean can dip outside the data.
  std::vector<Eigen::VectorXd> seen;
  for (const auto& obs : s.data) seen.push_back(obs.point.theta);
  const auto mean = detail::surrogate(s).mean(detail::at_time(seen, s.t));
  s.best_estimate = detail::from_unit(seen[static_cast<std::size_t>(detail::argmin_mean(mean))], config.feasible);
  return s;
}

/// One iteration of the loop; appends exactly one observation at t+1.
inline StepRecord tvbo_step(OptimizerState& state, const OptimizerConfig& config, const Objective& objective,
                            std::uint64_t seed) {
  refit(state, config);
  StepRecord rec;
  rec.t = state.t + 1;
  rec.region = step_region(state, config);
  auto sel = select_query(state, config, rec.region, seed);
  rec.query = sel.theta;
  rec.sampler = sel.sampler;

  const ObjectiveValue v = objective(rec.query, rec.t);
  rec.y_raw = v.y_raw;
  rec.stable = v.stable && std::isfinite(v.y_raw);
  rec.imputed = !rec.stable;
  rec.y_normalized = rec.stable ? state.normalizer.apply(v.y_raw) : impute_unstable(rec.query, rec.t, state, config);
  state.data.push_back({{detail::to_unit(rec.query, config.feasible), rec.t}, rec.y_normalized, rec.stable, rec.imputed});
  state.t = rec.t;

  const auto mean = detail::surrogate(state).mean(detail::at_time(sel.candidates, state.t));
  state.best_estimate =
      detail::from_unit(sel.candidates[static_cast<std::size_t>(detail::argmin_mean(mean))], config.feasible);
  rec.best_estimate = state.best_estimate;
  return rec;
}

inline constexpr std::uint64_t kAcquisitionStream = 31;

/// `horizon` steps from the initial raw dataset; deterministic given seed and objective.
inline std::vector<StepRecord> run(const gp::Dataset& initial_data, const OptimizerConfig& config,
                                   const Objective& objective, int horizon, std::uint64_t seed,
                                   const std::function<void(const StepRecord&)>& on_step = {}) {
  uitvbo::detail::require(horizon >= 1, "run: horizon must be at least 1");
  OptimizerState state = initialize(initial_data, config);
  std::vector<StepRecord> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int k = 0; k < horizon; ++k) {
    out.push_back(tvbo_step(state, config, objective, derive_seed(seed, kAcquisitionStream, static_cast<std::uint64_t>(k))));
    if (on_step) on_step(out.back());
  }
  return out;
}

}  // namespace uitvbo::tvbo
