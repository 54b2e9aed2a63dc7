#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "uitvbo/errors.hpp"
#include "uitvbo/tvbo/region.hpp"

namespace uitvbo::tvbo {

struct AcquisitionConfig {
  double beta = 2.0;
  bool use_constraints = false;
  int n_posterior_samples = 64;

  void validate() const {
    detail::require(beta > 0.0, "AcquisitionConfig: beta must be positive");
    detail::require(n_posterior_samples >= 1, "AcquisitionConfig: need at least one posterior sample");
  }
};

inline double lcb(double mean, double std, double beta) {
  detail::require(std >= 0.0, "lcb: std must be non-negative");
  detail::require(beta > 0.0, "lcb: beta must be positive");
  return mean - std::sqrt(beta) * std;
}

/// Box of `widths` centered on `best`, clipped to `feasible`.
inline TrustRegion local_region(const Eigen::VectorXd& best, const Eigen::VectorXd& widths, const TrustRegion& feasible) {
  feasible.validate();
  detail::require(best.size() == feasible.dim() && widths.size() == feasible.dim(), "local_region: dimension mismatch");
  detail::require((widths.array() > 0.0).all(), "local_region: widths must be positive");
  detail::require((feasible.width().array() > 0.0).all(), "local_region: feasible set is degenerate");
  TrustRegion r{(best - 0.5 * widths).cwiseMax(feasible.lower), (best + 0.5 * widths).cwiseMin(feasible.upper)};
  // A center outside the feasible box would leave an empty intersection; clamp onto the nearest face.
  r.lower = r.lower.cwiseMin(feasible.upper);
  r.upper = r.upper.cwiseMax(feasible.lower);
  return r;
}

struct CandidateOptions {
  int per_dim = 50;
  std::size_t max_candidates = 4096;
};

/// Full per_dim^D grid over the region (endpoints included) when it fits in max_candidates,
/// otherwise a seeded Latin hypercube of max_candidates points. Zero-width axes hold one value.
inline std::vector<Eigen::VectorXd> candidate_points(const TrustRegion& region, const CandidateOptions& opt,
                                                     std::uint64_t seed) {
  region.validate();
  detail::require(opt.per_dim >= 2 && opt.max_candidates >= 1, "candidate_points: invalid options");
  const Eigen::Index d = region.dim();
  std::vector<int> counts(static_cast<std::size_t>(d));
  double total = 1.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    counts[static_cast<std::size_t>(i)] = region.upper(i) > region.lower(i) ? opt.per_dim : 1;
    total *= counts[static_cast<std::size_t>(i)];
  }
  std::vector<Eigen::VectorXd> out;
  const auto axis_value = [&](Eigen::Index i, double frac) {
    return frac >= 1.0 ? region.upper(i) : region.lower(i) + (region.upper(i) - region.lower(i)) * frac;
  };
  if (total <= static_cast<double>(opt.max_candidates)) {
    const auto n = static_cast<std::size_t>(total);
    out.reserve(n);
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    for (std::size_t k = 0; k < n; ++k) {
      Eigen::VectorXd x(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        const int c = counts[static_cast<std::size_t>(i)];
        x(i) = c == 1 ? region.lower(i) : axis_value(i, static_cast<double>(idx[static_cast<std::size_t>(i)]) / (c - 1));
      }
      out.push_back(std::move(x));
      for (Eigen::Index i = d - 1; i >= 0; --i) {
        auto& j = idx[static_cast<std::size_t>(i)];
        if (++j < counts[static_cast<std::size_t>(i)]) break;
        j = 0;
      }
    }
    return out;
  }
  const std::size_t n = opt.max_candidates;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  out.assign(n, Eigen::VectorXd(d));
  std::vector<std::size_t> perm(n);
  for (Eigen::Index i = 0; i < d; ++i) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t k = 0; k < n; ++k)
      out[k](i) = counts[static_cast<std::size_t>(i)] == 1
                      ? region.lower(i)
                      : axis_value(i, (static_cast<double>(perm[k]) + u(rng)) / static_cast<double>(n));
  }
  return out;
}

/// Index of the smallest LCB value; ties go to the lowest index. Non-finite entries are skipped.
inline Eigen::Index argmin_lcb(const Eigen::VectorXd& mean, const Eigen::VectorXd& std, double beta) {
  detail::require(mean.size() == std.size() && mean.size() > 0, "argmin_lcb: size mismatch");
  Eigen::Index best = -1;
  double best_value = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double v = lcb(mean(i), std::max(std(i), 0.0), beta);
    if (std::isfinite(v) && (best < 0 || v < best_value)) {
      best = i;
      best_value = v;
    }
  }
  if (best < 0) throw NumericalFailure("argmin_lcb: every candidate evaluated non-finite");
  return best;
}

/// Compass search inside `region` from x0 with per-axis initial steps; steps halve on failure.
inline Eigen::VectorXd pattern_search(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                                      const TrustRegion& region, Eigen::VectorXd step, double min_step_fraction = 1e-3,
                                      int max_evaluations = 200) {
  const Eigen::VectorXd min_step = min_step_fraction * region.width();
  double fx = f(x0);
  int evals = 1;
  while (evals < max_evaluations && (step.array() > min_step.array()).any()) {
    bool moved = false;
    for (Eigen::Index i = 0; i < x0.size() && !moved; ++i) {
      if (step(i) <= min_step(i)) continue;
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd x = x0;
        x(i) = std::clamp(x(i) + sign * step(i), region.lower(i), region.upper(i));
        if (x(i) == x0(i)) continue;
        const double fv = f(x);
        ++evals;
        if (fv < fx) {
          x0 = std::move(x);
          fx = fv;
          moved = true;
          break;
        }
      }
    }
    if (!moved) step *= 0.5;
  }
  return x0;
}

}  // namespace uitvbo::tvbo
