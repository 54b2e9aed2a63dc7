#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "uitvbo/errors.hpp"
#include "uitvbo/tvbo/region.hpp"

namespace uitvbo::constrained {

// Locations where d^2 f / d theta_i^2 >= lower_bound is imposed, for every i in `dims`,
// at the single time slice `t_slice`.
struct VirtualObservationSet {
  std::vector<Eigen::VectorXd> locations;
  std::vector<int> dims;
  int t_slice = 0;
  double lower_bound = 0.0;

  [[nodiscard]] std::size_t constraint_count() const { return locations.size() * dims.size(); }
  [[nodiscard]] bool empty() const { return constraint_count() == 0; }

  // Constraint c is (location c / |dims|, dimension dims[c % |dims|]).
  [[nodiscard]] std::pair<std::size_t, int> constraint(std::size_t c) const {
    return {c / dims.size(), dims[c % dims.size()]};
  }
};

/// Equidistant grid of per_dim points per axis over `region` (endpoints included), constraining every
/// dimension. A zero-width axis contributes a single coordinate.
inline VirtualObservationSet place_vops(const tvbo::TrustRegion& region, int per_dim, int t_next,
                                        std::size_t max_constraints = 400, double lower_bound = 0.0) {
  region.validate();
  detail::require(per_dim >= 2, "place_vops: need at least two points per dimension");
  const auto d = region.dim();

  std::vector<std::vector<double>> axes(static_cast<std::size_t>(d));
  std::size_t count = 1;
  for (Eigen::Index i = 0; i < d; ++i) {
    auto& axis = axes[static_cast<std::size_t>(i)];
    const double lo = region.lower(i);
    const double hi = region.upper(i);
    if (hi == lo) {
      axis.push_back(lo);
    } else {
      for (int k = 0; k < per_dim; ++k) axis.push_back(k == per_dim - 1 ? hi : lo + (hi - lo) * k / (per_dim - 1));
    }
    count *= axis.size();
  }
  if (count * static_cast<std::size_t>(d) > max_constraints)
    throw BudgetExceeded("place_vops: " + std::to_string(count * static_cast<std::size_t>(d)) +
                         " constraints exceed the sampler budget of " + std::to_string(max_constraints));

  VirtualObservationSet vops;
  vops.t_slice = t_next;
  vops.lower_bound = lower_bound;
  for (Eigen::Index i = 0; i < d; ++i) vops.dims.push_back(static_cast<int>(i));
  vops.locations.reserve(count);
  std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
  for (std::size_t n = 0; n < count; ++n) {
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < d; ++i) x(i) = axes[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
    vops.locations.push_back(std::move(x));
    // Odometer increment, last axis fastest.
    for (Eigen::Index i = d - 1; i >= 0; --i) {
      auto& k = idx[static_cast<std::size_t>(i)];
      if (++k < axes[static_cast<std::size_t>(i)].size()) break;
      k = 0;
    }
  }
  return vops;
}

}  // namespace uitvbo::constrained
