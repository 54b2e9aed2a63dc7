#pragma once

#include <Eigen/Dense>

#include "uitvbo/errors.hpp"

namespace uitvbo::tvbo {

// Axis-aligned box; used both for the feasible set and for the local trust region.
struct TrustRegion {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  [[nodiscard]] Eigen::Index dim() const { return lower.size(); }
  [[nodiscard]] Eigen::VectorXd width() const { return upper - lower; }

  [[nodiscard]] bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    return x.size() == dim() && (x.array() >= lower.array() - tol).all() && (x.array() <= upper.array() + tol).all();
  }

  void validate() const {
    detail::require(lower.size() >= 1 && lower.size() == upper.size(), "TrustRegion: bound dimensions");
    detail::require((lower.array() <= upper.array()).all(), "TrustRegion: lower must not exceed upper");
  }

  static TrustRegion unit(Eigen::Index dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
  }
};

}  // namespace uitvbo::tvbo
