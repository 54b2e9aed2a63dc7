#pragma once

// Sampling from multivariate normals truncated to a box {x : lower <= x <= upper}.
//
// The exact sampler uses minimax exponential tilting: a Cholesky factor with variable reordering
// defines a sequential proposal, the tilting parameters solve a saddle-point problem by Newton's
// method, and proposals are accepted against the saddle-point bound. It produces i.i.d. draws.
// For high-dimensional or nearly singular problems the coordinatewise Gibbs sampler takes over.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "uitvbo/constrained/truncated_normal.hpp"
#include "uitvbo/errors.hpp"

namespace uitvbo::constrained {

// The exact sampler cannot serve this request; the caller should switch to Gibbs.
class FallbackRequired : public std::runtime_error {
 public:
  explicit FallbackRequired(const std::string& what) : std::runtime_error(what) {}
};

// The truncation region carries (numerically) zero probability.
class InfeasibleTruncation : public std::runtime_error {
 public:
  explicit InfeasibleTruncation(const std::string& what) : std::runtime_error(what) {}
};

enum class SamplerKind { None, MinimaxTilting, Gibbs };

inline const char* to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::MinimaxTilting:
      return "minimax-tilting";
    case SamplerKind::Gibbs:
      return "gibbs";
    case SamplerKind::None:
      break;
  }
  return "none";
}

struct SamplerDiagnostics {
  SamplerKind sampler = SamplerKind::None;
  Eigen::Index dimension = 0;
  double acceptance_rate = 1.0;
  double condition_number = 1.0;
  bool fell_back = false;       // tilting was attempted and handed over to Gibbs
  int degenerate_updates = 0;   // Gibbs coordinates held at their clipped conditional mean
  std::string note;
};

struct TmvnOptions {
  Eigen::Index max_tilting_dimension = 60;
  double max_condition_number = 1e10;
  double min_acceptance = 1e-3;
  int max_batches = 1000;
  int newton_iterations = 100;
  int burn_in = 200;
};

namespace detail {

struct PermutedCholesky {
  Eigen::MatrixXd l;               // lower-triangular factor of the permuted covariance
  std::vector<Eigen::Index> perm;  // position i holds original coordinate perm[i]
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// Cholesky factorization that orders variables by increasing truncated-interval probability.
inline PermutedCholesky permuted_cholesky(Eigen::MatrixXd sig, Eigen::VectorXd lo, Eigen::VectorXd up) {
  const auto d = sig.rows();
  PermutedCholesky out;
  out.l = Eigen::MatrixXd::Zero(d, d);
  out.perm.resize(static_cast<std::size_t>(d));
  std::iota(out.perm.begin(), out.perm.end(), 0);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
  constexpr double eps = std::numeric_limits<double>::epsilon();

  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index best = j;
    double best_pr = kInf;
    for (Eigen::Index i = j; i < d; ++i) {
      double s = sig(i, i) - out.l.row(i).head(j).squaredNorm();
      s = std::sqrt(std::max(s, eps));
      const double shift = out.l.row(i).head(j).dot(z.head(j));
      const double pr = log_normal_probability((lo(i) - shift) / s, (up(i) - shift) / s);
      if (pr < best_pr) {
        best_pr = pr;
        best = i;
      }
    }
    if (best != j) {
      sig.row(j).swap(sig.row(best));
      sig.col(j).swap(sig.col(best));
      out.l.row(j).swap(out.l.row(best));
      std::swap(lo(j), lo(best));
      std::swap(up(j), up(best));
      std::swap(out.perm[static_cast<std::size_t>(j)], out.perm[static_cast<std::size_t>(best)]);
    }
    double s = sig(j, j) - out.l.row(j).head(j).squaredNorm();
    if (s < -0.01 * std::max(1.0, sig(j, j))) throw NumericalFailure("truncated MVN: covariance is not positive definite");
    s = std::max(s, eps);
    out.l(j, j) = std::sqrt(s);
    if (j + 1 < d) {
      const auto rest = d - j - 1;
      out.l.col(j).tail(rest) =
          (sig.col(j).tail(rest) - out.l.bottomLeftCorner(rest, j) * out.l.row(j).head(j).transpose()) / out.l(j, j);
    }
    const double shift = out.l.row(j).head(j).dot(z.head(j));
    const double tl = (lo(j) - shift) / out.l(j, j);
    const double tu = (up(j) - shift) / out.l(j, j);
    const double w = log_normal_probability(tl, tu);
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    z(j) = c * (std::exp(-0.5 * tl * tl - w) - std::exp(-0.5 * tu * tu - w));
    if (!std::isfinite(z(j))) z(j) = std::isfinite(tl) ? tl : (std::isfinite(tu) ? tu : 0.0);
  }
  out.lower = std::move(lo);
  out.upper = std::move(up);
  return out;
}

// Saddle-point problem of the tilted proposal, in the scaled coordinates where the factor has a unit diagonal.
struct TiltingProblem {
  Eigen::MatrixXd l;  // strictly lower part of the unit-diagonal factor
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  [[nodiscard]] Eigen::Index dim() const { return lower.size(); }

  void gradient(const Eigen::VectorXd& y, Eigen::VectorXd& grad, Eigen::MatrixXd* jac) const {
    const Eigen::Index d = dim();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    x.head(d - 1) = y.head(d - 1);
    mu.head(d - 1) = y.tail(d - 1);
    const Eigen::VectorXd c = l * x;
    Eigen::VectorXd lt = lower - mu - c;
    Eigen::VectorXd ut = upper - mu - c;
    Eigen::VectorXd pl(d);
    Eigen::VectorXd pu(d);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (Eigen::Index k = 0; k < d; ++k) {
      const double w = log_normal_probability(lt(k), ut(k));
      pl(k) = std::isfinite(lt(k)) ? std::exp(-0.5 * lt(k) * lt(k) - w) * inv_sqrt_2pi : 0.0;
      pu(k) = std::isfinite(ut(k)) ? std::exp(-0.5 * ut(k) * ut(k) - w) * inv_sqrt_2pi : 0.0;
    }
    const Eigen::VectorXd p = pl - pu;
    grad.resize(2 * (d - 1));
    grad.head(d - 1) = -mu.head(d - 1) + (l.leftCols(d - 1).transpose() * p);
    grad.tail(d - 1) = (mu - x + p).head(d - 1);
    if (jac == nullptr) return;

    for (Eigen::Index k = 0; k < d; ++k) {
      if (!std::isfinite(lt(k))) lt(k) = 0.0;
      if (!std::isfinite(ut(k))) ut(k) = 0.0;
    }
    const Eigen::VectorXd dp = (-p.array().square() + lt.array() * pl.array() - ut.array() * pu.array()).matrix();
    const Eigen::MatrixXd dl = dp.asDiagonal() * l;
    const Eigen::MatrixXd mx = (-Eigen::MatrixXd::Identity(d, d) + dl).topLeftCorner(d - 1, d - 1);
    const Eigen::MatrixXd xx = (l.transpose() * dl).topLeftCorner(d - 1, d - 1);
    jac->resize(2 * (d - 1), 2 * (d - 1));
    jac->topLeftCorner(d - 1, d - 1) = xx;
    jac->topRightCorner(d - 1, d - 1) = mx.transpose();
    jac->bottomLeftCorner(d - 1, d - 1) = mx;
    jac->bottomRightCorner(d - 1, d - 1) = (Eigen::VectorXd::Ones(d - 1) + dp.head(d - 1)).asDiagonal();
  }

  [[nodiscard]] double psi(const Eigen::VectorXd& y) const {
    const Eigen::Index d = dim();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    x.head(d - 1) = y.head(d - 1);
    mu.head(d - 1) = y.tail(d - 1);
    const Eigen::VectorXd c = l * x;
    double p = 0.0;
    for (Eigen::Index k = 0; k < d; ++k)
      p += log_normal_probability(lower(k) - mu(k) - c(k), upper(k) - mu(k) - c(k)) + 0.5 * mu(k) * mu(k) - x(k) * mu(k);
    return p;
  }

  // Newton iteration with backtracking on the squared gradient norm.
  [[nodiscard]] Eigen::VectorXd solve(int max_iterations) const {
    const Eigen::Index n = 2 * (dim() - 1);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd g;
    Eigen::MatrixXd j;
    gradient(y, g, &j);
    double err = g.squaredNorm();
    for (int it = 0; it < max_iterations && err > 1e-10; ++it) {
      const Eigen::VectorXd step = -j.fullPivLu().solve(g);
      if (!step.allFinite()) break;
      double scale = 1.0;
      Eigen::VectorXd trial;
      Eigen::VectorXd gt;
      for (int ls = 0; ls < 30; ++ls) {
        trial = y + scale * step;
        gradient(trial, gt, nullptr);
        if (gt.allFinite() && gt.squaredNorm() < err) break;
        scale *= 0.5;
      }
      if (!gt.allFinite()) break;
      y = trial;
      gradient(y, g, &j);
      err = g.squaredNorm();
    }
    if (!(err <= 1e-10)) throw FallbackRequired("minimax tilting: saddle-point solve did not converge");
    return y;
  }
};

inline double condition_number(const Eigen::MatrixXd& cov) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline void check_inputs(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& lower, int n) {
  uitvbo::detail::require(n >= 1, "truncated MVN: n must be positive");
  uitvbo::detail::require(mean.size() >= 1, "truncated MVN: empty mean");
  uitvbo::detail::require(cov.rows() == mean.size() && cov.cols() == mean.size(), "truncated MVN: covariance shape");
  uitvbo::detail::require(lower.size() == mean.size(), "truncated MVN: bound shape");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    uitvbo::detail::require(!std::isnan(lower(i)) && lower(i) != kInf, "truncated MVN: lower bounds must be finite or -inf");
}

}  // namespace detail

/// n i.i.d. draws (rows) of N(mean, cov) truncated to x >= lower, by minimax exponential tilting.
/// Throws FallbackRequired when the dimension exceeds options.max_tilting_dimension, the saddle-point
/// solve fails, or the acceptance probability is below options.min_acceptance.
inline Eigen::MatrixXd sample_truncated_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                           const Eigen::VectorXd& lower, int n, std::uint64_t seed,
                                           const TmvnOptions& options = {}, SamplerDiagnostics* diag = nullptr) {
  detail::check_inputs(mean, cov, lower, n);
  const Eigen::Index d = mean.size();
  if (d > options.max_tilting_dimension)
    throw FallbackRequired("minimax tilting: dimension " + std::to_string(d) + " above threshold");

  detail::Rng rng(seed);
  const Eigen::VectorXd lo = lower - mean;
  const Eigen::VectorXd up = Eigen::VectorXd::Constant(d, detail::kInf);
  Eigen::MatrixXd out(n, d);

  if (d == 1) {
    const double s = std::sqrt(cov(0, 0));
    if (detail::log_normal_probability(lo(0) / s, detail::kInf) == -detail::kInf)
      throw InfeasibleTruncation("truncated MVN: truncation region has zero probability");
    for (int r = 0; r < n; ++r) out(r, 0) = mean(0) + s * detail::sample_truncated_standard(lo(0) / s, detail::kInf, rng);
    if (diag != nullptr) *diag = {SamplerKind::MinimaxTilting, 1, 1.0, 1.0, false, 0, ""};
    return out;
  }

  const detail::PermutedCholesky pc = detail::permuted_cholesky(cov, lo, up);
  const Eigen::VectorXd dscale = pc.l.diagonal();
  detail::TiltingProblem tp;
  tp.l = dscale.cwiseInverse().asDiagonal() * pc.l;
  tp.l.diagonal().setZero();
  tp.lower = pc.lower.cwiseQuotient(dscale);
  tp.upper = pc.upper.cwiseQuotient(dscale);

  const Eigen::VectorXd sol = tp.solve(options.newton_iterations);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  mu.head(d - 1) = sol.tail(d - 1);
  const double psi_star = tp.psi(sol);
  if (!std::isfinite(psi_star)) throw InfeasibleTruncation("truncated MVN: truncation region has zero probability");

  std::int64_t proposed = 0;
  int accepted = 0;
  Eigen::VectorXd z(d);
  for (int batch = 0; accepted < n; ++batch) {
    if (batch >= options.max_batches ||
        (batch >= 10 && static_cast<double>(accepted) / static_cast<double>(proposed) < options.min_acceptance))
      throw FallbackRequired("minimax tilting: acceptance probability too small");
    for (int s = 0; s < n && accepted < n; ++s) {
      double log_ratio = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double col = tp.l.row(k).head(k).dot(z.head(k));
        const double tl = tp.lower(k) - mu(k) - col;
        const double tu = tp.upper(k) - mu(k) - col;
        z(k) = mu(k) + detail::sample_truncated_standard(tl, tu, rng);
        log_ratio += detail::log_normal_probability(tl, tu) + 0.5 * mu(k) * mu(k) - mu(k) * z(k);
      }
      ++proposed;
      if (-std::log(detail::uniform_open(rng)) > psi_star - log_ratio) {
        const Eigen::VectorXd x = pc.l * z;
        for (Eigen::Index i = 0; i < d; ++i) out(accepted, pc.perm[static_cast<std::size_t>(i)]) = mean(pc.perm[static_cast<std::size_t>(i)]) + x(i);
        ++accepted;
      }
    }
  }
  // Lower bounds hold exactly up to the back-transformation rounding; pin them.
  for (Eigen::Index i = 0; i < d; ++i) out.col(i) = out.col(i).cwiseMax(lower(i));
  if (diag != nullptr) {
    diag->sampler = SamplerKind::MinimaxTilting;
    diag->dimension = d;
    diag->acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposed);
    diag->fell_back = false;
  }
  return out;
}

/// n correlated draws of N(mean, cov) truncated to x >= lower by coordinatewise Gibbs updates,
/// after `burn_in` full sweeps. Thinning 1.
inline Eigen::MatrixXd gibbs_truncated_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                          const Eigen::VectorXd& lower, int n, int burn_in, std::uint64_t seed,
                                          SamplerDiagnostics* diag = nullptr) {
  detail::check_inputs(mean, cov, lower, n);
  uitvbo::detail::require(burn_in >= 0, "gibbs_truncated_mvn: burn_in must be non-negative");
  const Eigen::Index d = mean.size();
  detail::Rng rng(seed);

  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  const double scale = std::max(sym.diagonal().mean(), 1e-300);
  Eigen::MatrixXd precision;
  for (double jitter = 0.0; jitter <= 1e-4 * scale; jitter = (jitter == 0.0 ? 1e-12 * scale : jitter * 10.0)) {
    Eigen::MatrixXd s = sym;
    s.diagonal().array() += jitter;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) {
      precision = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
      if (precision.allFinite()) break;
    }
    precision.resize(0, 0);
  }
  if (precision.size() == 0) throw NumericalFailure("gibbs_truncated_mvn: covariance could not be inverted");

  Eigen::VectorXd x = mean.cwiseMax(lower);
  Eigen::VectorXd dev = x - mean;
  int degenerate = 0;
  auto sweep = [&] {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double lii = precision(i, i);
      const double cond_mean = mean(i) - (precision.row(i).dot(dev) - lii * dev(i)) / lii;
      const double cond_var = 1.0 / lii;
      double xi = 0.0;
      if (!(lii > 0.0) || !std::isfinite(cond_mean) || !(cond_var > 1e-300)) {
        xi = std::isfinite(cond_mean) ? std::max(cond_mean, lower(i)) : x(i);
        ++degenerate;
      } else {
        const double sd = std::sqrt(cond_var);
        xi = cond_mean + sd * detail::sample_truncated_standard((lower(i) - cond_mean) / sd, detail::kInf, rng);
        xi = std::max(xi, lower(i));
      }
      x(i) = xi;
      dev(i) = xi - mean(i);
    }
  };
  for (int b = 0; b < burn_in; ++b) sweep();
  Eigen::MatrixXd out(n, d);
  for (int r = 0; r < n; ++r) {
    sweep();
    out.row(r) = x.transpose();
  }
  if (diag != nullptr) {
    diag->sampler = SamplerKind::Gibbs;
    diag->dimension = d;
    diag->acceptance_rate = 1.0;
    diag->degenerate_updates = degenerate;
  }
  return out;
}

/// Exact tilting sampler when the problem is small and well conditioned, Gibbs otherwise or when
/// tilting signals a fallback. The choice is recorded in `diag`.
inline Eigen::MatrixXd sample_truncated_mvn_auto(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                                const Eigen::VectorXd& lower, int n, std::uint64_t seed,
                                                const TmvnOptions& options, SamplerDiagnostics& diag) {
  detail::check_inputs(mean, cov, lower, n);
  diag = {};
  diag.dimension = mean.size();
  diag.condition_number = detail::condition_number(0.5 * (cov + cov.transpose()));
  if (diag.dimension <= options.max_tilting_dimension && diag.condition_number <= options.max_condition_number) {
    try {
      SamplerDiagnostics inner;
      Eigen::MatrixXd s = sample_truncated_mvn(mean, cov, lower, n, seed, options, &inner);
      diag.sampler = inner.sampler;
      diag.acceptance_rate = inner.acceptance_rate;
      return s;
    } catch (const FallbackRequired& e) {
      diag.fell_back = true;
      diag.note = e.what();
    }
  }
  SamplerDiagnostics inner;
  Eigen::MatrixXd s = gibbs_truncated_mvn(mean, cov, lower, n, options.burn_in, seed, &inner);
  diag.sampler = SamplerKind::Gibbs;
  diag.acceptance_rate = 1.0;
  diag.degenerate_updates = inner.degenerate_updates;
  return s;
}

}  // namespace uitvbo::constrained
