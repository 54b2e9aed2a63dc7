#pragma once

// Univariate building blocks for truncated normal sampling: stable log-probabilities of
// standard normal intervals and exact samplers for N(0,1) restricted to [l, u].

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace uitvbo::constrained::detail {

using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = 0.0;
  do {
    x = u(rng);
  } while (x <= 0.0);
  return x;
}

// Scaled complementary error function exp(x^2) erfc(x), x >= 0.
inline double erfcx(double x) {
  if (x < 26.0) return std::exp(x * x) * std::erfc(x);
  const double x2 = x * x;
  return 1.0 / (x * std::sqrt(std::numbers::pi)) * (1.0 - 0.5 / x2 + 0.75 / (x2 * x2) - 1.875 / (x2 * x2 * x2));
}

// log P(Z > x) for x >= 0, without underflow in the tail.
inline double log_upper_tail(double x) {
  if (x == kInf) return -kInf;
  return -0.5 * x * x - std::log(2.0) + std::log(erfcx(x / std::numbers::sqrt2));
}

/// log(Phi(b) - Phi(a)) for a <= b, accurate in both tails.
inline double log_normal_probability(double a, double b) {
  if (!(a < b)) return -kInf;
  if (a > 0.0) {
    const double pa = log_upper_tail(a);
    const double pb = log_upper_tail(b);
    return pa + std::log1p(-std::exp(pb - pa));
  }
  if (b < 0.0) {
    const double pa = log_upper_tail(-a);
    const double pb = log_upper_tail(-b);
    return pb + std::log1p(-std::exp(pa - pb));
  }
  const double pa = 0.5 * std::erfc(-a / std::numbers::sqrt2);
  const double pb = 0.5 * std::erfc(b / std::numbers::sqrt2);
  return std::log1p(-pa - pb);
}

// Rayleigh proposal for the tail l > 0.
inline double sample_tail(double l, double u, Rng& rng) {
  const double c = 0.5 * l * l;
  const double f = std::expm1(c - 0.5 * u * u);
  for (;;) {
    const double x = c - std::log1p(uniform_open(rng) * f);
    const double v = uniform_open(rng);
    if (v * v * x <= c) return std::sqrt(2.0 * x);
  }
}

// Interval straddling or close to the origin.
inline double sample_central(double l, double u, Rng& rng) {
  if (std::abs(u - l) > 2.0) {
    std::normal_distribution<double> z;
    for (;;) {
      const double x = z(rng);
      if (x >= l && x <= u) return x;
    }
  }
  const double pl = 0.5 * std::erfc(l / std::numbers::sqrt2);
  const double pu = 0.5 * std::erfc(u / std::numbers::sqrt2);
  const double p = pl - (pl - pu) * uniform_open(rng);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// One draw of Z ~ N(0,1) conditioned on l <= Z <= u.
inline double sample_truncated_standard(double l, double u, Rng& rng) {
  constexpr double threshold = 0.66;
  if (l > threshold) return sample_tail(l, u, rng);
  if (u < -threshold) return -sample_tail(-u, -l, rng);
  return sample_central(l, u, rng);
}

}  // namespace uitvbo::constrained::detail
