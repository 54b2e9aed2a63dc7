#pragma once

// Reference computations used only by the test suites. Each one takes a different numerical route
// from the library code it checks.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

namespace oracle {

// Gaussian log marginal likelihood through a full-pivot LU (determinant and solve).
inline double dense_log_marginal_likelihood(const Eigen::MatrixXd& k, const Eigen::VectorXd& y) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  const double log_det = std::log(std::abs(lu.determinant()));
  return -0.5 * y.dot(lu.solve(y)) - 0.5 * log_det - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

// Central second difference of f along coordinate i.
inline double second_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                int i, double h) {
  Eigen::VectorXd p = x;
  Eigen::VectorXd m = x;
  p(i) += h;
  m(i) -= h;
  return (f(p) - 2.0 * f(x) + f(m)) / (h * h);
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

inline Moments sample_moments(const Eigen::MatrixXd& samples) {
  Moments m;
  m.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd c = samples.rowwise() - m.mean.transpose();
  m.covariance = c.transpose() * c / static_cast<double>(samples.rows());
  return m;
}

// Plain rejection sampling from N(mean, cov) restricted to x >= lower.
inline Moments rejection_moments(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& lower,
                                 int proposals, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const Eigen::MatrixXd l = cov.llt().matrixL();
  std::vector<Eigen::VectorXd> kept;
  for (int s = 0; s < proposals; ++s) {
    Eigen::VectorXd e(mean.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = z(rng);
    Eigen::VectorXd x = mean + l * e;
    if ((x.array() >= lower.array()).all()) kept.push_back(std::move(x));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(kept.size()), mean.size());
  for (std::size_t r = 0; r < kept.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = kept[r].transpose();
  return sample_moments(m);
}

}  // namespace oracle

namespace oracle {

// exp(M) by scaling and squaring around a 4th-order Taylor polynomial.
inline Eigen::MatrixXd taylor4_expm(const Eigen::MatrixXd& m, int squarings = 12) {
  const Eigen::MatrixXd a = m / std::ldexp(1.0, squarings);
  const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  const Eigen::MatrixXd a2 = a * a;
  Eigen::MatrixXd e = i + a + a2 / 2.0 + a2 * a / 6.0 + a2 * a2 / 24.0;
  for (int k = 0; k < squarings; ++k) e = e * e;
  return e;
}

}  // namespace oracle
