#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <limits>

namespace uitvbo::gp {

struct LbfgsOptions {
  int max_iterations = 200;
  int history = 8;
  double gradient_tolerance = 1e-6;  // on the infinity norm of the gradient
  double relative_tolerance = 1e-12;  // on successive objective values
  int max_line_search = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Objective returns f(x) and writes the gradient. Non-finite values are treated as +inf.
using GradientObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Limited-memory BFGS with Armijo backtracking. Minimizes.
inline LbfgsResult minimize_lbfgs(const GradientObjective& f, Eigen::VectorXd x0, const LbfgsOptions& opt = {}) {
  LbfgsResult res;
  res.x = std::move(x0);
  Eigen::VectorXd g(res.x.size());
  res.value = f(res.x, g);
  if (!std::isfinite(res.value) || !g.allFinite()) return res;

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (g.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      a[static_cast<std::size_t>(i)] = rho_hist[static_cast<std::size_t>(i)] * s_hist[static_cast<std::size_t>(i)].dot(q);
      q -= a[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    Eigen::VectorXd dir = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(dir);
      dir += s_hist[i] * (a[i] - b);
    }
    dir = -dir;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    if (s_hist.empty()) step = std::min(1.0, 1.0 / std::max(1e-12, dir.lpNorm<Eigen::Infinity>()));
    Eigen::VectorXd x_new;
    Eigen::VectorXd g_new(res.x.size());
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < opt.max_line_search; ++ls) {
      x_new = res.x + step * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    const double previous = res.value;
    res.x = std::move(x_new);
    res.value = f_new;
    g = g_new;
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    if (std::abs(previous - res.value) <= opt.relative_tolerance * std::max(1.0, std::abs(res.value))) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }
  return res;
}

}  // namespace uitvbo::gp
