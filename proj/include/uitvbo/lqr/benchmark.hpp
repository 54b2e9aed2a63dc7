#pragma once

// Time-varying LQR benchmark: presets, Riccati oracle, initial data and regret.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uitvbo/errors.hpp"
#include "uitvbo/gp/types.hpp"
#include "uitvbo/io/csv.hpp"
#include "uitvbo/lqr/cartpole.hpp"
#include "uitvbo/lqr/episode.hpp"
#include "uitvbo/lqr/riccati.hpp"
#include "uitvbo/random.hpp"
#include "uitvbo/tvbo/region.hpp"

namespace uitvbo::lqr {

enum class Problem { Lqr2d, Lqr4d, Lqr4dReduced };

inline std::string to_string(Problem p) {
  switch (p) {
    case Problem::Lqr2d: return "lqr2d";
    case Problem::Lqr4d: return "lqr4d";
    case Problem::Lqr4dReduced: return "lqr4d-reduced";
  }
  return "?";
}

inline Problem parse_problem(const std::string& s) {
  if (s == "lqr2d") return Problem::Lqr2d;
  if (s == "lqr4d") return Problem::Lqr4d;
  if (s == "lqr4d-reduced") return Problem::Lqr4dReduced;
  throw ConfigurationError("unknown problem preset '" + s + "' (expected lqr2d, lqr4d or lqr4d-reduced)");
}

struct BenchmarkConfig {
  Problem problem = Problem::Lqr2d;
  CartPoleParams plant{};
  FrictionSchedule schedule{};
  EpisodeConfig episode{};
  // Feasible box: K*_0 entries +- box_fraction * |K*_0 entry|. Negative means the preset default.
  double box_fraction = -1.0;
  double cost_threshold_factor = 100.0;
  double divergence_bound = 1e3;

  [[nodiscard]] double resolved_box_fraction() const {
    if (box_fraction > 0.0) return box_fraction;
    return problem == Problem::Lqr4dReduced ? 0.4 : 1.5;
  }
};

class LqrBenchmark {
 public:
  explicit LqrBenchmark(BenchmarkConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.plant.validate();
    cfg_.schedule.validate();
    cfg_.episode.validate();
    detail::require(cfg_.cost_threshold_factor > 0.0, "LqrBenchmark: cost threshold factor must be positive");
    free_ = cfg_.problem == Problem::Lqr2d ? std::vector<int>{2, 3} : std::vector<int>{0, 1, 2, 3};
    threshold_.divergence = cfg_.divergence_bound;

    const Vector4 k0 = optimal_gain(0);
    const double frac = cfg_.resolved_box_fraction();
    const auto d = static_cast<Eigen::Index>(free_.size());
    feasible_.lower.resize(d);
    feasible_.upper.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double c = k0(free_[static_cast<std::size_t>(i)]);
      feasible_.lower(i) = c - frac * std::abs(c);
      feasible_.upper(i) = c + frac * std::abs(c);
    }
  }

  [[nodiscard]] const BenchmarkConfig& config() const { return cfg_; }
  [[nodiscard]] Eigen::Index dim() const { return static_cast<Eigen::Index>(free_.size()); }
  [[nodiscard]] const std::vector<int>& free_indices() const { return free_; }
  [[nodiscard]] const tvbo::TrustRegion& feasible() const { return feasible_; }

  [[nodiscard]] const InstabilityThreshold& threshold() const { return threshold_; }
  void set_cost_threshold(double c) {
    detail::require(c > 0.0, "LqrBenchmark: cost threshold must be positive");
    threshold_.cost = c;
  }

  [[nodiscard]] DiscreteSystem system(int t) const { return entry(t).system; }
  [[nodiscard]] DareSolution dare(int t) const { return entry(t).dare; }
  [[nodiscard]] Vector4 optimal_gain(int t) const { return entry(t).gain; }
  [[nodiscard]] Eigen::VectorXd optimal_theta(int t) const { return project(optimal_gain(t)); }
  [[nodiscard]] double optimal_cost(int t) const { return entry(t).optimal_cost; }

  [[nodiscard]] Eigen::VectorXd project(const Vector4& K) const {
    Eigen::VectorXd theta(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) theta(i) = K(free_[static_cast<std::size_t>(i)]);
    return theta;
  }

  /// Complete gain for step t: free entries from theta, pinned entries from K*_t.
  [[nodiscard]] Vector4 full_gain(const Eigen::VectorXd& theta, int t) const {
    detail::require(theta.size() == dim(), "LqrBenchmark: parameter dimension mismatch");
    Vector4 K = free_.size() == 4 ? Vector4::Zero() : optimal_gain(t);
    for (Eigen::Index i = 0; i < dim(); ++i) K(free_[static_cast<std::size_t>(i)]) = theta(i);
    return K;
  }

  /// One noisy closed-loop episode at step t.
  [[nodiscard]] EpisodeResult evaluate(const Eigen::VectorXd& theta, int t, std::uint64_t seed) const {
    return simulate_episode(full_gain(theta, t), system(t), cfg_.episode, seed, threshold_);
  }

  /// Noise-free objective f_t(theta): the long-run expected cost per step under the process noise
  /// (+inf for a non-Schur closed loop). K*_t minimizes it exactly.
  [[nodiscard]] double noise_free_cost(const Eigen::VectorXd& theta, int t) const {
    return stationary_cost(full_gain(theta, t), system(t), cfg_.episode);
  }

  [[nodiscard]] bool closed_loop_stable(const Eigen::VectorXd& theta, int t) const {
    const auto sys = system(t);
    const Matrix4 acl = sys.Ad - sys.Bd * full_gain(theta, t).transpose();
    return spectral_radius(acl) < 1.0;
  }

 private:
  struct Entry {
    DiscreteSystem system;
    DareSolution dare;
    Vector4 gain;
    double optimal_cost = 0.0;
  };

  const Entry& entry(int t) const {
    detail::require(t >= 0, "LqrBenchmark: t must be non-negative");
    std::lock_guard lock(mutex_);
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
    Entry e;
    e.system = discrete_system(t, cfg_.episode.dt, cfg_.plant, cfg_.schedule);
    e.dare = solve_dare(e.system.Ad, e.system.Bd, cfg_.episode.Q, Eigen::MatrixXd::Constant(1, 1, cfg_.episode.R));
    e.gain = e.dare.K.row(0).transpose();
    e.optimal_cost = stationary_cost(e.gain, e.system, cfg_.episode);
    return cache_.emplace(t, std::move(e)).first->second;
  }

  BenchmarkConfig cfg_;
  std::vector<int> free_;
  tvbo::TrustRegion feasible_;
  InstabilityThreshold threshold_;
  mutable std::mutex mutex_;
  mutable std::map<int, Entry> cache_;
};

inline std::vector<Vector4> optimal_gains(const LqrBenchmark& bench, int t_max) {
  std::vector<Vector4> out;
  for (int t = 0; t <= t_max; ++t) out.push_back(bench.optimal_gain(t));
  return out;
}

struct InitialDataset {
  gp::Dataset data;  // raw costs, t = 0
  int attempts = 0;
  double median_cost = 0.0;
};

inline constexpr std::uint64_t kInitialDatasetStream = 11;

/// Uniform rejection sampling of stable gains in the feasible box at t = 0. A draw is kept when the
/// closed loop is Schur stable and its episode stays inside the divergence bound.
inline InitialDataset make_initial_dataset(const LqrBenchmark& bench, int n, std::uint64_t seed, int probe_attempts = 10000,
                                           int max_attempts = 1000000) {
  detail::require(n >= 1, "make_initial_dataset: n must be positive");
  std::mt19937_64 rng(derive_seed(seed, kInitialDatasetStream));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& box = bench.feasible();
  InstabilityThreshold divergence_only;
  divergence_only.divergence = bench.threshold().divergence;

  InitialDataset out;
  std::vector<double> costs;
  while (static_cast<int>(out.data.size()) < n) {
    if (out.attempts == probe_attempts && static_cast<double>(out.data.size()) < 0.01 * out.attempts)
      throw ConfigurationError("make_initial_dataset: fewer than 1% of the feasible box is stable");
    if (out.attempts >= max_attempts) throw ConfigurationError("make_initial_dataset: attempt budget exhausted");
    Eigen::VectorXd theta(box.dim());
    for (Eigen::Index i = 0; i < box.dim(); ++i) theta(i) = box.lower(i) + (box.upper(i) - box.lower(i)) * u(rng);
    const auto attempt = static_cast<std::uint64_t>(out.attempts++);
    if (!bench.closed_loop_stable(theta, 0)) continue;
    const auto r = simulate_episode(bench.full_gain(theta, 0), bench.system(0), bench.config().episode,
                                    derive_seed(seed, kInitialDatasetStream + 1, attempt), divergence_only);
    if (!r.stable) continue;
    out.data.push_back({{theta, 0}, r.cost, true, false});
    costs.push_back(r.cost);
  }
  std::sort(costs.begin(), costs.end());
  const std::size_t h = costs.size() / 2;
  out.median_cost = costs.size() % 2 == 1 ? costs[h] : 0.5 * (costs[h - 1] + costs[h]);
  return out;
}

struct RegretResult {
  double total = 0.0;
  std::vector<double> per_step;  // f_t(query) - f_t(opt); 0 on skipped steps
};

/// Cumulative regret over stable steps; unstable steps are skipped.
inline RegretResult regret(std::span<const double> f_query, std::span<const double> f_opt, const std::vector<bool>& stable) {
  detail::require(f_query.size() == f_opt.size() && f_opt.size() == stable.size(), "regret: length mismatch");
  RegretResult r;
  r.per_step.resize(f_query.size(), 0.0);
  for (std::size_t i = 0; i < f_query.size(); ++i) {
    if (!stable[i]) continue;
    r.per_step[i] = f_query[i] - f_opt[i];
    r.total += r.per_step[i];
  }
  return r;
}

/// CSV of (t, K*_t entries, f_t(K*_t)) for t = 0..t_max.
inline void write_oracle_csv(std::ostream& os, const LqrBenchmark& bench, int t_max) {
  os << "t,k0,k1,k2,k3,f_opt\n";
  for (int t = 0; t <= t_max; ++t) {
    const Vector4 k = bench.optimal_gain(t);
    os << t;
    for (int i = 0; i < 4; ++i) os << ',' << io::format_number(k(i));
    os << ',' << io::format_number(bench.optimal_cost(t)) << '\n';
  }
}

}  // namespace uitvbo::lqr
