#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "uitvbo/tvbo/acquisition.hpp"
#include "uitvbo/tvbo/optimizer.hpp"

using namespace uitvbo;
using namespace uitvbo::tvbo;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

OptimizerConfig unit_config(Eigen::Index d) {
  OptimizerConfig c;
  c.feasible = TrustRegion::unit(d);
  return c;
}

gp::Dataset bowl_data(const Eigen::VectorXd& center, int per_axis) {
  gp::Dataset d;
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j) {
      const Eigen::VectorXd x = vec({i / (per_axis - 1.0), j / (per_axis - 1.0)});
      d.push_back({{x, 0}, (x - center).squaredNorm(), true, false});
    }
  return d;
}

}  // namespace

TEST(Lcb, Examples) {
  EXPECT_NEAR(lcb(1.0, 0.5, 2.0), 1.0 - std::sqrt(2.0) * 0.5, 1e-15);
  EXPECT_NEAR(lcb(1.0, 0.5, 2.0), 0.29289, 1e-5);
  EXPECT_EQ(lcb(0.7, 0.0, 2.0), 0.7);
  EXPECT_EQ(lcb(0.0, 1.0, 4.0), -2.0);
  EXPECT_THROW(lcb(0.0, 1.0, 0.0), ContractViolation);
  EXPECT_THROW(lcb(0.0, -1.0, 2.0), ContractViolation);
}

TEST(Lcb, MonotoneInStdAndShiftInvariantArgmin) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double m = u(rng);
    const double s = u(rng);
    EXPECT_LT(lcb(m, s + 0.1, 2.0), lcb(m, s, 2.0));
    Eigen::VectorXd mean(40);
    Eigen::VectorXd sd(40);
    for (int i = 0; i < 40; ++i) {
      mean(i) = u(rng);
      sd(i) = u(rng);
    }
    const double c = 10.0 * u(rng) - 5.0;
    EXPECT_EQ(argmin_lcb(mean, sd, 2.0), argmin_lcb((mean.array() + c).matrix(), sd, 2.0));
  }
}

TEST(Lcb, ArgminTiesGoToLowestIndex) {
  EXPECT_EQ(argmin_lcb(vec({1.0, 0.0, 0.0, 0.5}), vec({0.0, 0.0, 0.0, 0.0}), 2.0), 1);
  EXPECT_THROW(argmin_lcb(vec({std::nan("")}), vec({0.0}), 2.0), NumericalFailure);
}

TEST(LocalRegion, Examples) {
  const TrustRegion feasible{vec({0.0}), vec({1.0})};
  const auto a = local_region(vec({0.5}), vec({0.4}), feasible);
  EXPECT_NEAR(a.lower(0), 0.3, 1e-15);
  EXPECT_NEAR(a.upper(0), 0.7, 1e-15);
  const auto b = local_region(vec({0.0}), vec({0.4}), feasible);
  EXPECT_EQ(b.lower(0), 0.0);
  EXPECT_NEAR(b.upper(0), 0.2, 1e-15);
  EXPECT_THROW(local_region(vec({0.5}), vec({0.4}), TrustRegion{vec({0.5}), vec({0.5})}), ContractViolation);
  EXPECT_THROW(local_region(vec({0.5}), vec({0.0}), feasible), ContractViolation);
}

TEST(LocalRegion, UnconstrainedModeSearchesFeasibleSet) {
  auto cfg = unit_config(2);
  cfg.feasible = TrustRegion{vec({-3.0, 1.0}), vec({2.0, 4.0})};
  OptimizerState s;
  s.best_estimate = vec({0.0, 2.0});
  const auto r = step_region(s, cfg);
  EXPECT_TRUE(r.lower.isApprox(cfg.feasible.lower));
  EXPECT_TRUE(r.upper.isApprox(cfg.feasible.upper));
  cfg.acquisition.use_constraints = true;
  const auto c = step_region(s, cfg);
  EXPECT_NEAR(c.width()(0), cfg.trust_fraction * 5.0, 1e-12);
  EXPECT_NEAR(c.width()(1), cfg.trust_fraction * 3.0, 1e-12);
}

TEST(Normalize, PopulationConvention) {
  const auto [y, n] = normalize(vec({1.0, 2.0, 3.0}));
  EXPECT_DOUBLE_EQ(n.mean, 2.0);
  EXPECT_NEAR(n.std, std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(y(0), -std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(y(1), 0.0, 1e-12);
  EXPECT_NEAR(y(2), std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(y.mean(), 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(y.array().square().mean()), 1.0, 1e-12);
  EXPECT_NEAR(n.invert(y(2)), 3.0, 1e-12);
}

TEST(Normalize, FixedPointAndDegenerate) {
  const auto [y, n] = normalize(vec({1.0, 2.0, 3.0, 7.0}));
  const auto [z, m] = normalize(y);
  EXPECT_LT((z - y).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(normalize(vec({5.0, 5.0, 5.0})), DegenerateData);
}

TEST(Candidates, FullGridWithCorners) {
  const TrustRegion r{vec({-1.0, 2.0}), vec({1.0, 3.0})};
  const auto c = candidate_points(r, {}, 0);
  ASSERT_EQ(c.size(), 2500u);
  EXPECT_TRUE(c.front().isApprox(r.lower));
  EXPECT_TRUE(c.back().isApprox(r.upper));
  for (const auto& x : c) EXPECT_TRUE(r.contains(x));
}

TEST(Candidates, LatinHypercubeWhenCapped) {
  const auto r = TrustRegion::unit(4);
  const auto a = candidate_points(r, {}, 9);
  const auto b = candidate_points(r, {}, 9);
  ASSERT_EQ(a.size(), 4096u);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_TRUE(a[k].cwiseEqual(b[k]).all());
  // One point per stratum along every axis.
  for (int i = 0; i < 4; ++i) {
    std::set<long> strata;
    for (const auto& x : a) strata.insert(static_cast<long>(std::floor(x(i) * 4096.0)));
    EXPECT_EQ(strata.size(), 4096u);
  }
}

TEST(Candidates, ZeroWidthAxis) {
  const auto c = candidate_points(TrustRegion{vec({0.2, 0.5}), vec({0.2, 0.9})}, {}, 0);
  EXPECT_EQ(c.size(), 50u);
  for (const auto& x : c) EXPECT_EQ(x(0), 0.2);
}

TEST(SelectQuery, ConvexBowlFindsVertex) {
  const Eigen::VectorXd center = vec({0.37, 0.61});
  OptimizerState s;
  s.data = bowl_data(center, 7);
  s.spatial = {vec({0.4, 0.4}), 1.0};
  s.noise_variance = 1e-6;
  s.temporal = gp::TimeInvariant{};
  s.t = 0;
  auto cfg = unit_config(2);
  cfg.forgetting = gp::Forgetting::time_invariant();
  const auto q = select_query(s, cfg, cfg.feasible, 1).theta;

  // Oracle: dense-grid minimizer of the same LCB.
  const gp::ExactGP model(s.data, s.spatial, s.temporal, s.noise_variance);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd arg;
  const int n = 401;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const std::vector<gp::ParamPoint> p{{vec({i / (n - 1.0), j / (n - 1.0)}), 1}};
      const auto pr = model.predict(p);
      const double v = lcb(pr.mean(0), std::sqrt(std::max(pr.variance(0), 0.0)), 2.0);
      if (v < best) {
        best = v;
        arg = p[0].theta;
      }
    }
  EXPECT_LT((q - arg).norm(), 1e-2);
  EXPECT_LT((q - center).norm(), 5e-2);
}

TEST(SelectQuery, PureExplorationPicksLargestStd) {
  OptimizerState s;
  for (double x = 0.0; x <= 1.0001; x += 0.05)
    if (std::abs(x - 0.6) > 0.12) s.data.push_back({{vec({x}), 0}, 0.0, true, false});
  s.spatial = {vec({0.05}), 1.0};
  s.noise_variance = 1e-6;
  auto cfg = unit_config(1);
  cfg.refine = false;
  const auto q = select_query(s, cfg, cfg.feasible, 0).theta;
  const auto cand = candidate_points(cfg.feasible, cfg.candidates, 0);
  const gp::ExactGP model(s.data, s.spatial, s.temporal, s.noise_variance);
  std::vector<gp::ParamPoint> pts;
  for (const auto& c : cand) pts.push_back({c, 1});
  const auto pr = model.predict(pts);
  Eigen::Index arg;
  pr.variance.maxCoeff(&arg);
  EXPECT_NEAR(q(0), cand[static_cast<std::size_t>(arg)](0), 1e-12);
  EXPECT_NEAR(q(0), 0.6, 0.05);
}

TEST(SelectQuery, SinglePointRegion) {
  OptimizerState s;
  s.data = bowl_data(vec({0.5, 0.5}), 3);
  s.spatial = {vec({0.4, 0.4}), 1.0};
  auto cfg = unit_config(2);
  const TrustRegion point{vec({0.3, 0.8}), vec({0.3, 0.8})};
  EXPECT_TRUE(select_query(s, cfg, point, 0).theta.isApprox(vec({0.3, 0.8})));
  cfg.acquisition.use_constraints = true;
  cfg.max_constraints = 10;
  EXPECT_TRUE(select_query(s, cfg, point, 0).theta.isApprox(vec({0.3, 0.8})));
}

TEST(SelectQuery, ConstrainedQueryStaysInRegionAndIsDeterministic) {
  OptimizerState s;
  s.data = bowl_data(vec({0.4, 0.5}), 4);
  s.spatial = {vec({0.4, 0.4}), 1.0};
  s.noise_variance = 1e-3;
  auto cfg = unit_config(2);
  cfg.acquisition.use_constraints = true;
  const TrustRegion region{vec({0.1, 0.2}), vec({0.5, 0.6})};
  const auto a = select_query(s, cfg, region, 17);
  const auto b = select_query(s, cfg, region, 17);
  EXPECT_TRUE(region.contains(a.theta));
  EXPECT_TRUE(a.theta.cwiseEqual(b.theta).all());
  EXPECT_EQ(a.sampler.dimension, 50);
  EXPECT_EQ(a.sampler.sampler, constrained::SamplerKind::MinimaxTilting);
}

TEST(Impute, MeanPlusThreeSigma) {
  OptimizerState s;
  s.data = bowl_data(vec({0.5, 0.5}), 3);
  s.spatial = {vec({0.3, 0.3}), 1.5};
  s.noise_variance = 1e-2;
  s.temporal = gp::WienerParams(0.02);
  const auto cfg = unit_config(2);
  const Eigen::VectorXd x = vec({0.8, 0.1});
  const gp::ExactGP model(s.data, s.spatial, s.temporal, s.noise_variance);
  const std::vector<gp::ParamPoint> p{{x, 4}};
  const auto pr = model.predict(p);
  EXPECT_NEAR(impute_unstable(x, 4, s, cfg), pr.mean(0) + 3.0 * std::sqrt(pr.variance(0)), 1e-12);
}

TEST(Impute, PriorFallback) {
  OptimizerState s;
  s.spatial = {vec({0.3}), 2.25};
  EXPECT_NEAR(impute_unstable(vec({0.4}), 0, s, unit_config(1)), 3.0 * 1.5, 1e-12);
}

namespace {

struct Quadratic {
  Eigen::VectorXd center;
  mutable std::mt19937_64 rng{11};
  ObjectiveValue operator()(const Eigen::VectorXd& x, int) const {
    std::normal_distribution<double> z(0.0, 0.01);
    return {(x - center).squaredNorm() + z(rng), true};
  }
};

gp::Dataset initial_quadratic(const Quadratic& f, const TrustRegion& box, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  gp::Dataset d;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(box.dim());
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = box.lower(k) + box.width()(k) * u(rng);
    d.push_back({{x, 0}, (x - f.center).squaredNorm(), true, false});
  }
  return d;
}

}  // namespace

TEST(TvboStep, StaticQuadraticConverges) {
  auto cfg = unit_config(2);
  cfg.feasible = TrustRegion{vec({-1.0, -1.0}), vec({1.0, 1.0})};
  const Quadratic f{vec({0.3, -0.45})};
  auto state = initialize(initial_quadratic(f, cfg.feasible, 10, 2), cfg);
  for (int k = 0; k < 30; ++k) tvbo_step(state, cfg, std::ref(f), derive_seed(5, 0, static_cast<std::uint64_t>(k)));
  EXPECT_LT((state.best_estimate - f.center).norm(), 0.1);
}

TEST(TvboStep, ConstrainedStaticQuadraticConverges) {
  auto cfg = unit_config(2);
  cfg.feasible = TrustRegion{vec({-1.0, -1.0}), vec({1.0, 1.0})};
  cfg.acquisition.use_constraints = true;
  const Quadratic f{vec({0.3, -0.45})};
  auto state = initialize(initial_quadratic(f, cfg.feasible, 10, 2), cfg);
  for (int k = 0; k < 30; ++k) {
    const auto rec = tvbo_step(state, cfg, std::ref(f), derive_seed(5, 0, static_cast<std::uint64_t>(k)));
    EXPECT_TRUE(rec.region.contains(rec.query, 1e-12));
  }
  EXPECT_LT((state.best_estimate - f.center).norm(), 0.1);
}

TEST(TvboStep, AddsOneObservationAtNextStep) {
  auto cfg = unit_config(1);
  const Quadratic f{vec({0.5})};
  auto state = initialize(initial_quadratic(f, cfg.feasible, 5, 1), cfg);
  const auto before = state.data.size();
  const auto rec = tvbo_step(state, cfg, std::ref(f), 3);
  EXPECT_EQ(state.data.size(), before + 1);
  EXPECT_EQ(state.data.back().point.t, 1);
  EXPECT_EQ(rec.t, 1);
  EXPECT_EQ(state.t, 1);
  EXPECT_TRUE(cfg.feasible.contains(rec.query));
}

TEST(TvboStep, AlwaysUnstableObjectiveOnlyImputes) {
  auto cfg = unit_config(2);
  const Quadratic f{vec({0.5, 0.5})};
  auto state = initialize(initial_quadratic(f, cfg.feasible, 6, 4), cfg);
  const Objective broken = [](const Eigen::VectorXd&, int) { return ObjectiveValue{std::numeric_limits<double>::infinity(), false}; };
  for (int k = 0; k < 8; ++k) {
    const auto rec = tvbo_step(state, cfg, broken, static_cast<std::uint64_t>(k));
    EXPECT_TRUE(rec.imputed);
    EXPECT_FALSE(rec.stable);
    EXPECT_TRUE(std::isfinite(rec.y_normalized));
  }
  for (std::size_t i = 6; i < state.data.size(); ++i) {
    EXPECT_TRUE(state.data[i].imputed);
    EXPECT_FALSE(state.data[i].stable);
  }
}

TEST(Run, HorizonAndDeterminism) {
  auto cfg = unit_config(2);
  cfg.acquisition.use_constraints = true;
  const Quadratic f1{vec({0.2, 0.7})};
  const Quadratic f2{vec({0.2, 0.7})};
  const auto init = initial_quadratic(f1, cfg.feasible, 8, 3);
  EXPECT_EQ(run(init, cfg, std::ref(f1), 1, 4).size(), 1u);
  const Quadratic g1{vec({0.2, 0.7})};
  const Quadratic g2{vec({0.2, 0.7})};
  const auto a = run(init, cfg, std::ref(g1), 6, 4);
  const auto b = run(init, cfg, std::ref(g2), 6, 4);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_TRUE(a[k].query.cwiseEqual(b[k].query).all());
    EXPECT_EQ(a[k].y_raw, b[k].y_raw);
    EXPECT_EQ(a[k].t, static_cast<int>(k) + 1);
  }
  EXPECT_THROW(run(init, cfg, std::ref(f2), 0, 4), ContractViolation);
}
