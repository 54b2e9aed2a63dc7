// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//
//   acceptance [work_dir]
//
// work_dir holds the two sweep outputs (default: a fresh directory under the system temp path).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "uitvbo/constrained/posterior.hpp"
#include "uitvbo/constrained/tmvn.hpp"
#include "uitvbo/constrained/vops.hpp"
#include "uitvbo/experiment/runner.hpp"
#include "uitvbo/gp/posterior.hpp"
#include "uitvbo/lqr/benchmark.hpp"

using namespace uitvbo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int failures = 0;

void report(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = budget_s <= 0.0 || secs < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::string timing = fmt("%.2f s", secs);
  if (budget_s > 0.0) timing += fmt(" / budget %.0f s", budget_s);
  std::printf("criterion %2d %s  %s: %s [%s]\n", id, pass ? "PASS" : "FAIL", name, o.detail.c_str(), timing.c_str());
  std::fflush(stdout);
}

Outcome kernel_anchoring() {
  double worst = 0.0;
  for (double s : {1e-4, 0.03, 1.0}) {
    const gp::WienerParams p(s);
    for (int t = 0; t <= 1000; ++t) {
      worst = std::max(worst, std::abs(gp::wiener_kernel(0, t, p) - 1.0));
      worst = std::max(worst, std::abs(gp::wiener_kernel(t, 0, p) - 1.0));
    }
  }
  return {worst <= 1e-12, fmt("max |k(0,t') - 1| = %.3g", worst)};
}

Outcome variance_growth() {
  double worst = 0.0;
  for (double sk2 : {0.5, 1.0, 2.0})
    for (double sw2 : {1e-3, 0.03}) {
      const Eigen::VectorXd th = vec({0.2, 0.7});
      gp::Dataset d;
      const int t0 = 5;
      d.push_back({{th, t0}, 0.8, true, false});
      const gp::ExactGP model(d, {vec({0.3, 0.3}), sk2}, gp::WienerParams(sw2), 1e-10);
      const std::vector<gp::ParamPoint> base{{th, t0}};
      const double v0 = model.predict(base).variance(0);
      for (int delta = 1; delta <= 50; ++delta) {
        const std::vector<gp::ParamPoint> q{{th, t0 + delta}};
        const double expect = sk2 * sw2 * delta;
        worst = std::max(worst, std::abs(model.predict(q).variance(0) - v0 - expect) / expect);
      }
    }
  return {worst <= 1e-6, fmt("max relative error %.3g", worst)};
}

Outcome ui_vs_b2p_mean() {
  const Eigen::VectorXd th = vec({0.5});
  gp::Dataset d;
  d.push_back({{th, 0}, 1.0, true, false});
  const gp::SpatialKernelParams sp{vec({0.3}), 1.0};
  const std::vector<gp::ParamPoint> q{{th, 100}};
  const double ui = gp::ExactGP(d, sp, gp::WienerParams(0.03), 1e-10).mean(q)(0);
  const double b2p = gp::ExactGP(d, sp, gp::BackToPriorParams(0.03), 1e-10).mean(q)(0);
  return {std::abs(ui - 1.0) <= 1e-6 && b2p < 0.3, fmt("UI mean %.9f, B2P mean %.4f at t=100", ui, b2p)};
}

Outcome tmvn_sampler() {
  const double target = std::sqrt(2.0 / std::numbers::pi);
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  const double tilt = constrained::sample_truncated_mvn(vec({0.0}), one, vec({0.0}), 100000, 101).col(0).mean();
  const double gibbs = constrained::gibbs_truncated_mvn(vec({0.0}), one, vec({0.0}), 100000, 500, 102).col(0).mean();

  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.7, 0.7, 1.5;
  const Eigen::VectorXd mean = vec({-0.3, 0.4});
  const Eigen::VectorXd lower = vec({0.0, 0.1});
  const auto ref = oracle::rejection_moments(mean, cov, lower, 2000000, 103);
  double worst2d = 0.0;
  for (const auto& s : {constrained::sample_truncated_mvn(mean, cov, lower, 100000, 104),
                        constrained::gibbs_truncated_mvn(mean, cov, lower, 100000, 500, 105)}) {
    const auto m = oracle::sample_moments(s);
    worst2d = std::max({worst2d, (m.mean - ref.mean).cwiseAbs().maxCoeff(), (m.covariance - ref.covariance).cwiseAbs().maxCoeff()});
  }
  const bool pass = std::abs(tilt - target) <= 0.01 && std::abs(gibbs - target) <= 0.02 && worst2d <= 0.03;
  return {pass, fmt("half-normal error tilting %.4f gibbs %.4f; 2D moment error %.4f", std::abs(tilt - target),
                    std::abs(gibbs - target), worst2d)};
}

Outcome constrained_convexity() {
  gp::Dataset data;
  for (double x : {-0.7, -0.2, 0.3, 0.8}) data.push_back({{vec({x}), 0}, x * x, true, false});
  const gp::SpatialKernelParams sp{vec({0.5}), 1.0};
  const auto vops = constrained::place_vops({vec({-1.0}), vec({1.0})}, 5, 0);
  std::vector<gp::ParamPoint> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back({vec({-1.0 + 0.05 * i}), 0});
  int convex = 0;
  for (int run = 0; run < 100; ++run) {
    const auto res = constrained::constrained_posterior_samples(data, vops, grid, sp, gp::TimeInvariant{}, 1e-8, 64,
                                                                derive_seed(2024, 5, static_cast<std::uint64_t>(run)));
    bool ok = true;
    for (Eigen::Index i = 1; i + 1 < res.mean_estimate.size(); ++i)
      ok = ok && res.mean_estimate(i + 1) - 2.0 * res.mean_estimate(i) + res.mean_estimate(i - 1) >= -1e-3;
    convex += ok ? 1 : 0;
  }
  return {convex >= 95, fmt("%d of 100 pipelines convex", convex)};
}

Outcome dare_correctness() {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  const double golden = std::abs(lqr::solve_dare(one, one, one, one).P(0, 0) - (1.0 + std::sqrt(5.0)) / 2.0);
  const lqr::LqrBenchmark bench{lqr::BenchmarkConfig{}};
  double residual = 0.0;
  double radius = 0.0;
  for (int t = 0; t <= 300; ++t) {
    const auto sol = bench.dare(t);
    const auto sys = bench.system(t);
    residual = std::max(residual, sol.residual);
    radius = std::max(radius, lqr::spectral_radius(sys.Ad - sys.Bd * sol.K));
  }
  return {golden <= 1e-10 && residual < 1e-10 && radius < 1.0,
          fmt("golden-ratio error %.3g, max residual %.3g, max spectral radius %.6f", golden, residual, radius)};
}

experiment::ExperimentConfig sweep_config(const fs::path& out) {
  experiment::ExperimentConfig c;
  c.problem = "lqr2d";
  c.methods = {experiment::Method::UI, experiment::Method::B2P, experiment::Method::ConstrainedUI,
               experiment::Method::ConstrainedB2P, experiment::Method::BaselineK0};
  c.horizon = 150;
  c.seeds = {0, 1, 2, 3, 4};
  c.output_dir = out;
  return c;
}

const experiment::SummaryRow& row_for(const experiment::ExperimentResult& r, experiment::Method m) {
  for (const auto& s : r.summary)
    if (s.method == m) return s;
  throw std::runtime_error("method missing from summary");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "uitvbo_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  report(1, "kernel anchoring", 1.0, kernel_anchoring);
  report(2, "variance growth law", 1.0, variance_growth);
  report(3, "UI vs B2P posterior mean", 1.0, ui_vs_b2p_mean);
  report(4, "truncated-MVN sampler", 30.0, tmvn_sampler);
  report(5, "constrained posterior convexity", 120.0, constrained_convexity);
  report(6, "DARE correctness", 10.0, dare_correctness);

  using experiment::Method;
  experiment::ExperimentResult sweep;
  report(7, "2D ordering and stability", 1800.0, [&] {
    sweep = experiment::run_experiment(sweep_config(work / "sweep_a"));
    if (sweep.failed > 0) return Outcome{false, fmt("%d runs failed", sweep.failed)};
    const auto& ui = row_for(sweep, Method::UI);
    const auto& b2p = row_for(sweep, Method::B2P);
    const auto& cui = row_for(sweep, Method::ConstrainedUI);
    const auto& cb2p = row_for(sweep, Method::ConstrainedB2P);
    int constrained_unstable = 0;
    for (const auto& r : sweep.runs)
      if (r.method == Method::ConstrainedUI || r.method == Method::ConstrainedB2P) constrained_unstable += r.unstable_count();
    const bool order = cui.regret_mean < cb2p.regret_mean && cb2p.regret_mean < ui.regret_mean &&
                       ui.regret_mean < b2p.regret_mean && ui.regret_mean < 0.6 * b2p.regret_mean;
    return Outcome{order && constrained_unstable == 0,
                   fmt("mean regret c-ui %.4g, c-b2p %.4g, ui %.4g, b2p %.4g (ui/b2p %.3f); unstable per run "
                       "ui %.1f, b2p %.1f, constrained total %d",
                       cui.regret_mean, cb2p.regret_mean, ui.regret_mean, b2p.regret_mean,
                       ui.regret_mean / b2p.regret_mean, ui.unstable_mean, b2p.unstable_mean, constrained_unstable)};
  });

  report(8, "UI regret shape", 0.0, [&] {
    int decreasing = 0;
    int runs = 0;
    std::string values;
    for (const auto& r : sweep.runs) {
      if (r.method != Method::UI || r.failed || r.rows.size() < 150) continue;
      ++runs;
      double c75 = 0.0;
      double c150 = 0.0;
      for (const auto& row : r.rows) {
        if (row.t <= 75) c75 += row.regret_inc;
        if (row.t <= 150) c150 += row.regret_inc;
      }
      const bool dec = c150 / 150.0 < c75 / 75.0;
      decreasing += dec ? 1 : 0;
      values += fmt(" %.4g->%.4g", c75 / 75.0, c150 / 150.0);
    }
    return Outcome{runs == 5 && decreasing >= 4, fmt("%d of %d seeds decreasing (R/t at 75 -> 150:%s)", decreasing, runs, values.c_str())};
  });

  report(9, "frozen baseline regret", 0.0, [&] {
    int seeds = 0;
    int positive = 0;
    double smallest = std::numeric_limits<double>::infinity();
    for (const auto& r : sweep.runs) {
      if (r.method != Method::BaselineK0 || r.failed) continue;
      ++seeds;
      bool all = true;
      double after = 0.0;
      for (const auto& row : r.rows)
        if (row.t > 50) {
          all = all && row.regret_inc > 0.0;
          after += row.regret_inc;
          smallest = std::min(smallest, row.regret_inc);
        }
      positive += all && after > 0.0 ? 1 : 0;
    }
    return Outcome{seeds == 5 && positive == seeds,
                   fmt("%d of %d seeds with positive regret at every t > 50 (smallest increment %.3g)", positive, seeds, smallest)};
  });

  report(10, "bitwise determinism", 0.0, [&] {
    const auto again = experiment::run_experiment(sweep_config(work / "sweep_b"));
    int files = 0;
    int identical = 0;
    for (const auto& r : again.runs) {
      const auto rel = fs::relative(experiment::run_directory(sweep_config(work / "sweep_b"), r.method, r.seed), work / "sweep_b");
      const auto a = work / "sweep_a" / rel / "trajectory.csv";
      const auto b = work / "sweep_b" / rel / "trajectory.csv";
      ++files;
      identical += fs::exists(a) && slurp(a) == slurp(b) ? 1 : 0;
    }
    return Outcome{files == 25 && identical == files, fmt("%d of %d trajectory files identical", identical, files)};
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
