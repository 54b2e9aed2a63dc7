#pragma once

// Method x seed sweeps on the LQR benchmark, trajectory/summary CSV output.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "uitvbo/experiment/config.hpp"
#include "uitvbo/io/csv.hpp"
#include "uitvbo/lqr/benchmark.hpp"
#include "uitvbo/random.hpp"
#include "uitvbo/tvbo/optimizer.hpp"

namespace uitvbo::experiment {

struct TrajectoryRow {
  int t = 0;
  Eigen::VectorXd query;
  double y_raw = 0.0;
  double y_normalized = 0.0;
  bool stable = true;
  bool imputed = false;
  double f_query = 0.0;
  double f_opt = 0.0;
  double regret_inc = 0.0;  // 0 on skipped steps

  // Counted as an unstable controller: flagged by the detector, or a closed loop that is not Schur.
  [[nodiscard]] bool unstable_controller() const { return !stable || !std::isfinite(f_query); }
};

struct RunResult {
  Method method = Method::UI;
  std::uint64_t seed = 0;
  std::vector<TrajectoryRow> rows;
  std::vector<double> wall_ms;
  bool failed = false;
  std::string error;

  [[nodiscard]] double regret() const {
    double r = 0.0;
    for (const auto& row : rows) r += row.regret_inc;
    return r;
  }
  [[nodiscard]] int unstable_count() const {
    return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.unstable_controller(); }));
  }
};

inline constexpr std::uint64_t kEpisodeStream = 41;

/// Every numeric field passes through io::quantize so a CSV reader reproduces it exactly.
inline TrajectoryRow make_row(int t, const Eigen::VectorXd& query, double y_raw, double y_norm, bool stable, bool imputed,
                              double f_query, double f_opt) {
  TrajectoryRow r;
  r.t = t;
  r.query = query.unaryExpr([](double v) { return io::quantize(v); });
  r.y_raw = io::quantize(y_raw);
  r.y_normalized = io::quantize(y_norm);
  r.stable = stable;
  r.imputed = imputed;
  r.f_query = io::quantize(f_query);
  r.f_opt = io::quantize(f_opt);
  r.regret_inc = r.unstable_controller() ? 0.0 : io::quantize(r.f_query - r.f_opt);
  return r;
}

/// One (method, seed) run. Exceptions are captured into the result.
inline RunResult run_single(const ExperimentConfig& cfg, Method method, std::uint64_t seed) {
  RunResult out;
  out.method = method;
  out.seed = seed;
  try {
    lqr::LqrBenchmark bench(cfg.benchmark());
    const auto init = lqr::make_initial_dataset(bench, cfg.n_initial, seed);
    bench.set_cost_threshold(cfg.cost_threshold_factor * init.median_cost);
    const auto episode_seed = [&](int t) { return derive_seed(seed, kEpisodeStream, static_cast<std::uint64_t>(t)); };

    if (method == Method::BaselineK0) {
      const lqr::Vector4 k0 = bench.optimal_gain(0);
      const Eigen::VectorXd theta = bench.project(k0);
      for (int t = 1; t <= cfg.horizon; ++t) {
        const auto start = std::chrono::steady_clock::now();
        const auto sys = bench.system(t);
        const auto ep = lqr::simulate_episode(k0, sys, bench.config().episode, episode_seed(t), bench.threshold());
        const double f_query = lqr::stationary_cost(k0, sys, bench.config().episode);
        out.rows.push_back(make_row(t, theta, ep.cost, std::nan(""), ep.stable, false, f_query, bench.optimal_cost(t)));
        out.wall_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      }
      return out;
    }

    const auto ocfg = cfg.optimizer(method, bench.feasible());
    const tvbo::Objective objective = [&](const Eigen::VectorXd& theta, int t) {
      const auto ep = bench.evaluate(theta, t, episode_seed(t));
      return tvbo::ObjectiveValue{ep.cost, ep.stable};
    };
    auto last = std::chrono::steady_clock::now();
    tvbo::run(init.data, ocfg, objective, cfg.horizon, seed, [&](const tvbo::StepRecord& s) {
      out.rows.push_back(make_row(s.t, s.query, s.y_raw, s.y_normalized, s.stable, s.imputed,
                                  bench.noise_free_cost(s.query, s.t), bench.optimal_cost(s.t)));
      const auto now = std::chrono::steady_clock::now();
      out.wall_ms.push_back(std::chrono::duration<double, std::milli>(now - last).count());
      last = now;
    });
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
  const Eigen::Index d = rows.empty() ? 0 : rows.front().query.size();
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",theta_" << i;
  os << ",y_raw,y_normalized,stable,imputed,f_query,f_opt,regret_inc\n";
  for (const auto& r : rows) {
    os << r.t;
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << io::format_number(r.query(i));
    os << ',' << io::format_number(r.y_raw) << ',' << io::format_number(r.y_normalized) << ',' << (r.stable ? 1 : 0) << ','
       << (r.imputed ? 1 : 0) << ',' << io::format_number(r.f_query) << ',' << io::format_number(r.f_opt) << ','
       << io::format_number(r.regret_inc) << '\n';
  }
}

inline std::vector<TrajectoryRow> read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ContractViolation("read_trajectory_csv: empty input");
  const auto header = io::split(line);
  const auto d = static_cast<Eigen::Index>(header.size()) - 8;
  if (d < 1) throw ContractViolation("read_trajectory_csv: malformed header");
  std::vector<TrajectoryRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = io::split(line);
    if (static_cast<Eigen::Index>(f.size()) != d + 8) throw ContractViolation("read_trajectory_csv: malformed row");
    TrajectoryRow r;
    r.t = std::stoi(f[0]);
    r.query.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) r.query(i) = io::parse_number(f[static_cast<std::size_t>(1 + i)]);
    const auto at = [&](Eigen::Index k) { return f[static_cast<std::size_t>(1 + d + k)]; };
    r.y_raw = io::parse_number(at(0));
    r.y_normalized = io::parse_number(at(1));
    r.stable = at(2) == "1";
    r.imputed = at(3) == "1";
    r.f_query = io::parse_number(at(4));
    r.f_opt = io::parse_number(at(5));
    r.regret_inc = io::parse_number(at(6));
    rows.push_back(std::move(r));
  }
  return rows;
}

struct SummaryRow {
  Method method = Method::UI;
  int runs = 0;
  int failed = 0;
  double regret_mean = 0.0;
  double regret_std = 0.0;
  double unstable_mean = 0.0;
  double unstable_std = 0.0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace detail

/// Per-method mean and population std of regret and unstable-controller counts, in the order the
/// methods first appear. Failed runs are excluded and counted.
inline std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs) {
  std::vector<Method> order;
  for (const auto& r : runs)
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
  std::vector<SummaryRow> out;
  for (Method m : order) {
    SummaryRow row;
    row.method = m;
    std::vector<double> regrets;
    std::vector<double> unstable;
    for (const auto& r : runs) {
      if (r.method != m) continue;
      if (r.failed) {
        ++row.failed;
        continue;
      }
      ++row.runs;
      regrets.push_back(r.regret());
      unstable.push_back(r.unstable_count());
    }
    std::tie(row.regret_mean, row.regret_std) = detail::mean_std(regrets);
    std::tie(row.unstable_mean, row.unstable_std) = detail::mean_std(unstable);
    out.push_back(row);
  }
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "method,runs,failed,regret_mean,regret_std,unstable_mean,unstable_std\n";
  for (const auto& r : rows)
    os << to_string(r.method) << ',' << r.runs << ',' << r.failed << ',' << io::format_number(r.regret_mean) << ','
       << io::format_number(r.regret_std) << ',' << io::format_number(r.unstable_mean) << ','
       << io::format_number(r.unstable_std) << '\n';
}

/// Cumulative regret / t per run, plus the row-wise mean across runs.
inline void write_regret_curves(std::ostream& os, const std::vector<const RunResult*>& runs) {
  os << "# normalized regret: cumulative regret up to t divided by t\n";
  os << "t";
  for (const auto* r : runs) os << ",seed_" << r->seed;
  os << ",mean\n";
  const std::size_t horizon = runs.empty() ? 0 : runs.front()->rows.size();
  std::vector<double> cumulative(runs.size(), 0.0);
  for (std::size_t k = 0; k < horizon; ++k) {
    const int t = runs.front()->rows[k].t;
    os << t;
    double mean = 0.0;
    for (std::size_t j = 0; j < runs.size(); ++j) {
      cumulative[j] += runs[j]->rows[k].regret_inc;
      const double v = cumulative[j] / t;
      mean += v / static_cast<double>(runs.size());
      os << ',' << io::format_number(v);
    }
    os << ',' << io::format_number(mean) << '\n';
  }
}

inline std::filesystem::path run_directory(const ExperimentConfig& cfg, Method m, std::uint64_t seed) {
  return cfg.output_dir / to_string(m) / ("seed_" + std::to_string(seed));
}

struct ExperimentResult {
  std::vector<RunResult> runs;
  std::vector<SummaryRow> summary;
  int failed = 0;
};

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigurationError("cannot write " + p.string());
  os << content;
}

inline void write_run_files(const ExperimentConfig& cfg, const RunResult& r) {
  const auto dir = run_directory(cfg, r.method, r.seed);
  std::filesystem::create_directories(dir);
  write_file(dir / "config.ini", serialize_config(cfg) + "\n[run]\nmethod = " + to_string(r.method) +
                                     "\nseed = " + std::to_string(r.seed) + "\n");
  std::ostringstream traj;
  write_trajectory_csv(traj, r.rows);
  write_file(dir / "trajectory.csv", traj.str());
  std::ostringstream timing;
  timing << "t,wall_ms\n";
  for (std::size_t i = 0; i < r.wall_ms.size() && i < r.rows.size(); ++i)
    timing << r.rows[i].t << ',' << io::format_number(r.wall_ms[i]) << '\n';
  write_file(dir / "timing.csv", timing.str());
  if (r.failed) write_file(dir / "error.txt", r.error + "\n");
}

}  // namespace detail

/// Runs every (method, seed) pair on a worker pool and writes per-run directories, summary.csv,
/// regret_curves_<method>.csv and oracle.csv under cfg.output_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::function<void(const RunResult&)>& on_run = {}) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  detail::write_file(cfg.output_dir / "config.ini", serialize_config(cfg));

  struct Job {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Method m : cfg.methods)
    for (auto s : cfg.seeds) jobs.push_back({m, s});

  ExperimentResult out;
  out.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report;
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      out.runs[i] = run_single(cfg, jobs[i].method, jobs[i].seed);
      detail::write_run_files(cfg, out.runs[i]);
      if (on_run) {
        std::lock_guard lock(report);
        on_run(out.runs[i]);
      }
    }
  };
  unsigned n_threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  out.summary = summarize(out.runs);
  for (const auto& r : out.runs) out.failed += r.failed ? 1 : 0;
  std::ostringstream summary;
  write_summary_csv(summary, out.summary);
  detail::write_file(cfg.output_dir / "summary.csv", summary.str());
  for (Method m : cfg.methods) {
    std::vector<const RunResult*> ok;
    for (const auto& r : out.runs)
      if (r.method == m && !r.failed) ok.push_back(&r);
    if (ok.empty()) continue;
    std::ostringstream curves;
    write_regret_curves(curves, ok);
    detail::write_file(cfg.output_dir / ("regret_curves_" + to_string(m) + ".csv"), curves.str());
  }
  std::ostringstream oracle;
  lqr::write_oracle_csv(oracle, lqr::LqrBenchmark(cfg.benchmark()), cfg.horizon);
  detail::write_file(cfg.output_dir / "oracle.csv", oracle.str());
  return out;
}

}  // namespace uitvbo::experiment
