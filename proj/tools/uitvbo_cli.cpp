#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "uitvbo/experiment/config.hpp"
#include "uitvbo/experiment/runner.hpp"
#include "uitvbo/lqr/benchmark.hpp"

namespace ex = uitvbo::experiment;

int main(int argc, char** argv) {
  CLI::App app{"Time-varying Bayesian optimization experiments on the cart-pole LQR benchmark"};
  app.require_subcommand(0, 1);

  std::string problem, methods, seeds, out, config_file;
  int horizon = 0;
  int threads = -1;
  bool quiet = false;
  std::vector<std::string> overrides;
  app.add_option("--problem", problem, "Benchmark preset: lqr2d, lqr4d, lqr4d-reduced");
  app.add_option("--methods", methods, "Comma list of ui, b2p, c-ui, c-b2p, baseline-k0");
  app.add_option("--seeds", seeds, "Seed list, e.g. 0-24 or 1,5,9");
  app.add_option("--horizon", horizon, "Number of TVBO steps")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");
  app.add_option("--config", config_file, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--override", overrides, "section.key=value, repeatable");
  app.add_option("--threads", threads, "Worker threads (0: all cores)");
  app.add_flag("--quiet", quiet, "No per-run progress lines");

  auto* oracle = app.add_subcommand("oracle", "Write (t, K*_t, f_t(K*_t)) as CSV");
  std::string oracle_out = "-";
  oracle->add_option("--output,-o", oracle_out, "CSV path, '-' for stdout");

  CLI11_PARSE(app, argc, argv);

  ex::ExperimentConfig cfg;
  try {
    if (!config_file.empty()) {
      std::ifstream is(config_file);
      ex::load_config(cfg, is);
    }
    if (!problem.empty()) ex::apply_override(cfg, "experiment.problem=" + problem);
    if (!methods.empty()) ex::apply_override(cfg, "experiment.methods=" + methods);
    if (!seeds.empty()) ex::apply_override(cfg, "experiment.seeds=" + seeds);
    if (horizon > 0) cfg.horizon = horizon;
    if (!out.empty()) cfg.output_dir = out;
    if (threads >= 0) cfg.threads = threads;
    for (const auto& o : overrides) ex::apply_override(cfg, o);
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  if (*oracle) {
    const uitvbo::lqr::LqrBenchmark bench(cfg.benchmark());
    if (oracle_out == "-") {
      uitvbo::lqr::write_oracle_csv(std::cout, bench, cfg.horizon);
    } else {
      std::ofstream os(oracle_out);
      if (!os) {
        std::cerr << "error: cannot write " << oracle_out << '\n';
        return 1;
      }
      uitvbo::lqr::write_oracle_csv(os, bench, cfg.horizon);
    }
    return 0;
  }

  ex::ExperimentResult result;
  try {
    result = ex::run_experiment(cfg, [&](const ex::RunResult& r) {
      if (quiet) return;
      std::cerr << ex::to_string(r.method) << " seed " << r.seed << ": ";
      if (r.failed)
        std::cerr << "FAILED (" << r.error << ")\n";
      else
        std::cerr << "regret " << uitvbo::io::format_number(r.regret()) << ", unstable " << r.unstable_count() << '\n';
    });
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  ex::write_summary_csv(std::cout, result.summary);
  if (result.failed > 0) {
    std::cerr << result.failed << " run(s) failed; see error.txt in their run directories\n";
    return 2;
  }
  return 0;
}
