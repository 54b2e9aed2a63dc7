#pragma once

// Experiment configuration: INI text with sections, every default overridable as section.key=value.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "uitvbo/errors.hpp"
#include "uitvbo/io/csv.hpp"
#include "uitvbo/lqr/benchmark.hpp"
#include "uitvbo/tvbo/optimizer.hpp"

namespace uitvbo::experiment {

enum class Method { UI, B2P, ConstrainedUI, ConstrainedB2P, BaselineK0 };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::UI: return "ui";
    case Method::B2P: return "b2p";
    case Method::ConstrainedUI: return "c-ui";
    case Method::ConstrainedB2P: return "c-b2p";
    case Method::BaselineK0: return "baseline-k0";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::UI, Method::B2P, Method::ConstrainedUI, Method::ConstrainedB2P, Method::BaselineK0})
    if (to_string(m) == s) return m;
  throw ConfigurationError("unknown method '" + s + "' (expected ui, b2p, c-ui, c-b2p or baseline-k0)");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& part : io::split(s, ','))
    if (auto p = trim(part); !p.empty()) out.push_back(p);
  return out;
}

/// "0-4,7,9" -> {0,1,2,3,4,7,9}.
inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    const auto dash = item.find('-', 1);
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoull(item));
      } else {
        const auto a = std::stoull(item.substr(0, dash));
        const auto b = std::stoull(item.substr(dash + 1));
        if (b < a) throw ConfigurationError("seed range '" + item + "' is decreasing");
        for (auto v = a; v <= b; ++v) out.push_back(v);
      }
    } catch (const std::logic_error&) {
      throw ConfigurationError("invalid seed list entry '" + item + "'");
    }
  }
  return out;
}

struct ExperimentConfig {
  std::string problem = "lqr2d";
  std::vector<Method> methods{Method::UI, Method::B2P, Method::ConstrainedUI, Method::ConstrainedB2P, Method::BaselineK0};
  int horizon = 300;
  std::vector<std::uint64_t> seeds = parse_seeds("0-24");
  double forgetting = 0.03;
  double beta = 2.0;
  std::filesystem::path output_dir = "results";
  int n_initial = 30;
  int threads = 0;  // 0: hardware concurrency

  // benchmark
  double box_fraction = -1.0;  // preset default
  double cost_threshold_factor = 100.0;
  double divergence_bound = 1e3;
  int episode_steps = 1000;
  double dt = 0.02;
  double q_weight = 10.0;
  double r_weight = 1.0;
  double process_noise_std = 1e-3;
  std::vector<double> x0{0.0, 0.0, 0.0, 0.0};
  int t1 = 50;
  int t2 = 100;

  // optimizer
  double trust_fraction = 0.15;
  int vops_per_dim = 0;
  int max_constraints = 400;
  int n_posterior_samples = 64;
  int grid_per_dim = 50;
  int max_candidates = 4096;
  bool refine = true;
  double imputation_sigmas = 3.0;
  bool refit = true;
  double noise_floor = 1e-6;

  // sampler
  int max_tilting_dimension = 60;
  double max_condition = 1e10;
  int gibbs_burn_in = 200;
  double virtual_noise = 1e-6;

  void validate() const {
    lqr::parse_problem(problem);
    if (methods.empty()) throw ConfigurationError("methods must not be empty");
    if (horizon < 1) throw ConfigurationError("horizon must be at least 1");
    if (seeds.empty()) throw ConfigurationError("seeds must not be empty");
    if (!(forgetting > 0.0)) throw ConfigurationError("forgetting must be positive");
    if (forgetting >= 1.0 && std::find(methods.begin(), methods.end(), Method::B2P) != methods.end())
      throw ConfigurationError("forgetting must be below 1 for back-to-prior methods");
    if (!(beta > 0.0)) throw ConfigurationError("beta must be positive");
    if (n_initial < 2) throw ConfigurationError("n_initial must be at least 2");
    if (x0.size() != 4) throw ConfigurationError("x0 must have four entries");
    if (!(trust_fraction > 0.0 && trust_fraction <= 1.0)) throw ConfigurationError("trust_fraction must be in (0, 1]");
  }

  [[nodiscard]] lqr::BenchmarkConfig benchmark() const {
    lqr::BenchmarkConfig b;
    b.problem = lqr::parse_problem(problem);
    b.box_fraction = box_fraction;
    b.cost_threshold_factor = cost_threshold_factor;
    b.divergence_bound = divergence_bound;
    b.schedule.t1 = t1;
    b.schedule.t2 = t2;
    b.schedule.tau_p0 = b.plant.tau_p0;
    b.episode.M = episode_steps;
    b.episode.dt = dt;
    b.episode.Q = q_weight * lqr::Matrix4::Identity();
    b.episode.R = r_weight;
    b.episode.process_noise_std = lqr::Vector4::Constant(process_noise_std);
    b.episode.x0 = Eigen::Map<const lqr::Vector4>(x0.data());
    return b;
  }

  [[nodiscard]] tvbo::OptimizerConfig optimizer(Method m, const tvbo::TrustRegion& feasible) const {
    tvbo::OptimizerConfig c;
    c.feasible = feasible;
    c.acquisition.beta = beta;
    c.acquisition.use_constraints = m == Method::ConstrainedUI || m == Method::ConstrainedB2P;
    c.acquisition.n_posterior_samples = n_posterior_samples;
    c.forgetting = (m == Method::UI || m == Method::ConstrainedUI) ? gp::Forgetting::ui(forgetting)
                                                                   : gp::Forgetting::b2p(forgetting);
    c.trust_fraction = trust_fraction;
    c.vops_per_dim = vops_per_dim;
    c.max_constraints = static_cast<std::size_t>(max_constraints);
    c.candidates.per_dim = grid_per_dim;
    c.candidates.max_candidates = static_cast<std::size_t>(max_candidates);
    c.refine = refine;
    c.imputation_sigmas = imputation_sigmas;
    c.refit = refit;
    c.fit.noise_floor = noise_floor;
    c.constrained.sampler.max_tilting_dimension = max_tilting_dimension;
    c.constrained.sampler.max_condition_number = max_condition;
    c.constrained.sampler.burn_in = gibbs_burn_in;
    c.constrained.virtual_noise = virtual_noise;
    return c;
  }
};

namespace detail {

using boost::property_tree::ptree;

template <typename T>
std::string to_text(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return io::format_number(v);
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
    return v.string();
  } else {
    return std::to_string(v);
  }
}

template <typename T>
T from_text(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  try {
    if constexpr (std::is_same_v<T, double>) {
      return io::parse_number(s);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw ConfigurationError("");
    } else if constexpr (std::is_same_v<T, int>) {
      std::size_t pos = 0;
      const int v = std::stoi(s, &pos);
      if (pos != s.size()) throw ConfigurationError("");
      return v;
    } else {
      return T(s);
    }
  } catch (const std::exception&) {
    throw ConfigurationError("invalid value '" + s + "' for " + key);
  }
}

// Visits every (key, field) pair; the single source of truth for config I/O.
template <typename Cfg, typename F>
void for_each_field(Cfg& c, F&& f) {
  f("experiment.problem", c.problem);
  f("experiment.horizon", c.horizon);
  f("experiment.forgetting", c.forgetting);
  f("experiment.beta", c.beta);
  f("experiment.output_dir", c.output_dir);
  f("experiment.n_initial", c.n_initial);
  f("experiment.threads", c.threads);
  f("benchmark.box_fraction", c.box_fraction);
  f("benchmark.cost_threshold_factor", c.cost_threshold_factor);
  f("benchmark.divergence_bound", c.divergence_bound);
  f("benchmark.episode_steps", c.episode_steps);
  f("benchmark.dt", c.dt);
  f("benchmark.q_weight", c.q_weight);
  f("benchmark.r_weight", c.r_weight);
  f("benchmark.process_noise_std", c.process_noise_std);
  f("benchmark.t1", c.t1);
  f("benchmark.t2", c.t2);
  f("optimizer.trust_fraction", c.trust_fraction);
  f("optimizer.vops_per_dim", c.vops_per_dim);
  f("optimizer.max_constraints", c.max_constraints);
  f("optimizer.n_posterior_samples", c.n_posterior_samples);
  f("optimizer.grid_per_dim", c.grid_per_dim);
  f("optimizer.max_candidates", c.max_candidates);
  f("optimizer.refine", c.refine);
  f("optimizer.imputation_sigmas", c.imputation_sigmas);
  f("optimizer.refit", c.refit);
  f("optimizer.noise_floor", c.noise_floor);
  f("sampler.max_tilting_dimension", c.max_tilting_dimension);
  f("sampler.max_condition", c.max_condition);
  f("sampler.gibbs_burn_in", c.gibbs_burn_in);
  f("sampler.virtual_noise", c.virtual_noise);
}

inline std::string join_methods(const std::vector<Method>& ms) {
  std::string s;
  for (std::size_t i = 0; i < ms.size(); ++i) s += (i ? "," : "") + to_string(ms[i]);
  return s;
}

inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  return s;
}

inline std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::format_number(v[i]);
  return s;
}

}  // namespace detail

/// Applies one `section.key=value` assignment.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigurationError("override '" + assignment + "' is not key=value");
  std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (key.find('.') == std::string::npos) key = "experiment." + key;

  if (key == "experiment.methods") {
    cfg.methods.clear();
    for (const auto& m : split_list(value)) cfg.methods.push_back(parse_method(m));
    return;
  }
  if (key == "experiment.seeds") {
    cfg.seeds = parse_seeds(value);
    return;
  }
  if (key == "benchmark.x0") {
    cfg.x0.clear();
    for (const auto& v : split_list(value)) cfg.x0.push_back(detail::from_text<double>(key, v));
    return;
  }
  bool found = false;
  detail::for_each_field(cfg, [&](const char* name, auto& field) {
    if (key == name) {
      field = detail::from_text<std::decay_t<decltype(field)>>(key, value);
      found = true;
    }
  });
  if (!found) throw ConfigurationError("unknown configuration key '" + key + "'");
}

/// Reads INI text; unknown keys are errors.
inline void load_config(ExperimentConfig& cfg, std::istream& is) {
  detail::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigurationError(std::string("config parse error: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      apply_override(cfg, section + "=" + body.data());
      continue;
    }
    for (const auto& [key, value] : body) apply_override(cfg, section + "." + key + "=" + value.data());
  }
}

/// Fully resolved config as INI text (all defaults materialized).
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string section;
  const auto emit = [&](const std::string& key, const std::string& value) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << value << '\n';
  };
  bool lists_done = false;
  detail::for_each_field(const_cast<ExperimentConfig&>(cfg), [&](const char* name, const auto& field) {
    const std::string key = name;
    if (!lists_done && key.rfind("experiment.", 0) == 0) {
      emit("experiment.methods", detail::join_methods(cfg.methods));
      emit("experiment.seeds", detail::join_seeds(cfg.seeds));
      lists_done = true;
    }
    emit(key, detail::to_text(field));
    if (key == "benchmark.process_noise_std") emit("benchmark.x0", detail::join_numbers(cfg.x0));
  });
  return os.str();
}

}  // namespace uitvbo::experiment
