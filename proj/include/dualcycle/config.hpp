#pragma once

// Experiment configuration: a JSON document with environment, space, method,
// budget, seed and output blocks. Unknown keys are rejected and every error
// names the offending key path.

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "external_env.hpp"
#include "filerag_env.hpp"
#include "json.hpp"
#include "loop.hpp"
#include "synthetic_env.hpp"

namespace dualcycle {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class EnvironmentKind { synthetic, filerag, external };

inline const char* to_string(EnvironmentKind k) {
  switch (k) {
    case EnvironmentKind::synthetic: return "synthetic";
    case EnvironmentKind::filerag: return "filerag";
    case EnvironmentKind::external: return "external";
  }
  return "?";
}

struct EnvironmentConfig {
  EnvironmentKind kind = EnvironmentKind::synthetic;
  SyntheticParams synthetic;
  FileRagParams filerag;
  ExternalParams external;
};

struct ExperimentConfig {
  EnvironmentConfig environment;
  std::optional<SearchSpace> space;  // synthetic/filerag default to the RAG space
  RunSettings run;
  std::filesystem::path output_directory = "runs/latest";
};

namespace config_detail {

/// Reads keys from one JSON object and remembers which ones were consumed.
class Block {
 public:
  Block(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(key_path(key) + ": required key missing");
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    return as<T>(key, j_.at(key));
  }

  template <typename T>
  T require(const std::string& key) {
    return as<T>(key, raw(key));
  }

  void fail(const std::string& key, const std::string& message) const {
    throw ConfigError(key_path(key) + ": " + message);
  }

  /// Rejects keys that were never read.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(key_path(k) + ": unknown key");
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  template <typename T>
  T as(const std::string& key, const nlohmann::json& v) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(key, "expected a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(key, "expected an integer");
      if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0 && !v.is_number_unsigned())
        fail(key, "expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "expected a number");
    }
    return v.get<T>();
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline void require_range(Block& b, const std::string& key, double value, double lo, double hi, bool lo_open = false) {
  const bool ok = (lo_open ? value > lo : value >= lo) && value <= hi;
  if (!ok) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "must be in %c%g, %g], got %g", lo_open ? '(' : '[', lo, hi, value);
    b.fail(key, buf);
  }
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal();
}

inline EnvironmentConfig parse_environment(const nlohmann::json& j, const std::filesystem::path& base) {
  Block b(j, "environment");
  EnvironmentConfig env;
  const auto kind = b.require<std::string>("kind");
  if (kind == "synthetic") {
    env.kind = EnvironmentKind::synthetic;
    auto& s = env.synthetic;
    s.link_strength = b.get("link_strength", s.link_strength);
    require_range(b, "link_strength", s.link_strength, 0.0, 1.0);
    s.sigma_r = b.get("sigma_r", s.sigma_r);
    require_range(b, "sigma_r", s.sigma_r, 0.0, 1.0);
    s.sigma_g = b.get("sigma_g", s.sigma_g);
    require_range(b, "sigma_g", s.sigma_g, 0.0, 1.0);
    s.modes = b.get<std::size_t>("modes", s.modes);
    if (s.modes < 1) b.fail("modes", "must be >= 1");
    s.mode_width_lo = b.get("mode_width_lo", s.mode_width_lo);
    s.mode_width_hi = b.get("mode_width_hi", s.mode_width_hi);
    if (!(s.mode_width_lo > 0.0 && s.mode_width_lo <= s.mode_width_hi))
      b.fail("mode_width_lo", "mode widths need 0 < mode_width_lo <= mode_width_hi");
    s.bump_width = b.get("bump_width", s.bump_width);
    if (!(s.bump_width > 0.0)) b.fail("bump_width", "must be positive");
    s.category_step = b.get("category_step", s.category_step);
    require_range(b, "category_step", s.category_step, 0.0, 1.0);
    s.instance_seed = b.get<std::uint64_t>("instance_seed", s.instance_seed);
    s.retrieve_cost = b.get("retrieve_cost", s.retrieve_cost);
    if (!(s.retrieve_cost > 0.0)) b.fail("retrieve_cost", "must be positive");
    s.generate_cost = b.get("generate_cost", s.generate_cost);
    if (!(s.generate_cost > 0.0)) b.fail("generate_cost", "must be positive");
  } else if (kind == "filerag") {
    env.kind = EnvironmentKind::filerag;
    auto& f = env.filerag;
    f.corpus = resolve(base, b.require<std::string>("corpus"));
    if (!std::filesystem::is_regular_file(f.corpus)) b.fail("corpus", "file not found: " + f.corpus.string());
    f.queries = resolve(base, b.require<std::string>("queries"));
    if (!std::filesystem::is_regular_file(f.queries)) b.fail("queries", "file not found: " + f.queries.string());
    f.precision_k = b.get<std::size_t>("precision_k", f.precision_k);
    if (f.precision_k < 1) b.fail("precision_k", "must be >= 1");
    f.query_offset = b.get<std::size_t>("query_offset", f.query_offset);
    f.query_limit = b.get<std::size_t>("query_limit", f.query_limit);
    f.retrieve_cost = b.get("retrieve_cost", f.retrieve_cost);
    if (!(f.retrieve_cost > 0.0)) b.fail("retrieve_cost", "must be positive");
    f.generate_cost = b.get("generate_cost", f.generate_cost);
    if (!(f.generate_cost > 0.0)) b.fail("generate_cost", "must be positive");
  } else if (kind == "external") {
    env.kind = EnvironmentKind::external;
    auto& e = env.external;
    const auto& cmd = b.raw("command");
    if (!cmd.is_array() || cmd.empty()) b.fail("command", "expected a non-empty array of strings");
    for (const auto& a : cmd) {
      if (!a.is_string()) b.fail("command", "expected a non-empty array of strings");
      e.command.push_back(a.get<std::string>());
    }
    e.timeout_s = b.get("timeout_s", e.timeout_s);
    if (!(e.timeout_s > 0.0)) b.fail("timeout_s", "must be positive");
    e.working_dir = resolve(base, b.get<std::string>("working_dir", "."));
    if (!std::filesystem::is_directory(e.working_dir))
      b.fail("working_dir", "directory not found: " + e.working_dir.string());
  } else {
    b.fail("kind", "expected one of synthetic, filerag, external; got '" + kind + "'");
  }
  b.finish();
  return env;
}

inline void parse_method(const nlohmann::json& j, RunSettings& run) {
  Block b(j, "method");
  const auto kind = b.get<std::string>("kind", "cds");
  if (kind == "cds") run.method = MethodKind::cds;
  else if (kind == "joint") run.method = MethodKind::joint;
  else b.fail("kind", "expected cds or joint; got '" + kind + "'");

  if (b.has("optimizer")) {
    Block o(b.raw("optimizer"), "method.optimizer");
    const auto name = o.get<std::string>("name", "tpe");
    if (name == "tpe") run.optimizer.kind = OptimizerKind::tpe;
    else if (name == "random") run.optimizer.kind = OptimizerKind::random;
    else o.fail("name", "expected tpe or random; got '" + name + "'");
    auto& t = run.optimizer.tpe;
    t.gamma = o.get("gamma", t.gamma);
    require_range(o, "gamma", t.gamma, 0.0, 1.0, true);
    t.n_init = o.get<std::size_t>("n_init", t.n_init);
    t.candidates = o.get<std::size_t>("candidates", t.candidates);
    if (t.candidates < 1) o.fail("candidates", "must be >= 1");
    t.bandwidth_floor = o.get("bandwidth_floor", t.bandwidth_floor);
    require_range(o, "bandwidth_floor", t.bandwidth_floor, 0.0, 1.0, true);
    t.adaptive_floor = o.get("adaptive_bandwidth_floor", t.adaptive_floor);
    o.finish();
  }
  auto& p = run.plateau;
  p.alpha = b.get("alpha", p.alpha);
  require_range(b, "alpha", p.alpha, 0.0, 1.0);
  p.beta = b.get("beta", p.beta);
  if (!(p.beta > 0.0)) b.fail("beta", "must be positive");
  run.generator_cap_n = b.get<std::size_t>("generator_cap_N", run.generator_cap_n);
  if (run.generator_cap_n < 2) b.fail("generator_cap_N", "must be >= 2, got " + std::to_string(run.generator_cap_n));
  p.max_retriever_evals_per_cycle = b.get<std::size_t>("max_retriever_evals_per_cycle", p.max_retriever_evals_per_cycle);
  if (p.max_retriever_evals_per_cycle < 1) b.fail("max_retriever_evals_per_cycle", "must be >= 1");
  p.adaptive = b.get("adaptive_retriever_stop", p.adaptive);
  run.seeding = b.get("seeding", run.seeding);
  run.sobol_reset_per_cycle = b.get("sobol_reset_per_cycle", run.sobol_reset_per_cycle);
  b.finish();
}

}  // namespace config_detail

/// Parses a config document. Relative paths resolve against base_dir.
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using namespace config_detail;
  Block root(j, "");
  ExperimentConfig cfg;
  cfg.environment = parse_environment(root.raw("environment"), base_dir);
  if (root.has("space")) {
    if (cfg.environment.kind == EnvironmentKind::external)
      root.fail("space", "an external environment supplies its own space");
    try {
      cfg.space = space_from_json(root.raw("space"));
      cfg.space->require_both_stages();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      root.fail("space", e.what());
    }
  }
  if (root.has("method")) parse_method(root.raw("method"), cfg.run);
  {
    Block b(root.raw("budget"), "budget");
    cfg.run.budget = b.require<double>("amount");
    if (!(cfg.run.budget >= 0.0)) b.fail("amount", "must be non-negative");
    const auto mode = b.get<std::string>("mode", "cost_units");
    if (mode == "cost_units") cfg.run.budget_mode = BudgetMode::cost_units;
    else if (mode == "wall_clock") cfg.run.budget_mode = BudgetMode::wall_clock;
    else b.fail("mode", "expected cost_units or wall_clock; got '" + mode + "'");
    b.finish();
  }
  cfg.run.seed = root.get<std::uint64_t>("seed", 0);
  if (root.has("output")) {
    Block b(root.raw("output"), "output");
    cfg.output_directory = resolve(base_dir, b.get<std::string>("directory", "runs/latest"));
    cfg.run.record_wall_clock = b.get("record_wall_clock", false);
    b.finish();
  } else {
    cfg.output_directory = resolve(base_dir, "runs/latest");
  }
  if (cfg.run.budget_mode == BudgetMode::wall_clock) cfg.run.record_wall_clock = true;
  root.finish();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, std::filesystem::absolute(path).parent_path());
}

/// Fully resolved config (absolute paths, every default spelled out). Parsing
/// it again yields the same experiment.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json env{{"kind", to_string(cfg.environment.kind)}};
  switch (cfg.environment.kind) {
    case EnvironmentKind::synthetic: {
      const auto& s = cfg.environment.synthetic;
      env.update({{"link_strength", s.link_strength}, {"sigma_r", s.sigma_r}, {"sigma_g", s.sigma_g},
                  {"modes", s.modes}, {"mode_width_lo", s.mode_width_lo}, {"mode_width_hi", s.mode_width_hi},
                  {"bump_width", s.bump_width}, {"category_step", s.category_step},
                  {"instance_seed", s.instance_seed}, {"retrieve_cost", s.retrieve_cost},
                  {"generate_cost", s.generate_cost}});
      break;
    }
    case EnvironmentKind::filerag: {
      const auto& f = cfg.environment.filerag;
      env.update({{"corpus", f.corpus.string()}, {"queries", f.queries.string()}, {"precision_k", f.precision_k},
                  {"query_offset", f.query_offset}, {"query_limit", f.query_limit},
                  {"retrieve_cost", f.retrieve_cost}, {"generate_cost", f.generate_cost}});
      break;
    }
    case EnvironmentKind::external: {
      const auto& e = cfg.environment.external;
      env.update({{"command", e.command}, {"timeout_s", e.timeout_s}, {"working_dir", e.working_dir.string()}});
      break;
    }
  }
  const auto& r = cfg.run;
  nlohmann::json j;
  j["environment"] = env;
  if (cfg.space) j["space"] = to_json(*cfg.space);
  j["method"] = {{"kind", to_string(r.method)},
                 {"optimizer",
                  {{"name", to_string(r.optimizer.kind)},
                   {"gamma", r.optimizer.tpe.gamma},
                   {"n_init", r.optimizer.tpe.n_init},
                   {"candidates", r.optimizer.tpe.candidates},
                   {"bandwidth_floor", r.optimizer.tpe.bandwidth_floor},
                   {"adaptive_bandwidth_floor", r.optimizer.tpe.adaptive_floor}}},
                 {"alpha", r.plateau.alpha},
                 {"beta", r.plateau.beta},
                 {"generator_cap_N", r.generator_cap_n},
                 {"max_retriever_evals_per_cycle", r.plateau.max_retriever_evals_per_cycle},
                 {"adaptive_retriever_stop", r.plateau.adaptive},
                 {"seeding", r.seeding},
                 {"sobol_reset_per_cycle", r.sobol_reset_per_cycle}};
  j["budget"] = {{"amount", r.budget}, {"mode", to_string(r.budget_mode)}};
  j["seed"] = r.seed;
  j["output"] = {{"directory", cfg.output_directory.string()}, {"record_wall_clock", r.record_wall_clock}};
  return j;
}

inline std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg) {
  switch (cfg.environment.kind) {
    case EnvironmentKind::synthetic:
      return std::make_unique<SyntheticEnvironment>(cfg.environment.synthetic, cfg.space.value_or(default_rag_space()));
    case EnvironmentKind::filerag:
      return std::make_unique<FileRagEnvironment>(cfg.environment.filerag, cfg.space.value_or(default_rag_space()));
    case EnvironmentKind::external:
      return std::make_unique<ExternalEnvironment>(cfg.environment.external);
  }
  throw ConfigError("unknown environment kind");
}

}  // namespace dualcycle
