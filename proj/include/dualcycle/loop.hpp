#pragma once

// Cyclic dual-sequential orchestration: Sobol retriever exploration until the
// plateau threshold, then seeded generator optimization under the cycle's best
// contexts. Also the single-stage joint baseline and run outputs.

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "environment.hpp"
#include "json.hpp"
#include "optimizer.hpp"
#include "rng.hpp"
#include "scheduler.hpp"
#include "seeding.hpp"
#include "sobol.hpp"
#include "stats.hpp"

namespace dualcycle {

enum class MethodKind { cds, joint };

inline const char* to_string(MethodKind k) { return k == MethodKind::cds ? "cds" : "joint"; }

struct RunSettings {
  MethodKind method = MethodKind::cds;
  OptimizerSettings optimizer;
  PlateauSettings plateau;
  std::size_t generator_cap_n = 10;
  bool seeding = true;
  bool sobol_reset_per_cycle = false;
  double budget = 300.0;
  BudgetMode budget_mode = BudgetMode::cost_units;
  std::uint64_t seed = 0;
  bool record_wall_clock = false;
  BudgetLedger::Clock clock;  // test hook; steady clock when empty

  void check() const {
    plateau.check();
    generator_allowance(generator_cap_n);
    if (!(budget >= 0.0)) throw std::invalid_argument("budget must be non-negative");
  }
};

struct RetrieverEval {
  Configuration phi;
  double precision = 0.0;
  double cost = 0.0;
  double p_ideal = 0.0;  // threshold after this evaluation
};

struct GeneratorEval {
  Configuration theta;
  double value = 0.0;
  double cost = 0.0;
  SeedOrigin origin = SeedOrigin::optimizer;
};

struct CycleRecord {
  std::size_t cycle = 0;
  std::vector<RetrieverEval> retriever_evals;
  std::optional<std::size_t> best_retriever;  // earliest argmax P
  std::vector<GeneratorEval> generator_evals;
  std::optional<std::size_t> best_generator;  // earliest argmax M
  bool complete = false;

  const RetrieverEval* best_phi() const { return best_retriever ? &retriever_evals[*best_retriever] : nullptr; }
};

struct TrajectoryEvent {
  std::size_t event_index = 0;
  std::size_t cycle = 0;
  Scope stage = Scope::retriever;
  double cumulative_cost = 0.0;
  std::optional<double> wall_clock_s;
  double value = 0.0;
  std::optional<double> best_so_far;
};

struct BestPair {
  Configuration phi;
  Configuration theta;
  double value = 0.0;
  std::size_t cycle = 0;
};

struct RunReport {
  MethodKind method = MethodKind::cds;
  std::uint64_t seed = 0;
  double budget = 0.0;
  BudgetMode budget_mode = BudgetMode::cost_units;
  std::optional<BestPair> best;
  std::vector<TrajectoryEvent> trajectory;
  std::vector<CycleRecord> cycles;
  std::vector<ArchiveRecord> archive;
  double spent = 0.0;
  double retrieval_spent = 0.0;
  double generation_spent = 0.0;
  std::size_t retrieve_calls = 0;
  std::size_t generate_calls = 0;
  bool complete = true;
  std::string error;

  std::size_t completed_cycles() const {
    std::size_t n = 0;
    for (const auto& c : cycles) n += c.complete ? 1 : 0;
    return n;
  }
  double retrieval_fraction() const { return spent > 0.0 ? retrieval_spent / spent : 0.0; }
  double final_best() const { return best ? best->value : 0.0; }
};

namespace loop_detail {

class Recorder {
 public:
  Recorder(RunReport& report, const BudgetLedger& ledger, bool wall_clock)
      : report_(report), ledger_(ledger), wall_clock_(wall_clock) {}

  void event(std::size_t cycle, Scope stage, double value) {
    TrajectoryEvent e;
    e.event_index = report_.trajectory.size();
    e.cycle = cycle;
    e.stage = stage;
    e.cumulative_cost = ledger_.spent();
    if (wall_clock_) e.wall_clock_s = ledger_.elapsed_s();
    e.value = value;
    if (report_.best) e.best_so_far = report_.best->value;
    report_.trajectory.push_back(e);
  }

  /// Strict improvement only, so the earliest of equal values is kept.
  void offer(const Configuration& phi, const Configuration& theta, double value, std::size_t cycle) {
    if (!report_.best || value > report_.best->value) report_.best = BestPair{phi, theta, value, cycle};
  }

 private:
  RunReport& report_;
  const BudgetLedger& ledger_;
  bool wall_clock_;
};

inline void finish(RunReport& report, const BudgetLedger& ledger, const Environment& env) {
  report.spent = ledger.spent();
  report.retrieval_spent = ledger.retrieval_spent();
  report.generation_spent = ledger.generation_spent();
  report.retrieve_calls = env.retrieve_calls();
  report.generate_calls = env.generate_calls();
}

}  // namespace loop_detail

/// Cyclic dual-sequential optimization until the budget is exhausted. An
/// environment fault ends the run early with complete = false.
inline RunReport run_cds(Environment& env, const RunSettings& settings) {
  settings.check();
  const auto& info = env.info();
  info.space.require_both_stages();
  const auto phi_view = info.space.retriever_view();
  const auto theta_view = info.space.generator_view();

  RunReport report;
  report.method = MethodKind::cds;
  report.seed = settings.seed;
  report.budget = settings.budget;
  report.budget_mode = settings.budget_mode;
  BudgetLedger ledger(settings.budget, settings.budget_mode, settings.clock);
  loop_detail::Recorder rec(report, ledger, settings.record_wall_clock);
  PlateauState plateau(settings.plateau);
  const auto env_seed = derive_seed(settings.seed, "environment");
  SobolStream sobol(phi_view.size(), derive_seed(settings.seed, "sobol"));
  const auto allowance = generator_allowance(settings.generator_cap_n);

  try {
    for (std::size_t t = 1; ledger.can_afford(info.retrieve_cost_hint); ++t) {
      report.cycles.push_back({});
      auto& cycle = report.cycles.back();
      cycle.cycle = t;
      plateau.begin_cycle(t);
      if (settings.sobol_reset_per_cycle) sobol = SobolStream(phi_view.size(), derive_seed(settings.seed, "sobol", t));

      // Retriever exploration. The first evaluation is unconditional.
      std::string best_handle;
      while (ledger.can_afford(info.retrieve_cost_hint)) {
        const auto phi = unit_cube_map(phi_view, sobol.next_point());
        const auto r = env.retrieve(phi, env_seed);
        ledger.charge(Charge::retrieval, r.cost);
        const double ideal = plateau.record(r.precision);
        cycle.retriever_evals.push_back({phi, r.precision, r.cost, ideal});
        const auto* best = cycle.best_phi();
        if (!best || r.precision > best->precision) {
          if (!best_handle.empty()) env.release(best_handle);
          best_handle = r.context_handle;
          cycle.best_retriever = cycle.retriever_evals.size() - 1;
        } else {
          env.release(r.context_handle);
        }
        rec.event(t, Scope::retriever, r.precision);
        if (plateau.should_stop(r.precision, !ledger.can_afford(info.retrieve_cost_hint))) break;
      }

      if (!cycle.best_retriever) {  // clock ran out between checks
        report.cycles.pop_back();
        break;
      }

      // Generator exploitation under the cycle's best contexts.
      const Configuration& best_phi = cycle.best_phi()->phi;
      auto on_eval = [&](const ArchiveRecord& a) {
        cycle.generator_evals.push_back({a.cfg, a.value, a.cost, a.origin});
        const auto& ge = cycle.generator_evals;
        if (!cycle.best_generator || a.value > ge[*cycle.best_generator].value)
          cycle.best_generator = ge.size() - 1;
        rec.offer(best_phi, a.cfg, a.value, t);
        rec.event(t, Scope::generator, a.value);
      };
      const double context_p = cycle.best_phi()->precision;
      const std::size_t archive_before = report.archive.size();

      std::vector<Observation> seeds;
      std::size_t optimizer_evals = settings.generator_cap_n;
      if (settings.seeding) {
        const auto entries = deduplicate(report.archive);
        Rng seed_rng(derive_seed(settings.seed, "seeding", t));
        const auto plan = draw_seed_plan(entries, allowance, seed_rng, theta_view);
        seeds = reevaluate_seeds(plan, env, best_handle, env_seed, ledger, report.archive, t, on_eval);
        optimizer_evals = allowance.optimizer_evals;
        if (seeds.size() < plan.size()) optimizer_evals = 0;
      }
      auto optimizer = make_optimizer(settings.optimizer, theta_view, derive_seed(settings.seed, "optimizer", t));
      optimizer->warm_start(seeds);
      for (std::size_t k = 0; k < optimizer_evals && ledger.can_afford(info.generate_cost_hint); ++k) {
        const auto theta = optimizer->propose();
        const auto g = env.generate(theta, best_handle, env_seed);
        ledger.charge(Charge::generation, g.cost);
        optimizer->observe({theta, g.quality});
        report.archive.push_back({t, theta, g.quality, g.cost, SeedOrigin::optimizer});
        on_eval(report.archive.back());
      }
      for (std::size_t i = archive_before; i < report.archive.size(); ++i)
        report.archive[i].context_precision = context_p;
      env.release(best_handle);
      cycle.complete = cycle.generator_evals.size() == settings.generator_cap_n;
      if (!cycle.complete) break;
    }
  } catch (const EnvironmentFault& e) {
    report.complete = false;
    report.error = e.what();
  }
  loop_detail::finish(report, ledger, env);
  return report;
}

/// Single optimizer over the joint space; every step retrieves then generates.
inline RunReport run_joint_baseline(Environment& env, const RunSettings& settings) {
  settings.check();
  const auto& info = env.info();
  info.space.require_both_stages();
  const auto joint_view = info.space.joint_view();
  const auto phi_view = info.space.retriever_view();
  const auto theta_view = info.space.generator_view();

  RunReport report;
  report.method = MethodKind::joint;
  report.seed = settings.seed;
  report.budget = settings.budget;
  report.budget_mode = settings.budget_mode;
  BudgetLedger ledger(settings.budget, settings.budget_mode, settings.clock);
  loop_detail::Recorder rec(report, ledger, settings.record_wall_clock);
  const auto env_seed = derive_seed(settings.seed, "environment");
  auto optimizer = make_optimizer(settings.optimizer, joint_view, derive_seed(settings.seed, "optimizer"));
  const double step_cost = info.retrieve_cost_hint + info.generate_cost_hint;

  try {
    while (ledger.can_afford(step_cost)) {
      const auto omega = optimizer->propose();
      const auto phi = restrict_to(phi_view, omega);
      const auto theta = restrict_to(theta_view, omega);
      const auto r = env.retrieve(phi, env_seed);
      ledger.charge(Charge::retrieval, r.cost);
      const auto g = env.generate(theta, r.context_handle, env_seed);
      ledger.charge(Charge::generation, g.cost);
      env.release(r.context_handle);
      optimizer->observe({omega, g.quality});
      ArchiveRecord a{0, theta, g.quality, g.cost, SeedOrigin::optimizer};
      a.context_precision = r.precision;
      report.archive.push_back(std::move(a));
      rec.offer(phi, theta, g.quality, 0);
      rec.event(0, Scope::joint, g.quality);
    }
  } catch (const EnvironmentFault& e) {
    report.complete = false;
    report.error = e.what();
  }
  loop_detail::finish(report, ledger, env);
  return report;
}

inline RunReport run(Environment& env, const RunSettings& settings) {
  return settings.method == MethodKind::cds ? run_cds(env, settings) : run_joint_baseline(env, settings);
}

// ---------------------------------------------------------------------------
// Correlation between retrieval and generation quality

struct CorrelationReport {
  std::vector<std::pair<double, double>> pairs;  // (P, M)
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::string note;  // why a coefficient is unavailable
};

/// Pairs every generator evaluation with the precision of the contexts it
/// used. Throws with fewer than three pairs.
inline CorrelationReport correlation_report(std::span<const ArchiveRecord> archive) {
  CorrelationReport out;
  std::vector<double> p, m;
  for (const auto& a : archive) {
    if (!a.context_precision) continue;
    out.pairs.emplace_back(*a.context_precision, a.value);
    p.push_back(*a.context_precision);
    m.push_back(a.value);
  }
  if (out.pairs.size() < 3)
    throw std::invalid_argument("correlation needs at least 3 generator evaluations, have " +
                                std::to_string(out.pairs.size()));
  out.pearson = stats::pearson(p, m);
  out.spearman = stats::spearman(p, m);
  if (!out.pearson) out.note = "zero variance in P or M; correlation undefined";
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryEvent> events) {
  out << "event_index,cycle,stage,cumulative_cost,wall_clock_s,value,best_so_far\n";
  for (const auto& e : events) {
    out << e.event_index << ',' << e.cycle << ',' << to_string(e.stage) << ',' << format_double(e.cumulative_cost)
        << ',' << (e.wall_clock_s ? format_double(*e.wall_clock_s) : "NA") << ',' << format_double(e.value) << ','
        << (e.best_so_far ? format_double(*e.best_so_far) : "NA") << '\n';
  }
}

inline nlohmann::json to_json(const ArchiveRecord& a) {
  nlohmann::json j{{"cycle", a.cycle}, {"config", to_json(a.cfg)}, {"value", a.value}, {"cost", a.cost},
                   {"origin", to_string(a.origin)}};
  j["context_precision"] = a.context_precision ? nlohmann::json(*a.context_precision) : nlohmann::json(nullptr);
  return j;
}

inline SeedOrigin seed_origin_from_string(const std::string& s) {
  if (s == "archive_seed") return SeedOrigin::archive_seed;
  if (s == "random_seed") return SeedOrigin::random_seed;
  if (s == "optimizer") return SeedOrigin::optimizer;
  throw std::invalid_argument("unknown origin '" + s + "'");
}

inline ArchiveRecord archive_record_from_json(const SpaceView& generator_view, const nlohmann::json& j) {
  ArchiveRecord a;
  a.cycle = j.at("cycle").get<std::size_t>();
  a.cfg = config_from_json(generator_view, j.at("config"));
  a.value = j.at("value").get<double>();
  a.cost = j.at("cost").get<double>();
  a.origin = seed_origin_from_string(j.at("origin").get<std::string>());
  if (j.contains("context_precision") && !j["context_precision"].is_null())
    a.context_precision = j["context_precision"].get<double>();
  return a;
}

inline nlohmann::json to_json(const CycleRecord& c) {
  nlohmann::json r = nlohmann::json::array();
  for (const auto& e : c.retriever_evals)
    r.push_back({{"config", to_json(e.phi)}, {"precision", e.precision}, {"cost", e.cost}, {"p_ideal", e.p_ideal}});
  nlohmann::json g = nlohmann::json::array();
  for (const auto& e : c.generator_evals)
    g.push_back({{"config", to_json(e.theta)}, {"value", e.value}, {"cost", e.cost}, {"origin", to_string(e.origin)}});
  nlohmann::json j{{"cycle", c.cycle}, {"complete", c.complete}, {"retriever_evals", r}, {"generator_evals", g}};
  j["best_retriever"] = c.best_retriever ? nlohmann::json(*c.best_retriever) : nlohmann::json(nullptr);
  j["best_generator"] = c.best_generator ? nlohmann::json(*c.best_generator) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json summary_json(const RunReport& r) {
  nlohmann::json j;
  j["method"] = to_string(r.method);
  j["seed"] = r.seed;
  j["complete"] = r.complete;
  if (!r.complete) j["error"] = r.error;
  j["budget"] = {{"amount", r.budget}, {"mode", to_string(r.budget_mode)}};
  j["spent"] = r.spent;
  j["retrieval_spent"] = r.retrieval_spent;
  j["generation_spent"] = r.generation_spent;
  j["retrieval_fraction"] = r.retrieval_fraction();
  j["retrieve_calls"] = r.retrieve_calls;
  j["generate_calls"] = r.generate_calls;
  j["cycles_started"] = r.cycles.size();
  j["cycles_completed"] = r.completed_cycles();
  if (r.best) {
    j["best"] = {{"value", r.best->value},
                 {"cycle", r.best->cycle},
                 {"retriever", to_json(r.best->phi)},
                 {"generator", to_json(r.best->theta)}};
  } else {
    j["best"] = nullptr;
  }
  nlohmann::json champions = nlohmann::json::array();
  for (const auto& c : r.cycles) {
    if (!c.best_generator) continue;
    const auto& g = c.generator_evals[*c.best_generator];
    champions.push_back({{"cycle", c.cycle},
                         {"value", g.value},
                         {"retriever", to_json(c.best_phi()->phi)},
                         {"generator", to_json(g.theta)}});
  }
  j["cycle_champions"] = champions;
  return j;
}

}  // namespace dualcycle
