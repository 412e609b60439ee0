#pragma once

// Command implementations behind the dualcycle executable. Each returns a
// process exit code: 0 success, 2 usage or configuration error, 3 environment
// fault.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "loop.hpp"
#include "stats.hpp"

namespace dualcycle::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kFault = 3;

namespace fs = std::filesystem;

/// Runs one experiment and writes its outputs into dir.
struct RunOutcome {
  int code = kOk;
  RunReport report;
};

inline void write_run_outputs(const fs::path& dir, const ExperimentConfig& cfg, const RunReport& report) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "trajectory.csv");
    write_trajectory_csv(out, report.trajectory);
  }
  {
    std::ofstream out(dir / "archive.jsonl");
    for (const auto& a : report.archive) out << to_json(a).dump() << '\n';
  }
  {
    std::ofstream out(dir / "cycles.jsonl");
    for (const auto& c : report.cycles) out << to_json(c).dump() << '\n';
  }
  {
    auto j = summary_json(report);
    j["config"] = to_json(cfg);
    std::ofstream out(dir / "report.json");
    out << j.dump(2) << '\n';
  }
}

inline RunOutcome execute(const ExperimentConfig& cfg, const fs::path& dir, std::ostream& err) {
  RunOutcome outcome;
  std::unique_ptr<Environment> env;
  try {
    env = make_environment(cfg);
  } catch (const EnvironmentFault& e) {
    err << "environment fault: " << e.what() << '\n';
    outcome.code = kFault;
    outcome.report.complete = false;
    outcome.report.error = e.what();
    return outcome;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    outcome.code = kUsage;
    return outcome;
  }
  outcome.report = run(*env, cfg.run);
  write_run_outputs(dir, cfg, outcome.report);
  if (!outcome.report.complete) {
    err << "environment fault: " << outcome.report.error << " (partial report in " << dir.string() << ")\n";
    outcome.code = kFault;
  }
  return outcome;
}

inline bool load(const fs::path& path, ExperimentConfig& cfg, std::ostream& err) {
  try {
    cfg = load_config(path);
    return true;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return false;
  }
}

inline int cmd_run(const fs::path& config_path, std::optional<std::uint64_t> seed, std::optional<fs::path> out_dir,
                   std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  if (!load(config_path, cfg, err)) return kUsage;
  if (seed) cfg.run.seed = *seed;
  if (out_dir) cfg.output_directory = fs::absolute(*out_dir).lexically_normal();
  const auto outcome = execute(cfg, cfg.output_directory, err);
  if (outcome.code == kUsage) return kUsage;
  const auto& r = outcome.report;
  out << "method " << to_string(r.method) << ", seed " << r.seed << ": ";
  if (r.best)
    out << "best M " << format_double(r.best->value);
  else
    out << "no generator evaluation";
  out << ", cycles " << r.completed_cycles() << ", spent " << format_double(r.spent) << '\n';
  out << "outputs in " << cfg.output_directory.string() << '\n';
  return outcome.code;
}

inline int cmd_validate_config(const fs::path& config_path, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  if (!load(config_path, cfg, err)) return kUsage;
  out << to_json(cfg).dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// Repeated runs and summaries

struct Variant {
  std::string label;
  ExperimentConfig cfg;
};

/// Named methods accepted by compare.
inline ExperimentConfig apply_method(ExperimentConfig cfg, const std::string& name) {
  if (name == "cds") {
    cfg.run.method = MethodKind::cds;
  } else if (name == "cds-noseed") {
    cfg.run.method = MethodKind::cds;
    cfg.run.seeding = false;
  } else if (name == "joint") {
    cfg.run.method = MethodKind::joint;
  } else if (name == "random") {
    cfg.run.method = MethodKind::joint;
    cfg.run.optimizer.kind = OptimizerKind::random;
  } else {
    throw ConfigError("unknown method '" + name + "' (expected cds, cds-noseed, joint, random)");
  }
  return cfg;
}

struct SummaryRow {
  std::string label;
  std::vector<double> finals;
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
  std::size_t wins = 0;
  std::size_t losses = 0;
};

/// Wins and losses count paired seeds against the first row.
inline std::vector<SummaryRow> summarize(const std::vector<std::pair<std::string, std::vector<double>>>& results) {
  std::vector<SummaryRow> rows;
  for (const auto& [label, finals] : results) {
    SummaryRow row;
    row.label = label;
    row.finals = finals;
    row.mean = stats::mean(finals);
    row.std = stats::stddev(finals);
    row.median = stats::median(finals);
    rows.push_back(std::move(row));
  }
  if (!rows.empty()) {
    const auto& ref = rows.front().finals;
    for (auto& row : rows) {
      for (std::size_t i = 0; i < row.finals.size() && i < ref.size(); ++i) {
        if (row.finals[i] > ref[i]) ++row.wins;
        if (row.finals[i] < ref[i]) ++row.losses;
      }
    }
  }
  return rows;
}

inline void write_summary_csv(std::ostream& out, const std::string& key, const std::vector<SummaryRow>& rows) {
  out << key << ",runs,mean,std,median,wins_vs_first,losses_vs_first\n";
  for (const auto& r : rows)
    out << r.label << ',' << r.finals.size() << ',' << format_double(r.mean) << ',' << format_double(r.std) << ','
        << format_double(r.median) << ',' << r.wins << ',' << r.losses << '\n';
}

inline void write_summary_table(std::ostream& out, const std::string& key, const std::vector<SummaryRow>& rows) {
  std::size_t width = key.size();
  for (const auto& r : rows) width = std::max(width, r.label.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %5s %10s %10s %10s %5s %6s\n", static_cast<int>(width), key.c_str(), "runs",
                "mean", "std", "median", "wins", "losses");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %5zu %10.6f %10.6f %10.6f %5zu %6zu\n", static_cast<int>(width),
                  r.label.c_str(), r.finals.size(), r.mean, r.std, r.median, r.wins, r.losses);
    out << buf;
  }
}

/// Runs every variant for seeds seed_base .. seed_base + repeats - 1. Each
/// run writes into dir/<label>/seed-<s>; runs.csv grows as runs finish so a
/// failed comparison leaves its partial results behind.
inline int run_variants(const std::vector<Variant>& variants, std::size_t repeats, std::uint64_t seed_base,
                        const fs::path& dir, const std::string& key, std::ostream& out, std::ostream& err) {
  if (repeats < 2) {
    err << "usage error: --repeats must be >= 2\n";
    return kUsage;
  }
  fs::create_directories(dir);
  std::ofstream runs(dir / "runs.csv");
  runs << key << ",seed,final_best,cycles_completed,spent,retrieval_fraction,complete\n";
  std::vector<std::pair<std::string, std::vector<double>>> results;
  for (const auto& v : variants) {
    std::vector<double> finals;
    for (std::size_t i = 0; i < repeats; ++i) {
      auto cfg = v.cfg;
      cfg.run.seed = seed_base + i;
      const auto run_dir = dir / v.label / ("seed-" + std::to_string(cfg.run.seed));
      cfg.output_directory = run_dir;
      const auto outcome = execute(cfg, run_dir, err);
      if (outcome.code == kUsage) return kUsage;
      const auto& r = outcome.report;
      runs << v.label << ',' << cfg.run.seed << ',' << format_double(r.final_best()) << ',' << r.completed_cycles()
           << ',' << format_double(r.spent) << ',' << format_double(r.retrieval_fraction()) << ','
           << (r.complete ? "true" : "false") << '\n';
      runs.flush();
      if (outcome.code != kOk) {
        err << "aborting: run " << v.label << " seed " << cfg.run.seed << " failed; partial results in "
            << (dir / "runs.csv").string() << '\n';
        return outcome.code;
      }
      finals.push_back(r.final_best());
    }
    results.emplace_back(v.label, std::move(finals));
  }
  const auto rows = summarize(results);
  {
    std::ofstream csv(dir / "summary.csv");
    write_summary_csv(csv, key, rows);
  }
  write_summary_table(out, key, rows);
  std::ostringstream table;
  write_summary_table(table, key, rows);
  std::ofstream(dir / "summary.txt") << table.str();
  return kOk;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline int cmd_compare(const fs::path& config_path, const std::vector<std::string>& methods, std::size_t repeats,
                       std::uint64_t seed_base, std::optional<fs::path> out_dir, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  if (!load(config_path, cfg, err)) return kUsage;
  if (methods.empty()) {
    err << "usage error: --methods is empty\n";
    return kUsage;
  }
  std::vector<Variant> variants;
  try {
    for (const auto& m : methods) variants.push_back({m, apply_method(cfg, m)});
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  const fs::path dir = out_dir ? *out_dir : cfg.output_directory / "compare";
  return run_variants(variants, repeats, seed_base, dir, "method", out, err);
}

inline int cmd_sweep_n(const fs::path& config_path, const std::vector<std::size_t>& values, std::size_t repeats,
                       std::uint64_t seed_base, std::optional<fs::path> out_dir, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  if (!load(config_path, cfg, err)) return kUsage;
  if (values.empty()) {
    err << "usage error: --values is empty\n";
    return kUsage;
  }
  std::vector<Variant> variants;
  for (auto n : values) {
    if (n < 2) {
      err << "usage error: N must be >= 2, got " << n << '\n';
      return kUsage;
    }
    auto v = cfg;
    v.run.method = MethodKind::cds;
    v.run.generator_cap_n = n;
    variants.push_back({"N=" + std::to_string(n), v});
  }
  const fs::path dir = out_dir ? *out_dir : cfg.output_directory / "sweep-n";
  return run_variants(variants, repeats, seed_base, dir, "N", out, err);
}

// ---------------------------------------------------------------------------
// Report over a finished run directory

inline std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline int cmd_report(const fs::path& dir, std::ostream& out, std::ostream& err) {
  nlohmann::json summary;
  std::vector<nlohmann::json> archive, cycles;
  std::vector<ArchiveRecord> records;
  try {
    std::ifstream in(dir / "report.json");
    if (!in) throw std::runtime_error("cannot open '" + (dir / "report.json").string() + "'");
    summary = nlohmann::json::parse(in);
    archive = read_jsonl(dir / "archive.jsonl");
    cycles = read_jsonl(dir / "cycles.jsonl");
    for (const auto& a : archive) {
      ArchiveRecord r;
      r.cycle = a.at("cycle").get<std::size_t>();
      r.value = a.at("value").get<double>();
      r.cost = a.at("cost").get<double>();
      if (!a.at("context_precision").is_null()) r.context_precision = a.at("context_precision").get<double>();
      records.push_back(std::move(r));
    }
    summary.at("retrieval_fraction").get<double>();
    summary.at("cycles_completed").get<std::size_t>();
  } catch (const std::exception& e) {
    err << "report error: " << e.what() << '\n';
    return kUsage;
  }

  out << "run: method " << summary.value("method", "?") << ", seed " << summary.value("seed", 0)
      << (summary.value("complete", false) ? "" : " (INCOMPLETE)") << '\n';
  if (summary.contains("best") && !summary["best"].is_null())
    out << "best M: " << format_double(summary["best"]["value"].get<double>()) << '\n';
  out << "cycles completed T: " << summary["cycles_completed"].get<std::size_t>() << '\n';
  if (!cycles.empty()) {
    out << "retriever evaluations per cycle:";
    for (const auto& c : cycles) out << ' ' << c.at("retriever_evals").size();
    out << '\n';
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "budget spent on retrieval-only evaluations: %.1f%%\n",
                100.0 * summary["retrieval_fraction"].get<double>());
  out << buf;

  std::ofstream pairs(dir / "pairs.csv");
  pairs << "precision,quality\n";
  try {
    const auto corr = correlation_report(records);
    for (const auto& [p, m] : corr.pairs) pairs << format_double(p) << ',' << format_double(m) << '\n';
    out << "P-M pairs: " << corr.pairs.size() << '\n';
    out << "pearson: " << (corr.pearson ? format_double(*corr.pearson) : "unavailable") << '\n';
    out << "spearman: " << (corr.spearman ? format_double(*corr.spearman) : "unavailable") << '\n';
    if (!corr.note.empty()) out << "note: " << corr.note << '\n';
  } catch (const std::invalid_argument& e) {
    out << "correlation unavailable: " << e.what() << '\n';
  }
  return kOk;
}

}  // namespace dualcycle::cli
