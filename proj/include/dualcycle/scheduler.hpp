#pragma once

// Within-cycle budget provisioning: the adaptive retriever stopping threshold,
// the fixed generator allowance, and global budget accounting.

#include <chrono>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stats.hpp"

namespace dualcycle {

enum class BudgetMode { cost_units, wall_clock };

inline const char* to_string(BudgetMode m) { return m == BudgetMode::cost_units ? "cost_units" : "wall_clock"; }

enum class Charge { retrieval, generation };

/// Total budget and running spend. In cost mode an evaluation may start only
/// if its cost hint still fits; in wall-clock mode only while time remains.
class BudgetLedger {
 public:
  using Clock = std::function<double()>;

  BudgetLedger(double total, BudgetMode mode, Clock clock = {}) : total_(total), mode_(mode), clock_(std::move(clock)) {
    if (!(total >= 0.0)) throw std::invalid_argument("budget must be non-negative");
    if (!clock_) {
      const auto start = std::chrono::steady_clock::now();
      clock_ = [start] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    }
  }

  double total() const { return total_; }
  BudgetMode mode() const { return mode_; }
  double spent() const { return retrieval_ + generation_; }
  double retrieval_spent() const { return retrieval_; }
  double generation_spent() const { return generation_; }
  double elapsed_s() const { return clock_(); }

  /// Budget consumption in the ledger's own unit.
  double used() const { return mode_ == BudgetMode::cost_units ? spent() : elapsed_s(); }

  bool can_afford(double cost_hint) const {
    if (mode_ == BudgetMode::wall_clock) return elapsed_s() < total_;
    return spent() + cost_hint <= total_ + 1e-9;
  }

  void charge(Charge kind, double cost) {
    if (!(cost >= 0.0)) throw std::invalid_argument("cost must be non-negative");
    (kind == Charge::retrieval ? retrieval_ : generation_) += cost;
  }

  /// Share of spend that went to retrieval.
  double retrieval_fraction() const { return spent() > 0.0 ? retrieval_ / spent() : 0.0; }

 private:
  double total_;
  BudgetMode mode_;
  Clock clock_;
  double retrieval_ = 0.0;
  double generation_ = 0.0;
};

/// Delta = P_best * (1 - t/(t+beta)) + P_95 * t/(t+beta).
inline double plateau_delta(double p_best, double p95, std::size_t t, double beta) {
  const double w = static_cast<double>(t) / (static_cast<double>(t) + beta);
  return p_best * (1.0 - w) + p95 * w;
}

/// P_ideal = alpha * median(current) + (1 - alpha) * Delta.
inline double ideal_threshold(double current_median, double p_best, double p95, std::size_t t, double alpha,
                              double beta) {
  return alpha * current_median + (1.0 - alpha) * plateau_delta(p_best, p95, t, beta);
}

inline double update_ideal(std::span<const double> current, std::span<const double> global, std::size_t t,
                           double alpha, double beta) {
  if (current.empty()) throw std::invalid_argument("no retriever evaluation in the current cycle");
  if (global.empty()) throw std::invalid_argument("empty retrieval history");
  return ideal_threshold(stats::median(current), stats::max(global), stats::quantile(global, 0.95), t, alpha, beta);
}

struct PlateauSettings {
  double alpha = 0.5;
  double beta = 2.0;
  std::size_t max_retriever_evals_per_cycle = 20;
  bool adaptive = true;  // false: always spend the full per-cycle cap

  void check() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (max_retriever_evals_per_cycle < 1) throw std::invalid_argument("max_retriever_evals_per_cycle must be >= 1");
  }
};

class PlateauState {
 public:
  explicit PlateauState(PlateauSettings settings) : settings_(settings) { settings_.check(); }

  void begin_cycle(std::size_t t) {
    if (t < 1) throw std::invalid_argument("cycle index is 1-based");
    t_ = t;
    current_.clear();
  }

  /// Records a retriever evaluation and recomputes P_ideal.
  double record(double p) {
    current_.push_back(p);
    global_.push_back(p);
    ideal_ = update_ideal(current_, global_, t_, settings_.alpha, settings_.beta);
    return ideal_;
  }

  /// The threshold comparison allows 1e-12 of rounding slack, so a value that
  /// equals P_ideal in exact arithmetic always stops.
  bool should_stop(double latest_p, bool budget_exhausted) const {
    if (budget_exhausted || current_.size() >= settings_.max_retriever_evals_per_cycle) return true;
    return settings_.adaptive && latest_p >= ideal_ - kStopTolerance;
  }

  static constexpr double kStopTolerance = 1e-12;

  double ideal() const { return ideal_; }
  std::size_t cycle() const { return t_; }
  const std::vector<double>& current() const { return current_; }
  const std::vector<double>& global() const { return global_; }
  const PlateauSettings& settings() const { return settings_; }

 private:
  PlateauSettings settings_;
  std::size_t t_ = 1;
  std::vector<double> current_;
  std::vector<double> global_;
  double ideal_ = 0.0;
};

struct GeneratorAllowance {
  std::size_t seed_count = 0;
  std::size_t archive_seed_count = 0;
  std::size_t random_seed_count = 0;
  std::size_t optimizer_evals = 0;

  bool operator==(const GeneratorAllowance&) const = default;
};

/// Half of N is seeded (rounded down), a quarter from the archive (rounded
/// down); random seeds take the remainder.
inline GeneratorAllowance generator_allowance(std::size_t n) {
  if (n < 2) throw std::invalid_argument("generator cap N must be >= 2, got " + std::to_string(n));
  GeneratorAllowance a;
  a.seed_count = n / 2;
  a.archive_seed_count = n / 4;
  a.random_seed_count = a.seed_count - a.archive_seed_count;
  a.optimizer_evals = n - a.seed_count;
  return a;
}

}  // namespace dualcycle
