#pragma once

// Cross-cycle generator archive: de-duplication with value averaging,
// reciprocal-rank seed selection, and re-evaluation under fresh contexts.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "environment.hpp"
#include "optimizer.hpp"
#include "rng.hpp"
#include "scheduler.hpp"

namespace dualcycle {

enum class SeedOrigin { archive_seed, random_seed, optimizer };

inline const char* to_string(SeedOrigin o) {
  switch (o) {
    case SeedOrigin::archive_seed: return "archive_seed";
    case SeedOrigin::random_seed: return "random_seed";
    case SeedOrigin::optimizer: return "optimizer";
  }
  return "?";
}

/// One raw generator evaluation as stored in the archive.
struct ArchiveRecord {
  std::size_t cycle = 0;
  Configuration cfg;
  double value = 0.0;
  double cost = 0.0;
  SeedOrigin origin = SeedOrigin::optimizer;
  std::optional<double> context_precision;  // P of the contexts it was generated from
};

struct ArchiveEntry {
  std::string key;
  Configuration cfg;
  std::vector<std::pair<std::size_t, double>> values;  // (cycle, M)
  double mean_value = 0.0;
};

/// Groups records by canonical key; sorted by mean descending, then key.
inline std::vector<ArchiveEntry> deduplicate(std::span<const ArchiveRecord> records) {
  std::map<std::string, ArchiveEntry> by_key;
  for (const auto& r : records) {
    auto key = canonical_key(r.cfg);
    auto [it, fresh] = by_key.try_emplace(key);
    if (fresh) {
      it->second.key = key;
      it->second.cfg = r.cfg;
    }
    it->second.values.emplace_back(r.cycle, r.value);
  }
  std::vector<ArchiveEntry> out;
  for (auto& [key, e] : by_key) {
    double sum = 0.0;
    for (const auto& v : e.values) sum += v.second;
    e.mean_value = sum / static_cast<double>(e.values.size());
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(), [](const ArchiveEntry& a, const ArchiveEntry& b) {
    if (a.mean_value != b.mean_value) return a.mean_value > b.mean_value;
    return a.key < b.key;
  });
  return out;
}

/// Top half of the de-duplicated archive, rounded up.
inline std::size_t seed_pool_size(std::size_t entries) { return (entries + 1) / 2; }

/// p_i = (1/r_i) / sum_j (1/r_j) for ranks 1..J.
inline std::vector<double> seed_probabilities(std::size_t j) {
  std::vector<double> p(j);
  double total = 0.0;
  for (std::size_t r = 1; r <= j; ++r) total += 1.0 / static_cast<double>(r);
  for (std::size_t r = 1; r <= j; ++r) p[r - 1] = (1.0 / static_cast<double>(r)) / total;
  return p;
}

inline std::vector<double> seed_probabilities(std::span<const ArchiveEntry> pool) {
  return seed_probabilities(pool.size());
}

/// Draws one index from unnormalized weights.
inline std::size_t sample_index(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double r = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (r < weights[i]) return i;
    r -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  throw std::invalid_argument("sample_index: no positive weight");
}

struct SeedPlan {
  std::vector<Configuration> archive_seeds;
  std::vector<Configuration> random_seeds;

  std::size_t size() const { return archive_seeds.size() + random_seeds.size(); }
};

/// Archive seeds are drawn without replacement from the top-half pool by
/// reciprocal rank; any shortfall is filled with extra random seeds.
inline SeedPlan draw_seed_plan(std::span<const ArchiveEntry> entries, const GeneratorAllowance& allowance, Rng& rng,
                               const SpaceView& generator_view) {
  SeedPlan plan;
  const std::size_t j = seed_pool_size(entries.size());
  auto weights = seed_probabilities(j);
  const std::size_t take = std::min(allowance.archive_seed_count, j);
  for (std::size_t n = 0; n < take; ++n) {
    const auto i = sample_index(weights, rng);
    plan.archive_seeds.push_back(entries[i].cfg);
    weights[i] = 0.0;
  }
  const std::size_t randoms = allowance.seed_count - plan.archive_seeds.size();
  for (std::size_t n = 0; n < randoms; ++n) {
    std::vector<double> u(generator_view.size());
    for (auto& x : u) x = rng.uniform();
    plan.random_seeds.push_back(unit_cube_map(generator_view, u));
  }
  return plan;
}

/// Evaluates every seed against one context handle, archive seeds first.
/// Stops early if the ledger can no longer afford a generation. Each record
/// is appended to the archive and passed to on_eval.
inline std::vector<Observation> reevaluate_seeds(const SeedPlan& plan, Environment& env, const std::string& handle,
                                                 std::uint64_t run_seed, BudgetLedger& ledger,
                                                 std::vector<ArchiveRecord>& archive, std::size_t cycle,
                                                 const std::function<void(const ArchiveRecord&)>& on_eval = {}) {
  std::vector<Observation> out;
  auto eval = [&](const Configuration& theta, SeedOrigin origin) {
    if (!ledger.can_afford(env.info().generate_cost_hint)) return false;
    const auto g = env.generate(theta, handle, run_seed);
    ledger.charge(Charge::generation, g.cost);
    archive.push_back({cycle, theta, g.quality, g.cost, origin});
    if (on_eval) on_eval(archive.back());
    out.push_back({theta, g.quality});
    return true;
  };
  for (const auto& s : plan.archive_seeds)
    if (!eval(s, SeedOrigin::archive_seed)) return out;
  for (const auto& s : plan.random_seeds)
    if (!eval(s, SeedOrigin::random_seed)) return out;
  return out;
}

}  // namespace dualcycle
