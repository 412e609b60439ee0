#include <gtest/gtest.h>

#include <set>

#include "dualcycle/seeding.hpp"
#include "support.hpp"

using namespace dualcycle;
using dualcycle::testing::ScriptedEnvironment;
using dualcycle::testing::small_space;

namespace {

Configuration theta_at(double g, const char* cat) {
  return {Scope::generator, {{"g_float", g}, {"g_cat", std::string(cat)}}};
}

std::vector<ArchiveEntry> entries_with_values(std::size_t n) {
  std::vector<ArchiveRecord> records;
  for (std::size_t i = 0; i < n; ++i)
    records.push_back({1, theta_at(static_cast<double>(i) / static_cast<double>(n), "a"), 1.0 - 0.01 * i, 2.0});
  return deduplicate(records);
}

ScriptedEnvironment scripted() {
  return ScriptedEnvironment(
      small_space(), [](const std::vector<double>& u) { return u[0]; },
      [](const std::vector<double>& u, double p) { return p * u[0]; });
}

}  // namespace

TEST(Deduplicate, AveragesRepeatedConfigurations) {
  std::vector<ArchiveRecord> records{{1, theta_at(0.5, "a"), 0.4, 2.0}, {2, theta_at(0.5, "a"), 0.6, 2.0}};
  const auto e = deduplicate(records);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_DOUBLE_EQ(e[0].mean_value, 0.5);
  EXPECT_EQ(e[0].values, (std::vector<std::pair<std::size_t, double>>{{1, 0.4}, {2, 0.6}}));
}

TEST(Deduplicate, DistinctKeysAndEmpty) {
  std::vector<ArchiveRecord> records{
      {1, theta_at(0.1, "a"), 0.3, 2.0}, {1, theta_at(0.2, "a"), 0.9, 2.0}, {2, theta_at(0.1, "b"), 0.5, 2.0}};
  const auto e = deduplicate(records);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].mean_value, 0.9);
  EXPECT_EQ(e[1].mean_value, 0.5);
  EXPECT_EQ(e[2].mean_value, 0.3);
  EXPECT_TRUE(deduplicate(std::vector<ArchiveRecord>{}).empty());
}

TEST(Deduplicate, EqualMeansOrderedByKey) {
  std::vector<ArchiveRecord> records{{1, theta_at(0.9, "a"), 0.5, 2.0}, {1, theta_at(0.1, "a"), 0.5, 2.0}};
  const auto e = deduplicate(records);
  EXPECT_LT(e[0].key, e[1].key);
}

TEST(SeedProbabilities, Examples) {
  EXPECT_EQ(seed_probabilities(1), std::vector<double>{1.0});
  const auto two = seed_probabilities(2);
  EXPECT_NEAR(two[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(two[1], 1.0 / 3.0, 1e-15);
  const auto three = seed_probabilities(3);
  EXPECT_NEAR(three[0], 6.0 / 11.0, 1e-15);
  EXPECT_NEAR(three[1], 3.0 / 11.0, 1e-15);
  EXPECT_NEAR(three[2], 2.0 / 11.0, 1e-15);
  EXPECT_TRUE(seed_probabilities(0).empty());
}

TEST(SeedProbabilities, NormalizedAndDecreasing) {
  for (std::size_t j = 1; j <= 200; ++j) {
    const auto p = seed_probabilities(j);
    double sum = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      sum += p[r];
      if (r > 0) EXPECT_LT(p[r], p[r - 1]);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(SeedProbabilities, EmpiricalFrequencies) {
  const auto p = seed_probabilities(4);
  Rng rng(17);
  std::vector<int> counts(4, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[sample_index(p, rng)];
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(counts[r] / static_cast<double>(draws), p[r], 0.005);
  EXPECT_THROW(sample_index(std::vector<double>{0.0, 0.0}, rng), std::invalid_argument);
}

TEST(SeedPool, HalfRoundedUp) {
  EXPECT_EQ(seed_pool_size(0), 0u);
  EXPECT_EQ(seed_pool_size(1), 1u);
  EXPECT_EQ(seed_pool_size(2), 1u);
  EXPECT_EQ(seed_pool_size(5), 3u);
  EXPECT_EQ(seed_pool_size(10), 5u);
}

TEST(SeedPlan, BackfillsWithRandomSeeds) {
  const auto view = small_space().generator_view();
  const auto allowance = generator_allowance(10);
  Rng rng(1);
  const auto one = entries_with_values(2);  // J = 1
  const auto plan = draw_seed_plan(one, allowance, rng, view);
  EXPECT_EQ(plan.archive_seeds.size(), 1u);
  EXPECT_EQ(plan.random_seeds.size(), 4u);
  EXPECT_EQ(canonical_key(plan.archive_seeds[0]), one[0].key);

  const auto none = draw_seed_plan(std::vector<ArchiveEntry>{}, allowance, rng, view);
  EXPECT_EQ(none.archive_seeds.size(), 0u);
  EXPECT_EQ(none.random_seeds.size(), 5u);
  EXPECT_EQ(none.size(), 5u);
  for (const auto& s : none.random_seeds) EXPECT_TRUE(validate(view, s).empty());
}

TEST(SeedPlan, ArchiveSeedsAreDistinctAndFromTopHalf) {
  const auto view = small_space().generator_view();
  const auto entries = entries_with_values(12);  // J = 6
  std::set<std::string> top;
  for (std::size_t i = 0; i < 6; ++i) top.insert(entries[i].key);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto plan = draw_seed_plan(entries, generator_allowance(20), rng, view);  // 5 archive seeds
    ASSERT_EQ(plan.archive_seeds.size(), 5u);
    std::set<std::string> keys;
    for (const auto& s : plan.archive_seeds) {
      keys.insert(canonical_key(s));
      EXPECT_TRUE(top.count(canonical_key(s)));
    }
    EXPECT_EQ(keys.size(), 5u);
    EXPECT_EQ(plan.random_seeds.size(), 5u);
  }
}

TEST(SeedPlan, DeterministicForASeed) {
  const auto view = small_space().generator_view();
  const auto entries = entries_with_values(9);
  Rng a(42), b(42);
  const auto pa = draw_seed_plan(entries, generator_allowance(10), a, view);
  const auto pb = draw_seed_plan(entries, generator_allowance(10), b, view);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.archive_seeds.size(); ++i)
    EXPECT_EQ(canonical_key(pa.archive_seeds[i]), canonical_key(pb.archive_seeds[i]));
  for (std::size_t i = 0; i < pa.random_seeds.size(); ++i)
    EXPECT_EQ(canonical_key(pa.random_seeds[i]), canonical_key(pb.random_seeds[i]));
}

TEST(Reevaluate, UsesOnlyTheCurrentContext) {
  auto env = scripted();
  const auto r = env.retrieve({Scope::retriever, {{"r_float", 0.8}, {"r_int", std::int64_t{3}}}}, 0);
  env.transcript.clear();
  Rng rng(5);
  const auto plan = draw_seed_plan(entries_with_values(4), generator_allowance(10), rng, env.info().space.generator_view());
  BudgetLedger ledger(100.0, BudgetMode::cost_units);
  std::vector<ArchiveRecord> archive;
  int callbacks = 0;
  const auto obs = reevaluate_seeds(plan, env, r.context_handle, 0, ledger, archive, 3,
                                    [&](const ArchiveRecord&) { ++callbacks; });
  EXPECT_EQ(obs.size(), 5u);
  EXPECT_EQ(callbacks, 5);
  EXPECT_EQ(env.transcript.size(), 5u);
  for (const auto& line : env.transcript) EXPECT_EQ(line, "generate " + r.context_handle);
  EXPECT_DOUBLE_EQ(ledger.generation_spent(), 10.0);
  EXPECT_EQ(ledger.retrieval_spent(), 0.0);
  ASSERT_EQ(archive.size(), 5u);
  EXPECT_EQ(archive[0].origin, SeedOrigin::archive_seed);
  EXPECT_EQ(archive[1].origin, SeedOrigin::archive_seed);
  for (std::size_t i = 2; i < 5; ++i) EXPECT_EQ(archive[i].origin, SeedOrigin::random_seed);
  for (const auto& rec : archive) EXPECT_EQ(rec.cycle, 3u);
  // Re-evaluated values reflect the new context, not the archived means.
  EXPECT_DOUBLE_EQ(obs[0].value, 0.8 * to_unit(env.info().space.generator_view(), obs[0].cfg)[0]);
}

TEST(Reevaluate, StopsWhenBudgetRunsOut) {
  auto env = scripted();
  const auto r = env.retrieve({Scope::retriever, {{"r_float", 0.5}, {"r_int", std::int64_t{1}}}}, 0);
  Rng rng(5);
  const auto plan = draw_seed_plan({}, generator_allowance(10), rng, env.info().space.generator_view());
  BudgetLedger ledger(5.0, BudgetMode::cost_units);
  std::vector<ArchiveRecord> archive;
  EXPECT_EQ(reevaluate_seeds(plan, env, r.context_handle, 0, ledger, archive, 1).size(), 2u);
  EXPECT_EQ(ledger.spent(), 4.0);
}
