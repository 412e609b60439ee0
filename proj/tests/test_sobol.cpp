#include <gtest/gtest.h>

#include <array>
#include <set>

#include "dualcycle/sobol.hpp"
#include "support.hpp"

using namespace dualcycle;

namespace {

double coord(std::uint64_t index, std::size_t dim) { return sobol_digits(index, dim) * 0x1.0p-32; }

// Unscrambled values from scipy.stats.qmc.Sobol(d=32, scramble=False), which
// uses the same Joe-Kuo direction numbers.
struct Frozen {
  std::uint64_t index;
  std::array<double, 6> values;  // dims 0, 1, 2, 6, 15, 31
};

constexpr std::array<std::size_t, 6> kDims{0, 1, 2, 6, 15, 31};

constexpr std::array<Frozen, 7> kFrozen{{
    {1, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}},
    {2, {0.75, 0.25, 0.25, 0.25, 0.25, 0.25}},
    {3, {0.25, 0.75, 0.75, 0.75, 0.75, 0.75}},
    {4, {0.375, 0.375, 0.625, 0.375, 0.875, 0.125}},
    {5, {0.875, 0.875, 0.125, 0.875, 0.375, 0.625}},
    {100, {0.4140625, 0.2578125, 0.7734375, 0.0234375, 0.4921875, 0.4140625}},
    {1000, {0.2197265625, 0.0966796875, 0.5185546875, 0.0458984375, 0.3701171875, 0.1455078125}},
}};

std::size_t occupied_boxes(const std::vector<std::vector<double>>& pts, unsigned a, unsigned b) {
  std::set<std::pair<std::uint64_t, std::uint64_t>> boxes;
  for (const auto& p : pts)
    boxes.emplace(static_cast<std::uint64_t>(p[0] * (1u << a)), static_cast<std::uint64_t>(p[1] * (1u << b)));
  return boxes.size();
}

}  // namespace

TEST(Sobol, MatchesScipyUnscrambled) {
  for (const auto& f : kFrozen)
    for (std::size_t i = 0; i < kDims.size(); ++i)
      EXPECT_EQ(coord(f.index, kDims[i]), f.values[i]) << "index " << f.index << " dim " << kDims[i];
}

TEST(Sobol, FirstThreeOneDimensionalPoints) {
  SobolStream s(1, std::nullopt);
  EXPECT_EQ(s.next_point()[0], 0.5);
  EXPECT_EQ(s.next_point()[0], 0.75);
  EXPECT_EQ(s.next_point()[0], 0.25);
}

TEST(Sobol, UnscrambledStreamSkipsOriginScrambledDoesNot) {
  EXPECT_EQ(SobolStream(2, std::nullopt).next_index(), 1u);
  EXPECT_EQ(SobolStream(2, 7).next_index(), 0u);
  EXPECT_EQ(coord(0, 0), 0.0);
}

TEST(Sobol, UnscrambledFirst1024FormNetForEveryShape) {
  std::vector<std::vector<double>> pts;
  for (std::uint64_t i = 0; i < 1024; ++i) pts.push_back({coord(i, 0), coord(i, 1)});
  for (unsigned a = 0; a <= 10; ++a) EXPECT_EQ(occupied_boxes(pts, a, 10 - a), 1024u) << "shape a=" << a;
}

TEST(Sobol, ScrambledBlocksFormNets) {
  for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
    SobolStream s(2, seed);
    for (int block = 0; block < 2; ++block) {
      std::vector<std::vector<double>> pts;
      for (int i = 0; i < 1024; ++i) pts.push_back(s.next_point());
      EXPECT_EQ(occupied_boxes(pts, 5, 5), 1024u) << "seed " << seed << " block " << block;
      EXPECT_EQ(occupied_boxes(pts, 10, 0), 1024u);
      EXPECT_EQ(occupied_boxes(pts, 3, 7), 1024u);
    }
  }
}

TEST(Sobol, ScramblingChangesPointsAndIsSeeded) {
  SobolStream a(4, 1), b(4, 1), c(4, 2);
  bool differs = false;
  for (int i = 0; i < 64; ++i) {
    const auto pa = a.next_point();
    EXPECT_EQ(pa, b.next_point());
    differs = differs || pa != c.next_point();
    for (double x : pa) {
      EXPECT_GE(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Sobol, MarginalUniformityChiSquare) {
  // 16 bins, 15 degrees of freedom; critical value at 0.001 is 37.697.
  SobolStream s(7, 2024);
  std::vector<std::array<int, 16>> bins(7);
  for (auto& b : bins) b.fill(0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto p = s.next_point();
    for (std::size_t d = 0; d < 7; ++d) ++bins[d][static_cast<std::size_t>(p[d] * 16)];
  }
  for (std::size_t d = 0; d < 7; ++d) {
    double chi2 = 0.0;
    for (int c : bins[d]) chi2 += (c - n / 16.0) * (c - n / 16.0) / (n / 16.0);
    EXPECT_LT(chi2, 37.697) << "dim " << d;
  }
}

TEST(Sobol, CenteredDiscrepancyOracle) {
  // scipy.stats.qmc.discrepancy(method="CD") returns the squared value.
  const std::vector<std::vector<double>> pts{{0.1, 0.2}, {0.4, 0.9}, {0.75, 0.3}, {0.5, 0.5}, {0.95, 0.05}};
  const double cd = dualcycle::testing::centered_l2_discrepancy(pts);
  EXPECT_NEAR(cd * cd, 0.03928548611111049, 1e-14);
}

TEST(Sobol, DimensionLimits) {
  EXPECT_THROW(SobolStream(0, std::nullopt), std::invalid_argument);
  EXPECT_THROW(SobolStream(33, std::nullopt), std::invalid_argument);
  EXPECT_NO_THROW(SobolStream(32, std::nullopt));
}

TEST(Sobol, RetrieverConfigsValidate) {
  const auto space = default_rag_space();
  SobolStream s(7, 3);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(validate(space.retriever_view(), next_retriever_config(s, space)).empty());
  SobolStream wrong(3, 3);
  EXPECT_THROW(next_retriever_config(wrong, space), std::invalid_argument);
}
