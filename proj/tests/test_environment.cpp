#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dualcycle/external_env.hpp"
#include "dualcycle/filerag_env.hpp"
#include "dualcycle/stats.hpp"
#include "dualcycle/synthetic_env.hpp"

using namespace dualcycle;

namespace {

Configuration random_cfg(const SpaceView& view, Rng& rng) {
  std::vector<double> u(view.size());
  for (auto& x : u) x = rng.uniform();
  return unit_cube_map(view, u);
}

SyntheticParams quiet(double lambda = 0.9) {
  SyntheticParams p;
  p.link_strength = lambda;
  p.sigma_r = 0.0;
  p.sigma_g = 0.0;
  return p;
}

double spearman_over_joint_samples(const SyntheticParams& params, std::size_t n, std::uint64_t seed) {
  const auto space = default_rag_space();
  SyntheticEnvironment env(params, space);
  Rng rng(seed);
  std::vector<double> p, m;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = env.retrieve(random_cfg(space.retriever_view(), rng), seed);
    const auto g = env.generate(random_cfg(space.generator_view(), rng), r.context_handle, seed);
    p.push_back(r.precision);
    m.push_back(g.quality);
    env.release(r.context_handle);
  }
  return stats::spearman(p, m).value_or(0.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic surface

TEST(Synthetic, PrecisionMatchesAnalyticSurface) {
  const auto space = default_rag_space();
  SyntheticEnvironment env(quiet(), space);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto phi = random_cfg(space.retriever_view(), rng);
    const auto u = to_unit(space.retriever_view(), phi);
    const double expect = synthetic_p(u, env.category_offset(phi), 0.0, env.instance());
    EXPECT_NEAR(env.retrieve(phi, 0).precision, expect, 1e-12);
  }
}

TEST(Synthetic, ModeCenterAndFarField) {
  const auto inst = make_synthetic_instance(quiet(), default_rag_space());
  EXPECT_EQ(synthetic_p(inst.centers[0], 0.0, 0.0, inst), 1.0);
  // Far outside the unit cube every mode has vanished; only the offset remains.
  std::vector<double> far(inst.centers[0].size(), 50.0);
  EXPECT_NEAR(synthetic_p_clean(far, inst), 0.0, 1e-300);
  EXPECT_NEAR(synthetic_p(far, 0.3, 0.0, inst), 0.3, 1e-12);
}

TEST(Synthetic, LinkStrengthExtremes) {
  auto inst = make_synthetic_instance(quiet(1.0), default_rag_space());
  inst.sigma_g = 0.02;
  const auto& theta = inst.bump_center;
  EXPECT_NEAR(synthetic_m(0.0, theta, 1.5, inst), 0.03, 1e-15);  // noise only
  EXPECT_EQ(synthetic_m(0.0, theta, -1.0, inst), 0.0);
  inst.link_strength = 0.0;
  inst.sigma_g = 0.0;
  EXPECT_EQ(synthetic_m(0.1, theta, 0.0, inst), synthetic_m(0.9, theta, 0.0, inst));
}

TEST(Synthetic, KnownOptimumIsTheMaximumOnADenseGrid) {
  const auto inst = make_synthetic_instance(quiet(0.9), default_rag_space());
  const double best = synthetic_m(synthetic_p(inst.centers[0], 0.0, 0.0, inst), inst.bump_center, 0.0, inst);
  EXPECT_EQ(best, 1.0);
  // Coordinate-wise grid sweeps around random base points never exceed it.
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> phi(inst.centers[0].size()), theta(inst.bump_center.size());
    for (auto& x : phi) x = rng.uniform();
    for (auto& x : theta) x = rng.uniform();
    for (int g = 0; g <= 20; ++g) {
      phi[trial % phi.size()] = g / 20.0;
      const double m = synthetic_m(synthetic_p(phi, 0.0, 0.0, inst), theta, 0.0, inst);
      EXPECT_LE(m, best);
    }
  }
}

TEST(Synthetic, CorrelationInvariant) {
  for (double lambda : {0.6, 0.9}) {
    for (double sigma : {0.01, 0.05}) {
      for (std::uint64_t inst : {1, 2, 3}) {
        SyntheticParams p;
        p.link_strength = lambda;
        p.sigma_r = sigma;
        p.sigma_g = sigma;
        p.instance_seed = inst;
        EXPECT_GT(spearman_over_joint_samples(p, 500, 10 + inst), 0.5)
            << "lambda " << lambda << " sigma " << sigma << " instance " << inst;
      }
    }
  }
  SyntheticParams p;
  p.sigma_g = 0.02;
  EXPECT_GT(spearman_over_joint_samples(p, 200, 99), 0.5);
}

TEST(Synthetic, DeterminismContextReuseAndRelease) {
  const auto space = default_rag_space();
  SyntheticEnvironment a(SyntheticParams{}, space), b(SyntheticParams{}, space);
  Rng rng(2);
  const auto phi = random_cfg(space.retriever_view(), rng);
  const auto theta = random_cfg(space.generator_view(), rng);
  const auto ra = a.retrieve(phi, 5);
  const auto rb = b.retrieve(phi, 5);
  EXPECT_EQ(ra.precision, rb.precision);
  EXPECT_EQ(ra.cost, 1.0);
  const auto g1 = a.generate(theta, ra.context_handle, 5);
  const auto g2 = a.generate(theta, ra.context_handle, 5);
  EXPECT_EQ(g1.quality, g2.quality);
  EXPECT_EQ(g1.cost, 2.0);
  EXPECT_EQ(a.retrieve_calls(), 1u);
  EXPECT_EQ(a.generate_calls(), 2u);
  a.release(ra.context_handle);
  EXPECT_EQ(a.live_contexts(), 0u);
  EXPECT_THROW(a.generate(theta, ra.context_handle, 5), UnknownContext);
  EXPECT_THROW(a.generate(theta, "never-issued", 5), UnknownContext);
}

TEST(Synthetic, RejectsInvalidConfigurations) {
  const auto space = default_rag_space();
  SyntheticEnvironment env(SyntheticParams{}, space);
  Configuration bad{Scope::retriever, {{"Chunk Size", std::int64_t{10}}}};
  EXPECT_THROW(env.retrieve(bad, 0), std::invalid_argument);
  EXPECT_EQ(env.retrieve_calls(), 0u);
}

// ---------------------------------------------------------------------------
// File-backed toy RAG

namespace {

const std::filesystem::path kData = std::filesystem::path(DUALCYCLE_SOURCE_DIR) / "data";

FileRagEnvironment toy_env() {
  FileRagParams p;
  p.corpus = kData / "toy_corpus.jsonl";
  p.queries = kData / "toy_queries.jsonl";
  return FileRagEnvironment(p, default_rag_space());
}

Configuration phi_with(const SearchSpace& space, std::int64_t chunk, std::int64_t top_k) {
  auto phi = unit_cube_map(space.retriever_view(), std::vector<double>(7, 0.0));
  for (auto& a : phi.assignments) {
    if (a.name == "Chunk Size") a.value = chunk;
    if (a.name == "Embedding Window") a.value = std::int64_t{2048};
    if (a.name == "Embedding Top-k") a.value = top_k;
  }
  return phi;
}

Configuration theta_with(const SearchSpace& space, std::int64_t k, double temperature, std::int64_t window) {
  auto theta = unit_cube_map(space.generator_view(), std::vector<double>(5, 0.5));
  for (auto& a : theta.assignments) {
    if (a.name == "Retrieval Numbers") a.value = k;
    if (a.name == "Generation Temperature") a.value = temperature;
    if (a.name == "Generation Window") a.value = window;
  }
  return theta;
}

}  // namespace

TEST(FileRag, LargeChunksGiveOneChunkPerDocument) {
  const auto docs = load_corpus(kData / "toy_corpus.jsonl");
  std::size_t longest = 0;
  for (const auto& d : docs) longest = std::max(longest, d.text.size());
  ASSERT_LT(longest, 1024u);
  EXPECT_EQ(filerag_detail::make_chunks(docs, 1024, 32).size(), docs.size());
  EXPECT_GT(filerag_detail::make_chunks(docs, 256, 32).size(), docs.size());

  auto env = toy_env();
  const auto r = env.retrieve(phi_with(env.info().space, 1024, 100), 0);
  EXPECT_GE(r.precision, 0.0);
  EXPECT_LE(r.precision, 1.0);
  EXPECT_EQ(env.cached_chunks(r.context_handle, 0).size(), docs.size());
}

TEST(FileRag, RetrievalIsDeterministicAndRanksRelevantDocumentFirst) {
  auto env = toy_env();
  const auto phi = phi_with(env.info().space, 1024, 20);
  const auto a = env.retrieve(phi, 1);
  const auto b = env.retrieve(phi, 2);
  EXPECT_EQ(a.precision, b.precision);
  // Query 1 asks about soil pH; the soil document must lead the ranking.
  EXPECT_NE(env.cached_chunks(a.context_handle, 0).front().find("Soil pH"), std::string::npos);
}

TEST(FileRag, ZeroTemperatureIgnoresSeed) {
  auto env = toy_env();
  const auto& space = env.info().space;
  const auto r = env.retrieve(phi_with(space, 512, 20), 0);
  const auto theta = theta_with(space, 5, 0.0, 8192);
  for (std::size_t q = 0; q < env.info().query_count; ++q)
    EXPECT_EQ(env.answer(theta, r.context_handle, q, 1), env.answer(theta, r.context_handle, q, 2));
  EXPECT_EQ(env.generate(theta, r.context_handle, 1).quality, env.generate(theta, r.context_handle, 2).quality);
}

TEST(FileRag, SingleRelevantChunkMakesKIrrelevant) {
  std::vector<Document> docs{
      {"hit", "Barley malt is kilned at low heat. Kilning stops germination of the barley grain."},
      {"miss1", "Orchards need pruning in late winter."},
      {"miss2", "Tractors require regular oil changes."},
  };
  std::vector<QueryRecord> queries{{"q", "How is barley malt kilned?", "Barley malt is kilned at low heat.",
                                    "Barley malt is kilned at low heat. Kilning stops germination of the barley grain."}};
  FileRagParams p;
  FileRagEnvironment env(p, default_rag_space(), docs, queries);
  const auto& space = env.info().space;
  const auto r = env.retrieve(phi_with(space, 1024, 10), 0);
  const double f1_k1 = env.generate(theta_with(space, 1, 0.0, 8192), r.context_handle, 0).quality;
  const double f1_k10 = env.generate(theta_with(space, 10, 0.0, 8192), r.context_handle, 0).quality;
  EXPECT_EQ(f1_k1, f1_k10);
  EXPECT_GT(f1_k1, 0.5);
}

TEST(FileRag, GenerationWindowTruncatesAnswer) {
  auto env = toy_env();
  const auto& space = env.info().space;
  const auto r = env.retrieve(phi_with(space, 1024, 20), 0);
  const auto wide = env.answer(theta_with(space, 5, 0.0, 8192), r.context_handle, 0, 0);
  EXPECT_FALSE(wide.empty());
  EXPECT_LE(env.answer(theta_with(space, 5, 0.0, 512), r.context_handle, 0, 0).size(), 512u);
}

TEST(FileRag, ThetaKnobsChangeQuality) {
  auto env = toy_env();
  const auto& space = env.info().space;
  const auto r = env.retrieve(phi_with(space, 512, 20), 0);
  Rng rng(8);
  std::set<double> seen;
  for (int i = 0; i < 40; ++i)
    seen.insert(env.generate(random_cfg(space.generator_view(), rng), r.context_handle, 0).quality);
  EXPECT_GT(seen.size(), 3u);
}

TEST(FileRag, LoaderReportsLineNumbers) {
  const auto path = std::filesystem::temp_directory_path() / "dualcycle-bad-corpus.jsonl";
  {
    std::ofstream out(path);
    out << R"({"id":"a","text":"fine"})" << "\n" << "{broken\n";
  }
  try {
    load_corpus(path);
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
  EXPECT_THROW(load_corpus(kData / "missing.jsonl"), std::runtime_error);
}

// ---------------------------------------------------------------------------
// External adapter

namespace {

ExternalParams adapter(const std::string& mode, double timeout_s = 10.0) {
  ExternalParams p;
  p.command = {DUALCYCLE_FAKE_ADAPTER, mode};
  p.timeout_s = timeout_s;
  return p;
}

}  // namespace

TEST(External, HandshakeAndCalls) {
  ExternalEnvironment env(adapter("normal"));
  const auto& info = env.info();
  EXPECT_EQ(info.query_count, 2u);
  EXPECT_EQ(info.retrieve_cost_hint, 1.0);
  EXPECT_EQ(info.generate_cost_hint, 2.0);
  ASSERT_EQ(info.space.retriever_view().size(), 2u);
  ASSERT_EQ(info.space.generator_view().size(), 1u);

  Configuration phi{Scope::retriever, {{"a", 0.3}, {"b", std::int64_t{2}}}};
  const auto r = env.retrieve(phi, 7);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.context_handle, "c0");
  Configuration theta{Scope::generator, {{"t", 0.6}}};
  EXPECT_DOUBLE_EQ(env.generate(theta, r.context_handle, 7).quality, 1.0);
  EXPECT_THROW(env.generate(theta, "nope", 7), EnvironmentFault);
}

TEST(External, GarbageReplyIsAFaultCarryingTheLine) {
  ExternalEnvironment env(adapter("garbage"));
  Configuration phi{Scope::retriever, {{"a", 0.3}, {"b", std::int64_t{2}}}};
  try {
    env.retrieve(phi, 0);
    FAIL() << "expected a fault";
  } catch (const EnvironmentFault& e) {
    EXPECT_NE(std::string(e.what()).find("this is not json"), std::string::npos) << e.what();
  }
  // Once faulted the adapter is not used again.
  EXPECT_THROW(env.retrieve(phi, 0), EnvironmentFault);
}

TEST(External, CrashTimeoutErrorAndLaunchFailures) {
  Configuration phi{Scope::retriever, {{"a", 0.3}, {"b", std::int64_t{2}}}};
  Configuration theta{Scope::generator, {{"t", 0.6}}};
  {
    ExternalParams p = adapter("crash");
    p.command.push_back("1");
    ExternalEnvironment env(p);
    const auto r = env.retrieve(phi, 0);
    try {
      env.generate(theta, r.context_handle, 0);
      FAIL() << "expected a fault";
    } catch (const EnvironmentFault& e) {
      EXPECT_NE(std::string(e.what()).find("closed"), std::string::npos) << e.what();
    }
  }
  {
    ExternalEnvironment env(adapter("hang", 0.3));
    EXPECT_THROW(env.retrieve(phi, 0), EnvironmentFault);
  }
  {
    ExternalEnvironment env(adapter("error"));
    const auto r = env.retrieve(phi, 0);
    EXPECT_THROW(env.generate(theta, r.context_handle, 0), EnvironmentFault);
  }
  EXPECT_THROW(ExternalEnvironment(adapter("badinfo")), EnvironmentFault);
  ExternalParams missing;
  missing.command = {"/nonexistent/adapter-binary"};
  EXPECT_THROW(ExternalEnvironment{missing}, EnvironmentFault);
}
