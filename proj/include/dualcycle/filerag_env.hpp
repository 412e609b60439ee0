#pragma once

// Desk-scale retrieval-augmented QA over a JSON-lines corpus. The retriever
// is a lexical chunk ranker and the generator an extractive answerer; every
// knob of the default RAG space changes their behavior deterministically.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "environment.hpp"
#include "json.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace dualcycle {

struct Document {
  std::string id;
  std::string text;
};

struct QueryRecord {
  std::string id;
  std::string query;
  std::string gt_answer;
  std::string gt_context;
};

namespace jsonl_detail {

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& on_object) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      on_object(j);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace jsonl_detail

inline std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  jsonl_detail::for_each_line(path, [&](const nlohmann::json& j) {
    docs.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
  });
  if (docs.empty()) throw std::runtime_error("corpus '" + path.string() + "' is empty");
  return docs;
}

inline std::vector<QueryRecord> load_queries(const std::filesystem::path& path) {
  std::vector<QueryRecord> queries;
  jsonl_detail::for_each_line(path, [&](const nlohmann::json& j) {
    queries.push_back({j.at("id").get<std::string>(), j.at("query").get<std::string>(),
                       j.at("gt_answer").get<std::string>(), j.at("gt_context").get<std::string>()});
  });
  if (queries.empty()) throw std::runtime_error("query file '" + path.string() + "' is empty");
  return queries;
}

struct FileRagParams {
  std::filesystem::path corpus;
  std::filesystem::path queries;
  std::size_t precision_k = 3;  // documents scored for P
  std::size_t query_offset = 0;
  std::size_t query_limit = 0;  // 0 = all remaining queries
  double retrieve_cost = 1.0;
  double generate_cost = 2.0;
};

/// Parameter names the file-RAG environment reads. Any space used with it must
/// declare these (the default RAG space does).
namespace filerag_knobs {
inline constexpr const char* database = "Database Choice";
inline constexpr const char* chunk_size = "Chunk Size";
inline constexpr const char* chunk_overlap = "Chunk Overlap";
inline constexpr const char* embed_temperature = "Embedding Temperature";
inline constexpr const char* embed_window = "Embedding Window";
inline constexpr const char* embed_penalty = "Embedding Repeat Penalty";
inline constexpr const char* embed_top_k = "Embedding Top-k";
inline constexpr const char* retrieval_k = "Retrieval Numbers";
inline constexpr const char* gen_temperature = "Generation Temperature";
inline constexpr const char* gen_window = "Generation Window";
inline constexpr const char* gen_penalty = "Generation Repeat Penalty";
inline constexpr const char* gen_top_k = "Generation Top-k";
}  // namespace filerag_knobs

namespace filerag_detail {

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> words{"a",    "an",  "and", "are",  "as",  "at",   "be",   "by",
                                           "did",  "do",  "does", "for", "from", "how", "in",   "is",
                                           "it",   "of",  "on",  "or",   "that", "the", "this", "to",
                                           "was",  "were", "what", "which", "who", "with"};
  return words;
}

inline std::set<std::string> content_terms(const TokenBag& bag) {
  std::set<std::string> out;
  for (const auto& [t, _] : bag.counts())
    if (!stopwords().contains(t)) out.insert(t);
  return out;
}

inline std::size_t overlap(const std::set<std::string>& terms, const TokenBag& bag) {
  std::size_t n = 0;
  for (const auto& t : terms)
    if (bag.count(t) > 0) ++n;
  return n;
}

struct Chunk {
  std::size_t doc;
  std::size_t start;
  std::string text;
  TokenBag tokens;
};

/// Chunks of `size` characters advancing by size - overlap; the last chunk
/// ends at the document end, a short document yields one chunk.
inline std::vector<Chunk> make_chunks(const std::vector<Document>& docs, std::size_t size, std::size_t overlap_chars) {
  const std::size_t stride = size > overlap_chars ? size - overlap_chars : 1;
  std::vector<Chunk> chunks;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& text = docs[d].text;
    std::size_t start = 0;
    while (true) {
      const std::string piece = text.substr(start, size);
      chunks.push_back({d, start, piece, tokenize(piece)});
      if (start + size >= text.size()) break;
      start += stride;
    }
  }
  return chunks;
}

inline std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    const auto b = cur.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      const auto e = cur.find_last_not_of(" \t\r\n");
      out.push_back(cur.substr(b, e - b + 1));
    }
    cur.clear();
  };
  for (char c : text) {
    if (c == '\n') {
      flush();
      continue;
    }
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') flush();
  }
  flush();
  return out;
}

}  // namespace filerag_detail

class FileRagEnvironment final : public Environment {
 public:
  FileRagEnvironment(FileRagParams params, SearchSpace space)
      : FileRagEnvironment(params, std::move(space), load_corpus(params.corpus), load_queries(params.queries)) {}

  FileRagEnvironment(FileRagParams params, SearchSpace space, std::vector<Document> corpus,
                     std::vector<QueryRecord> queries)
      : params_(std::move(params)), corpus_(std::move(corpus)) {
    if (corpus_.empty()) throw std::invalid_argument("file-RAG corpus is empty");
    if (params_.precision_k == 0) throw std::invalid_argument("precision_k must be at least 1");
    if (params_.query_offset >= queries.size()) throw std::invalid_argument("query_offset beyond the query file");
    const std::size_t end = params_.query_limit == 0 ? queries.size()
                                                     : std::min(queries.size(), params_.query_offset + params_.query_limit);
    queries_.assign(queries.begin() + static_cast<std::ptrdiff_t>(params_.query_offset),
                    queries.begin() + static_cast<std::ptrdiff_t>(end));
    for (const auto& q : queries_) {
      QueryTruth t{q.id, tokenize(q.gt_answer), tokenize(q.gt_context)};
      if (t.gt_answer.empty() || t.gt_context.empty())
        throw std::invalid_argument("query '" + q.id + "' has an empty ground truth");
      truths_.push_back(std::move(t));
      query_terms_.push_back(filerag_detail::content_terms(tokenize(q.query)));
    }
    space.require_both_stages();
    using namespace filerag_knobs;
    for (const char* name : {database, chunk_size, chunk_overlap, embed_temperature, embed_window, embed_penalty,
                             embed_top_k, retrieval_k, gen_temperature, gen_window, gen_penalty, gen_top_k})
      if (!space.joint_view().find(name))
        throw std::invalid_argument(std::string("file-RAG space lacks parameter '") + name + "'");
    info_.space = std::move(space);
    info_.query_count = queries_.size();
    info_.retrieve_cost_hint = params_.retrieve_cost;
    info_.generate_cost_hint = params_.generate_cost;
  }

  const EnvironmentInfo& info() const override { return info_; }
  void release(const std::string& handle) override { contexts_.erase(handle); }
  std::size_t live_contexts() const { return contexts_.size(); }

  /// Cached chunk texts for one query under a handle, best first.
  std::vector<std::string> cached_chunks(const std::string& handle, std::size_t query) const {
    const auto& ctx = context(handle);
    std::vector<std::string> out;
    for (auto idx : ctx.ranking.at(query)) out.push_back((*ctx.chunks)[idx].text);
    return out;
  }

  /// Extracted answer text for one query (exposed for tests and inspection).
  std::string answer(const Configuration& theta, const std::string& handle, std::size_t query,
                     std::uint64_t run_seed) const {
    return extract_answer(theta, context(handle), query, run_seed);
  }

 protected:
  RetrievalResult do_retrieve(const Configuration& phi, std::uint64_t /*run_seed*/) override {
    using namespace filerag_knobs;
    using filerag_detail::Chunk;
    const auto size = static_cast<std::size_t>(phi.as_int(chunk_size));
    const auto ov = static_cast<std::size_t>(phi.as_int(chunk_overlap));
    auto chunks = chunk_set(size, ov);

    const auto& db_spec = *info_.space.retriever_view().find(database);
    const std::size_t policy = category_index(db_spec, phi.at(database)) % 3;
    const double temperature = phi.as_float(embed_temperature);
    const auto window = static_cast<std::size_t>(phi.as_int(embed_window));
    const double penalty = phi.as_float(embed_penalty);
    const auto top_k = static_cast<std::size_t>(phi.as_int(embed_top_k));

    // Window-limited token bags and repetition ratios are query independent.
    std::vector<TokenBag> windowed(chunks->size());
    std::vector<double> repetition(chunks->size());
    for (std::size_t c = 0; c < chunks->size(); ++c) {
      const auto& ch = (*chunks)[c];
      windowed[c] = ch.text.size() > window ? tokenize(std::string_view(ch.text).substr(0, window)) : ch.tokens;
      repetition[c] = ch.tokens.empty() ? 0.0
                                        : 1.0 - static_cast<double>(ch.tokens.unique_size()) /
                                                    static_cast<double>(ch.tokens.size());
    }
    auto tie_order = [&](std::size_t c) -> std::uint64_t {
      switch (policy) {
        case 0: return c;
        case 1: return chunks->size() - 1 - c;
        default: return mix64(c);
      }
    };

    Context ctx;
    ctx.chunks = chunks;
    std::vector<std::vector<TokenBag>> retrieved;
    for (std::size_t q = 0; q < queries_.size(); ++q) {
      const auto& terms = query_terms_[q];
      std::vector<double> raw(chunks->size(), 0.0);
      if (!terms.empty())
        for (std::size_t c = 0; c < chunks->size(); ++c)
          raw[c] = static_cast<double>(filerag_detail::overlap(terms, windowed[c])) / static_cast<double>(terms.size());

      std::vector<std::size_t> order(chunks->size());
      std::iota(order.begin(), order.end(), 0);
      auto by = [&](const std::vector<double>& s) {
        return [&](std::size_t a, std::size_t b) {
          return std::tuple(-s[a], tie_order(a)) < std::tuple(-s[b], tie_order(b));
        };
      };
      std::sort(order.begin(), order.end(), by(raw));

      // Blend the raw score with a rank prior that decays to zero at top_k.
      const double s_max = raw[order.front()];
      std::vector<double> soft(chunks->size());
      for (std::size_t r = 0; r < order.size(); ++r) {
        const std::size_t c = order[r];
        const double prior = s_max * std::max(0.0, 1.0 - static_cast<double>(r) / static_cast<double>(top_k));
        soft[c] = (1.0 - temperature) * raw[c] + temperature * prior;
        if (repetition[c] > 1.0 / penalty) soft[c] /= penalty;
      }
      std::sort(order.begin(), order.end(), by(soft));
      order.resize(std::min(order.size(), top_k));

      std::vector<TokenBag> docs;
      for (std::size_t i = 0; i < params_.precision_k; ++i)
        docs.push_back(i < order.size() ? (*chunks)[order[i]].tokens : TokenBag{});
      retrieved.push_back(std::move(docs));
      ctx.ranking.push_back(std::move(order));
    }
    const double p = lexical_precision(retrieved, truths_);
    std::string handle = "ctx-" + std::to_string(++issued_);
    contexts_.emplace(handle, std::move(ctx));
    return {handle, p, params_.retrieve_cost};
  }

  GenerationResult do_generate(const Configuration& theta, const std::string& handle,
                               std::uint64_t run_seed) override {
    const auto& ctx = context(handle);
    std::vector<TokenBag> predictions;
    for (std::size_t q = 0; q < queries_.size(); ++q)
      predictions.push_back(tokenize(extract_answer(theta, ctx, q, run_seed)));
    return {batch_f1(predictions, truths_), params_.generate_cost};
  }

 private:
  struct Context {
    std::shared_ptr<const std::vector<filerag_detail::Chunk>> chunks;
    std::vector<std::vector<std::size_t>> ranking;  // per query, best first
  };

  const Context& context(const std::string& handle) const {
    const auto it = contexts_.find(handle);
    if (it == contexts_.end()) throw UnknownContext(handle);
    return it->second;
  }

  std::shared_ptr<const std::vector<filerag_detail::Chunk>> chunk_set(std::size_t size, std::size_t ov) {
    auto& slot = chunk_cache_[{size, ov}];
    if (!slot) slot = std::make_shared<const std::vector<filerag_detail::Chunk>>(filerag_detail::make_chunks(corpus_, size, ov));
    return slot;
  }

  std::string extract_answer(const Configuration& theta, const Context& ctx, std::size_t q,
                             std::uint64_t run_seed) const {
    using namespace filerag_knobs;
    const auto k = static_cast<std::size_t>(theta.as_int(retrieval_k));
    const double temperature = theta.as_float(gen_temperature);
    const auto window = static_cast<std::size_t>(theta.as_int(gen_window));
    const double penalty = theta.as_float(gen_penalty);
    const auto pool_size = static_cast<std::size_t>(theta.as_int(gen_top_k));
    const auto& terms = query_terms_[q];

    struct Candidate {
      std::string text;
      TokenBag tokens;
      double score;
    };
    std::vector<Candidate> pool;
    std::set<std::string> seen;
    const auto& ranking = ctx.ranking[q];
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
      for (auto& s : filerag_detail::split_sentences((*ctx.chunks)[ranking[i]].text)) {
        if (!seen.insert(s).second) continue;
        auto bag = tokenize(s);
        if (bag.empty()) continue;
        const double score = static_cast<double>(filerag_detail::overlap(terms, bag)) /
                             std::sqrt(static_cast<double>(bag.unique_size()));
        if (score > 0.0) pool.push_back({std::move(s), std::move(bag), score});
      }
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (pool.size() > pool_size) pool.resize(pool_size);
    if (pool.empty()) return {};

    const double stop_below = 0.5 * pool.front().score;
    Rng rng(hash_combine(hash_combine(run_seed, fnv1a(canonical_key(theta))), q));
    std::string answer;
    TokenBag answer_tokens;
    while (!pool.empty()) {
      std::vector<double> adjusted(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i) {
        adjusted[i] = pool[i].score;
        if (!answer_tokens.empty()) {
          const double shared = static_cast<double>(matched_tokens(pool[i].tokens, answer_tokens)) /
                                static_cast<double>(pool[i].tokens.size());
          if (shared > 1.0 / penalty) adjusted[i] /= penalty;
        }
      }
      std::size_t pick = 0;
      if (temperature <= 0.0) {
        pick = static_cast<std::size_t>(std::max_element(adjusted.begin(), adjusted.end()) - adjusted.begin());
      } else {
        const double top = *std::max_element(adjusted.begin(), adjusted.end());
        std::vector<double> w(adjusted.size());
        double total = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) total += w[i] = std::exp((adjusted[i] - top) / temperature);
        double u = rng.uniform() * total;
        pick = w.size() - 1;
        for (std::size_t i = 0; i < w.size(); ++i) {
          if (u < w[i]) {
            pick = i;
            break;
          }
          u -= w[i];
        }
      }
      if (!answer.empty() && adjusted[pick] < stop_below) break;
      const auto& chosen = pool[pick];
      const std::size_t extra = chosen.text.size() + (answer.empty() ? 0 : 1);
      if (answer.size() + extra > window) break;
      if (!answer.empty()) answer += ' ';
      answer += chosen.text;
      for (const auto& [t, c] : chosen.tokens.counts()) answer_tokens.add(t, c);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return answer;
  }

  FileRagParams params_;
  std::vector<Document> corpus_;
  std::vector<QueryRecord> queries_;
  std::vector<QueryTruth> truths_;
  std::vector<std::set<std::string>> query_terms_;
  EnvironmentInfo info_;
  std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const std::vector<filerag_detail::Chunk>>> chunk_cache_;
  std::map<std::string, Context> contexts_;
  std::size_t issued_ = 0;
};

}  // namespace dualcycle
