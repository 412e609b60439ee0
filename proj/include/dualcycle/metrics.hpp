#pragma once

// Tokenization, lexical precision for retrieval and token-level F1 for
// generation.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dualcycle {

/// Multiset of lowercase tokens.
class TokenBag {
 public:
  TokenBag() = default;

  void add(std::string token, std::size_t count = 1) {
    if (count == 0) return;
    counts_[std::move(token)] += count;
    total_ += count;
  }

  std::size_t count(const std::string& token) const {
    const auto it = counts_.find(token);
    return it == counts_.end() ? 0 : it->second;
  }

  std::size_t size() const { return total_; }
  std::size_t unique_size() const { return counts_.size(); }
  bool empty() const { return total_ == 0; }
  const std::map<std::string, std::size_t>& counts() const { return counts_; }

  std::set<std::string> unique() const {
    std::set<std::string> u;
    for (const auto& [t, _] : counts_) u.insert(t);
    return u;
  }

  friend bool operator==(const TokenBag&, const TokenBag&) = default;

 private:
  std::map<std::string, std::size_t> counts_;
  std::size_t total_ = 0;
};

/// Lowercases ASCII and splits on every non-alphanumeric run. Bytes >= 0x80
/// are kept as token characters so UTF-8 words stay intact.
inline TokenBag tokenize(std::string_view text) {
  TokenBag bag;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      bag.add(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) bag.add(std::move(current));
  return bag;
}

/// |unique(doc) ∩ unique(truth)| / |unique(doc)|; 0 for an empty document.
inline double document_precision(const TokenBag& doc, const TokenBag& truth) {
  if (doc.unique_size() == 0) return 0.0;
  std::size_t hit = 0;
  for (const auto& [t, _] : doc.counts())
    if (truth.count(t) > 0) ++hit;
  return static_cast<double>(hit) / static_cast<double>(doc.unique_size());
}

struct QueryTruth {
  std::string query_id;
  TokenBag gt_answer;
  TokenBag gt_context;
};

/// Mean per-document precision over K documents for each query, averaged over
/// queries as well. `retrieved[q]` holds the K documents for `truths[q]`.
inline double lexical_precision(std::span<const std::vector<TokenBag>> retrieved,
                                std::span<const QueryTruth> truths) {
  if (truths.empty()) throw std::invalid_argument("lexical_precision: empty query set");
  if (retrieved.size() != truths.size())
    throw std::invalid_argument("lexical_precision: one document list per query required");
  const std::size_t k = retrieved.front().size();
  if (k == 0) throw std::invalid_argument("lexical_precision: K must be at least 1");
  double sum = 0.0;
  for (std::size_t q = 0; q < truths.size(); ++q) {
    if (retrieved[q].size() != k)
      throw std::invalid_argument("lexical_precision: every query must contribute exactly K documents");
    for (const auto& doc : retrieved[q]) sum += document_precision(doc, truths[q].gt_context);
  }
  return sum / static_cast<double>(k * truths.size());
}

inline std::size_t matched_tokens(const TokenBag& prediction, const TokenBag& reference) {
  std::size_t n = 0;
  for (const auto& [t, c] : prediction.counts()) n += std::min(c, reference.count(t));
  return n;
}

inline double token_f1(const TokenBag& prediction, const TokenBag& reference) {
  if (reference.empty()) throw std::invalid_argument("token_f1: empty reference");
  if (prediction.empty()) return 0.0;
  const auto n_match = matched_tokens(prediction, reference);
  if (n_match == 0) return 0.0;
  // 2PR / (P + R) with P = m/|pred| and R = m/|ref| reduces to 2m / (|pred| + |ref|).
  return 2.0 * static_cast<double>(n_match) / static_cast<double>(prediction.size() + reference.size());
}

/// Mean token F1 over queries; predictions[i] answers truths[i].
inline double batch_f1(std::span<const TokenBag> predictions, std::span<const QueryTruth> truths) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("batch_f1: one prediction per query required");
  if (truths.empty()) throw std::invalid_argument("batch_f1: empty query set");
  double sum = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) sum += token_f1(predictions[i], truths[i].gt_answer);
  return sum / static_cast<double>(truths.size());
}

}  // namespace dualcycle
