#pragma once

// Retrieval indexes: exact-scan cosine search, tf-idf keyword search and the
// temporal window filter. Exact scans are deliberate; at desk scale they beat
// ANN structures on simplicity and are bit-reproducible.

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "graph_store.hpp"
#include "time_parse.hpp"
#include "tokenize.hpp"

namespace magma {

struct Scored {
  std::string id;
  double score = 0.0;
  bool operator==(const Scored&) const = default;
};

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  const size_t n = std::min(a.size(), b.size());
  for (size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

inline double norm(const std::vector<float>& a) { return std::sqrt(dot(a, a)); }

// Cosine similarity; 0.0 when either vector has zero norm.
inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// Brute-force cosine index over node embeddings.
class VectorIndex {
 public:
  explicit VectorIndex(size_t dimension = 384) : dim_(dimension) {}

  size_t dimension() const { return dim_; }
  size_t size() const { return entries_.size(); }

  // Insert or replace.
  void add(const std::string& id, std::vector<float> v) {
    if (v.size() != dim_)
      throw StoreError("vector dimension " + std::to_string(v.size()) + " != " +
                       std::to_string(dim_));
    auto it = by_id_.find(id);
    if (it != by_id_.end()) {
      entries_[it->second].second = std::move(v);
      return;
    }
    by_id_.emplace(id, entries_.size());
    entries_.emplace_back(id, std::move(v));
  }

  bool contains(const std::string& id) const { return by_id_.count(id) > 0; }

  // Top-k by cosine, ties broken by ascending id. Zero-norm entries (and a
  // zero-norm query) score 0.0 rather than erroring.
  std::vector<Scored> search(const std::vector<float>& query, size_t top_k) const {
    std::vector<Scored> scored;
    scored.reserve(entries_.size());
    for (const auto& [id, v] : entries_) scored.push_back({id, cosine(query, v)});
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
    if (scored.size() > top_k) scored.resize(top_k);
    return scored;
  }

 private:
  size_t dim_;
  std::vector<std::pair<std::string, std::vector<float>>> entries_;
  std::unordered_map<std::string, size_t> by_id_;
};

// Inverted index scoring sum(tf * idf) over query terms, idf = ln(1 + N/df).
class KeywordIndex {
 public:
  size_t doc_count() const { return doc_tokens_.size(); }

  // Tokenizes and (re)indexes one document, replacing any previous postings
  // for this id.
  void index_document(const std::string& id, std::string_view text) {
    auto it = doc_tokens_.find(id);
    if (it != doc_tokens_.end()) {
      for (const auto& kv : it->second) {
        auto& posting = postings_[kv.first];
        posting.erase(id);
        if (posting.empty()) postings_.erase(kv.first);
      }
    }
    std::unordered_map<std::string, int> counts;
    for (auto& tok : index_tokenize(text)) ++counts[tok];
    for (const auto& [term, tf] : counts) postings_[term][id] = tf;
    doc_tokens_[id] = std::move(counts);
  }

  // Scores the union of candidate documents; empty keyword list (e.g. an
  // all-stopword query) yields an empty result so callers can lean on the
  // other retrieval signals.
  std::vector<Scored> search(const std::vector<std::string>& keywords, size_t top_k) const {
    if (keywords.empty() || doc_tokens_.empty()) return {};
    const double n_docs = static_cast<double>(doc_tokens_.size());
    std::unordered_map<std::string, double> acc;
    for (const auto& term : keywords) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double idf = std::log(1.0 + n_docs / static_cast<double>(it->second.size()));
      for (const auto& [id, tf] : it->second) acc[id] += static_cast<double>(tf) * idf;
    }
    std::vector<Scored> scored;
    scored.reserve(acc.size());
    for (const auto& [id, s] : acc) scored.push_back({id, s});
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
    if (scored.size() > top_k) scored.resize(top_k);
    return scored;
  }

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, int>> postings_;
  std::unordered_map<std::string, std::unordered_map<std::string, int>> doc_tokens_;
};

// Events whose timestamp falls inside [start, end], ascending timestamp with
// ties in id order (the backbone guarantees insertion order is id order).
inline std::vector<std::string> temporal_filter(const MemoryGraph& g, const TimeWindow& w) {
  if (w.start > w.end) throw std::invalid_argument("inverted time window");
  std::vector<std::string> out;
  for (const auto& id : g.event_order()) {
    const auto ts = g.event(id).timestamp;
    if (ts >= w.start && ts <= w.end) out.push_back(id);
  }
  return out;
}

// Text a node is searchable under: its content plus every attribute string.
inline std::string index_text(const EventNode& n) {
  std::string out = n.content;
  auto add = [&out](const std::string& s) {
    if (!s.empty()) {
      out.push_back(' ');
      out += s;
    }
  };
  for (const auto& s : n.attributes.entities) add(s);
  add(n.attributes.topic);
  for (const auto& s : n.attributes.relationships) add(s);
  for (const auto& s : n.attributes.semantic_facts) add(s);
  for (const auto& s : n.attributes.dates_mentioned) add(s);
  add(n.attributes.speaker);
  add(n.attributes.summary);
  return out;
}

}  // namespace magma
