#pragma once

// Fast-path ingestion: segment an interaction, embed every draft in one
// batch call, append to the temporal backbone, index, enqueue for the slow
// path. No reasoning model is ever consulted here; write latency is bounded
// by the encoder alone.

#include <string>
#include <vector>

#include "core.hpp"
#include "graph_store.hpp"
#include "indexes.hpp"
#include "providers.hpp"
#include "queue.hpp"

namespace magma {

struct Interaction {
  std::string speaker;
  std::string text;
  std::int64_t timestamp = 0;
  std::string timestamp_raw;  // original display form, optional
  std::string session_id;
};

enum class SegmentPolicy { PerTurn, SplitParagraphs };

inline const char* to_string(SegmentPolicy p) {
  return p == SegmentPolicy::PerTurn ? "per_turn" : "split_paragraphs";
}

inline SegmentPolicy segment_policy_from_string(const std::string& s) {
  if (s == "per_turn") return SegmentPolicy::PerTurn;
  if (s == "split_paragraphs") return SegmentPolicy::SplitParagraphs;
  throw ConfigError("unknown segmentation policy: " + s);
}

// Split one interaction into event drafts: content, timestamp and speaker
// set, attributes otherwise empty. Blank input is rejected.
inline std::vector<EventNode> segment_event(const Interaction& turn, SegmentPolicy policy) {
  if (trim(turn.text).empty()) throw std::invalid_argument("blank interaction text");
  std::vector<std::string> parts;
  if (policy == SegmentPolicy::PerTurn) {
    parts.push_back(trim(turn.text));
  } else {
    // Paragraph boundaries: newline, optional horizontal whitespace, newline.
    const std::string& t = turn.text;
    size_t start = 0;
    size_t i = 0;
    auto flush = [&](size_t end) {
      std::string piece = trim(t.substr(start, end - start));
      if (!piece.empty()) parts.push_back(std::move(piece));
    };
    while (i < t.size()) {
      if (t[i] == '\n') {
        size_t j = i + 1;
        while (j < t.size() && (t[j] == ' ' || t[j] == '\t' || t[j] == '\r')) ++j;
        if (j < t.size() && t[j] == '\n') {
          flush(i);
          while (j < t.size() && (t[j] == '\n' || t[j] == ' ' || t[j] == '\t' || t[j] == '\r'))
            ++j;
          start = i = j;
          continue;
        }
      }
      ++i;
    }
    flush(t.size());
    if (parts.empty()) throw std::invalid_argument("blank interaction text");
  }
  std::vector<EventNode> drafts;
  drafts.reserve(parts.size());
  for (auto& piece : parts) {
    EventNode n;
    n.content = std::move(piece);
    n.timestamp = turn.timestamp;
    n.timestamp_raw = turn.timestamp_raw;
    n.attributes.speaker = turn.speaker;
    n.episode_id = turn.session_id;
    drafts.push_back(std::move(n));
  }
  return drafts;
}

// Write an interaction through the fast path. All drafts are embedded in one
// encoder call before anything mutates, so an encoder failure leaves the
// store untouched. Returns the new node ids in backbone order.
inline std::vector<std::string> ingest_interaction(MemoryGraph& store, VectorIndex& vindex,
                                                   KeywordIndex& kindex,
                                                   ConsolidationQueue& queue, Embedder& encoder,
                                                   const Interaction& turn,
                                                   SegmentPolicy policy) {
  std::vector<EventNode> drafts = segment_event(turn, policy);
  std::vector<std::string> texts;
  texts.reserve(drafts.size());
  for (const auto& d : drafts) texts.push_back(d.content);
  std::vector<std::vector<float>> embs = encoder.embed(texts);
  if (embs.size() != drafts.size())
    throw ProviderError("encoder returned " + std::to_string(embs.size()) + " vectors for " +
                        std::to_string(drafts.size()) + " drafts");
  for (const auto& v : embs)
    if (v.size() != store.dimension())
      throw ProviderError("encoder dimension " + std::to_string(v.size()) + " != " +
                          std::to_string(store.dimension()));
  std::vector<std::string> ids;
  ids.reserve(drafts.size());
  for (size_t i = 0; i < drafts.size(); ++i) {
    drafts[i].embedding = std::move(embs[i]);
    std::string id = store.add_event(std::move(drafts[i]));
    const EventNode& stored = store.event(id);
    vindex.add(id, stored.embedding);
    kindex.index_document(id, index_text(stored));
    queue.enqueue(id);
    ids.push_back(std::move(id));
  }
  return ids;
}

}  // namespace magma
