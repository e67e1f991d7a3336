#pragma once

// Slow-path consolidation: the asynchronous worker that enriches fast-path
// nodes with extracted attributes, entity links, semantic similarity edges
// and provider-proposed causal edges. Every step is idempotent; reprocessing
// a finished node is a no-op short-circuited before any provider call.

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "core.hpp"
#include "graph_store.hpp"
#include "indexes.hpp"
#include "providers.hpp"
#include "queue.hpp"

namespace magma {

struct ConsolidationConfig {
  double theta_sim = 0.20;   // semantic edge floor (cosine)
  double delta_causal = 0.5; // minimum accepted causal confidence
  int hops = 2;              // neighborhood radius handed to the reasoner
  int semantic_top_m = 5;    // semantic candidates kept per node
  int history_cap = 10;      // episode summaries given as context
};

struct ConsolidationReport {
  std::string node_id;
  bool already_done = false;
  bool failed = false;
  bool requeued = false;
  bool attributes_set = false;
  int entity_edges = 0;
  int semantic_edges = 0;
  int causal_edges = 0;
  std::string error;
};

class Consolidator {
 public:
  Consolidator(MemoryGraph& store, KeywordIndex& kindex, ConsolidationQueue& queue,
               ChatProvider& extractor, ChatProvider& reasoner, ConsolidationConfig cfg = {})
      : store_(store),
        kindex_(kindex),
        queue_(queue),
        extractor_(extractor),
        reasoner_(reasoner),
        cfg_(cfg) {}

  // Process one node end to end. Provider failures mark the node failed and
  // re-enqueue it at most once; structural store errors propagate.
  ConsolidationReport consolidate_one(const std::string& id) {
    ConsolidationReport rep;
    rep.node_id = id;
    if (queue_.is_done(id)) {
      rep.already_done = true;
      return rep;
    }
    const EventNode& node = store_.event(id);  // throws on unknown id
    try {
      rep.attributes_set = fill_attributes(node);
      rep.entity_edges = link_entities(id);
      rep.semantic_edges = add_semantic_edges(id);
      rep.causal_edges = add_causal_edges(id);
    } catch (const ProviderError& e) {
      rep.failed = true;
      rep.error = e.what();
      queue_.mark_failed(id);
      if (queue_.failures(id) <= 1) {
        queue_.enqueue(id);
        rep.requeued = true;
      }
      return rep;
    }
    queue_.mark_done(id);
    return rep;
  }

  // Drain the queue: peek, process, acknowledge. Stops when the queue is
  // empty or after max_items. Returns the number of items taken off the
  // queue (including already-done short-circuits).
  size_t run_worker(std::optional<size_t> max_items = std::nullopt,
                    std::vector<ConsolidationReport>* reports = nullptr) {
    size_t processed = 0;
    while (!max_items || processed < *max_items) {
      auto head = queue_.peek();
      if (!head) break;
      ConsolidationReport rep = consolidate_one(*head);
      queue_.ack(*head);
      ++processed;
      if (reports) reports->push_back(std::move(rep));
    }
    return processed;
  }

  // Serialized "[id] (timestamp) content" line for reasoner prompts; the mock
  // parses this exact shape back.
  static std::string event_line(const EventNode& n) {
    return "[" + n.id + "] (" + format_iso(n.timestamp) + ") " + n.content;
  }

 private:
  // Summary of the backbone predecessor, as extraction context.
  std::string previous_summary(const std::string& id) const {
    const auto& order = store_.event_order();
    auto it = std::find(order.begin(), order.end(), id);
    if (it == order.end() || it == order.begin()) return {};
    return store_.event(*std::prev(it)).attributes.summary;
  }

  bool fill_attributes(const EventNode& node) {
    AttributeSet attrs = extract_attributes(extractor_, node.attributes.speaker, node.content,
                                            previous_summary(node.id));
    store_.set_attributes(node.id, std::move(attrs));
    kindex_.index_document(node.id, index_text(store_.event(node.id)));
    return true;
  }

  int link_entities(const std::string& id) {
    const EventNode& node = store_.event(id);
    int added = 0;
    for (const auto& mention : node.attributes.entities) {
      std::string canonical;
      try {
        canonical = normalize_entity(mention);
      } catch (const std::invalid_argument&) {
        continue;  // unusable mention, skip
      }
      const std::string ent_id = store_.upsert_entity(canonical, mention);
      if (store_.add_edge({id, ent_id, EdgeType::Entity, 1.0, EdgeOrigin::Consolidation,
                           node.timestamp}))
        ++added;
    }
    return added;
  }

  // Cosine-nearest prior nodes above the similarity floor. Only nodes earlier
  // on the backbone are candidates, so reprocessing after later arrivals
  // cannot mint different edges.
  int add_semantic_edges(const std::string& id) {
    const EventNode& node = store_.event(id);
    const auto& order = store_.event_order();
    std::vector<Scored> cands;
    for (const auto& other_id : order) {
      if (other_id == id) break;
      const double cs = cosine(node.embedding, store_.event(other_id).embedding);
      if (cs > cfg_.theta_sim) cands.push_back({other_id, cs});
    }
    std::sort(cands.begin(), cands.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
    if (cands.size() > static_cast<size_t>(cfg_.semantic_top_m))
      cands.resize(static_cast<size_t>(cfg_.semantic_top_m));
    int added = 0;
    for (const auto& c : cands)
      if (store_.add_edge({id, c.id, EdgeType::Semantic, c.score, EdgeOrigin::Consolidation,
                           node.timestamp}))
        ++added;
    return added;
  }

  int add_causal_edges(const std::string& id) {
    const EventNode& node = store_.event(id);
    Subgraph sub = store_.neighborhood(id, cfg_.hops);
    // Deterministic serialization order: timestamp, then id.
    std::sort(sub.event_ids.begin(), sub.event_ids.end(),
              [this](const std::string& a, const std::string& b) {
                const auto ta = store_.event(a).timestamp, tb = store_.event(b).timestamp;
                if (ta != tb) return ta < tb;
                return a < b;
              });
    std::vector<std::string> lines;
    lines.reserve(sub.event_ids.size());
    for (const auto& eid : sub.event_ids) lines.push_back(event_line(store_.event(eid)));

    std::vector<std::string> history;
    for (const auto& eid : store_.event_order()) {
      if (static_cast<int>(history.size()) >= cfg_.history_cap) break;
      if (eid == id) continue;
      const EventNode& other = store_.event(eid);
      if (other.episode_id == node.episode_id && !other.attributes.summary.empty())
        history.push_back(other.attributes.summary);
    }

    const std::vector<CausalPair> pairs = propose_causal_pairs(reasoner_, lines, history);
    std::unordered_set<std::string> known(sub.event_ids.begin(), sub.event_ids.end());
    int added = 0;
    for (const auto& p : pairs) {
      if (p.confidence < cfg_.delta_causal) continue;
      if (!known.count(p.src) || !known.count(p.dst) || p.src == p.dst) continue;
      if (p.confidence > 1.0) continue;
      std::string src = p.src, dst = p.dst;
      const auto ts = store_.event(src).timestamp, td = store_.event(dst).timestamp;
      if (ts == td) continue;  // orientation undefined, skip
      if (ts > td) std::swap(src, dst);  // always earlier -> later
      if (store_.add_edge({src, dst, EdgeType::Causal, p.confidence,
                           EdgeOrigin::Consolidation, node.timestamp}))
        ++added;
    }
    return added;
  }

  MemoryGraph& store_;
  KeywordIndex& kindex_;
  ConsolidationQueue& queue_;
  ChatProvider& extractor_;
  ChatProvider& reasoner_;
  ConsolidationConfig cfg_;
};

}  // namespace magma
