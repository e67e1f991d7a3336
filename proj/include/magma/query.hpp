#pragma once

// Policy-guided retrieval: rule-based intent classification, reciprocal rank
// fusion of the three anchor signals, decayed beam traversal over the typed
// graph, and budgeted linearization of the retrieved subgraph into a prompt
// context.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <regex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "core.hpp"
#include "graph_store.hpp"
#include "indexes.hpp"
#include "time_parse.hpp"
#include "tokenize.hpp"

namespace magma {

// ------------------------------------------------------------------ intent ---

// Rule precedence: WHY > WHEN > ENTITY > GENERAL. Proper-noun evidence for
// ENTITY is a capitalized non-initial word (or a possessive) so sentence
// starts do not count.
inline IntentLabel classify_intent(const std::string& query) {
  const auto words = split_words(query);  // lowercased
  auto has = [&](std::string_view w) {
    return std::find(words.begin(), words.end(), w) != words.end();
  };
  for (const char* w : {"why", "cause", "causes", "caused", "reason", "reasons", "because"})
    if (has(w)) return IntentLabel::Why;

  static const char* kDateWords[] = {
      "when",    "yesterday", "today",   "tomorrow", "monday",   "tuesday", "wednesday",
      "thursday", "friday",   "saturday", "sunday",  "january",  "february", "march",
      "april",   "may",       "june",    "july",     "august",   "september", "october",
      "november", "december", "date",    "day",      "week",     "month",   "year"};
  const std::string lower = to_lower(query);
  bool when_cue = lower.find("what time") != std::string::npos || has("before") || has("after");
  for (const char* w : kDateWords) when_cue = when_cue || has(w);
  if (when_cue) return IntentLabel::When;

  bool entity_cue = has("who") || has("whom") || has("whose");
  if (!entity_cue && (has("what") || has("which"))) {
    // Raw-cased scan for a capitalized word that is not sentence-initial.
    std::string cur;
    size_t word_index = 0;
    auto check = [&]() {
      if (!cur.empty()) {
        if (word_index > 0 && cur[0] >= 'A' && cur[0] <= 'Z' && !is_stopword(to_lower(cur)))
          entity_cue = true;
        ++word_index;
        cur.clear();
      }
    };
    for (unsigned char c : query) {
      if (word_char(c) || c == '\'') cur.push_back(static_cast<char>(c));
      else check();
    }
    check();
  }
  if (!entity_cue) {
    static const std::regex poss_re(R"([A-Z][a-z]+'s\b)");
    entity_cue = std::regex_search(query, poss_re);
  }
  if (entity_cue) return IntentLabel::Entity;
  return IntentLabel::General;
}

// ------------------------------------------------------------------- plan ---

struct QueryPlan {
  std::string raw;
  IntentLabel intent = IntentLabel::General;
  std::optional<TimeWindow> window;
  std::vector<float> embedding;
  std::vector<std::string> keywords;
};

// -------------------------------------------------------------- rank fusion ---

struct RankedList {
  std::string name;    // diagnostic label: "vector" | "keyword" | "time"
  double weight = 1.0; // per-list multiplier on every contribution
  std::vector<std::string> ids;  // rank 1 first
};

// Reciprocal rank fusion: fused(n) = sum over lists of weight / (k + rank(n)),
// ranks 1-based, nodes absent from a list contribute nothing. Result sorted
// by fused score descending, ties by ascending id.
inline std::vector<Scored> rrf_fuse(const std::vector<RankedList>& lists, int rrf_k) {
  std::unordered_map<std::string, double> acc;
  for (const auto& list : lists)
    for (size_t r = 0; r < list.ids.size(); ++r)
      acc[list.ids[r]] += list.weight / (static_cast<double>(rrf_k) + static_cast<double>(r + 1));
  std::vector<Scored> out;
  out.reserve(acc.size());
  for (const auto& [id, s] : acc) out.push_back({id, s});
  std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

// ----------------------------------------------------------------- anchors ---

struct AnchorConfig {
  int rrf_k = 60;
  int vector_top_k = 20;
  int keyword_top_k = 20;
  int anchor_top_k = 8;
  double w_vector = 1.0;
  double w_keyword = 3.0;
  double w_time = 1.0;
};

struct AnchorResult {
  std::vector<Scored> anchors;          // top fused, seeds for traversal
  std::vector<RankedList> signal_lists; // what each signal contributed
  bool fallback_recency = false;        // no signal fired; most recent used
};

// Fuse the vector, keyword and time signals into the anchor set. When every
// signal comes back empty the most recent events stand in, ranked by recency
// through the same fusion arithmetic.
inline AnchorResult find_anchors(const MemoryGraph& store, const VectorIndex& vindex,
                                 const KeywordIndex& kindex, const QueryPlan& plan,
                                 const AnchorConfig& cfg) {
  AnchorResult res;
  RankedList vec{"vector", cfg.w_vector, {}};
  for (auto& s : vindex.search(plan.embedding, static_cast<size_t>(cfg.vector_top_k)))
    vec.ids.push_back(std::move(s.id));
  RankedList key{"keyword", cfg.w_keyword, {}};
  for (auto& s : kindex.search(plan.keywords, static_cast<size_t>(cfg.keyword_top_k)))
    key.ids.push_back(std::move(s.id));
  RankedList tim{"time", cfg.w_time, {}};
  if (plan.window) {
    auto in_window = temporal_filter(store, *plan.window);
    // Rank by recency: most recent first.
    std::reverse(in_window.begin(), in_window.end());
    tim.ids = std::move(in_window);
  }
  res.signal_lists = {vec, key, tim};
  auto fused = rrf_fuse(res.signal_lists, cfg.rrf_k);
  if (fused.empty() && store.event_count() > 0) {
    // Recency fallback, expressed as a single-signal fusion so anchor scores
    // stay on the same scale.
    res.fallback_recency = true;
    RankedList recent{"recency", cfg.w_time, {}};
    const auto& order = store.event_order();
    for (auto it = order.rbegin();
         it != order.rend() && recent.ids.size() < static_cast<size_t>(cfg.anchor_top_k); ++it)
      recent.ids.push_back(*it);
    res.signal_lists.push_back(recent);
    fused = rrf_fuse({recent}, cfg.rrf_k);
  }
  if (fused.size() > static_cast<size_t>(cfg.anchor_top_k))
    fused.resize(static_cast<size_t>(cfg.anchor_top_k));
  res.anchors = std::move(fused);
  return res;
}

// --------------------------------------------------------------- traversal ---

using IntentWeights = std::map<IntentLabel, std::map<EdgeType, double>>;

// Per-intent edge-type affinities steering the walk.
inline IntentWeights default_intent_weights() {
  return {
      {IntentLabel::Why,
       {{EdgeType::Causal, 4.0}, {EdgeType::Temporal, 1.0}, {EdgeType::Semantic, 1.0},
        {EdgeType::Entity, 1.5}}},
      {IntentLabel::When,
       {{EdgeType::Temporal, 3.0}, {EdgeType::Causal, 1.0}, {EdgeType::Semantic, 1.0},
        {EdgeType::Entity, 1.0}}},
      {IntentLabel::Entity,
       {{EdgeType::Entity, 4.0}, {EdgeType::Semantic, 1.5}, {EdgeType::Causal, 1.0},
        {EdgeType::Temporal, 0.5}}},
      {IntentLabel::General,
       {{EdgeType::Temporal, 1.0}, {EdgeType::Causal, 1.0}, {EdgeType::Semantic, 1.0},
        {EdgeType::Entity, 1.0}}},
  };
}

struct TraversalPolicy {
  double lambda1 = 1.0;        // weight on the intent-edge affinity
  double lambda2 = 0.5;        // weight on embedding similarity
  double gamma = 0.85;         // per-hop decay of the accumulated score
  int beam_width = 8;
  int max_depth = 5;
  int budget = 200;            // visited-node cap
  double drop_threshold = 0.15;  // candidates below this fraction of the step max drop
  IntentWeights weights = default_intent_weights();
  EdgeTypeSet enabled_types = EdgeTypeSet::all();  // ablation mask
};

struct VisitedNode {
  std::string id;
  double score = 0.0;
  int depth = 0;                 // 0 for anchors
  std::string via_edge_src;      // best predecessor ("" for anchors)
  EdgeType via_edge_type = EdgeType::Temporal;
};

struct TraversalResult {
  std::vector<VisitedNode> visited;     // visit order: anchors, then per depth
  std::vector<TypedEdge> induced_edges; // enabled-type edges among visited
  std::map<EdgeType, int> edge_type_counts;
  int depth_reached = 0;
  bool budget_hit = false;
};

// Beam walk from the fused anchors. Each step expands every frontier node's
// unvisited neighbors over the enabled edge types (both directions), scores
// candidates score(u)*gamma + exp(lambda1*w[intent][type] + lambda2*cos),
// keeps the best predecessor per candidate, applies the relative drop filter,
// then the beam cut. Entity nodes traverse with a zero similarity term.
inline TraversalResult traverse(const MemoryGraph& store,
                                const std::vector<Scored>& anchors, const QueryPlan& plan,
                                const TraversalPolicy& policy) {
  TraversalResult res;
  std::unordered_map<std::string, size_t> visited_at;  // id -> index into res.visited
  auto visit = [&](VisitedNode v) {
    visited_at.emplace(v.id, res.visited.size());
    res.visited.push_back(std::move(v));
  };
  for (const auto& a : anchors) {
    if (!store.has_node(a.id) || visited_at.count(a.id)) continue;
    visit({a.id, a.score, 0, "", EdgeType::Temporal});
  }
  std::vector<std::string> frontier;
  for (const auto& v : res.visited) frontier.push_back(v.id);

  const auto& w_table = policy.weights.at(plan.intent);
  auto transition = [&](EdgeType t, const std::string& to) {
    const double w = w_table.at(t);
    const double sim =
        store.has_event(to) ? cosine(store.event(to).embedding, plan.embedding) : 0.0;
    return std::exp(policy.lambda1 * w + policy.lambda2 * sim);
  };

  struct Candidate {
    double score = 0.0;
    std::string pred;
    EdgeType via = EdgeType::Temporal;
  };

  for (int depth = 1; depth <= policy.max_depth; ++depth) {
    if (res.visited.size() >= static_cast<size_t>(policy.budget)) {
      res.budget_hit = true;
      break;
    }
    std::unordered_map<std::string, Candidate> best;
    std::vector<std::string> cand_order;  // deterministic first-seen order
    for (const auto& uid : frontier) {
      const double u_score = res.visited[visited_at.at(uid)].score;
      for (EdgeType t : kEdgeTypes) {
        if (!policy.enabled_types.contains(t)) continue;
        for (size_t idx : store.edges_touching(uid, t)) {
          const TypedEdge& e = store.edges()[idx];
          const std::string& vid = e.src == uid ? e.dst : e.src;
          if (visited_at.count(vid)) continue;
          const double s = u_score * policy.gamma + transition(t, vid);
          auto it = best.find(vid);
          if (it == best.end()) {
            best.emplace(vid, Candidate{s, uid, t});
            cand_order.push_back(vid);
          } else if (s > it->second.score) {
            it->second = Candidate{s, uid, t};
          }
        }
      }
    }
    if (best.empty()) break;
    double step_max = 0.0;
    for (const auto& vid : cand_order) step_max = std::max(step_max, best.at(vid).score);
    std::vector<std::string> kept;
    for (const auto& vid : cand_order)
      if (best.at(vid).score >= policy.drop_threshold * step_max) kept.push_back(vid);
    std::sort(kept.begin(), kept.end(), [&](const std::string& a, const std::string& b) {
      const double sa = best.at(a).score, sb = best.at(b).score;
      if (sa != sb) return sa > sb;
      return a < b;
    });
    if (kept.size() > static_cast<size_t>(policy.beam_width))
      kept.resize(static_cast<size_t>(policy.beam_width));
    frontier.clear();
    for (const auto& vid : kept) {
      const Candidate& c = best.at(vid);
      visit({vid, c.score, depth, c.pred, c.via});
      frontier.push_back(vid);
    }
    res.depth_reached = depth;
    if (res.visited.size() >= static_cast<size_t>(policy.budget)) {
      res.budget_hit = true;
      break;
    }
  }

  for (const auto& e : store.edges()) {
    if (!policy.enabled_types.contains(e.type)) continue;
    if (visited_at.count(e.src) && visited_at.count(e.dst)) {
      res.induced_edges.push_back(e);
      ++res.edge_type_counts[e.type];
    }
  }
  return res;
}

// ------------------------------------------------------------ linearization ---

struct ContextBlock {
  std::string node_id;
  std::int64_t timestamp = 0;
  std::string text;
  double salience = 0.0;
  bool elided = false;
};

struct LinearizedContext {
  std::vector<ContextBlock> blocks;     // narrative order, elided ones flagged
  std::string rendered;
  int token_count = 0;
  std::vector<std::string> references;  // non-elided node ids in block order
};

// ceil(chars / 4): the pinned token estimator.
inline int estimate_tokens(std::string_view s) {
  return static_cast<int>((s.size() + 3) / 4);
}

inline std::string render_block(const ContextBlock& b) {
  return "<t:" + format_iso(b.timestamp) + "> " + b.text + " <ref:" + b.node_id + ">";
}

namespace detail {

inline std::string render_context(const std::vector<ContextBlock>& blocks) {
  std::vector<std::string> lines;
  size_t i = 0;
  while (i < blocks.size()) {
    if (!blocks[i].elided) {
      lines.push_back(render_block(blocks[i]));
      ++i;
      continue;
    }
    size_t j = i;
    while (j < blocks.size() && blocks[j].elided) ++j;
    lines.push_back("..." + std::to_string(j - i) + " intermediate events...");
    i = j;
  }
  std::string out;
  for (size_t k = 0; k < lines.size(); ++k) {
    if (k) out.push_back('\n');
    out += lines[k];
  }
  return out;
}

// Narrative order for the retrieved events. WHY uses a stable topological
// order over the causal edges (sources strictly before targets, ties by
// timestamp then id); everything else is plain timeline order. Causal cycles
// fall back to timeline order for the strongly-connected remainder.
inline std::vector<std::string> narrative_order(const MemoryGraph& store,
                                                const std::vector<std::string>& event_ids,
                                                const std::vector<TypedEdge>& edges,
                                                IntentLabel intent) {
  auto by_time = [&](const std::string& a, const std::string& b) {
    const auto ta = store.event(a).timestamp, tb = store.event(b).timestamp;
    if (ta != tb) return ta < tb;
    return a < b;
  };
  std::vector<std::string> ids = event_ids;
  std::sort(ids.begin(), ids.end(), by_time);
  if (intent != IntentLabel::Why) return ids;

  std::unordered_map<std::string, int> indeg;
  std::unordered_map<std::string, std::vector<std::string>> out;
  for (const auto& id : ids) indeg[id] = 0;
  for (const auto& e : edges) {
    if (e.type != EdgeType::Causal) continue;
    if (!indeg.count(e.src) || !indeg.count(e.dst)) continue;
    out[e.src].push_back(e.dst);
    ++indeg[e.dst];
  }
  auto cmp = [&](const std::string& a, const std::string& b) { return by_time(b, a); };
  std::priority_queue<std::string, std::vector<std::string>, decltype(cmp)> ready(cmp);
  for (const auto& id : ids)
    if (indeg[id] == 0) ready.push(id);
  std::vector<std::string> ordered;
  std::unordered_set<std::string> placed;
  while (!ready.empty()) {
    std::string id = ready.top();
    ready.pop();
    ordered.push_back(id);
    placed.insert(id);
    for (const auto& nxt : out[id])
      if (--indeg[nxt] == 0) ready.push(nxt);
  }
  for (const auto& id : ids)  // cycle remainder, timeline order
    if (!placed.count(id)) ordered.push_back(id);
  return ordered;
}

}  // namespace detail

// Serialize the retrieved events under a hard token budget. Blocks are laid
// out in narrative order; when the full rendering exceeds the budget, blocks
// are elided lowest-salience-first (later position breaks ties) and each
// maximal elided run renders as one brevity marker. The top-salience block is
// never elided; if even the maximally elided rendering exceeds the budget the
// call fails rather than overflowing.
inline LinearizedContext linearize(const MemoryGraph& store, const TraversalResult& traversal,
                                   IntentLabel intent, int token_budget) {
  std::vector<std::string> event_ids;
  std::unordered_map<std::string, double> salience;
  for (const auto& v : traversal.visited) {
    if (!store.has_event(v.id)) continue;  // entity nodes do not render
    event_ids.push_back(v.id);
    salience[v.id] = v.score;
  }
  if (event_ids.empty()) throw std::invalid_argument("empty subgraph");

  const auto ordered =
      detail::narrative_order(store, event_ids, traversal.induced_edges, intent);
  LinearizedContext ctx;
  ctx.blocks.reserve(ordered.size());
  for (const auto& id : ordered) {
    const EventNode& n = store.event(id);
    ctx.blocks.push_back({id, n.timestamp, n.content, salience.at(id), false});
  }

  // Protected block: highest salience, earliest position on ties.
  size_t protected_idx = 0;
  for (size_t i = 1; i < ctx.blocks.size(); ++i)
    if (ctx.blocks[i].salience > ctx.blocks[protected_idx].salience) protected_idx = i;

  // Elision order: ascending salience, later position first on ties.
  std::vector<size_t> victims;
  for (size_t i = 0; i < ctx.blocks.size(); ++i)
    if (i != protected_idx) victims.push_back(i);
  std::sort(victims.begin(), victims.end(), [&](size_t a, size_t b) {
    if (ctx.blocks[a].salience != ctx.blocks[b].salience)
      return ctx.blocks[a].salience < ctx.blocks[b].salience;
    return a > b;
  });

  ctx.rendered = detail::render_context(ctx.blocks);
  size_t next_victim = 0;
  while (estimate_tokens(ctx.rendered) > token_budget) {
    if (next_victim >= victims.size())
      throw BudgetError("token budget " + std::to_string(token_budget) +
                        " infeasible: minimal rendering needs " +
                        std::to_string(estimate_tokens(ctx.rendered)) + " tokens");
    ctx.blocks[victims[next_victim++]].elided = true;
    ctx.rendered = detail::render_context(ctx.blocks);
  }
  ctx.token_count = estimate_tokens(ctx.rendered);
  for (const auto& b : ctx.blocks)
    if (!b.elided) ctx.references.push_back(b.node_id);
  return ctx;
}

}  // namespace magma
