#pragma once

// In-memory multigraph over event and entity nodes with four typed edge
// spaces, plus line-delimited JSON persistence and a full-graph audit.
//
// Structural rules enforced at the write API:
//  - events form a single temporal backbone chain in insertion order, with
//    non-decreasing timestamps;
//  - CAUSAL connects two events; SEMANTIC connects two events (undirected,
//    stored with endpoints in lexicographic order) and must carry confidence
//    above the similarity floor; ENTITY goes event -> entity;
//  - no duplicate (type, src, dst) edge; confidence in [0,1].
// Loading is deliberately tolerant: well-formed records are accepted as-is and
// integrity problems surface through audit(), so a damaged file can still be
// opened and inspected.

#include <array>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "core.hpp"

namespace magma {

struct AuditViolation {
  std::string rule;    // stable machine-readable rule name
  std::string detail;  // human-readable context with the ids involved
};

// Connected slice returned by neighborhood(): node ids plus the edges induced
// among them, restricted to the requested edge types.
struct Subgraph {
  std::vector<std::string> event_ids;
  std::vector<std::string> entity_ids;
  std::vector<TypedEdge> edges;
};

class MemoryGraph {
 public:
  explicit MemoryGraph(size_t dimension = 384, double theta_sim = 0.20,
                       bool clamp_out_of_order = false)
      : dim_(dimension), theta_sim_(theta_sim), clamp_(clamp_out_of_order) {}

  size_t dimension() const { return dim_; }
  double theta_sim() const { return theta_sim_; }
  size_t event_count() const { return order_.size(); }
  size_t entity_count() const { return entity_order_.size(); }
  size_t edge_count() const { return edges_.size(); }
  const std::vector<std::string>& event_order() const { return order_; }
  const std::vector<std::string>& entity_order() const { return entity_order_; }
  const std::vector<TypedEdge>& edges() const { return edges_; }
  const std::string& tail_id() const { return tail_; }

  bool has_event(const std::string& id) const { return events_.count(id) > 0; }
  bool has_entity(const std::string& id) const { return entities_.count(id) > 0; }
  bool has_node(const std::string& id) const { return has_event(id) || has_entity(id); }

  const EventNode& event(const std::string& id) const {
    auto it = events_.find(id);
    if (it == events_.end()) throw StoreError("unknown event: " + id);
    return it->second;
  }

  const EntityNode& entity(const std::string& id) const {
    auto it = entities_.find(id);
    if (it == entities_.end()) throw StoreError("unknown entity: " + id);
    return it->second;
  }

  // Append an event to the temporal backbone. An empty id is assigned the
  // next sequential one. The node's timestamp must be >= the current tail's;
  // older timestamps are clamped to the tail when configured, rejected
  // otherwise. Returns the stored id.
  std::string add_event(EventNode node) {
    if (node.id.empty()) node.id = next_event_id();
    if (has_node(node.id)) throw StoreError("duplicate node id: " + node.id);
    if (node.embedding.size() != dim_)
      throw StoreError("embedding dimension " + std::to_string(node.embedding.size()) +
                       " != " + std::to_string(dim_) + " for " + node.id);
    if (!tail_.empty()) {
      const auto tail_ts = events_.at(tail_).timestamp;
      if (node.timestamp < tail_ts) {
        if (!clamp_) throw StoreError("out-of-order event " + node.id);
        node.timestamp = tail_ts;
      }
    }
    if (node.timestamp_raw.empty()) node.timestamp_raw = format_iso(node.timestamp);
    const std::string id = node.id;
    const auto ts = node.timestamp;
    events_.emplace(id, std::move(node));
    order_.push_back(id);
    if (!tail_.empty())
      insert_edge_raw({tail_, id, EdgeType::Temporal, 1.0, EdgeOrigin::FastPath, ts});
    tail_ = id;
    bump_seq(id, "e", event_seq_);
    return id;
  }

  // Find-or-create by canonical name; records `alias` (and the canonical name
  // itself) in the alias set. Returns the entity id.
  std::string upsert_entity(const std::string& canonical, const std::string& alias = {}) {
    if (canonical.empty()) throw std::invalid_argument("degenerate entity: empty canonical name");
    auto it = entity_by_name_.find(canonical);
    std::string id;
    if (it == entity_by_name_.end()) {
      id = next_entity_id();
      EntityNode n{id, canonical, {canonical}};
      entities_.emplace(id, std::move(n));
      entity_by_name_.emplace(canonical, id);
      entity_order_.push_back(id);
      bump_seq(id, "ent", entity_seq_);
    } else {
      id = it->second;
    }
    if (!alias.empty()) {
      auto& al = entities_.at(id).aliases;
      auto pos = std::lower_bound(al.begin(), al.end(), alias);
      if (pos == al.end() || *pos != alias) al.insert(pos, alias);
    }
    return id;
  }

  // Insert a typed edge. Returns false (graph unchanged) when the identical
  // (type, src, dst) edge already exists; throws on structural violations.
  bool add_edge(TypedEdge e) {
    validate_edge(e);
    if (e.type == EdgeType::Semantic && e.dst < e.src) std::swap(e.src, e.dst);
    if (edge_keys_.count(edge_key(e))) return false;
    if (e.type == EdgeType::Temporal) {
      // The backbone is maintained by add_event; any new chain edge here
      // would break the one-in/one-out invariant.
      throw StoreError("temporal backbone edges are managed by add_event");
    }
    insert_edge_raw(std::move(e));
    return true;
  }

  // Attribute refresh from consolidation; never touches content, timestamps
  // or the backbone.
  void set_attributes(const std::string& id, AttributeSet attrs) {
    auto it = events_.find(id);
    if (it == events_.end()) throw StoreError("unknown event: " + id);
    it->second.attributes = std::move(attrs);
  }

  // Edge indexes touching `id` of one type, in insertion order: first edges
  // where id is src, then edges where id is dst.
  std::vector<size_t> edges_touching(const std::string& id, EdgeType t) const {
    std::vector<size_t> out;
    auto add = [&](const AdjMap& adj) {
      auto it = adj[static_cast<size_t>(t)].find(id);
      if (it != adj[static_cast<size_t>(t)].end())
        out.insert(out.end(), it->second.begin(), it->second.end());
    };
    add(out_adj_);
    add(in_adj_);
    return out;
  }

  // Breadth-first closure around `center` within `hops`, following the
  // enabled edge types in both directions, then the induced edges (same type
  // filter) among the collected nodes.
  Subgraph neighborhood(const std::string& center, int hops,
                        EdgeTypeSet types = EdgeTypeSet::all()) const {
    if (!has_node(center)) throw StoreError("unknown node: " + center);
    std::unordered_set<std::string> seen{center};
    std::deque<std::pair<std::string, int>> frontier{{center, 0}};
    std::vector<std::string> in_order{center};
    while (!frontier.empty()) {
      auto [id, depth] = frontier.front();
      frontier.pop_front();
      if (depth >= hops) continue;
      for (EdgeType t : kEdgeTypes) {
        if (!types.contains(t)) continue;
        for (size_t idx : edges_touching(id, t)) {
          const auto& e = edges_[idx];
          const std::string& other = e.src == id ? e.dst : e.src;
          if (seen.insert(other).second) {
            in_order.push_back(other);
            frontier.emplace_back(other, depth + 1);
          }
        }
      }
    }
    Subgraph sub;
    for (const auto& id : in_order)
      (has_event(id) ? sub.event_ids : sub.entity_ids).push_back(id);
    for (const auto& e : edges_) {
      if (!types.contains(e.type)) continue;
      if (seen.count(e.src) && seen.count(e.dst)) sub.edges.push_back(e);
    }
    return sub;
  }

  // Full-graph integrity scan; empty result means healthy.
  std::vector<AuditViolation> audit() const {
    std::vector<AuditViolation> out;
    std::unordered_map<std::string, int> t_in, t_out;
    size_t temporal_count = 0;
    std::unordered_set<std::string> keys;
    for (const auto& e : edges_) {
      const bool src_ok = has_event(e.src);
      const bool dst_ok = e.type == EdgeType::Entity ? has_entity(e.dst) : has_event(e.dst);
      if (!src_ok || !dst_ok) {
        out.push_back({"dangling endpoint", to_string(e.type) + std::string(" ") + e.src +
                                                " -> " + e.dst});
        continue;
      }
      if (!keys.insert(edge_key(e)).second)
        out.push_back({"duplicate edge",
                       to_string(e.type) + std::string(" ") + e.src + " -> " + e.dst});
      if (e.confidence < 0.0 || e.confidence > 1.0)
        out.push_back({"confidence range", e.src + " -> " + e.dst + " confidence " +
                                               std::to_string(e.confidence)});
      switch (e.type) {
        case EdgeType::Temporal: {
          ++temporal_count;
          ++t_out[e.src];
          ++t_in[e.dst];
          if (events_.at(e.src).timestamp > events_.at(e.dst).timestamp)
            out.push_back({"temporal order", e.src + " -> " + e.dst});
          break;
        }
        case EdgeType::Causal:
          if (events_.at(e.src).timestamp > events_.at(e.dst).timestamp)
            out.push_back({"causal orientation", e.src + " -> " + e.dst});
          break;
        case EdgeType::Semantic:
          if (e.confidence < theta_sim_)
            out.push_back({"semantic threshold", e.src + " -- " + e.dst + " confidence " +
                                                     std::to_string(e.confidence)});
          break;
        case EdgeType::Entity:
          break;
      }
    }
    // Backbone shape: N-1 chain edges, each node at most one in and one out.
    if (!order_.empty() && temporal_count != order_.size() - 1)
      out.push_back({"temporal backbone", std::to_string(temporal_count) + " chain edges for " +
                                              std::to_string(order_.size()) + " events"});
    for (const auto& id : order_) {
      if (t_in[id] > 1) out.push_back({"temporal backbone", id + " has in-degree > 1"});
      if (t_out[id] > 1) out.push_back({"temporal backbone", id + " has out-degree > 1"});
    }
    for (const auto& id : order_) {
      const auto& n = events_.at(id);
      if (n.embedding.size() != dim_)
        out.push_back({"embedding dimension",
                       id + " has dimension " + std::to_string(n.embedding.size())});
    }
    for (const auto& id : entity_order_) {
      const auto& n = entities_.at(id);
      if (n.canonical_name.empty())
        out.push_back({"entity canonical", id + " has empty canonical name"});
      else if (std::find(n.aliases.begin(), n.aliases.end(), n.canonical_name) ==
               n.aliases.end())
        out.push_back({"entity canonical", id + " aliases miss canonical name"});
    }
    return out;
  }

  // ------------------------------------------------------------ persistence

  // Line-delimited JSON: one header record, then nodes, entities and edges in
  // insertion order. Stable output for identical stores.
  void save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw StoreError("cannot write " + path.string());
    json header{{"kind", "header"},
                {"format", "magma-graph"},
                {"version", 1},
                {"d", dim_},
                {"theta_sim", theta_sim_}};
    f << header.dump() << '\n';
    auto dump_flat = [&f](const char* kind, json j) {
      j["kind"] = kind;
      f << j.dump() << '\n';
    };
    for (const auto& id : order_) dump_flat("node", events_.at(id));
    for (const auto& id : entity_order_) dump_flat("entity", entities_.at(id));
    for (const auto& e : edges_) dump_flat("edge", e);
    if (!f) throw StoreError("write failed: " + path.string());
  }

  // Parse errors abort with the offending line number and leave no partial
  // store behind; structural damage is left for audit() to report.
  static MemoryGraph load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw StoreError("cannot open " + path.string());
    std::string line;
    size_t line_no = 0;
    MemoryGraph g;
    bool have_header = false;
    while (std::getline(f, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded())
        throw StoreError(path.string() + ":" + std::to_string(line_no) + ": malformed record");
      try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "header") {
          g.dim_ = j.value("d", size_t{384});
          g.theta_sim_ = j.value("theta_sim", 0.20);
          have_header = true;
        } else if (kind == "node") {
          g.load_event(j.get<EventNode>());
        } else if (kind == "entity") {
          g.load_entity(j.get<EntityNode>());
        } else if (kind == "edge") {
          g.insert_edge_raw(j.get<TypedEdge>());
        }
        // Unknown kinds and fields are ignored for forward compatibility.
      } catch (const json::exception& e) {
        throw StoreError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (!have_header) throw StoreError(path.string() + ": missing header record");
    return g;
  }

 private:
  using AdjMap = std::array<std::unordered_map<std::string, std::vector<size_t>>, 4>;

  std::string next_event_id() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "e%06llu", static_cast<unsigned long long>(event_seq_ + 1));
    return buf;
  }

  std::string next_entity_id() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ent%06llu", static_cast<unsigned long long>(entity_seq_ + 1));
    return buf;
  }

  // Keep the sequence counter ahead of any id of the form <prefix><digits>,
  // so loaded stores continue numbering without collisions.
  static void bump_seq(const std::string& id, std::string_view prefix, std::uint64_t& seq) {
    if (id.size() <= prefix.size() || id.compare(0, prefix.size(), prefix) != 0) {
      ++seq;
      return;
    }
    std::uint64_t v = 0;
    for (size_t i = prefix.size(); i < id.size(); ++i) {
      if (id[i] < '0' || id[i] > '9') {
        ++seq;
        return;
      }
      v = v * 10 + static_cast<std::uint64_t>(id[i] - '0');
    }
    seq = std::max(seq, v);
  }

  static std::string edge_key(const TypedEdge& e) {
    return std::string(to_string(e.type)) + '|' + e.src + '|' + e.dst;
  }

  void validate_edge(const TypedEdge& e) const {
    if (e.confidence < 0.0 || e.confidence > 1.0)
      throw StoreError("confidence out of range: " + std::to_string(e.confidence));
    if (e.src == e.dst) throw StoreError("self edge: " + e.src);
    switch (e.type) {
      case EdgeType::Temporal:
      case EdgeType::Causal:
      case EdgeType::Semantic:
        if (!has_event(e.src)) throw StoreError("dangling endpoint: " + e.src);
        if (!has_event(e.dst)) throw StoreError("dangling endpoint: " + e.dst);
        break;
      case EdgeType::Entity:
        if (!has_event(e.src)) throw StoreError("ENTITY edge src must be an event: " + e.src);
        if (!has_entity(e.dst)) throw StoreError("ENTITY edge dst must be an entity: " + e.dst);
        break;
    }
    if (e.type == EdgeType::Semantic && e.confidence < theta_sim_)
      throw StoreError("semantic confidence " + std::to_string(e.confidence) +
                       " below threshold " + std::to_string(theta_sim_));
  }

  void insert_edge_raw(TypedEdge e) {
    const size_t idx = edges_.size();
    edge_keys_.insert(edge_key(e));
    out_adj_[static_cast<size_t>(e.type)][e.src].push_back(idx);
    in_adj_[static_cast<size_t>(e.type)][e.dst].push_back(idx);
    edges_.push_back(std::move(e));
  }

  void load_event(EventNode n) {
    if (n.id.empty() || has_node(n.id)) throw StoreError("bad node id in file: \"" + n.id + "\"");
    const std::string id = n.id;
    events_.emplace(id, std::move(n));
    order_.push_back(id);
    tail_ = id;
    bump_seq(id, "e", event_seq_);
  }

  void load_entity(EntityNode n) {
    if (n.id.empty() || has_node(n.id)) throw StoreError("bad entity id in file: \"" + n.id + "\"");
    const std::string id = n.id;
    entity_by_name_.emplace(n.canonical_name, id);
    entities_.emplace(id, std::move(n));
    entity_order_.push_back(id);
    bump_seq(id, "ent", entity_seq_);
  }

  size_t dim_;
  double theta_sim_;
  bool clamp_;
  std::unordered_map<std::string, EventNode> events_;
  std::unordered_map<std::string, EntityNode> entities_;
  std::unordered_map<std::string, std::string> entity_by_name_;
  std::vector<std::string> order_;         // event insertion order == backbone order
  std::vector<std::string> entity_order_;  // entity insertion order
  std::vector<TypedEdge> edges_;           // global insertion order
  std::unordered_set<std::string> edge_keys_;
  AdjMap out_adj_;
  AdjMap in_adj_;
  std::string tail_;
  std::uint64_t event_seq_ = 0;
  std::uint64_t entity_seq_ = 0;
};

}  // namespace magma
