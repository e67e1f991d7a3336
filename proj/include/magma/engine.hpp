#pragma once

// The memory engine facade: owns the graph, both indexes, the consolidation
// queue and the provider clients, and exposes the four verbs (ingest,
// consolidate, query, audit) behind a single reader/writer gate. Readers
// (query, audit) share the lock; writers (ingest, consolidate) are exclusive,
// so retrieval never observes a half-applied consolidation.

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "config.hpp"
#include "consolidate.hpp"
#include "core.hpp"
#include "graph_store.hpp"
#include "http_providers.hpp"
#include "indexes.hpp"
#include "ingest.hpp"
#include "providers.hpp"
#include "query.hpp"
#include "queue.hpp"
#include "version.hpp"

namespace magma {

// Per-role call accounting; the fast-path purity guarantees are checked
// against these numbers.
struct ProviderCounters {
  std::atomic<long> embedding_calls{0};
  std::atomic<long> extractor_calls{0};
  std::atomic<long> reasoner_calls{0};
  std::atomic<long> answerer_calls{0};
  std::atomic<long> judge_calls{0};

  long reasoning_calls() const {
    return extractor_calls.load() + reasoner_calls.load() + answerer_calls.load() +
           judge_calls.load();
  }
};

namespace detail {

// Decorators that bump the counters on every dispatch, wherever the call
// originates, so accounting cannot be bypassed.
class CountingChat : public ChatProvider {
 public:
  CountingChat(std::unique_ptr<ChatProvider> inner, std::atomic<long>& counter)
      : inner_(std::move(inner)), counter_(counter) {}
  std::string complete(const Prompt& prompt) override {
    counter_.fetch_add(1, std::memory_order_relaxed);
    return inner_->complete(prompt);
  }

 private:
  std::unique_ptr<ChatProvider> inner_;
  std::atomic<long>& counter_;
};

class CountingEmbedder : public Embedder {
 public:
  CountingEmbedder(std::unique_ptr<Embedder> inner, std::atomic<long>& counter)
      : inner_(std::move(inner)), counter_(counter) {}
  size_t dimension() const override { return inner_->dimension(); }
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    counter_.fetch_add(1, std::memory_order_relaxed);
    return inner_->embed(texts);
  }

 private:
  std::unique_ptr<Embedder> inner_;
  std::atomic<long>& counter_;
};

}  // namespace detail

struct RetrieveDiagnostics {
  IntentLabel intent = IntentLabel::General;
  std::optional<TimeWindow> window;
  std::vector<Scored> anchors;
  bool fallback_recency = false;
  size_t visited_count = 0;
  int depth_reached = 0;
  bool budget_hit = false;
  std::map<EdgeType, int> edge_type_counts;
  double anchor_ms = 0.0;
  double traverse_ms = 0.0;
  double linearize_ms = 0.0;
};

struct RetrieveResult {
  LinearizedContext context;
  RetrieveDiagnostics diagnostics;
};

struct IngestStats {
  std::vector<std::string> node_ids;
  size_t queue_depth = 0;
};

class MemoryEngine {
 public:
  explicit MemoryEngine(EngineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const MockRules rules = cfg_.mock_rules_path.empty()
                                ? MockRules::defaults()
                                : MockRules::load(cfg_.mock_rules_path);
    embedder_ = wrap(make_embedder(rules), counters_.embedding_calls);
    extractor_ = wrap(make_chat(ProviderRole::Extractor, rules), counters_.extractor_calls);
    reasoner_ = wrap(make_chat(ProviderRole::Reasoner, rules), counters_.reasoner_calls);
    answerer_ = wrap(make_chat(ProviderRole::Answerer, rules), counters_.answerer_calls);
    judge_ = wrap(make_chat(ProviderRole::Judge, rules), counters_.judge_calls);

    if (!cfg_.store_path.empty() && std::filesystem::exists(cfg_.store_path)) {
      store_ = std::make_unique<MemoryGraph>(MemoryGraph::load(cfg_.store_path));
      if (store_->dimension() != static_cast<size_t>(cfg_.dimension))
        throw StoreError("store dimension " + std::to_string(store_->dimension()) +
                         " != configured " + std::to_string(cfg_.dimension));
    } else {
      store_ = std::make_unique<MemoryGraph>(static_cast<size_t>(cfg_.dimension),
                                             cfg_.consolidation.theta_sim,
                                             cfg_.clamp_out_of_order);
    }
    vindex_ = std::make_unique<VectorIndex>(store_->dimension());
    kindex_ = std::make_unique<KeywordIndex>();
    rebuild_indexes();
    if (!cfg_.store_path.empty()) queue_.open(cfg_.store_path + ".queue");
    consolidator_ = std::make_unique<Consolidator>(*store_, *kindex_, queue_, *extractor_,
                                                   *reasoner_, cfg_.consolidation);
  }

  const EngineConfig& config() const { return cfg_; }
  const ProviderCounters& counters() const { return counters_; }
  ChatProvider& answerer() { return *answerer_; }
  ChatProvider& judge_provider() { return *judge_; }

  // ------------------------------------------------------------------ verbs

  IngestStats ingest(const Interaction& turn) {
    std::unique_lock lock(gate_);
    IngestStats st;
    st.node_ids = ingest_interaction(*store_, *vindex_, *kindex_, queue_, *embedder_, turn,
                                     segment_policy_from_string(cfg_.segmentation));
    st.queue_depth = queue_.size();
    return st;
  }

  ConsolidationReport consolidate_one(const std::string& id) {
    std::unique_lock lock(gate_);
    return consolidator_->consolidate_one(id);
  }

  size_t consolidate(std::optional<size_t> max_items = std::nullopt,
                     std::vector<ConsolidationReport>* reports = nullptr) {
    std::unique_lock lock(gate_);
    return consolidator_->run_worker(max_items, reports);
  }

  RetrieveResult query(const std::string& question, std::int64_t now) const {
    std::shared_lock lock(gate_);
    if (store_->event_count() == 0) throw StoreError("no memory: store is empty");
    QueryPlan plan;
    plan.raw = question;
    plan.intent = classify_intent(question);
    plan.window = parse_time(question, now);
    plan.embedding = embedder_->embed({question}).front();
    plan.keywords = index_tokenize(question);

    RetrieveResult out;
    const auto t0 = std::chrono::steady_clock::now();
    AnchorResult anchors = find_anchors(*store_, *vindex_, *kindex_, plan, cfg_.anchor);
    const auto t1 = std::chrono::steady_clock::now();
    TraversalResult trav = traverse(*store_, anchors.anchors, plan, cfg_.policy);
    const auto t2 = std::chrono::steady_clock::now();
    out.context = linearize(*store_, trav, plan.intent, cfg_.token_budget);
    const auto t3 = std::chrono::steady_clock::now();

    auto ms = [](auto a, auto b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    out.diagnostics.intent = plan.intent;
    out.diagnostics.window = plan.window;
    out.diagnostics.anchors = anchors.anchors;
    out.diagnostics.fallback_recency = anchors.fallback_recency;
    out.diagnostics.visited_count = trav.visited.size();
    out.diagnostics.depth_reached = trav.depth_reached;
    out.diagnostics.budget_hit = trav.budget_hit;
    out.diagnostics.edge_type_counts = trav.edge_type_counts;
    out.diagnostics.anchor_ms = ms(t0, t1);
    out.diagnostics.traverse_ms = ms(t1, t2);
    out.diagnostics.linearize_ms = ms(t2, t3);
    return out;
  }

  // Query followed by answer synthesis. Retrieval failures propagate;
  // answerer failures surface with the context preserved.
  std::string answer(const std::string& question, const RetrieveResult& retrieved) {
    return synthesize_answer(*answerer_, question, retrieved.context.rendered,
                             retrieved.diagnostics.intent);
  }

  std::vector<AuditViolation> audit() const {
    std::shared_lock lock(gate_);
    return store_->audit();
  }

  void save() const {
    std::shared_lock lock(gate_);
    if (!cfg_.store_path.empty()) store_->save(cfg_.store_path);
  }

  size_t queue_depth() const {
    std::shared_lock lock(gate_);
    return queue_.size();
  }

  // Read-only access for tests and the eval harness. Callers must not hold
  // these references across writes.
  const MemoryGraph& store() const { return *store_; }
  const ConsolidationQueue& queue() const { return queue_; }

 private:
  std::unique_ptr<ChatProvider> make_chat(ProviderRole role, const MockRules& rules) const {
    const ProviderConfig& pc = cfg_.providers.at(to_string(role));
    if (pc.mode == "http") return std::make_unique<HttpChatProvider>(pc);
    return std::make_unique<MockChatProvider>(role, rules);
  }

  std::unique_ptr<Embedder> make_embedder(const MockRules&) const {
    const ProviderConfig& pc = cfg_.providers.at("embedder");
    if (pc.mode == "http")
      return std::make_unique<HttpEmbedder>(pc, static_cast<size_t>(cfg_.dimension));
    return std::make_unique<HashedBowEmbedder>(static_cast<size_t>(cfg_.dimension));
  }

  static std::unique_ptr<ChatProvider> wrap(std::unique_ptr<ChatProvider> p,
                                            std::atomic<long>& c) {
    return std::make_unique<detail::CountingChat>(std::move(p), c);
  }

  static std::unique_ptr<Embedder> wrap(std::unique_ptr<Embedder> p, std::atomic<long>& c) {
    return std::make_unique<detail::CountingEmbedder>(std::move(p), c);
  }

  void rebuild_indexes() {
    for (const auto& id : store_->event_order()) {
      const EventNode& n = store_->event(id);
      // Mis-sized embeddings (possible in a damaged file) are left out of the
      // vector index; audit() reports them.
      if (n.embedding.size() == store_->dimension()) vindex_->add(id, n.embedding);
      kindex_->index_document(id, index_text(n));
    }
  }

  EngineConfig cfg_;
  mutable std::shared_mutex gate_;
  std::unique_ptr<MemoryGraph> store_;
  std::unique_ptr<VectorIndex> vindex_;
  std::unique_ptr<KeywordIndex> kindex_;
  ConsolidationQueue queue_;
  std::unique_ptr<Embedder> embedder_;
  std::unique_ptr<ChatProvider> extractor_;
  std::unique_ptr<ChatProvider> reasoner_;
  std::unique_ptr<ChatProvider> answerer_;
  std::unique_ptr<ChatProvider> judge_;
  std::unique_ptr<Consolidator> consolidator_;
  mutable ProviderCounters counters_;
};

}  // namespace magma
