#include <catch2/catch_amalgamated.hpp>

#include <magma/consolidate.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

using namespace magma;

namespace {

// Delegating tap: records every prompt before handing it to the wrapped
// provider, so tests can count calls and inspect what the worker sent.
class Tap : public ChatProvider {
 public:
  explicit Tap(ChatProvider& inner) : inner_(inner) {}
  std::string complete(const Prompt& p) override {
    prompts.push_back(p);
    return inner_.complete(p);
  }
  std::vector<Prompt> prompts;

 private:
  ChatProvider& inner_;
};

// Always-offline provider.
class DeadChat : public ChatProvider {
 public:
  std::string complete(const Prompt&) override { throw ProviderError("provider offline"); }
};

// Fails the first `fail_count` calls, then delegates.
class FlakyChat : public ChatProvider {
 public:
  FlakyChat(ChatProvider& inner, int fail_count) : inner_(inner), remaining_(fail_count) {}
  std::string complete(const Prompt& p) override {
    if (remaining_ > 0) {
      --remaining_;
      throw ProviderError("transient outage");
    }
    return inner_.complete(p);
  }

 private:
  ChatProvider& inner_;
  int remaining_;
};

// Returns the same canned body for every call.
class CannedChat : public ChatProvider {
 public:
  explicit CannedChat(std::string body) : body_(std::move(body)) {}
  std::string complete(const Prompt&) override { return body_; }

 private:
  std::string body_;
};

using EdgeKey = std::tuple<std::string, std::string, std::string, double, std::string>;

std::multiset<EdgeKey> edge_multiset(const MemoryGraph& g) {
  std::multiset<EdgeKey> out;
  for (const auto& e : g.edges())
    out.insert({to_string(e.type), e.src, e.dst, e.confidence, to_string(e.origin)});
  return out;
}

struct Crib {
  MemoryGraph store{32};
  KeywordIndex kindex;
  ConsolidationQueue queue;
  HashedBowEmbedder encoder{32};
  MockChatProvider extractor{ProviderRole::Extractor, MockRules::defaults()};
  MockChatProvider reasoner{ProviderRole::Reasoner, MockRules::defaults()};

  std::string add(const std::string& content, std::int64_t ts,
                  const std::string& speaker = "Melanie",
                  const std::string& episode = "s1") {
    EventNode n;
    n.content = content;
    n.timestamp = ts;
    n.embedding = encoder.embed({content}).front();
    n.attributes.speaker = speaker;
    n.episode_id = episode;
    const std::string id = store.add_event(std::move(n));
    kindex.index_document(id, index_text(store.event(id)));
    queue.enqueue(id);
    return id;
  }
};

}  // namespace

TEST_CASE("consolidation fills attributes and refreshes the keyword index") {
  Crib c;
  const auto id = c.add("Melanie hiked the Ridge Trail in heavy rain.", 1000);
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner);

  // Before consolidation only the raw content is searchable.
  REQUIRE(c.kindex.search({"outdoors"}, 5).empty());

  const auto rep = worker.consolidate_one(id);
  CHECK(rep.attributes_set);
  CHECK_FALSE(rep.failed);
  CHECK_FALSE(rep.already_done);

  const auto& attrs = c.store.event(id).attributes;
  CHECK(attrs.topic == "outdoors");
  CHECK(attrs.speaker == "Melanie");
  CHECK(attrs.summary == "Melanie: Melanie hiked the Ridge Trail in heavy rain.");
  CHECK(std::count(attrs.entities.begin(), attrs.entities.end(), "Ridge") == 1);
  CHECK(std::count(attrs.entities.begin(), attrs.entities.end(), "Trail") == 1);

  // Extracted topic is now part of the searchable document.
  const auto hits = c.kindex.search({"outdoors"}, 5);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].id == id);
  CHECK(c.queue.is_done(id));
}

TEST_CASE("extraction context carries the previous backbone summary") {
  Crib c;
  Tap tapped(c.extractor);
  const auto first = c.add("Melanie planned a coastal roadtrip.", 1000);
  const auto second = c.add("Caroline asked about the route.", 2000, "Caroline");
  Consolidator worker(c.store, c.kindex, c.queue, tapped, c.reasoner);

  worker.consolidate_one(first);
  worker.consolidate_one(second);

  REQUIRE(tapped.prompts.size() == 2);
  CHECK(tapped.prompts[0].user.find("- Context: \n") != std::string::npos);
  const std::string want =
      "- Context: Melanie: Melanie planned a coastal roadtrip.\n";
  CHECK(tapped.prompts[1].user.find(want) != std::string::npos);
}

TEST_CASE("entity linking normalizes mentions and skips degenerate ones") {
  Crib c;
  const auto id = c.add("placeholder text", 1000);
  // Scripted extraction response: full schema, entities chosen to exercise
  // normalization (case fold, surrounding punctuation, pure-punctuation skip).
  CannedChat scripted(R"({"entities": ["Ridge Trail", "C++", "!!!", "Ridge Trail"],
                          "topic": "outdoors", "relationships": [], "semantic_facts": [],
                          "dates_mentioned": [], "summary": "s"})");
  Consolidator worker(c.store, c.kindex, c.queue, scripted, c.reasoner);

  const auto rep = worker.consolidate_one(id);
  // Two usable canonical forms; the duplicate mention hits an existing edge.
  CHECK(rep.entity_edges == 2);
  REQUIRE(c.store.entity_count() == 2);

  const auto& ent_ids = c.store.entity_order();
  CHECK(c.store.entity(ent_ids[0]).canonical_name == "ridge trail");
  CHECK(c.store.entity(ent_ids[1]).canonical_name == "c");

  int entity_edges = 0;
  for (const auto& e : c.store.edges())
    if (e.type == EdgeType::Entity) {
      ++entity_edges;
      CHECK(e.src == id);
      CHECK(e.confidence == 1.0);
      CHECK(e.origin == EdgeOrigin::Consolidation);
      CHECK(e.created_at == 1000);
    }
  CHECK(entity_edges == 2);

  SECTION("aliases accumulate on the entity node") {
    const auto& ridge = c.store.entity(ent_ids[0]);
    CHECK(ridge.aliases == std::vector<std::string>{"Ridge Trail", "ridge trail"});
  }
}

TEST_CASE("semantic edges link the nearest prior nodes above the floor") {
  Crib c;
  ConsolidationConfig cfg;
  cfg.semantic_top_m = 2;
  std::vector<std::string> prior = {
      c.add("alpha beta gamma", 1000),
      c.add("alpha beta delta", 2000),
      c.add("alpha epsilon zeta", 3000),
      c.add("quiet solitary nothing", 4000),
  };
  const auto target = c.add("alpha beta gamma extra", 5000);
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner, cfg);

  // Independent expectation: cosine against each prior node, keep >theta,
  // sort by score then id, truncate to top m.
  std::vector<Scored> want;
  for (const auto& pid : prior) {
    const double cs = cosine(c.store.event(target).embedding, c.store.event(pid).embedding);
    if (cs > c.store.theta_sim()) want.push_back({pid, cs});
  }
  std::sort(want.begin(), want.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (want.size() > 2) want.resize(2);
  REQUIRE(want.size() == 2);  // the fixture is built to saturate top_m

  const auto rep = worker.consolidate_one(target);
  CHECK(rep.semantic_edges == 2);

  std::vector<Scored> got;
  for (const auto& e : c.store.edges())
    if (e.type == EdgeType::Semantic) {
      // Undirected storage orientation: endpoints sorted by id.
      CHECK(e.src < e.dst);
      CHECK(e.dst == target);
      got.push_back({e.src, e.confidence});
      CHECK(e.origin == EdgeOrigin::Consolidation);
    }
  std::sort(got.begin(), got.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i) {
    CHECK(got[i].id == want[i].id);
    CHECK(got[i].score == Catch::Approx(want[i].score).margin(1e-12));
  }
}

TEST_CASE("semantic candidates are restricted to earlier backbone nodes") {
  Crib c;
  const auto early = c.add("alpha beta gamma", 1000);
  const auto mid = c.add("alpha beta gamma shared", 2000);
  const auto late = c.add("alpha beta gamma shared twin", 3000);
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner);

  // Process the middle node: only the earliest node may be linked even though
  // the later twin is more similar.
  worker.consolidate_one(mid);
  for (const auto& e : c.store.edges())
    if (e.type == EdgeType::Semantic) {
      CHECK(e.src == early);
      CHECK(e.dst == mid);
      CHECK(e.dst != late);
    }
  CHECK(std::count_if(c.store.edges().begin(), c.store.edges().end(),
                      [](const TypedEdge& e) { return e.type == EdgeType::Semantic; }) == 1);
}

TEST_CASE("causal edges come from provider proposals over the neighborhood") {
  Crib c;
  const auto cause_id = c.add("Heavy rain soaked the field.", 1000);
  const auto effect_id = c.add("They decided to cancel the picnic.", 2000);
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner);

  const auto rep = worker.consolidate_one(effect_id);
  CHECK(rep.causal_edges == 1);

  int causal = 0;
  for (const auto& e : c.store.edges())
    if (e.type == EdgeType::Causal) {
      ++causal;
      CHECK(e.src == cause_id);
      CHECK(e.dst == effect_id);
      CHECK(e.confidence == 0.9);
      CHECK(e.origin == EdgeOrigin::Consolidation);
    }
  CHECK(causal == 1);
}

TEST_CASE("causal orientation is forced from earlier to later") {
  Crib c;
  // Rule matches the later event as cause and the earlier one as effect; the
  // stored edge must still run along the arrow of time.
  MockRules rules = MockRules::from_json(json::parse(
      R"({"causal": [{"cause": "echo", "effect": "thunder", "confidence": 0.8}]})"));
  MockChatProvider backwards(ProviderRole::Reasoner, rules);
  const auto first = c.add("The thunder rolled over the valley.", 1000);
  const auto second = c.add("An echo followed much later.", 2000);
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, backwards);

  const auto rep = worker.consolidate_one(second);
  CHECK(rep.causal_edges == 1);
  for (const auto& e : c.store.edges())
    if (e.type == EdgeType::Causal) {
      CHECK(e.src == first);
      CHECK(e.dst == second);
      CHECK(e.confidence == 0.8);
    }
}

TEST_CASE("causal proposal filtering") {
  SECTION("confidence below the acceptance floor is dropped") {
    Crib c;
    MockRules rules = MockRules::from_json(json::parse(
        R"({"causal": [{"cause": "rain", "effect": "cancel", "confidence": 0.4}]})"));
    MockChatProvider weak(ProviderRole::Reasoner, rules);
    c.add("Heavy rain soaked the field.", 1000);
    const auto effect_id = c.add("They decided to cancel the picnic.", 2000);
    Consolidator worker(c.store, c.kindex, c.queue, c.extractor, weak);
    CHECK(worker.consolidate_one(effect_id).causal_edges == 0);
  }

  SECTION("confidence above one is rejected") {
    Crib c;
    MockRules rules = MockRules::from_json(json::parse(
        R"({"causal": [{"cause": "rain", "effect": "cancel", "confidence": 1.5}]})"));
    MockChatProvider wild(ProviderRole::Reasoner, rules);
    c.add("Heavy rain soaked the field.", 1000);
    const auto effect_id = c.add("They decided to cancel the picnic.", 2000);
    Consolidator worker(c.store, c.kindex, c.queue, c.extractor, wild);
    CHECK(worker.consolidate_one(effect_id).causal_edges == 0);
    CHECK(std::none_of(c.store.edges().begin(), c.store.edges().end(),
                       [](const TypedEdge& e) { return e.type == EdgeType::Causal; }));
  }

  SECTION("equal timestamps leave orientation undefined, so no edge") {
    Crib c;
    c.add("Heavy rain soaked the field.", 1000);
    const auto effect_id = c.add("They decided to cancel the picnic.", 1000);
    Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner);
    CHECK(worker.consolidate_one(effect_id).causal_edges == 0);
  }

  SECTION("self pairs and ids outside the neighborhood are discarded") {
    Crib c;
    ConsolidationConfig cfg;
    cfg.hops = 1;
    // Mutually dissimilar contents: no semantic edges appear mid-pass, so
    // the 1-hop ball around the tail stays backbone-only.
    std::vector<std::string> chain = {
        c.add("alpha one", 1000),
        c.add("beta two", 2000),
        c.add("gamma three", 3000),
        c.add("delta four", 4000),
    };
    // Proposals: a self loop, a far-away source outside the 1-hop ball, and
    // an id that does not exist at all.
    CannedChat scripted(R"({"causal_pairs": [
        {"src": ")" + chain[3] + R"(", "dst": ")" + chain[3] + R"(", "confidence": 0.9},
        {"src": ")" + chain[0] + R"(", "dst": ")" + chain[3] + R"(", "confidence": 0.9},
        {"src": "e999999", "dst": ")" + chain[3] + R"(", "confidence": 0.9}]})");
    Consolidator worker(c.store, c.kindex, c.queue, c.extractor, scripted, cfg);
    CHECK(worker.consolidate_one(chain[3]).causal_edges == 0);
  }
}

TEST_CASE("reasoner sees ordered event lines and capped episode history") {
  Crib c;
  ConsolidationConfig cfg;
  cfg.history_cap = 2;
  cfg.hops = 10;  // cover the whole backbone so every event line shows up
  Tap tapped(c.reasoner);

  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i)
    ids.push_back(c.add("note number " + std::to_string(i), 1000 * (i + 1)));
  const auto other = c.add("different episode note", 6000, "Sam", "s2");
  const auto target = c.add("the last note", 7000);

  // Give the backbone nodes summaries without running extraction, plus one
  // empty summary that must be skipped.
  for (size_t i = 0; i < ids.size(); ++i) {
    auto attrs = c.store.event(ids[i]).attributes;
    attrs.summary = i == 0 ? "" : "summary " + std::to_string(i);
    c.store.set_attributes(ids[i], attrs);
  }
  {
    auto attrs = c.store.event(other).attributes;
    attrs.summary = "foreign summary";
    c.store.set_attributes(other, attrs);
  }

  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, tapped, cfg);
  worker.consolidate_one(target);

  REQUIRE(tapped.prompts.size() == 1);
  const std::string& user = tapped.prompts[0].user;

  // Event lines appear in timestamp order with the exact serialized shape.
  const auto pos_target = user.find("[" + target + "] (" + format_iso(7000) + ") the last note");
  REQUIRE(pos_target != std::string::npos);
  size_t prev = 0;
  for (const auto& id : ids) {
    const auto pos = user.find("[" + id + "]");
    REQUIRE(pos != std::string::npos);
    CHECK(pos > prev);
    prev = pos;
  }
  CHECK(prev < pos_target);

  // History: first two same-episode nodes with non-empty summaries. The
  // empty summary, the foreign episode and anything past the cap are absent.
  CHECK(user.find("- summary 1\n") != std::string::npos);
  CHECK(user.find("- summary 2\n") != std::string::npos);
  CHECK(user.find("- summary 3") == std::string::npos);
  CHECK(user.find("foreign summary") == std::string::npos);
}

TEST_CASE("reprocessing a finished node is a provider-free no-op") {
  Crib c;
  Tap tap_ex(c.extractor);
  Tap tap_re(c.reasoner);
  const auto id = c.add("Heavy rain soaked the field.", 1000);
  Consolidator worker(c.store, c.kindex, c.queue, tap_ex, tap_re);

  worker.consolidate_one(id);
  const auto ex_calls = tap_ex.prompts.size();
  const auto re_calls = tap_re.prompts.size();
  REQUIRE(ex_calls >= 1);
  REQUIRE(re_calls >= 1);

  const auto rep = worker.consolidate_one(id);
  CHECK(rep.already_done);
  CHECK_FALSE(rep.attributes_set);
  CHECK(tap_ex.prompts.size() == ex_calls);
  CHECK(tap_re.prompts.size() == re_calls);
}

TEST_CASE("full reprocessing leaves the graph unchanged") {
  Crib c;
  c.add("Heavy rain soaked the Ridge Trail.", 1000);
  c.add("Melanie decided to cancel the hike.", 2000, "Melanie");
  c.add("Caroline suggested music practice instead.", 3000, "Caroline");
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner);
  REQUIRE(worker.run_worker() == 3);

  const auto edges_before = edge_multiset(c.store);
  const auto entities_before = c.store.entity_count();
  std::map<std::string, AttributeSet> attrs_before;
  for (const auto& id : c.store.event_order())
    attrs_before[id] = c.store.event(id).attributes;

  // A fresh queue has no memory of what finished, so every step re-runs in
  // full; only the dedupe guarantees of the store keep the graph stable.
  ConsolidationQueue queue2;
  for (const auto& id : c.store.event_order()) queue2.enqueue(id);
  Consolidator again(c.store, c.kindex, queue2, c.extractor, c.reasoner);
  std::vector<ConsolidationReport> reports;
  REQUIRE(again.run_worker(std::nullopt, &reports) == 3);

  for (const auto& r : reports) {
    CHECK_FALSE(r.already_done);
    CHECK(r.attributes_set);
    CHECK(r.entity_edges == 0);
    CHECK(r.semantic_edges == 0);
    CHECK(r.causal_edges == 0);
  }
  CHECK(edge_multiset(c.store) == edges_before);
  CHECK(c.store.entity_count() == entities_before);
  for (const auto& id : c.store.event_order()) {
    const auto& now = c.store.event(id).attributes;
    const auto& then = attrs_before[id];
    CHECK(now.summary == then.summary);
    CHECK(now.topic == then.topic);
    CHECK(now.entities == then.entities);
  }
  CHECK(c.store.audit().empty());
}

TEST_CASE("provider failure marks the node failed and requeues it once") {
  Crib c;
  DeadChat dead;
  const auto id = c.add("Heavy rain soaked the field.", 1000);
  Consolidator worker(c.store, c.kindex, c.queue, dead, c.reasoner);

  std::vector<ConsolidationReport> reports;
  const auto processed = worker.run_worker(std::nullopt, &reports);
  // First delivery fails and requeues; the retry fails and gives up.
  CHECK(processed == 2);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].failed);
  CHECK(reports[0].requeued);
  CHECK(reports[0].error.find("attribute extraction failed") != std::string::npos);
  CHECK(reports[1].failed);
  CHECK_FALSE(reports[1].requeued);
  CHECK(c.queue.size() == 0);
  CHECK(c.queue.failures(id) == 2);
  CHECK_FALSE(c.queue.is_done(id));
  // No partial attributes were written.
  CHECK(c.store.event(id).attributes.summary.empty());
}

TEST_CASE("transient extractor outage recovers on the retry delivery") {
  Crib c;
  // Extraction retries twice per delivery, so two throws burn exactly one
  // delivery and the requeued copy succeeds.
  FlakyChat flaky(c.extractor, 2);
  const auto id = c.add("Heavy rain soaked the field.", 1000);
  Consolidator worker(c.store, c.kindex, c.queue, flaky, c.reasoner);

  std::vector<ConsolidationReport> reports;
  CHECK(worker.run_worker(std::nullopt, &reports) == 2);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].failed);
  CHECK(reports[0].requeued);
  CHECK_FALSE(reports[1].failed);
  CHECK(reports[1].attributes_set);
  CHECK(c.queue.is_done(id));
  CHECK(c.store.event(id).attributes.topic == "weather");
}

TEST_CASE("late-stage failure keeps early work and converges on retry") {
  Crib c;
  DeadChat dead;
  c.add("Heavy rain soaked the field.", 1000);
  const auto id = c.add("They decided to cancel the picnic.", 2000);

  // Pass 1: attributes and entity/semantic edges land, the causal step dies.
  Consolidator broken(c.store, c.kindex, c.queue, c.extractor, dead);
  const auto rep1 = broken.consolidate_one(id);
  CHECK(rep1.failed);
  CHECK(rep1.requeued);
  CHECK(rep1.attributes_set);
  CHECK_FALSE(c.store.event(id).attributes.summary.empty());

  // Pass 2 with a healthy reasoner: already-done steps dedupe to zero and
  // the causal edge finally lands.
  Consolidator healthy(c.store, c.kindex, c.queue, c.extractor, c.reasoner);
  const auto rep2 = healthy.consolidate_one(id);
  CHECK_FALSE(rep2.failed);
  CHECK(rep2.entity_edges == 0);
  CHECK(rep2.semantic_edges == 0);
  CHECK(rep2.causal_edges == 1);
  CHECK(c.queue.is_done(id));
  CHECK(c.store.audit().empty());
}

TEST_CASE("run_worker honors max_items and drains otherwise") {
  Crib c;
  for (int i = 0; i < 3; ++i) c.add("filler " + std::to_string(i), 1000 * (i + 1));
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner);

  CHECK(worker.run_worker(1) == 1);
  CHECK(c.queue.size() == 2);
  CHECK(worker.run_worker() == 2);
  CHECK(c.queue.size() == 0);
  CHECK(worker.run_worker() == 0);
}

TEST_CASE("worker acks a crash-redelivered item without rework") {
  Crib c;
  const auto id = c.add("Heavy rain soaked the field.", 1000);
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner);

  // Simulate a crash between processing and acknowledgment: the node is
  // fully consolidated but still sits at the head of the queue.
  REQUIRE_FALSE(worker.consolidate_one(id).failed);
  REQUIRE(c.queue.size() == 1);

  std::vector<ConsolidationReport> reports;
  CHECK(worker.run_worker(std::nullopt, &reports) == 1);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].already_done);
  CHECK(c.queue.size() == 0);
}

TEST_CASE("consolidating an unknown id is a structural error") {
  Crib c;
  Consolidator worker(c.store, c.kindex, c.queue, c.extractor, c.reasoner);
  CHECK_THROWS_AS(worker.consolidate_one("e424242"), StoreError);
}
