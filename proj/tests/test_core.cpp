#include <catch2/catch_amalgamated.hpp>

#include <ctime>
#include <magma/core.hpp>
#include <magma/tokenize.hpp>

using namespace magma;

namespace {

// Tiny deterministic generator for property tests; seeds are pinned so
// failures replay.
struct Lcg {
  std::uint64_t state;
  explicit Lcg(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    return state >> 11;
  }
  std::int64_t range(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
};

std::string strftime_iso(std::int64_t ts) {
  std::time_t t = static_cast<std::time_t>(ts);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

TEST_CASE("error hierarchy preserves messages and kinds") {
  CHECK_THROWS_AS(throw StoreError("x"), Error);
  CHECK_THROWS_AS(throw ProviderError("x"), Error);
  CHECK_THROWS_AS(throw ConfigError("x"), Error);
  CHECK_THROWS_AS(throw BudgetError("x"), Error);
  try {
    throw StoreError("disk gone");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "disk gone");
  }
}

TEST_CASE("edge type names round-trip") {
  for (EdgeType t : kEdgeTypes) {
    CHECK(edge_type_from_string(to_string(t)) == t);
  }
  CHECK_THROWS_AS(edge_type_from_string("SIDEWAYS"), StoreError);
  CHECK(std::string(to_string(EdgeType::Causal)) == "CAUSAL");
  CHECK(std::string(to_string(EdgeOrigin::FastPath)) == "FAST_PATH");
  CHECK(edge_origin_from_string("CONSOLIDATION") == EdgeOrigin::Consolidation);
}

TEST_CASE("intent labels round-trip") {
  for (IntentLabel i :
       {IntentLabel::Why, IntentLabel::When, IntentLabel::Entity, IntentLabel::General}) {
    CHECK(intent_from_string(to_string(i)) == i);
  }
}

TEST_CASE("edge type set masks") {
  EdgeTypeSet s = EdgeTypeSet::all();
  CHECK(s.contains(EdgeType::Temporal));
  CHECK(s.contains(EdgeType::Entity));
  s = s.without(EdgeType::Causal);
  CHECK_FALSE(s.contains(EdgeType::Causal));
  CHECK(s.contains(EdgeType::Semantic));
  EdgeTypeSet two = EdgeTypeSet::of({EdgeType::Temporal, EdgeType::Entity});
  CHECK(two.contains(EdgeType::Temporal));
  CHECK_FALSE(two.contains(EdgeType::Semantic));
  CHECK_FALSE(EdgeTypeSet::none().contains(EdgeType::Temporal));
}

TEST_CASE("entity normalization") {
  CHECK(normalize_entity("  The  ALPS ") == "the alps");
  CHECK(normalize_entity("Melanie") == "melanie");
  CHECK(normalize_entity("\"San Francisco,\"") == "san francisco");
  CHECK(normalize_entity("C++") == "c");  // surrounding punctuation strips
  CHECK(normalize_entity("rock-climbing") == "rock-climbing");  // interior survives
  CHECK_THROWS_AS(normalize_entity("  ...  "), std::invalid_argument);
  CHECK_THROWS_AS(normalize_entity(""), std::invalid_argument);

  SECTION("idempotent on random words") {
    Lcg rng(41);
    for (int trial = 0; trial < 200; ++trial) {
      std::string s;
      const int len = static_cast<int>(rng.range(1, 12));
      for (int i = 0; i < len; ++i)
        s.push_back(static_cast<char>('a' + rng.range(0, 25)));
      const std::string once = normalize_entity(s);
      CHECK(normalize_entity(once) == once);
    }
  }
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(fnv1a64("x") != fnv1a64("y"));
}

TEST_CASE("iso formatting matches strftime and round-trips") {
  CHECK(format_iso(0) == "1970-01-01T00:00:00Z");
  CHECK(format_iso(1697705700) == "2023-10-19T08:55:00Z");
  CHECK(parse_iso("2023-10-19T08:55:00Z") == 1697705700);
  CHECK(parse_iso("2023-10-19T08:55:00") == 1697705700);  // Z optional
  CHECK(parse_iso("2023-10-19") == 1697673600);           // date-only -> midnight

  Lcg rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const std::int64_t ts = rng.range(0, (1ll << 33));
    const std::string mine = format_iso(ts);
    REQUIRE(mine == strftime_iso(ts));
    REQUIRE(parse_iso(mine) == ts);
  }
}

TEST_CASE("iso parsing rejects junk") {
  CHECK_THROWS_AS(parse_iso("not a date"), std::invalid_argument);
  CHECK_THROWS_AS(parse_iso("2023-13-01"), std::invalid_argument);
  CHECK_THROWS_AS(parse_iso("2023-02-30"), std::invalid_argument);
  CHECK_THROWS_AS(parse_iso(""), std::invalid_argument);
}

TEST_CASE("node and edge json round-trips") {
  EventNode n;
  n.id = "e000007";
  n.content = "I hiked the ridge trail.";
  n.timestamp = 1697705700;
  n.timestamp_raw = "2023-10-19T08:55:00Z";
  n.embedding = {0.5f, -0.25f, 0.0f};
  n.attributes.entities = {"ridge trail"};
  n.attributes.topic = "outdoors";
  n.attributes.speaker = "Melanie";
  n.attributes.summary = "hike report";
  n.episode_id = "s3";
  json j = n;
  EventNode back = j.get<EventNode>();
  CHECK(back.id == n.id);
  CHECK(back.content == n.content);
  CHECK(back.timestamp == n.timestamp);
  CHECK(back.embedding == n.embedding);
  CHECK(back.attributes.entities == n.attributes.entities);
  CHECK(back.attributes.speaker == "Melanie");
  CHECK(back.episode_id == "s3");

  TypedEdge e{"e000001", "e000002", EdgeType::Causal, 0.9, EdgeOrigin::Consolidation, 1000};
  json je = e;
  CHECK(je.at("edge_type") == "CAUSAL");
  TypedEdge eb = je.get<TypedEdge>();
  CHECK(eb.src == e.src);
  CHECK(eb.type == EdgeType::Causal);
  CHECK(eb.confidence == 0.9);
  CHECK(eb.origin == EdgeOrigin::Consolidation);
  CHECK(eb.created_at == 1000);

  EntityNode ent{"ent000001", "melanie", {"mel", "melanie"}};
  json jent = ent;
  EntityNode entb = jent.get<EntityNode>();
  CHECK(entb.canonical_name == "melanie");
  CHECK(entb.aliases == ent.aliases);
}

TEST_CASE("stopword list is the pinned 50-word set") {
  CHECK(stopword_list().size() == 50);
  for (auto w : {"the", "and", "when", "why", "who", "this"}) CHECK(is_stopword(w));
  for (auto w : {"hike", "melanie", "clarinet", "not"}) CHECK_FALSE(is_stopword(w));
}

TEST_CASE("tokenizers lower-case and split on non-word bytes") {
  auto words = split_words("Melanie PLAYED the clarinet, twice!");
  CHECK(words == std::vector<std::string>{"melanie", "played", "the", "clarinet", "twice"});
  auto indexed = index_tokenize("Melanie PLAYED the clarinet, twice!");
  CHECK(indexed == std::vector<std::string>{"melanie", "played", "clarinet", "twice"});

  SECTION("utf-8 bytes stay inside words") {
    auto t = index_tokenize("caf\xc3\xa9 visit");
    REQUIRE(t.size() == 2);
    CHECK(t[0] == "caf\xc3\xa9");
  }

  SECTION("digits count as word characters") {
    auto t = index_tokenize("room 42b");
    CHECK(t == std::vector<std::string>{"room", "42b"});
  }

  SECTION("empty and all-stopword inputs") {
    CHECK(index_tokenize("").empty());
    CHECK(index_tokenize("the and or").empty());
  }
}
