// HTTP service: endpoint contracts over a live loopback server, response
// envelopes, error statuses, and shutdown persistence.

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include "magma/service.hpp"

using Catch::Matchers::ContainsSubstring;

namespace {

namespace fs = std::filesystem;
using namespace magma;

EngineConfig service_cfg() {
  EngineConfig cfg;
  cfg.store_path.clear();  // in-memory unless a test opts into persistence
  cfg.dimension = 64;
  cfg.mock_rules_path = "fixtures/mock_rules.json";
  return cfg;
}

struct ServiceRig {
  MemoryEngine engine;
  MagmaService service;
  int port;
  httplib::Client client;

  explicit ServiceRig(EngineConfig cfg = service_cfg())
      : engine(std::move(cfg)),
        service(engine),
        port(service.start_async("127.0.0.1")),
        client("127.0.0.1", port) {
    REQUIRE(port > 0);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(10, 0);
  }
  ~ServiceRig() { service.stop(); }

  json post(const std::string& path, const json& body, int expect_status) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    INFO(res->body);
    REQUIRE(res->status == expect_status);
    return json::parse(res->body);
  }

  json get(const std::string& path, int expect_status = 200) {
    auto res = client.Get(path);
    REQUIRE(res);
    REQUIRE(res->status == expect_status);
    return json::parse(res->body);
  }

  // Replay the fixture transcript over the wire.
  void ingest_replay() {
    std::ifstream f("fixtures/table5_replay.jsonl");
    REQUIRE(f.good());
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      post("/ingest", json::parse(line), 200);
    }
  }

  // The background worker drains the queue on its own; wait for it.
  void wait_drained() {
    for (int i = 0; i < 400; ++i) {
      if (engine.queue_depth() == 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    FAIL("consolidation queue never drained");
  }
};

}  // namespace

TEST_CASE("health responds with the shared envelope") {
  ServiceRig rig;
  const json body = rig.get("/health");
  CHECK(body.at("status") == "ok");
  CHECK(body.at("engine_version") == kEngineVersion);
  CHECK(body.at("config_hash") == rig.engine.config().hash());
}

TEST_CASE("ingest validates fields and grows the store") {
  ServiceRig rig;
  const json ok = rig.post("/ingest",
                           json{{"speaker", "Melanie"},
                                {"text", "We just got back from our roadtrip."},
                                {"timestamp", "2023-10-05T18:30:00Z"},
                                {"session", "s1"}},
                           200);
  CHECK(ok.at("node_ids").size() == 1);
  CHECK(rig.engine.store().event_count() == 1);

  SECTION("missing fields name themselves") {
    const json miss = rig.post("/ingest", json{{"speaker", "x"}, {"timestamp", 5}}, 400);
    CHECK_THAT(miss.at("error").get<std::string>(), ContainsSubstring("missing field: text"));
  }
  SECTION("unparseable timestamps name the field") {
    const json bad = rig.post("/ingest",
                              json{{"speaker", "x"}, {"text", "y"}, {"timestamp", "whenever"}},
                              400);
    CHECK_THAT(bad.at("error").get<std::string>(), ContainsSubstring("invalid field"));
  }
  SECTION("non-scalar timestamps are rejected") {
    const json bad = rig.post(
        "/ingest", json{{"speaker", "x"}, {"text", "y"}, {"timestamp", json::array()}}, 400);
    CHECK_THAT(bad.at("error").get<std::string>(), ContainsSubstring("invalid field"));
  }
  SECTION("a non-object body is rejected") {
    auto res = rig.client.Post("/ingest", "not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK_THAT(res->body, ContainsSubstring("body must be a JSON object"));
  }
  SECTION("out-of-order writes surface the store error") {
    const json stale = rig.post("/ingest",
                                json{{"speaker", "Melanie"},
                                     {"text", "earlier message"},
                                     {"timestamp", "2023-10-01T00:00:00Z"}},
                                500);
    CHECK_THAT(stale.at("error").get<std::string>(), ContainsSubstring("out-of-order"));
  }
}

TEST_CASE("query returns context, diagnostics, and an answer") {
  ServiceRig rig;
  rig.ingest_replay();
  rig.wait_drained();

  const json body = rig.post("/query",
                             json{{"question", "When did she go on the hike yesterday?"},
                                  {"now", "2023-10-20T12:00:00Z"}},
                             200);
  CHECK(body.at("answer") == "19 October 2023");
  CHECK_THAT(body.at("context").get<std::string>(), ContainsSubstring("<t:2023-10-19"));
  CHECK(body.at("context_tokens").get<int>() > 0);
  CHECK_FALSE(body.at("references").empty());
  const json& diag = body.at("diagnostics");
  CHECK(diag.at("intent") == "WHEN");
  CHECK(diag.at("visited").get<int>() > 0);
  CHECK_FALSE(diag.at("anchors").empty());
  CHECK(diag.at("window").at("start") == "2023-10-19T00:00:00Z");
  CHECK(diag.at("window").at("end") == "2023-10-19T23:59:59Z");
  CHECK(body.at("engine_version") == kEngineVersion);

  SECTION("answer false returns context only") {
    const json ctx = rig.post("/query",
                              json{{"question", "Tell me about the roadtrip."},
                                   {"now", "2023-10-20T12:00:00Z"},
                                   {"answer", false}},
                              200);
    CHECK_FALSE(ctx.contains("answer"));
    CHECK_THAT(ctx.at("context").get<std::string>(), ContainsSubstring("roadtrip"));
  }
  SECTION("missing question is a bad request") {
    const json miss = rig.post("/query", json{{"now", 0}}, 400);
    CHECK_THAT(miss.at("error").get<std::string>(), ContainsSubstring("missing field: question"));
  }
  SECTION("an unparseable now field is a bad request") {
    const json bad = rig.post("/query", json{{"question", "x"}, {"now", "sometime"}}, 400);
    CHECK_THAT(bad.at("error").get<std::string>(), ContainsSubstring("invalid field"));
  }
}

TEST_CASE("query against an empty store is a conflict") {
  ServiceRig rig;
  const json body = rig.post("/query", json{{"question", "anything?"}, {"now", 1000}}, 409);
  CHECK_THAT(body.at("error").get<std::string>(), ContainsSubstring("no memory"));
}

TEST_CASE("an answerer outage returns 502 with the context preserved") {
  EngineConfig cfg = service_cfg();
  cfg.providers.at("answerer").mode = "http";
  cfg.providers.at("answerer").endpoint = "http://127.0.0.1:9/v1/chat";
  cfg.providers.at("answerer").max_retries = 0;
  cfg.providers.at("answerer").timeout_ms = 200;
  ServiceRig rig(cfg);
  rig.ingest_replay();
  rig.wait_drained();

  const json body = rig.post("/query",
                             json{{"question", "Tell me about the roadtrip."},
                                  {"now", "2023-10-20T12:00:00Z"}},
                             502);
  CHECK_THAT(body.at("error").get<std::string>(), ContainsSubstring("unreachable"));
  CHECK_THAT(body.at("context").get<std::string>(), ContainsSubstring("roadtrip"));
  CHECK(body.at("diagnostics").at("visited").get<int>() > 0);
}

TEST_CASE("consolidate endpoint validates max_items and reports the queue") {
  ServiceRig rig;
  rig.ingest_replay();

  SECTION("negative max_items is a bad request") {
    const json bad = rig.post("/consolidate", json{{"max_items", -3}}, 400);
    CHECK_THAT(bad.at("error").get<std::string>(), ContainsSubstring("max_items"));
  }
  SECTION("an explicit drain cooperates with the background worker") {
    const json one = rig.post("/consolidate", json{{"max_items", 2}}, 200);
    CHECK(one.at("processed").get<int>() <= 2);
    rig.wait_drained();
    const json done = rig.post("/consolidate", json::object(), 200);
    CHECK(done.at("queue_depth") == 0);
  }
}

TEST_CASE("audit endpoint reports a clean consolidated store") {
  ServiceRig rig;
  rig.ingest_replay();
  rig.wait_drained();
  const json body = rig.get("/audit");
  CHECK(body.at("count") == 0);
  CHECK(body.at("violations").empty());
}

TEST_CASE("stopping the service persists the store once") {
  const fs::path store = fs::temp_directory_path() / "magma_service_stop.mgm";
  std::error_code ec;
  fs::remove(store, ec);
  fs::remove(store.string() + ".queue", ec);

  EngineConfig cfg = service_cfg();
  cfg.store_path = store.string();
  {
    ServiceRig rig(cfg);
    rig.ingest_replay();
    rig.wait_drained();
    rig.service.stop();
    REQUIRE(fs::exists(store));
  }
  MemoryGraph reloaded = MemoryGraph::load(store);
  CHECK(reloaded.event_count() == 6);
  CHECK(reloaded.audit().empty());
  fs::remove(store, ec);
  fs::remove(store.string() + ".queue", ec);
}
