#pragma once

// Embedded HTTP service: JSON-over-HTTP projections of the same engine verbs
// the CLI uses. One write gate (inside MemoryEngine) is shared by /ingest and
// the background consolidation worker; /query readers run concurrently.

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>

#include "engine.hpp"

namespace magma {

namespace detail {

inline json diagnostics_json(const RetrieveDiagnostics& d) {
  json anchors = json::array();
  for (const auto& a : d.anchors) anchors.push_back(json{{"id", a.id}, {"score", a.score}});
  json counts = json::object();
  for (const auto& [t, n] : d.edge_type_counts) counts[to_string(t)] = n;
  json out{{"intent", to_string(d.intent)},
           {"anchors", anchors},
           {"fallback_recency", d.fallback_recency},
           {"visited", d.visited_count},
           {"depth_reached", d.depth_reached},
           {"budget_hit", d.budget_hit},
           {"edge_counts", counts},
           {"latency_ms", json{{"anchor", d.anchor_ms},
                               {"traverse", d.traverse_ms},
                               {"linearize", d.linearize_ms}}}};
  if (d.window)
    out["window"] = json{{"start", format_iso(d.window->start)}, {"end", format_iso(d.window->end)}};
  return out;
}

// Accepts epoch seconds or an ISO-8601 string.
inline std::int64_t timestamp_field(const json& v) {
  if (v.is_number()) return v.get<std::int64_t>();
  if (v.is_string()) return parse_iso(v.get<std::string>());
  throw std::invalid_argument("timestamp must be a number or an ISO-8601 string");
}

}  // namespace detail

class MagmaService {
 public:
  explicit MagmaService(MemoryEngine& engine) : engine_(engine) { wire(); }

  ~MagmaService() { stop(); }

  httplib::Server& server() { return server_; }

  // Blocks until stop(); returns false if the address cannot be bound.
  bool serve(const std::string& host, int port) {
    start_worker();
    return server_.listen(host, port);
  }

  // For in-process tests: bind to an ephemeral port and serve on a thread.
  int start_async(const std::string& host) {
    const int port = server_.bind_to_any_port(host);
    if (port < 0) return port;
    start_worker();
    listen_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  // Graceful shutdown: drain the worker, stop accepting, persist the store.
  void stop() {
    if (worker_running_.exchange(false)) {
      if (worker_.joinable()) worker_.join();
    }
    if (server_.is_running()) server_.stop();
    if (listen_thread_.joinable()) listen_thread_.join();
    if (!saved_.exchange(true)) engine_.save();
  }

 private:
  void start_worker() {
    if (worker_running_.exchange(true)) return;
    worker_ = std::thread([this] {
      while (worker_running_.load()) {
        size_t n = 0;
        try {
          n = engine_.consolidate(8);
        } catch (const std::exception&) {
          n = 0;  // worker never dies; failures are journaled per item
        }
        if (n == 0) std::this_thread::sleep_for(std::chrono::milliseconds(25));
      }
    });
  }

  json envelope(json body) const {
    body["engine_version"] = kEngineVersion;
    body["config_hash"] = engine_.config().hash();
    return body;
  }

  void reply(httplib::Response& res, int status, json body) const {
    res.status = status;
    res.set_content(envelope(std::move(body)).dump(2) + "\n", "application/json");
  }

  void bad_request(httplib::Response& res, const std::string& msg) const {
    reply(res, 400, json{{"error", msg}});
  }

  // Parses the body and names the offending field on failure.
  bool parse_body(const httplib::Request& req, httplib::Response& res, json& out) const {
    out = json::parse(req.body, nullptr, false);
    if (out.is_discarded() || !out.is_object()) {
      bad_request(res, "body must be a JSON object");
      return false;
    }
    return true;
  }

  void wire() {
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, json{{"status", "ok"}});
    });

    server_.Get("/audit", [this](const httplib::Request&, httplib::Response& res) {
      const auto violations = engine_.audit();
      json list = json::array();
      for (const auto& v : violations) list.push_back(json{{"rule", v.rule}, {"detail", v.detail}});
      reply(res, 200, json{{"violations", list}, {"count", violations.size()}});
    });

    server_.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      if (!parse_body(req, res, body)) return;
      for (const char* field : {"speaker", "text", "timestamp"})
        if (!body.contains(field)) return bad_request(res, std::string("missing field: ") + field);
      Interaction turn;
      try {
        turn.speaker = body.at("speaker").get<std::string>();
        turn.text = body.at("text").get<std::string>();
        turn.timestamp = detail::timestamp_field(body.at("timestamp"));
        turn.session_id = body.value("session", std::string{});
        if (body.at("timestamp").is_string())
          turn.timestamp_raw = body.at("timestamp").get<std::string>();
      } catch (const std::exception& e) {
        return bad_request(res, std::string("invalid field: ") + e.what());
      }
      try {
        IngestStats stats = engine_.ingest(turn);
        reply(res, 200, json{{"node_ids", stats.node_ids}, {"queue_depth", stats.queue_depth}});
      } catch (const std::invalid_argument& e) {
        bad_request(res, e.what());
      } catch (const ProviderError& e) {
        reply(res, 502, json{{"error", e.what()}});
      } catch (const StoreError& e) {
        reply(res, 500, json{{"error", e.what()}});
      }
    });

    server_.Post("/query", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      if (!parse_body(req, res, body)) return;
      if (!body.contains("question")) return bad_request(res, "missing field: question");
      std::string question;
      std::int64_t now = 0;
      bool has_now = false;
      try {
        question = body.at("question").get<std::string>();
        if (body.contains("now")) {
          now = detail::timestamp_field(body.at("now"));
          has_now = true;
        }
      } catch (const std::exception& e) {
        return bad_request(res, std::string("invalid field: ") + e.what());
      }
      if (!has_now)
        now = std::chrono::duration_cast<std::chrono::seconds>(
                  std::chrono::system_clock::now().time_since_epoch())
                  .count();
      RetrieveResult rr;
      try {
        rr = engine_.query(question, now);
      } catch (const StoreError& e) {
        return reply(res, 409, json{{"error", e.what()}});
      } catch (const ProviderError& e) {
        return reply(res, 502, json{{"error", e.what()}});
      } catch (const BudgetError& e) {
        return reply(res, 422, json{{"error", e.what()}});
      }
      json out{{"context", rr.context.rendered},
               {"context_tokens", rr.context.token_count},
               {"references", rr.context.references},
               {"diagnostics", detail::diagnostics_json(rr.diagnostics)}};
      if (body.value("answer", true)) {
        try {
          out["answer"] = engine_.answer(question, rr);
        } catch (const ProviderError& e) {
          // Context survives an answerer outage.
          out["error"] = e.what();
          return reply(res, 502, std::move(out));
        }
      }
      reply(res, 200, std::move(out));
    });

    server_.Post("/consolidate", [this](const httplib::Request& req, httplib::Response& res) {
      json body = json::object();
      if (!req.body.empty() && !parse_body(req, res, body)) return;
      size_t max_items = 0;
      if (body.contains("max_items")) {
        if (!body.at("max_items").is_number_unsigned())
          return bad_request(res, "invalid field: max_items must be a non-negative integer");
        max_items = body.at("max_items").get<size_t>();
      }
      try {
        const size_t processed = engine_.consolidate(
            max_items == 0 ? std::nullopt : std::optional<size_t>(max_items));
        reply(res, 200, json{{"processed", processed}, {"queue_depth", engine_.queue_depth()}});
      } catch (const ProviderError& e) {
        reply(res, 502, json{{"error", e.what()}});
      }
    });
  }

  MemoryEngine& engine_;
  httplib::Server server_;
  std::thread worker_;
  std::thread listen_thread_;
  std::atomic<bool> worker_running_{false};
  std::atomic<bool> saved_{false};
};

}  // namespace magma
