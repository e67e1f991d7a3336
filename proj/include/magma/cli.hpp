#pragma once

// Command-line surface. Every subcommand drives the same MemoryEngine verbs
// the HTTP service exposes; config is layered flags > environment > file >
// defaults and the effective form can be printed and hashed.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "engine.hpp"
#include "eval.hpp"
#include "service.hpp"

namespace magma::cli {

// Exit codes: 0 ok, 2 usage/config, 3 store, 4 provider, 5 audit violations.
enum ExitCode : int { kOk = 0, kUsage = 2, kStore = 3, kProvider = 4, kAudit = 5 };

namespace detail {

inline MagmaService* g_service = nullptr;

inline void handle_signal(int) {
  if (g_service) g_service->stop();
}

// key=value pairs feed the same merge path as the config file; nested weight
// cells use dotted paths (weights.WHY.CAUSAL=4).
inline json overrides_to_json(const std::vector<std::string>& sets) {
  json patch = json::object();
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like key=value: " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // bare strings stay strings
    json* slot = &patch;
    size_t start = 0;
    for (size_t dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
      slot = &(*slot)[key.substr(start, dot - start)];
      start = dot + 1;
    }
    (*slot)[key.substr(start)] = std::move(value);
  }
  return patch;
}

inline std::int64_t now_or_wallclock(const std::string& now_flag) {
  if (!now_flag.empty()) return parse_iso(now_flag);
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// A transcript file is either a dataset in any accepted layout or JSONL
// interaction records {"speaker","text","timestamp"[,"session"]}.
inline size_t ingest_file(MemoryEngine& engine, const std::string& path, std::ostream& err) {
  std::ifstream probe(path);
  if (!probe) throw ConfigError("cannot open transcript " + path);
  json whole = json::parse(probe, nullptr, false);
  size_t turns = 0;
  if (!whole.is_discarded() &&
      ((whole.is_object() && whole.contains("conversations")) ||
       (whole.is_array() && !whole.empty() && whole[0].is_object() &&
        (whole[0].contains("conversation") || whole[0].contains("haystack_sessions"))))) {
    eval::Dataset ds = eval::load_dataset(path);
    for (const auto& conv : ds.conversations) {
      std::vector<eval::Session> sessions = conv.sessions;
      std::stable_sort(sessions.begin(), sessions.end(),
                       [](const eval::Session& a, const eval::Session& b) {
                         return a.datetime < b.datetime;
                       });
      for (const auto& s : sessions) {
        std::int64_t cursor = s.datetime;
        for (const auto& t : s.turns) {
          if (trim(t.text).empty()) continue;
          Interaction turn{t.speaker, t.text, t.timestamp.value_or(cursor), s.datetime_raw,
                           conv.id + "/" + s.id};
          engine.ingest(turn);
          cursor = turn.timestamp + 1;
          ++turns;
        }
      }
    }
    return turns;
  }
  // JSONL fallback: one interaction per line.
  std::ifstream f(path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      err << "skipping malformed line " << lineno << "\n";
      continue;
    }
    Interaction turn;
    turn.speaker = j.value("speaker", std::string{});
    turn.text = j.value("text", std::string{});
    if (!j.contains("timestamp")) throw ConfigError("line " + std::to_string(lineno) +
                                                    ": missing timestamp");
    if (j.at("timestamp").is_number()) {
      turn.timestamp = j.at("timestamp").get<std::int64_t>();
    } else {
      turn.timestamp_raw = j.at("timestamp").get<std::string>();
      turn.timestamp = parse_iso(turn.timestamp_raw);
    }
    turn.session_id = j.value("session", std::string{});
    engine.ingest(turn);
    ++turns;
  }
  return turns;
}

}  // namespace detail

// In-process entry point; argv excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"magma: four-view graph memory engine"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string store_flag;
  std::vector<std::string> sets;
  bool print_config = false;
  app.add_option("--config", config_path, "config file (JSON)");
  app.add_option("--store", store_flag, "store path override");
  app.add_option("--set", sets, "config override key=value (repeatable; dotted paths ok)");
  app.add_flag("--print-config", print_config, "print effective config and exit");

  auto* c_ingest = app.add_subcommand("ingest", "fast-path ingestion of a transcript file");
  std::string ingest_file_path;
  c_ingest->add_option("file", ingest_file_path, "dataset or JSONL interaction file")->required();

  auto* c_consolidate = app.add_subcommand("consolidate", "drain the consolidation queue");
  size_t max_items = 0;
  c_consolidate->add_option("--max-items", max_items, "stop after N items (0 = all)");

  auto* c_query = app.add_subcommand("query", "retrieve context and answer a question");
  std::string question, now_flag;
  bool no_answer = false;
  c_query->add_option("text", question, "the question")->required();
  c_query->add_option("--now", now_flag, "reference time, ISO-8601");
  c_query->add_flag("--no-answer", no_answer, "print context only");

  auto* c_eval = app.add_subcommand("eval", "run the QA evaluation loop on a dataset");
  std::string dataset_path, ablate_flag, report_path;
  bool no_judge = false;
  c_eval->add_option("dataset", dataset_path, "dataset file")->required();
  c_eval->add_option("--ablate", ablate_flag,
                     "no-causal | no-temporal | no-entity | no-adaptive");
  c_eval->add_option("--report", report_path, "write the JSON report here");
  c_eval->add_flag("--no-judge", no_judge, "skip judge scoring");

  auto* c_audit = app.add_subcommand("audit", "check structural invariants of the store");

  auto* c_serve = app.add_subcommand("serve", "run the HTTP service");
  std::string addr = "127.0.0.1:8080";
  c_serve->add_option("--addr", addr, "host:port to bind");

  try {
    std::reverse(args.begin(), args.end());  // CLI11 consumes back-to-front
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    EngineConfig cfg;  // defaults
    if (config_path.empty()) {
      if (const char* env = std::getenv("MAGMA_CONFIG")) config_path = env;
    }
    if (!config_path.empty()) cfg = EngineConfig::load_file(config_path);
    cfg.apply_env();
    cfg.merge_json(detail::overrides_to_json(sets));
    if (!store_flag.empty()) cfg.store_path = store_flag;
    cfg.validate();

    if (print_config) {
      out << cfg.to_json().dump(2) << "\n";
      out << "hash: " << cfg.hash() << "\n";
      if (app.get_subcommands().empty()) return kOk;
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return kUsage;
    }

    if (c_ingest->parsed()) {
      MemoryEngine engine(cfg);
      const size_t turns = detail::ingest_file(engine, ingest_file_path, err);
      engine.save();
      out << "ingested " << turns << " turns, " << engine.store().event_count()
          << " events, queue depth " << engine.queue_depth() << "\n";
      return kOk;
    }

    if (c_consolidate->parsed()) {
      MemoryEngine engine(cfg);
      const size_t processed = engine.consolidate(
          max_items == 0 ? std::nullopt : std::optional<size_t>(max_items));
      engine.save();
      out << "consolidated " << processed << " items, queue depth " << engine.queue_depth()
          << "\n";
      return kOk;
    }

    if (c_query->parsed()) {
      MemoryEngine engine(cfg);
      const std::int64_t now = detail::now_or_wallclock(now_flag);
      RetrieveResult rr = engine.query(question, now);
      out << rr.context.rendered << "\n";
      out << "[intent " << to_string(rr.diagnostics.intent) << ", " << rr.context.token_count
          << " tokens, " << rr.diagnostics.visited_count << " nodes]\n";
      if (!no_answer) {
        const std::string answer = engine.answer(question, rr);
        out << "answer: " << answer << "\n";
        if (engine.config().loop_writeback) {
          const std::int64_t base = std::max(now, engine.store().event_count()
                                                      ? engine.store()
                                                            .event(engine.store().tail_id())
                                                            .timestamp
                                                      : now);
          engine.ingest(Interaction{"user", question, base, "", "loop"});
          engine.ingest(Interaction{"assistant", answer, base + 1, "", "loop"});
          engine.save();
        }
      }
      return kOk;
    }

    if (c_eval->parsed()) {
      eval::Dataset ds = eval::load_dataset(dataset_path);
      eval::RunOptions ropts;
      ropts.ablation = eval::ablation_from_string(ablate_flag);
      ropts.with_judge = !no_judge;
      ropts.dataset_label = dataset_path;
      json report = eval::run_eval(ds, cfg, ropts);
      if (!report_path.empty()) {
        std::ofstream rf(report_path, std::ios::trunc);
        if (!rf) throw ConfigError("cannot write report " + report_path);
        rf << report.dump(2) << "\n";
      }
      out << eval::render_table(report);
      return kOk;
    }

    if (c_audit->parsed()) {
      MemoryEngine engine(cfg);
      const auto violations = engine.audit();
      out << violations.size() << " violations\n";
      for (const auto& v : violations) out << "  [" << v.rule << "] " << v.detail << "\n";
      return violations.empty() ? kOk : kAudit;
    }

    if (c_serve->parsed()) {
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw ConfigError("--addr must be host:port");
      const std::string host = addr.substr(0, colon);
      const int port = std::stoi(addr.substr(colon + 1));
      MemoryEngine engine(cfg);
      MagmaService service(engine);
      detail::g_service = &service;
      std::signal(SIGINT, detail::handle_signal);
      std::signal(SIGTERM, detail::handle_signal);
      out << "serving on " << host << ":" << port << " (config " << cfg.hash() << ")\n";
      const bool ok = service.serve(host, port);
      detail::g_service = nullptr;
      if (!ok) {
        err << "cannot bind " << addr << "\n";
        return kUsage;
      }
      return kOk;
    }

    err << app.help();
    return kUsage;
  } catch (const StoreError& e) {
    err << "store error: " << e.what() << "\n";
    return kStore;
  } catch (const ProviderError& e) {
    err << "provider error: " << e.what() << "\n";
    return kProvider;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace magma::cli
