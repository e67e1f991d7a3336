#pragma once

// Evaluation harness: dataset loading (three accepted layouts converge on one
// internal form), lexical metrics, the end-to-end answer loop with judge
// scoring, and report emission (JSON + aligned text table).
//
// The answer path is category-blind by construction: QASample carries its
// label in an access-tracked cell, and the harness asserts the counter does
// not move between retrieval and synthesis. Labels are read only during
// aggregation.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "engine.hpp"

namespace magma::eval {

// ----------------------------------------------------------------- metrics ---

// Metric tokenizer: lower-case + whitespace split only. Deliberately not the
// index tokenizer; punctuation stays attached to words.
inline std::vector<std::string> metric_tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : to_lower(text)) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

namespace detail {
inline size_t multiset_overlap(const std::vector<std::string>& a,
                               const std::vector<std::string>& b) {
  std::map<std::string, int> ca;
  for (const auto& t : a) ++ca[t];
  size_t ov = 0;
  std::map<std::string, int> cb;
  for (const auto& t : b) ++cb[t];
  for (const auto& [t, n] : ca) {
    auto it = cb.find(t);
    if (it != cb.end()) ov += static_cast<size_t>(std::min(n, it->second));
  }
  return ov;
}
}  // namespace detail

// Token-level F1 over lower-cased whitespace tokens (multiset overlap);
// 0 when either side is empty.
inline double token_f1(const std::string& gold, const std::string& candidate) {
  const auto g = metric_tokenize(gold);
  const auto c = metric_tokenize(candidate);
  if (g.empty() || c.empty()) return 0.0;
  const double ov = static_cast<double>(detail::multiset_overlap(g, c));
  const double p = ov / static_cast<double>(c.size());
  const double r = ov / static_cast<double>(g.size());
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

// Unigram BLEU: clipped precision times brevity penalty
// exp(1 - |gold|/|cand|) when the candidate is shorter, 1 otherwise.
inline double bleu1(const std::string& gold, const std::string& candidate) {
  const auto g = metric_tokenize(gold);
  const auto c = metric_tokenize(candidate);
  if (g.empty() || c.empty()) return 0.0;
  const double clipped = static_cast<double>(detail::multiset_overlap(g, c));
  const double precision = clipped / static_cast<double>(c.size());
  double bp = 1.0;
  if (c.size() < g.size())
    bp = std::exp(1.0 - static_cast<double>(g.size()) / static_cast<double>(c.size()));
  return precision * bp;
}

// ----------------------------------------------------------------- dataset ---

inline const std::vector<std::string>& category_labels() {
  static const std::vector<std::string> labels = {"single-hop", "multi-hop", "temporal",
                                                  "open-domain", "adversarial"};
  return labels;
}

// Category cell with read accounting; the harness asserts the answer path
// never touches it.
class CategoryTag {
 public:
  CategoryTag() = default;
  explicit CategoryTag(std::string v) : value_(std::move(v)) {}

  const std::string& value() const {
    reads().fetch_add(1, std::memory_order_relaxed);
    return value_;
  }

  static std::atomic<long>& reads() {
    static std::atomic<long> counter{0};
    return counter;
  }

 private:
  std::string value_;
};

struct Turn {
  std::string speaker;
  std::string text;
  std::optional<std::int64_t> timestamp;
};

struct Session {
  std::string id;
  std::int64_t datetime = 0;
  std::string datetime_raw;
  std::vector<Turn> turns;
};

struct QASample {
  std::string question;
  std::string gold;
  CategoryTag category;
  std::string conversation_id;
  std::optional<std::int64_t> question_date;
};

struct Conversation {
  std::string id;
  std::vector<Session> sessions;
  std::vector<QASample> qa;
};

struct Dataset {
  std::vector<Conversation> conversations;
  size_t sample_count() const {
    size_t n = 0;
    for (const auto& c : conversations) n += c.qa.size();
    return n;
  }
};

namespace detail {

// "1:56 pm on 8 May, 2023" (public LoCoMo session stamps).
inline std::optional<std::int64_t> parse_locomo_datetime(const std::string& s) {
  static const std::regex re(
      R"((\d{1,2}):(\d{2})\s*(am|pm)\s+on\s+(\d{1,2})\s+([A-Za-z]+),?\s+(\d{4}))",
      std::regex::icase);
  std::smatch m;
  if (!std::regex_search(s, m, re)) return std::nullopt;
  int hour = std::stoi(m[1]) % 12;
  if (to_lower(std::string(m[3])) == "pm") hour += 12;
  static const std::map<std::string, int> months = {
      {"january", 1}, {"february", 2}, {"march", 3},     {"april", 4},   {"may", 5},
      {"june", 6},    {"july", 7},     {"august", 8},    {"september", 9},
      {"october", 10}, {"november", 11}, {"december", 12}};
  auto it = months.find(to_lower(std::string(m[5])));
  if (it == months.end()) return std::nullopt;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:00", std::stoi(m[6]), it->second,
                std::stoi(m[4]), hour, std::stoi(m[2]));
  try {
    return parse_iso(buf);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

// "2023/05/20 (Tue) 02:21" (LongMemEval stamps), or ISO.
inline std::optional<std::int64_t> parse_loose_datetime(const std::string& s) {
  try {
    return parse_iso(s);
  } catch (const std::invalid_argument&) {
  }
  static const std::regex re(R"((\d{4})/(\d{1,2})/(\d{1,2})(?:[^0-9]*(\d{1,2}):(\d{2}))?)");
  std::smatch m;
  if (std::regex_search(s, m, re)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:00", std::stoi(m[1]),
                  std::stoi(m[2]), std::stoi(m[3]), m[4].matched ? std::stoi(m[4]) : 0,
                  m[5].matched ? std::stoi(m[5]) : 0);
    try {
      return parse_iso(buf);
    } catch (const std::invalid_argument&) {
    }
  }
  return parse_locomo_datetime(s);
}

inline std::string longmemeval_category(const std::string& question_type,
                                        const std::string& question_id) {
  if (question_id.size() > 4 && question_id.rfind("_abs") == question_id.size() - 4)
    return "adversarial";
  if (question_type.find("temporal") != std::string::npos) return "temporal";
  if (question_type.find("multi-session") != std::string::npos) return "multi-hop";
  if (question_type.find("knowledge-update") != std::string::npos) return "single-hop";
  if (question_type.find("preference") != std::string::npos) return "open-domain";
  if (question_type.find("single-session") != std::string::npos) return "single-hop";
  return "open-domain";
}

inline std::string locomo_category(const json& c) {
  if (c.is_string()) return c.get<std::string>();
  switch (c.is_number_integer() ? c.get<int>() : 0) {
    case 1: return "multi-hop";
    case 2: return "temporal";
    case 3: return "open-domain";
    case 4: return "single-hop";
    case 5: return "adversarial";
  }
  return "open-domain";
}

inline Dataset load_native(const json& j) {
  Dataset ds;
  for (const auto& cj : j.at("conversations")) {
    Conversation conv;
    conv.id = cj.value("id", "conv" + std::to_string(ds.conversations.size() + 1));
    for (const auto& sj : cj.value("sessions", json::array())) {
      Session s;
      s.id = sj.value("id", "s" + std::to_string(conv.sessions.size() + 1));
      s.datetime_raw = sj.value("datetime", std::string{});
      if (auto ts = parse_loose_datetime(s.datetime_raw)) s.datetime = *ts;
      for (const auto& tj : sj.value("turns", json::array())) {
        Turn t;
        t.speaker = tj.value("speaker", std::string{});
        t.text = tj.value("text", std::string{});
        if (tj.contains("timestamp")) {
          if (tj.at("timestamp").is_number())
            t.timestamp = tj.at("timestamp").get<std::int64_t>();
          else if (auto ts = parse_loose_datetime(tj.at("timestamp").get<std::string>()))
            t.timestamp = *ts;
        }
        s.turns.push_back(std::move(t));
      }
      conv.sessions.push_back(std::move(s));
    }
    for (const auto& qj : cj.value("qa", json::array())) {
      QASample q;
      q.question = qj.value("question", std::string{});
      q.gold = qj.value("answer", std::string{});
      q.category = CategoryTag(locomo_category(qj.value("category", json("open-domain"))));
      q.conversation_id = conv.id;
      if (qj.contains("question_date"))
        q.question_date = parse_loose_datetime(qj.at("question_date").get<std::string>());
      conv.qa.push_back(std::move(q));
    }
    ds.conversations.push_back(std::move(conv));
  }
  return ds;
}

inline Dataset load_locomo(const json& arr) {
  Dataset ds;
  for (const auto& item : arr) {
    Conversation conv;
    conv.id = item.value("sample_id", "conv" + std::to_string(ds.conversations.size() + 1));
    const json& cj = item.at("conversation");
    for (int i = 1;; ++i) {
      const std::string key = "session_" + std::to_string(i);
      if (!cj.contains(key)) break;
      Session s;
      s.id = key;
      s.datetime_raw = cj.value(key + "_date_time", std::string{});
      if (auto ts = parse_locomo_datetime(s.datetime_raw)) s.datetime = *ts;
      for (const auto& tj : cj.at(key)) {
        Turn t;
        t.speaker = tj.value("speaker", std::string{});
        t.text = tj.value("text", std::string{});
        s.turns.push_back(std::move(t));
      }
      conv.sessions.push_back(std::move(s));
    }
    for (const auto& qj : item.value("qa", json::array())) {
      QASample q;
      q.question = qj.value("question", std::string{});
      if (qj.contains("answer")) {
        const auto& a = qj.at("answer");
        q.gold = a.is_string() ? a.get<std::string>() : a.dump();
      } else if (qj.contains("adversarial_answer")) {
        q.gold = "Unanswerable";
      }
      q.category = CategoryTag(locomo_category(qj.value("category", json(0))));
      q.conversation_id = conv.id;
      conv.qa.push_back(std::move(q));
    }
    ds.conversations.push_back(std::move(conv));
  }
  return ds;
}

inline Dataset load_longmemeval(const json& arr) {
  Dataset ds;
  for (const auto& item : arr) {
    Conversation conv;
    conv.id = item.value("question_id", "q" + std::to_string(ds.conversations.size() + 1));
    const auto& sessions = item.at("haystack_sessions");
    const auto dates = item.value("haystack_dates", json::array());
    for (size_t i = 0; i < sessions.size(); ++i) {
      Session s;
      s.id = "s" + std::to_string(i + 1);
      if (i < dates.size()) {
        s.datetime_raw = dates[i].get<std::string>();
        if (auto ts = parse_loose_datetime(s.datetime_raw)) s.datetime = *ts;
      }
      for (const auto& tj : sessions[i]) {
        Turn t;
        t.speaker = tj.value("role", std::string{});
        t.text = tj.value("content", std::string{});
        s.turns.push_back(std::move(t));
      }
      conv.sessions.push_back(std::move(s));
    }
    QASample q;
    q.question = item.value("question", std::string{});
    const auto& a = item.at("answer");
    q.gold = a.is_string() ? a.get<std::string>() : a.dump();
    q.category = CategoryTag(longmemeval_category(item.value("question_type", std::string{}),
                                                  conv.id));
    q.conversation_id = conv.id;
    if (item.contains("question_date"))
      q.question_date = parse_loose_datetime(item.at("question_date").get<std::string>());
    conv.qa.push_back(std::move(q));
    ds.conversations.push_back(std::move(conv));
  }
  return ds;
}

}  // namespace detail

// Accepts the native layout ({"conversations": [...]}), the public LoCoMo
// layout (array of {conversation, qa}) and the LongMemEval layout (array of
// {haystack_sessions, ...}); all converge on the internal form.
inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open dataset " + path.string());
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("malformed dataset " + path.string());
  if (j.is_object() && j.contains("conversations")) return detail::load_native(j);
  if (j.is_array() && !j.empty() && j[0].is_object()) {
    if (j[0].contains("haystack_sessions")) return detail::load_longmemeval(j);
    if (j[0].contains("conversation")) return detail::load_locomo(j);
  }
  throw ConfigError("unrecognized dataset layout: " + path.string());
}

// ---------------------------------------------------------------- ablation ---

enum class Ablation { None, NoCausal, NoTemporal, NoEntity, NoAdaptive };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoCausal: return "no-causal";
    case Ablation::NoTemporal: return "no-temporal";
    case Ablation::NoEntity: return "no-entity";
    case Ablation::NoAdaptive: return "no-adaptive";
  }
  return "?";
}

inline Ablation ablation_from_string(const std::string& s) {
  if (s.empty() || s == "none") return Ablation::None;
  if (s == "no-causal") return Ablation::NoCausal;
  if (s == "no-temporal") return Ablation::NoTemporal;
  if (s == "no-entity") return Ablation::NoEntity;
  if (s == "no-adaptive") return Ablation::NoAdaptive;
  throw ConfigError("unknown ablation: " + s);
}

// Edge-type masking for structural ablations; uniform weights for the
// adaptive-policy ablation.
inline void apply_ablation(EngineConfig& cfg, Ablation a) {
  switch (a) {
    case Ablation::None:
      break;
    case Ablation::NoCausal:
      cfg.policy.enabled_types = cfg.policy.enabled_types.without(EdgeType::Causal);
      break;
    case Ablation::NoTemporal:
      cfg.policy.enabled_types = cfg.policy.enabled_types.without(EdgeType::Temporal);
      break;
    case Ablation::NoEntity:
      cfg.policy.enabled_types = cfg.policy.enabled_types.without(EdgeType::Entity);
      break;
    case Ablation::NoAdaptive:
      for (auto& [intent, row] : cfg.policy.weights)
        for (auto& [t, w] : row) w = 1.0;
      break;
  }
}

// -------------------------------------------------------------- run report ---

// Recursively drop wall-clock-dependent fields, for byte-stable comparison
// of two runs.
inline json strip_volatile(json j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto& [k, v] : j.items()) {
      if (k == "latency_ms" || k == "timings" || k == "generated_at" || k == "wall_ms")
        continue;
      out[k] = strip_volatile(v);
    }
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (auto& v : j) out.push_back(strip_volatile(v));
    return out;
  }
  return j;
}

struct RunOptions {
  Ablation ablation = Ablation::None;
  bool with_judge = true;
  std::string dataset_label;
};

// Orchestrate the full loop: per conversation, build a fresh in-memory store
// (fast path), drain consolidation, then answer every sample through
// retrieve -> synthesize; metrics and judge scores attach per sample and
// aggregate per category. Returns the report as JSON.
inline json run_eval(const Dataset& ds, const EngineConfig& base_cfg, const RunOptions& opts) {
  for (const auto& [role, pc] : base_cfg.providers)
    if (pc.mode != "mock" && pc.endpoint.empty())
      throw ProviderError("provider " + role + " not reachable (mode \"" + pc.mode +
                          "\" without endpoint)");

  EngineConfig cfg = base_cfg;
  cfg.store_path.clear();  // per-conversation in-memory stores
  apply_ablation(cfg, opts.ablation);
  cfg.validate();

  json samples = json::array();
  std::vector<std::string> sample_categories;
  json totals{{"conversations", ds.conversations.size()},
              {"events", 0},
              {"entities", 0},
              {"edges", json{{"TEMPORAL", 0}, {"CAUSAL", 0}, {"SEMANTIC", 0}, {"ENTITY", 0}}},
              {"provider_calls",
               json{{"embedding", 0}, {"extractor", 0}, {"reasoner", 0}, {"answerer", 0},
                    {"judge", 0}}}};
  bool category_blind_ok = true;

  for (const auto& conv : ds.conversations) {
    MemoryEngine engine(cfg);
    std::int64_t last_ts = 0;
    std::int64_t loop_cursor = 0;
    std::vector<Session> sessions = conv.sessions;
    std::stable_sort(sessions.begin(), sessions.end(),
                     [](const Session& a, const Session& b) { return a.datetime < b.datetime; });
    for (const auto& s : sessions) {
      std::int64_t cursor = s.datetime;
      for (const auto& t : s.turns) {
        if (trim(t.text).empty()) continue;
        Interaction turn;
        turn.speaker = t.speaker;
        turn.text = t.text;
        turn.timestamp = t.timestamp.value_or(cursor);
        turn.timestamp_raw = s.datetime_raw;
        turn.session_id = conv.id + "/" + s.id;
        engine.ingest(turn);
        cursor = turn.timestamp + 1;  // strictly increasing within a session
        last_ts = std::max(last_ts, turn.timestamp);
      }
    }
    engine.consolidate();

    // Answer phase: category reads are forbidden from here...
    const long reads_before = CategoryTag::reads().load();
    struct PerSample {
      json row;
      double judge = 0.0;
    };
    std::vector<PerSample> rows;
    for (const auto& q : conv.qa) {
      const std::int64_t now = q.question_date.value_or(last_ts + 3600);
      const auto t0 = std::chrono::steady_clock::now();
      RetrieveResult rr = engine.query(q.question, now);
      const auto t1 = std::chrono::steady_clock::now();
      const std::string answer = engine.answer(q.question, rr);
      const auto t2 = std::chrono::steady_clock::now();

      if (cfg.loop_writeback) {
        // Monotonic cursor: repeated or out-of-order question dates must not
        // trip the backbone's ordering check.
        const std::int64_t base = std::max({now, last_ts, loop_cursor});
        Interaction uturn{"user", q.question, base, "", conv.id + "/loop"};
        Interaction aturn{"assistant", answer, base + 1, "", conv.id + "/loop"};
        engine.ingest(uturn);
        engine.ingest(aturn);
        loop_cursor = base + 2;
      }

      json edge_counts = json::object();
      for (const auto& [t, n] : rr.diagnostics.edge_type_counts) edge_counts[to_string(t)] = n;
      json anchors = json::array();
      for (const auto& a : rr.diagnostics.anchors) anchors.push_back(a.id);
      const Prompt qa_prompt =
          build_qa_prompt(q.question, rr.context.rendered, rr.diagnostics.intent);
      json row{{"conversation_id", conv.id},
               {"question", q.question},
               {"gold", q.gold},
               {"answer", answer},
               {"intent", to_string(rr.diagnostics.intent)},
               {"token_f1", token_f1(q.gold, answer)},
               {"bleu1", bleu1(q.gold, answer)},
               {"context_tokens", rr.context.token_count},
               {"prompt_tokens", estimate_tokens(qa_prompt.system) +
                                     estimate_tokens(qa_prompt.user)},
               {"visited", rr.diagnostics.visited_count},
               {"depth_reached", rr.diagnostics.depth_reached},
               {"fallback_recency", rr.diagnostics.fallback_recency},
               {"anchors", anchors},
               {"edge_counts", edge_counts},
               {"latency_ms",
                json{{"retrieve", std::chrono::duration<double, std::milli>(t1 - t0).count()},
                     {"answer", std::chrono::duration<double, std::milli>(t2 - t1).count()},
                     {"anchor", rr.diagnostics.anchor_ms},
                     {"traverse", rr.diagnostics.traverse_ms},
                     {"linearize", rr.diagnostics.linearize_ms}}}};
      double judge_score = 0.0;
      if (opts.with_judge) {
        JudgeResult jr = judge_answer(engine.judge_provider(), q.question, q.gold, answer);
        judge_score = jr.score;
        row["judge"] = jr.score;
        row["judge_reasoning"] = jr.reasoning;
      }
      rows.push_back({std::move(row), judge_score});
    }
    if (CategoryTag::reads().load() != reads_before) category_blind_ok = false;
    // ...and allowed from here: attach labels for aggregation.
    for (size_t i = 0; i < rows.size(); ++i) {
      rows[i].row["category"] = conv.qa[i].category.value();
      sample_categories.push_back(conv.qa[i].category.value());
      samples.push_back(std::move(rows[i].row));
    }

    totals["events"] = totals["events"].get<int>() + static_cast<int>(engine.store().event_count());
    totals["entities"] =
        totals["entities"].get<int>() + static_cast<int>(engine.store().entity_count());
    for (const auto& e : engine.store().edges()) {
      auto& slot = totals["edges"][to_string(e.type)];
      slot = slot.get<int>() + 1;
    }
    auto& pc = totals["provider_calls"];
    pc["embedding"] = pc["embedding"].get<long>() + engine.counters().embedding_calls.load();
    pc["extractor"] = pc["extractor"].get<long>() + engine.counters().extractor_calls.load();
    pc["reasoner"] = pc["reasoner"].get<long>() + engine.counters().reasoner_calls.load();
    pc["answerer"] = pc["answerer"].get<long>() + engine.counters().answerer_calls.load();
    pc["judge"] = pc["judge"].get<long>() + engine.counters().judge_calls.load();
  }

  // Aggregation (category reads are legitimate here).
  struct Agg {
    size_t n = 0;
    double judge = 0.0, f1 = 0.0, bleu = 0.0, tokens = 0.0;
  };
  std::map<std::string, Agg> per_cat;
  Agg overall;
  for (size_t i = 0; i < samples.size(); ++i) {
    const json& row = samples[i];
    Agg& a = per_cat[sample_categories[i]];
    for (Agg* t : {&a, &overall}) {
      t->n += 1;
      t->judge += row.value("judge", 0.0);
      t->f1 += row.at("token_f1").get<double>();
      t->bleu += row.at("bleu1").get<double>();
      t->tokens += row.at("context_tokens").get<double>();
    }
  }
  auto agg_json = [&](const Agg& a) {
    const double n = a.n ? static_cast<double>(a.n) : 1.0;
    return json{{"n", a.n},
                {"judge_mean", a.judge / n},
                {"f1_mean", a.f1 / n},
                {"bleu1_mean", a.bleu / n},
                {"context_tokens_mean", a.tokens / n}};
  };
  json per_category = json::object();
  for (const auto& [cat, a] : per_cat) per_category[cat] = agg_json(a);

  return json{{"engine", json{{"name", kEngineName}, {"version", kEngineVersion}}},
              {"config", cfg.to_json()},
              {"config_hash", cfg.hash()},
              {"ablation", to_string(opts.ablation)},
              {"dataset", opts.dataset_label},
              {"category_blind_ok", category_blind_ok},
              {"samples", samples},
              {"per_category", per_category},
              {"overall", agg_json(overall)},
              {"totals", totals}};
}

// Aligned text table: one row per category plus the overall line.
inline std::string render_table(const json& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %6s %8s %8s %8s %10s\n", "category", "n", "judge",
                "f1", "bleu1", "ctx-tok");
  out += line;
  out += std::string(58, '-') + "\n";
  auto row = [&](const std::string& name, const json& a) {
    std::snprintf(line, sizeof line, "%-14s %6zu %8.3f %8.3f %8.3f %10.1f\n", name.c_str(),
                  static_cast<size_t>(a.at("n").get<size_t>()), a.at("judge_mean").get<double>(),
                  a.at("f1_mean").get<double>(), a.at("bleu1_mean").get<double>(),
                  a.at("context_tokens_mean").get<double>());
    out += line;
  };
  for (const auto& [cat, a] : report.at("per_category").items()) row(cat, a);
  out += std::string(58, '-') + "\n";
  row("overall", report.at("overall"));
  std::snprintf(line, sizeof line, "ablation: %s   config: %s   samples: %zu\n",
                report.at("ablation").get<std::string>().c_str(),
                report.at("config_hash").get<std::string>().c_str(),
                static_cast<size_t>(report.at("overall").at("n").get<size_t>()));
  out += line;
  return out;
}

}  // namespace magma::eval
