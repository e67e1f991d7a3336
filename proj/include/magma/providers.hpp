#pragma once

// Provider abstraction: chat completion and embedding clients, HTTP-backed
// for real deployments and rule-table mocks for tests and offline runs. The
// mocks receive the identical rendered prompts the HTTP clients would send
// and parse them back, so nothing in the pipeline branches on mock-ness.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "prompts.hpp"
#include "time_parse.hpp"
#include "tokenize.hpp"

namespace magma {

enum class ProviderRole { Extractor, Reasoner, Answerer, Embedder, Judge };

inline const char* to_string(ProviderRole r) {
  switch (r) {
    case ProviderRole::Extractor: return "extractor";
    case ProviderRole::Reasoner: return "reasoner";
    case ProviderRole::Answerer: return "answerer";
    case ProviderRole::Embedder: return "embedder";
    case ProviderRole::Judge: return "judge";
  }
  return "?";
}

struct ProviderConfig {
  std::string mode = "mock";  // "mock" | "http"
  std::string endpoint;       // http(s)://host[:port]/path
  std::string model;
  double temperature = 0.0;   // pinned to 0.0 for evaluation runs
  int timeout_ms = 30000;
  int max_retries = 2;
  std::string api_key_env = "MAGMA_API_KEY";

  bool operator==(const ProviderConfig&) const = default;
};

// Stateless chat client: rendered prompt in, raw text out.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string complete(const Prompt& prompt) = 0;
};

// Batch text encoder; one call per batch.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual size_t dimension() const = 0;
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

// -------------------------------------------------------- tolerant parsing ---

// Providers are told to return bare JSON but drift; strip markdown fences and
// any prose before the first brace, then parse.
inline json tolerant_parse_json(const std::string& raw) {
  std::string body = raw;
  const auto fence = body.find("```");
  if (fence != std::string::npos) {
    auto start = body.find('\n', fence);
    auto close = body.rfind("```");
    if (start != std::string::npos && close != std::string::npos && close > start)
      body = body.substr(start + 1, close - start - 1);
  }
  const auto brace = body.find('{');
  if (brace == std::string::npos) throw ProviderError("no JSON object in provider response");
  body = body.substr(brace);
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) {
    // Trailing prose after the object: retry with brace balancing.
    int depth = 0;
    bool in_str = false, esc = false;
    for (size_t i = 0; i < body.size(); ++i) {
      const char c = body[i];
      if (esc) { esc = false; continue; }
      if (c == '\\') { esc = in_str; continue; }
      if (c == '"') in_str = !in_str;
      if (in_str) continue;
      if (c == '{') ++depth;
      if (c == '}' && --depth == 0) {
        j = json::parse(body.substr(0, i + 1), nullptr, false);
        break;
      }
    }
  }
  if (j.is_discarded() || !j.is_object())
    throw ProviderError("malformed JSON in provider response");
  return j;
}

// ------------------------------------------------------------- mock rules ---

// Declarative behavior tables for the mocks. Loaded from fixture files so end
// to end tests configure behavior as data, never as special-cased code.
struct MockRules {
  struct TopicRule {
    std::string match;  // regex over the utterance, case-insensitive
    std::string topic;
  };
  struct FactRule {
    std::string match;
    std::vector<std::string> semantic_facts;
    std::vector<std::string> relationships;
  };
  struct CausalRule {
    std::string cause;   // regex over the earlier event's content
    std::string effect;  // regex over the later event's content
    double confidence = 0.9;
  };
  struct AnswerRule {
    std::string question;  // regex over the question
    std::string needs;     // regex that must match some context block ("" = always)
    std::string answer;
  };

  std::vector<TopicRule> topics;
  std::vector<FactRule> facts;
  std::vector<CausalRule> causal;
  std::vector<AnswerRule> answers;
  std::string answer_default = "echo_first_block";  // or "not_found"
  std::string judge_mode = "exact_or_refusal";

  static MockRules defaults() {
    MockRules r;
    r.topics = {{"clarinet|violin|guitar|piano|music|song", "music"},
                {"hik(e|ed|ing)|trail|mountain", "outdoors"},
                {"roadtrip|road trip|travel|drove|flight", "travel"},
                {"rain|storm|weather|sunny", "weather"}};
    r.causal = {{"rain|storm", "cancel", 0.9}};
    return r;
  }

  static MockRules from_json(const json& j) {
    MockRules r;
    for (const auto& t : j.value("topics", json::array()))
      r.topics.push_back({t.at("match").get<std::string>(), t.at("topic").get<std::string>()});
    for (const auto& t : j.value("facts", json::array()))
      r.facts.push_back({t.at("match").get<std::string>(),
                         t.value("semantic_facts", std::vector<std::string>{}),
                         t.value("relationships", std::vector<std::string>{})});
    for (const auto& t : j.value("causal", json::array()))
      r.causal.push_back({t.at("cause").get<std::string>(), t.at("effect").get<std::string>(),
                          t.value("confidence", 0.9)});
    for (const auto& t : j.value("answers", json::array()))
      r.answers.push_back({t.at("question").get<std::string>(),
                           t.value("requires", std::string{}),
                           t.at("answer").get<std::string>()});
    r.answer_default = j.value("answer_default", std::string{"echo_first_block"});
    r.judge_mode = j.value("judge_mode", std::string{"exact_or_refusal"});
    return r;
  }

  static MockRules load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open mock rules " + path.string());
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed mock rules " + path.string());
    return from_json(j);
  }
};

namespace detail {

inline bool re_search(const std::string& pattern, const std::string& text) {
  if (pattern.empty()) return true;
  return std::regex_search(text, std::regex(pattern, std::regex::icase));
}

// Pull "- Key: value" (or "Key: value") single-line fields out of a rendered
// prompt body.
inline std::string prompt_field(const std::string& body, const std::string& key) {
  const std::string needle = key + ": ";
  size_t pos = body.find(needle);
  if (pos == std::string::npos) return {};
  pos += needle.size();
  const size_t end = body.find('\n', pos);
  return body.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

// First sentence of `text`, capped for summary use.
inline std::string first_sentence(const std::string& text, size_t cap = 140) {
  size_t end = text.find_first_of(".!?");
  std::string s = end == std::string::npos ? text : text.substr(0, end + 1);
  if (s.size() > cap) s = s.substr(0, cap);
  return trim(s);
}

// Heuristic proper-noun mentions: capitalized words that are not stopwords,
// in order of first appearance.
inline std::vector<std::string> capitalized_mentions(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2 && cur[0] >= 'A' && cur[0] <= 'Z' && !is_stopword(to_lower(cur)) &&
        std::find(out.begin(), out.end(), cur) == out.end())
      out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (word_char(c)) cur.push_back(static_cast<char>(c));
    else flush();
  }
  flush();
  return out;
}

}  // namespace detail

// ------------------------------------------------------------ mock chat ---

// Parses the rendered prompt it receives and answers from the rule tables.
class MockChatProvider : public ChatProvider {
 public:
  MockChatProvider(ProviderRole role, MockRules rules)
      : role_(role), rules_(std::move(rules)) {}

  std::string complete(const Prompt& prompt) override {
    switch (role_) {
      case ProviderRole::Extractor: return extract(prompt);
      case ProviderRole::Reasoner: return reason(prompt);
      case ProviderRole::Answerer: return answer(prompt);
      case ProviderRole::Judge: return grade(prompt);
      case ProviderRole::Embedder: break;
    }
    throw ProviderError("mock chat provider misconfigured role");
  }

 private:
  std::string extract(const Prompt& p) const {
    const std::string speaker = detail::prompt_field(p.user, "Speaker");
    const std::string text = detail::prompt_field(p.user, "Text");
    json out;
    out["entities"] = detail::capitalized_mentions(text);
    std::string topic = "general";
    for (const auto& r : rules_.topics)
      if (detail::re_search(r.match, text)) {
        topic = r.topic;
        break;
      }
    out["topic"] = topic;
    std::vector<std::string> facts, rels;
    for (const auto& r : rules_.facts)
      if (detail::re_search(r.match, text)) {
        facts.insert(facts.end(), r.semantic_facts.begin(), r.semantic_facts.end());
        rels.insert(rels.end(), r.relationships.begin(), r.relationships.end());
      }
    out["relationships"] = rels;
    out["semantic_facts"] = facts;
    out["dates_mentioned"] = scan_date_mentions(text);
    out["summary"] = speaker.empty() ? detail::first_sentence(text)
                                     : speaker + ": " + detail::first_sentence(text);
    return out.dump();
  }

  std::string reason(const Prompt& p) const {
    // Recover the serialized "[id] (timestamp) content" event lines.
    static const std::regex line_re(R"(\[([^\]]+)\] \(([^)]+)\) (.*))");
    struct Ev {
      std::string id;
      std::string content;
    };
    std::vector<Ev> events;
    std::istringstream in(p.user);
    std::string line;
    while (std::getline(in, line)) {
      std::smatch m;
      if (std::regex_match(line, m, line_re)) events.push_back({m[1], m[3]});
    }
    json pairs = json::array();
    for (const auto& a : events)
      for (const auto& b : events) {
        if (a.id == b.id) continue;
        for (const auto& r : rules_.causal)
          if (detail::re_search(r.cause, a.content) && detail::re_search(r.effect, b.content)) {
            pairs.push_back({{"src", a.id},
                             {"dst", b.id},
                             {"confidence", r.confidence},
                             {"rationale", "rule match"}});
            break;
          }
      }
    return json{{"causal_pairs", pairs}}.dump();
  }

  std::string answer(const Prompt& p) const {
    const std::string question = detail::prompt_field(p.user, "- Question");
    // Context blocks carry their content between the time tag and the ref tag.
    static const std::regex block_re(R"(<t:([^>]*)> (.*) <ref:([^>]*)>)");
    std::vector<std::string> blocks;
    for (auto it = std::sregex_iterator(p.user.begin(), p.user.end(), block_re);
         it != std::sregex_iterator{}; ++it)
      blocks.push_back((*it)[2]);
    for (const auto& r : rules_.answers) {
      if (!detail::re_search(r.question, question)) continue;
      if (r.needs.empty()) return r.answer;
      for (const auto& b : blocks)
        if (detail::re_search(r.needs, b)) return r.answer;
      return "Information not found";
    }
    if (rules_.answer_default == "echo_first_block" && !blocks.empty()) return blocks.front();
    return "Information not found";
  }

  std::string grade(const Prompt& p) const {
    const std::string input = detail::prompt_field(p.user, "Input");
    const auto gold_pos = input.find("| Gold: ");
    const auto cand_pos = input.find(" | Candidate: ");
    if (gold_pos == std::string::npos || cand_pos == std::string::npos || cand_pos < gold_pos)
      throw ProviderError("mock judge cannot parse input line");
    auto canon = [](std::string s) {
      s = to_lower(trim(s));
      while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.pop_back();
      return s;
    };
    const std::string gold = canon(input.substr(gold_pos + 8, cand_pos - gold_pos - 8));
    const std::string cand = canon(input.substr(cand_pos + 14));
    double score = 0.0;
    std::string why;
    if (gold == "unanswerable") {
      const bool refused = cand.find("information not found") != std::string::npos ||
                           cand.find("not found") != std::string::npos ||
                           cand.find("no information") != std::string::npos ||
                           cand.find("cannot answer") != std::string::npos;
      score = refused ? 1.0 : 0.0;
      why = refused ? "correctly declined" : "hallucinated a fact on an unanswerable question";
    } else if (gold == cand) {
      score = 1.0;
      why = "exact match";
    } else {
      score = 0.0;
      why = "mismatch";
    }
    return json{{"score", score}, {"reasoning", why}}.dump();
  }

  ProviderRole role_;
  MockRules rules_;
};

// --------------------------------------------------------- mock embedder ---

// Deterministic hashed bag-of-words: every token picks a bucket via FNV-1a,
// counts are L2-normalized. Shared token vocabulary between two texts yields
// positive cosine; empty text maps to the zero vector.
class HashedBowEmbedder : public Embedder {
 public:
  explicit HashedBowEmbedder(size_t dimension = 384) : dim_(dimension) {}

  size_t dimension() const override { return dim_; }

  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  std::vector<float> embed_one(const std::string& text) const {
    std::vector<float> v(dim_, 0.0f);
    for (const auto& tok : index_tokenize(text))
      v[fnv1a64(tok) % dim_] += 1.0f;
    double n = 0.0;
    for (float x : v) n += static_cast<double>(x) * x;
    if (n > 0.0) {
      const float inv = static_cast<float>(1.0 / std::sqrt(n));
      for (float& x : v) x *= inv;
    }
    return v;
  }

 private:
  size_t dim_;
};

// ----------------------------------------------------------- provider ops ---

// Attribute extraction with schema validation. On a malformed or schema-
// violating response, retries once with a "return only JSON" reminder before
// giving up; the speaker field comes from the request side (the response
// schema does not echo it).
inline AttributeSet extract_attributes(ChatProvider& chat, const std::string& speaker,
                                       const std::string& text,
                                       const std::string& prev_summary) {
  Prompt p = build_extractor_prompt(speaker, text, prev_summary);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string raw;
    try {
      raw = chat.complete(p);
      json j = tolerant_parse_json(raw);
      for (const char* key : {"entities", "topic", "relationships", "semantic_facts",
                              "dates_mentioned", "summary"})
        if (!j.contains(key)) throw ProviderError(std::string("missing key \"") + key + '"');
      AttributeSet a;
      a.entities = j.at("entities").get<std::vector<std::string>>();
      a.topic = j.at("topic").get<std::string>();
      a.relationships = j.at("relationships").get<std::vector<std::string>>();
      a.semantic_facts = j.at("semantic_facts").get<std::vector<std::string>>();
      a.dates_mentioned = j.at("dates_mentioned").get<std::vector<std::string>>();
      a.summary = j.at("summary").get<std::string>();
      a.speaker = speaker;
      return a;
    } catch (const json::exception& e) {
      last_error = e.what();
    } catch (const ProviderError& e) {
      last_error = e.what();
    }
    p.user += "\nReturn only the JSON object, nothing else.";
  }
  throw ProviderError("attribute extraction failed: " + last_error);
}

struct CausalPair {
  std::string src;
  std::string dst;
  double confidence = 0.0;
  std::string rationale;
};

// Causal pair proposal over a serialized neighborhood. Invalid entries
// (unknown ids, self pairs, bad confidence) are dropped, not fatal.
inline std::vector<CausalPair> propose_causal_pairs(ChatProvider& chat,
                                                    const std::vector<std::string>& event_lines,
                                                    const std::vector<std::string>& history) {
  Prompt p = build_causal_prompt(event_lines, history);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      json j = tolerant_parse_json(chat.complete(p));
      if (!j.contains("causal_pairs") || !j.at("causal_pairs").is_array())
        throw ProviderError("missing \"causal_pairs\" array");
      std::vector<CausalPair> out;
      for (const auto& e : j.at("causal_pairs")) {
        if (!e.is_object() || !e.contains("src") || !e.contains("dst")) continue;
        CausalPair cp;
        cp.src = e.at("src").get<std::string>();
        cp.dst = e.at("dst").get<std::string>();
        cp.confidence = e.value("confidence", 0.0);
        cp.rationale = e.value("rationale", std::string{});
        out.push_back(std::move(cp));
      }
      return out;
    } catch (const json::exception& e) {
      last_error = e.what();
    } catch (const ProviderError& e) {
      last_error = e.what();
    }
    p.user += "\nReturn only the JSON object, nothing else.";
  }
  throw ProviderError("causal analysis failed: " + last_error);
}

// Answer synthesis over a rendered context. "Information not found" passes
// through verbatim; provider failures surface to the caller.
inline std::string synthesize_answer(ChatProvider& chat, const std::string& question,
                                     const std::string& rendered_context, IntentLabel intent) {
  if (rendered_context.empty()) throw std::invalid_argument("empty context");
  Prompt p = build_qa_prompt(question, rendered_context, intent);
  return trim(chat.complete(p));
}

struct JudgeResult {
  double score = 0.0;
  std::string reasoning;
};

// Semantic grading; the score is clamped to [0,1] and a second attempt is made
// on unparseable output. Failure is an error, never a fabricated score.
inline JudgeResult judge_answer(ChatProvider& chat, const std::string& question,
                                const std::string& gold, const std::string& candidate) {
  Prompt p = build_judge_prompt(question, gold, candidate);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      json j = tolerant_parse_json(chat.complete(p));
      if (!j.contains("score")) throw ProviderError("missing \"score\"");
      JudgeResult r;
      r.score = std::clamp(j.at("score").get<double>(), 0.0, 1.0);
      r.reasoning = j.value("reasoning", std::string{});
      return r;
    } catch (const json::exception& e) {
      last_error = e.what();
    } catch (const ProviderError& e) {
      last_error = e.what();
    }
    p.user += "\nReturn only the JSON object, nothing else.";
  }
  throw ProviderError("judge failed: " + last_error);
}

}  // namespace magma
