#pragma once

// Core vocabulary of the memory engine: node and edge records, error types,
// and the small string/time utilities everything else leans on.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace magma {

using json = nlohmann::json;

// ---------------------------------------------------------------- errors ---

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Store integrity / persistence problems. CLI maps these to exit code 3.
struct StoreError : Error {
  using Error::Error;
};

// Unusable provider response or unreachable provider. CLI exit code 4.
struct ProviderError : Error {
  using Error::Error;
};

// Bad configuration or command line. CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Token budget cannot be met even with maximal elision.
struct BudgetError : Error {
  using Error::Error;
};

// ----------------------------------------------------------------- edges ---

enum class EdgeType : std::uint8_t { Temporal = 0, Causal = 1, Semantic = 2, Entity = 3 };

enum class EdgeOrigin : std::uint8_t { FastPath, Consolidation, Manual };

inline const char* to_string(EdgeType t) {
  switch (t) {
    case EdgeType::Temporal: return "TEMPORAL";
    case EdgeType::Causal: return "CAUSAL";
    case EdgeType::Semantic: return "SEMANTIC";
    case EdgeType::Entity: return "ENTITY";
  }
  return "?";
}

inline const char* to_string(EdgeOrigin o) {
  switch (o) {
    case EdgeOrigin::FastPath: return "FAST_PATH";
    case EdgeOrigin::Consolidation: return "CONSOLIDATION";
    case EdgeOrigin::Manual: return "MANUAL";
  }
  return "?";
}

inline EdgeType edge_type_from_string(const std::string& s) {
  if (s == "TEMPORAL") return EdgeType::Temporal;
  if (s == "CAUSAL") return EdgeType::Causal;
  if (s == "SEMANTIC") return EdgeType::Semantic;
  if (s == "ENTITY") return EdgeType::Entity;
  throw StoreError("unknown edge type: " + s);
}

inline EdgeOrigin edge_origin_from_string(const std::string& s) {
  if (s == "FAST_PATH") return EdgeOrigin::FastPath;
  if (s == "CONSOLIDATION") return EdgeOrigin::Consolidation;
  if (s == "MANUAL") return EdgeOrigin::Manual;
  throw StoreError("unknown edge origin: " + s);
}

// Small mask over the four edge types; defaults to all enabled.
struct EdgeTypeSet {
  std::uint8_t bits = 0xF;

  static EdgeTypeSet all() { return {0xF}; }
  static EdgeTypeSet none() { return {0}; }
  static EdgeTypeSet of(std::initializer_list<EdgeType> ts) {
    EdgeTypeSet s{0};
    for (auto t : ts) s.bits = static_cast<std::uint8_t>(s.bits | (1u << static_cast<unsigned>(t)));
    return s;
  }

  bool contains(EdgeType t) const { return bits & (1u << static_cast<unsigned>(t)); }
  EdgeTypeSet without(EdgeType t) const {
    return {static_cast<std::uint8_t>(bits & ~(1u << static_cast<unsigned>(t)))};
  }
  bool operator==(const EdgeTypeSet&) const = default;
};

// The four traversable edge types in a fixed iteration order.
inline constexpr EdgeType kEdgeTypes[4] = {EdgeType::Temporal, EdgeType::Causal,
                                           EdgeType::Semantic, EdgeType::Entity};

struct TypedEdge {
  std::string src;
  std::string dst;
  EdgeType type = EdgeType::Semantic;
  double confidence = 1.0;  // in [0,1]; cosine for SEMANTIC, provider score for CAUSAL
  EdgeOrigin origin = EdgeOrigin::Manual;
  std::int64_t created_at = 0;  // epoch seconds; logical clock, not wall clock

  bool operator==(const TypedEdge&) const = default;
};

// ----------------------------------------------------------------- nodes ---

// One attribute bundle per event; every field is always present, consolidation
// fills in what the fast path leaves empty.
struct AttributeSet {
  std::vector<std::string> entities;
  std::string topic;
  std::vector<std::string> relationships;
  std::vector<std::string> semantic_facts;
  std::vector<std::string> dates_mentioned;
  std::string speaker;
  std::string summary;

  bool operator==(const AttributeSet&) const = default;
};

struct EventNode {
  std::string id;
  std::string content;
  std::int64_t timestamp = 0;   // UTC epoch seconds
  std::string timestamp_raw;    // original display form, kept verbatim
  std::vector<float> embedding;
  AttributeSet attributes;
  std::string episode_id;
};

struct EntityNode {
  std::string id;
  std::string canonical_name;
  std::vector<std::string> aliases;  // sorted unique, always includes canonical_name
};

// ---------------------------------------------------------------- intents ---

enum class IntentLabel : std::uint8_t { Why = 0, When = 1, Entity = 2, General = 3 };

inline const char* to_string(IntentLabel i) {
  switch (i) {
    case IntentLabel::Why: return "WHY";
    case IntentLabel::When: return "WHEN";
    case IntentLabel::Entity: return "ENTITY";
    case IntentLabel::General: return "GENERAL";
  }
  return "?";
}

inline IntentLabel intent_from_string(const std::string& s) {
  if (s == "WHY") return IntentLabel::Why;
  if (s == "WHEN") return IntentLabel::When;
  if (s == "ENTITY") return IntentLabel::Entity;
  if (s == "GENERAL") return IntentLabel::General;
  throw ConfigError("unknown intent label: " + s);
}

// ------------------------------------------------------------ small utils ---

inline bool ascii_alnum(unsigned char c) { return std::isalnum(c) != 0; }

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Canonical entity key: case-folded, whitespace-collapsed, surrounding
// punctuation stripped. Degenerate (empty) results are rejected.
inline std::string normalize_entity(std::string_view name) {
  std::string folded = to_lower(name);
  size_t b = 0, e = folded.size();
  while (b < e && !ascii_alnum(static_cast<unsigned char>(folded[b])) &&
         static_cast<unsigned char>(folded[b]) < 0x80)
    ++b;
  while (e > b && !ascii_alnum(static_cast<unsigned char>(folded[e - 1])) &&
         static_cast<unsigned char>(folded[e - 1]) < 0x80)
    --e;
  std::string out;
  bool in_space = false;
  for (size_t i = b; i < e; ++i) {
    unsigned char c = folded[i];
    if (std::isspace(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(static_cast<char>(c));
  }
  if (out.empty()) throw std::invalid_argument("degenerate entity: \"" + std::string(name) + "\"");
  return out;
}

// FNV-1a 64-bit; pinned so hashed features and config digests are stable
// across platforms.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ------------------------------------------------------------- timestamps ---

// Epoch seconds -> "YYYY-MM-DDTHH:MM:SSZ" (UTC).
inline std::string format_iso(std::int64_t ts) {
  using namespace std::chrono;
  sys_seconds tp{seconds{ts}};
  auto dp = floor<days>(tp);
  year_month_day ymd{dp};
  hh_mm_ss hms{tp - dp};
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

// Accepts "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS" with optional trailing "Z".
inline std::int64_t parse_iso(const std::string& s) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  int n = 0;
  std::string body = trim(s);
  if (!body.empty() && (body.back() == 'Z' || body.back() == 'z')) body.pop_back();
  int got = std::sscanf(body.c_str(), "%d-%d-%dT%d:%d:%d%n", &y, &mo, &d, &h, &mi, &se, &n);
  if (got < 3) throw std::invalid_argument("unparseable timestamp: \"" + s + "\"");
  if (got == 3) {
    n = 0;
    std::sscanf(body.c_str(), "%d-%d-%d%n", &y, &mo, &d, &n);
  }
  if (static_cast<size_t>(n) != body.size())
    throw std::invalid_argument("unparseable timestamp: \"" + s + "\"");
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw std::invalid_argument("invalid calendar date: \"" + s + "\"");
  if (h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 || se > 60)
    throw std::invalid_argument("invalid time of day: \"" + s + "\"");
  sys_days dp{ymd};
  return duration_cast<seconds>(dp.time_since_epoch()).count() + h * 3600 + mi * 60 + se;
}

// ------------------------------------------------------- json conversions ---

inline void to_json(json& j, const AttributeSet& a) {
  j = json{{"entities", a.entities},
           {"topic", a.topic},
           {"relationships", a.relationships},
           {"semantic_facts", a.semantic_facts},
           {"dates_mentioned", a.dates_mentioned},
           {"speaker", a.speaker},
           {"summary", a.summary}};
}

inline void from_json(const json& j, AttributeSet& a) {
  a = AttributeSet{};
  a.entities = j.value("entities", std::vector<std::string>{});
  a.topic = j.value("topic", std::string{});
  a.relationships = j.value("relationships", std::vector<std::string>{});
  a.semantic_facts = j.value("semantic_facts", std::vector<std::string>{});
  a.dates_mentioned = j.value("dates_mentioned", std::vector<std::string>{});
  a.speaker = j.value("speaker", std::string{});
  a.summary = j.value("summary", std::string{});
}

inline void to_json(json& j, const EventNode& n) {
  j = json{{"id", n.id},
           {"content", n.content},
           {"timestamp", n.timestamp},
           {"timestamp_raw", n.timestamp_raw},
           {"embedding", n.embedding},
           {"attributes", n.attributes},
           {"episode_id", n.episode_id}};
}

inline void from_json(const json& j, EventNode& n) {
  n = EventNode{};
  n.id = j.at("id").get<std::string>();
  n.content = j.at("content").get<std::string>();
  n.timestamp = j.at("timestamp").get<std::int64_t>();
  n.timestamp_raw = j.value("timestamp_raw", std::string{});
  n.embedding = j.value("embedding", std::vector<float>{});
  if (j.contains("attributes")) n.attributes = j.at("attributes").get<AttributeSet>();
  n.episode_id = j.value("episode_id", std::string{});
}

inline void to_json(json& j, const EntityNode& n) {
  j = json{{"id", n.id}, {"canonical_name", n.canonical_name}, {"aliases", n.aliases}};
}

inline void from_json(const json& j, EntityNode& n) {
  n = EntityNode{};
  n.id = j.at("id").get<std::string>();
  n.canonical_name = j.at("canonical_name").get<std::string>();
  n.aliases = j.value("aliases", std::vector<std::string>{});
}

inline void to_json(json& j, const TypedEdge& e) {
  j = json{{"src", e.src},           {"dst", e.dst},
           {"edge_type", to_string(e.type)}, {"confidence", e.confidence},
           {"origin", to_string(e.origin)},  {"created_at", e.created_at}};
}

inline void from_json(const json& j, TypedEdge& e) {
  e = TypedEdge{};
  e.src = j.at("src").get<std::string>();
  e.dst = j.at("dst").get<std::string>();
  e.type = edge_type_from_string(j.at("edge_type").get<std::string>());
  e.confidence = j.value("confidence", 1.0);
  e.origin = edge_origin_from_string(j.value("origin", std::string{"MANUAL"}));
  e.created_at = j.value("created_at", std::int64_t{0});
}

}  // namespace magma
