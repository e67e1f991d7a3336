#pragma once

// Engine configuration: one flat-ish record covering every tunable, loadable
// from JSON, overridable from MAGMA_* environment variables, hashed for
// provenance. Precedence: CLI flags > environment > config file > defaults
// (flags are applied last by the CLI layer).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "consolidate.hpp"
#include "core.hpp"
#include "ingest.hpp"
#include "providers.hpp"
#include "query.hpp"

namespace magma {

struct EngineConfig {
  std::string store_path = "memory.mgm";
  int dimension = 384;
  std::string segmentation = "per_turn";
  bool clamp_out_of_order = false;
  int token_budget = 4000;
  bool loop_writeback = false;
  std::string mock_rules_path;

  AnchorConfig anchor;
  TraversalPolicy policy;
  ConsolidationConfig consolidation;

  std::map<std::string, ProviderConfig> providers = {
      {"extractor", {}}, {"reasoner", {}}, {"answerer", {}}, {"embedder", {}}, {"judge", {}}};

  // ------------------------------------------------------------- validation

  void validate() const {
    auto range = [](const char* name, double v, double lo, double hi) {
      if (v < lo || v > hi)
        throw ConfigError(std::string(name) + " = " + std::to_string(v) +
                          " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    };
    if (dimension < 1) throw ConfigError("dimension must be positive");
    if (token_budget < 1) throw ConfigError("token_budget must be positive");
    range("theta_sim", consolidation.theta_sim, 0.0, 1.0);
    range("delta_causal", consolidation.delta_causal, 0.0, 1.0);
    if (consolidation.hops < 0) throw ConfigError("hops must be >= 0");
    if (consolidation.semantic_top_m < 0) throw ConfigError("semantic_top_m must be >= 0");
    if (anchor.rrf_k < 1) throw ConfigError("rrf_k must be positive");
    if (anchor.vector_top_k < 1 || anchor.keyword_top_k < 1 || anchor.anchor_top_k < 1)
      throw ConfigError("anchor top-k values must be positive");
    range("gamma", policy.gamma, 0.0, 1.0);
    if (policy.gamma == 0.0) throw ConfigError("gamma must be positive");
    range("drop_threshold", policy.drop_threshold, 0.0, 1.0);
    if (policy.beam_width < 1) throw ConfigError("beam_width must be positive");
    if (policy.max_depth < 0) throw ConfigError("max_depth must be >= 0");
    if (policy.budget < 1) throw ConfigError("budget must be positive");
    for (auto intent :
         {IntentLabel::Why, IntentLabel::When, IntentLabel::Entity, IntentLabel::General}) {
      auto it = policy.weights.find(intent);
      if (it == policy.weights.end())
        throw ConfigError(std::string("missing weight row for intent ") + to_string(intent));
      for (EdgeType t : kEdgeTypes)
        if (!it->second.count(t))
          throw ConfigError(std::string("missing weight for ") + to_string(intent) + "/" +
                            to_string(t));
    }
    for (const auto& [role, pc] : providers) {
      if (pc.mode != "mock" && pc.mode != "http")
        throw ConfigError("provider " + role + " has unknown mode \"" + pc.mode + '"');
      if (pc.mode == "http" && pc.endpoint.empty())
        throw ConfigError("provider " + role + " is http mode without an endpoint");
    }
    segment_policy_from_string(segmentation);  // throws on unknown value
  }

  // ---------------------------------------------------------------- (de)ser

  json to_json() const {
    json w;
    for (const auto& [intent, row] : policy.weights) {
      json r;
      for (const auto& [t, v] : row) r[to_string(t)] = v;
      w[to_string(intent)] = r;
    }
    json p;
    for (const auto& [role, pc] : providers)
      p[role] = json{{"mode", pc.mode},       {"endpoint", pc.endpoint},
                     {"model", pc.model},     {"temperature", pc.temperature},
                     {"timeout_ms", pc.timeout_ms}, {"max_retries", pc.max_retries},
                     {"api_key_env", pc.api_key_env}};
    return json{{"store_path", store_path},
                {"dimension", dimension},
                {"segmentation", segmentation},
                {"clamp_out_of_order", clamp_out_of_order},
                {"token_budget", token_budget},
                {"loop_writeback", loop_writeback},
                {"mock_rules_path", mock_rules_path},
                {"theta_sim", consolidation.theta_sim},
                {"delta_causal", consolidation.delta_causal},
                {"hops", consolidation.hops},
                {"semantic_top_m", consolidation.semantic_top_m},
                {"history_cap", consolidation.history_cap},
                {"rrf_k", anchor.rrf_k},
                {"vector_top_k", anchor.vector_top_k},
                {"keyword_top_k", anchor.keyword_top_k},
                {"anchor_top_k", anchor.anchor_top_k},
                {"w_vector", anchor.w_vector},
                {"w_keyword", anchor.w_keyword},
                {"w_time", anchor.w_time},
                {"lambda1", policy.lambda1},
                {"lambda2", policy.lambda2},
                {"gamma", policy.gamma},
                {"beam_width", policy.beam_width},
                {"max_depth", policy.max_depth},
                {"budget", policy.budget},
                {"drop_threshold", policy.drop_threshold},
                {"weights", w},
                {"providers", p}};
  }

  void merge_json(const json& j) {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("store_path", store_path);
    get("dimension", dimension);
    get("segmentation", segmentation);
    get("clamp_out_of_order", clamp_out_of_order);
    get("token_budget", token_budget);
    get("loop_writeback", loop_writeback);
    get("mock_rules_path", mock_rules_path);
    get("theta_sim", consolidation.theta_sim);
    get("delta_causal", consolidation.delta_causal);
    get("hops", consolidation.hops);
    get("semantic_top_m", consolidation.semantic_top_m);
    get("history_cap", consolidation.history_cap);
    get("rrf_k", anchor.rrf_k);
    get("vector_top_k", anchor.vector_top_k);
    get("keyword_top_k", anchor.keyword_top_k);
    get("anchor_top_k", anchor.anchor_top_k);
    get("w_vector", anchor.w_vector);
    get("w_keyword", anchor.w_keyword);
    get("w_time", anchor.w_time);
    get("lambda1", policy.lambda1);
    get("lambda2", policy.lambda2);
    get("gamma", policy.gamma);
    get("beam_width", policy.beam_width);
    get("max_depth", policy.max_depth);
    get("budget", policy.budget);
    get("drop_threshold", policy.drop_threshold);
    if (j.contains("weights"))
      for (const auto& [intent_name, row] : j.at("weights").items()) {
        auto& dst = policy.weights[intent_from_string(intent_name)];
        for (const auto& [type_name, v] : row.items())
          dst[edge_type_from_string(type_name)] = v.get<double>();
      }
    if (j.contains("providers"))
      for (const auto& [role, pj] : j.at("providers").items()) {
        ProviderConfig& pc = providers[role];
        if (pj.contains("mode")) pc.mode = pj.at("mode").get<std::string>();
        if (pj.contains("endpoint")) pc.endpoint = pj.at("endpoint").get<std::string>();
        if (pj.contains("model")) pc.model = pj.at("model").get<std::string>();
        if (pj.contains("temperature")) pc.temperature = pj.at("temperature").get<double>();
        if (pj.contains("timeout_ms")) pc.timeout_ms = pj.at("timeout_ms").get<int>();
        if (pj.contains("max_retries")) pc.max_retries = pj.at("max_retries").get<int>();
        if (pj.contains("api_key_env")) pc.api_key_env = pj.at("api_key_env").get<std::string>();
      }
  }

  // Environment overrides: MAGMA_<UPPERCASE_FIELD> for scalar fields, e.g.
  // MAGMA_STORE_PATH, MAGMA_BEAM_WIDTH, MAGMA_THETA_SIM.
  void apply_env() {
    auto env_str = [](const char* name) -> std::optional<std::string> {
      const char* v = std::getenv(name);
      if (v && *v) return std::string(v);
      return std::nullopt;
    };
    auto set_str = [&](const char* name, std::string& field) {
      if (auto v = env_str(name)) field = *v;
    };
    auto set_int = [&](const char* name, int& field) {
      if (auto v = env_str(name)) field = std::stoi(*v);
    };
    auto set_dbl = [&](const char* name, double& field) {
      if (auto v = env_str(name)) field = std::stod(*v);
    };
    auto set_bool = [&](const char* name, bool& field) {
      if (auto v = env_str(name)) field = (*v == "1" || *v == "true" || *v == "yes");
    };
    set_str("MAGMA_STORE_PATH", store_path);
    set_int("MAGMA_DIMENSION", dimension);
    set_str("MAGMA_SEGMENTATION", segmentation);
    set_bool("MAGMA_CLAMP_OUT_OF_ORDER", clamp_out_of_order);
    set_int("MAGMA_TOKEN_BUDGET", token_budget);
    set_bool("MAGMA_LOOP_WRITEBACK", loop_writeback);
    set_str("MAGMA_MOCK_RULES_PATH", mock_rules_path);
    set_dbl("MAGMA_THETA_SIM", consolidation.theta_sim);
    set_dbl("MAGMA_DELTA_CAUSAL", consolidation.delta_causal);
    set_int("MAGMA_HOPS", consolidation.hops);
    set_int("MAGMA_SEMANTIC_TOP_M", consolidation.semantic_top_m);
    set_int("MAGMA_RRF_K", anchor.rrf_k);
    set_int("MAGMA_VECTOR_TOP_K", anchor.vector_top_k);
    set_int("MAGMA_KEYWORD_TOP_K", anchor.keyword_top_k);
    set_int("MAGMA_ANCHOR_TOP_K", anchor.anchor_top_k);
    set_dbl("MAGMA_W_VECTOR", anchor.w_vector);
    set_dbl("MAGMA_W_KEYWORD", anchor.w_keyword);
    set_dbl("MAGMA_W_TIME", anchor.w_time);
    set_dbl("MAGMA_LAMBDA1", policy.lambda1);
    set_dbl("MAGMA_LAMBDA2", policy.lambda2);
    set_dbl("MAGMA_GAMMA", policy.gamma);
    set_int("MAGMA_BEAM_WIDTH", policy.beam_width);
    set_int("MAGMA_MAX_DEPTH", policy.max_depth);
    set_int("MAGMA_BUDGET", policy.budget);
    set_dbl("MAGMA_DROP_THRESHOLD", policy.drop_threshold);
  }

  // Stable digest of the effective configuration (reported by the service
  // and stamped into evaluation reports).
  std::string hash() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
  }

  static EngineConfig load_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed config " + path.string());
    EngineConfig cfg;
    cfg.merge_json(j);
    return cfg;
  }
};

}  // namespace magma
