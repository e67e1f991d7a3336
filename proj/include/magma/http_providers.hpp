#pragma once

// HTTP-backed providers speaking chat-completion-style JSON. Kept in a
// separate header so translation units that only need the mocks avoid the
// httplib compile cost.

#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>

#include "providers.hpp"

namespace magma {

namespace detail {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /path or /
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint missing scheme: " + url);
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/"};
  return {url.substr(0, path), url.substr(path)};
}

}  // namespace detail

class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) throw ConfigError("http chat provider needs an endpoint");
  }

  std::string complete(const Prompt& prompt) override {
    const auto url = detail::split_url(cfg_.endpoint);
    json body{{"model", cfg_.model},
              {"temperature", cfg_.temperature},
              {"messages", json::array({json{{"role", "system"}, {"content", prompt.system}},
                                        json{{"role", "user"}, {"content", prompt.user}}})}};
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      httplib::Client cli(url.base);
      cli.set_connection_timeout(0, cfg_.timeout_ms * 1000);
      cli.set_read_timeout(0, cfg_.timeout_ms * 1000);
      httplib::Headers headers;
      if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);
      auto res = cli.Post(url.path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500 || res->status == 429) {
        last_error = "status " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300)
        throw ProviderError("chat endpoint returned status " + std::to_string(res->status));
      return first_text_content(res->body);
    }
    throw ProviderError("chat endpoint unreachable: " + last_error);
  }

 private:
  // Accepts both chat-completion ({"choices":[{"message":{"content":...}}]})
  // and bare-content response layouts; the first text content wins.
  static std::string first_text_content(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw ProviderError("malformed JSON from chat endpoint");
    if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
      const auto& c = j["choices"][0];
      if (c.contains("message") && c["message"].contains("content"))
        return c["message"]["content"].get<std::string>();
      if (c.contains("text")) return c["text"].get<std::string>();
    }
    if (j.contains("content")) {
      const auto& c = j["content"];
      if (c.is_string()) return c.get<std::string>();
      if (c.is_array() && !c.empty() && c[0].contains("text"))
        return c[0]["text"].get<std::string>();
    }
    if (j.contains("text") && j["text"].is_string()) return j["text"].get<std::string>();
    throw ProviderError("no text content in chat response");
  }

  ProviderConfig cfg_;
};

class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(ProviderConfig cfg, size_t dimension) : cfg_(std::move(cfg)), dim_(dimension) {
    if (cfg_.endpoint.empty()) throw ConfigError("http embedder needs an endpoint");
  }

  size_t dimension() const override { return dim_; }

  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    const auto url = detail::split_url(cfg_.endpoint);
    json body{{"model", cfg_.model}, {"texts", texts}};
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      httplib::Client cli(url.base);
      cli.set_connection_timeout(0, cfg_.timeout_ms * 1000);
      cli.set_read_timeout(0, cfg_.timeout_ms * 1000);
      httplib::Headers headers;
      if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);
      auto res = cli.Post(url.path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500 || res->status == 429) {
        last_error = "status " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300)
        throw ProviderError("embedding endpoint returned status " + std::to_string(res->status));
      json j = json::parse(res->body, nullptr, false);
      if (j.is_discarded() || !j.contains("embeddings"))
        throw ProviderError("malformed embedding response");
      auto out = j["embeddings"].get<std::vector<std::vector<float>>>();
      if (out.size() != texts.size())
        throw ProviderError("embedding count mismatch: " + std::to_string(out.size()) +
                            " for " + std::to_string(texts.size()) + " texts");
      for (const auto& v : out)
        if (v.size() != dim_)
          throw ProviderError("embedding dimension " + std::to_string(v.size()) + " != " +
                              std::to_string(dim_));
      return out;
    }
    throw ProviderError("embedding endpoint unreachable: " + last_error);
  }

 private:
  ProviderConfig cfg_;
  size_t dim_;
};

}  // namespace magma
