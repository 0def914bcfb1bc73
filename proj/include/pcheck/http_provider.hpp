#ifndef PCHECK_HTTP_PROVIDER_HPP
#define PCHECK_HTTP_PROVIDER_HPP

// OpenAI-compatible `/chat/completions` and `/embeddings` clients.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "pcheck/error.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

struct HttpConfig {
  std::string api_base = "https://api.openai.com/v1";
  std::string api_key;
  int max_attempts = 4;
  std::chrono::milliseconds base_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
  std::chrono::seconds timeout{300};
};

/// Reads PCHECK_API_BASE / PCHECK_API_KEY over the given defaults.
inline HttpConfig http_config_from_env(HttpConfig base = HttpConfig()) {
  if (const char* v = std::getenv("PCHECK_API_BASE"); v != nullptr && *v) base.api_base = v;
  if (const char* v = std::getenv("PCHECK_API_KEY"); v != nullptr && *v) base.api_key = v;
  return base;
}

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

inline Endpoint parse_endpoint(const std::string& base) {
  const std::size_t scheme_end = base.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("API base '" + base + "' lacks a scheme");
  }
  const std::size_t path_start = base.find('/', scheme_end + 3);
  Endpoint e;
  if (path_start == std::string::npos) {
    e.origin = base;
  } else {
    e.origin = base.substr(0, path_start);
    e.prefix = base.substr(path_start);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  }
  return e;
}

}  // namespace detail

/// JSON POST with exponential backoff on transport errors, 429 and 5xx.
class HttpJsonClient {
 public:
  explicit HttpJsonClient(HttpConfig config)
      : config_(std::move(config)), endpoint_(detail::parse_endpoint(config_.api_base)) {}

  const HttpConfig& config() const { return config_; }

  json post(const std::string& route, const json& body) const {
    const std::string path = endpoint_.prefix + route;
    const std::string payload = body.dump(-1, ' ', false, json::error_handler_t::replace);
    std::string last_error;
    bool rate_limited = false;
    for (int attempt = 1; attempt <= std::max(1, config_.max_attempts); ++attempt) {
      if (attempt > 1) std::this_thread::sleep_for(backoff(attempt - 1));
      httplib::Client client(endpoint_.origin);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count());
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count());
      httplib::Headers headers;
      if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
      auto res = client.Post(path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        rate_limited = false;
        continue;
      }
      if (res->status == 429) {
        last_error = "rate limited (HTTP 429)";
        rate_limited = true;
        continue;
      }
      if (res->status >= 500) {
        last_error = "server error (HTTP " + std::to_string(res->status) + ")";
        rate_limited = false;
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        throw ProviderError("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                            res->body.substr(0, 500));
      }
      json parsed = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
      if (parsed.is_discarded()) {
        throw MalformedResponseError("response from " + path + " is not JSON");
      }
      return parsed;
    }
    const std::string message = path + ": giving up after " + std::to_string(config_.max_attempts) +
                                " attempts: " + last_error;
    if (rate_limited) throw RateLimitError(message);
    throw TransportError(message);
  }

 private:
  std::chrono::milliseconds backoff(int retry) const {
    auto delay = config_.base_backoff * (1LL << std::min(retry - 1, 20));
    return std::min<std::chrono::milliseconds>(delay, config_.max_backoff);
  }

  HttpConfig config_;
  detail::Endpoint endpoint_;
};

class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(HttpConfig config) : client_(std::move(config)) {}

  std::string kind() const override { return "http:" + client_.config().api_base; }

 protected:
  std::string complete(const ChatRequest& request) override {
    const std::string prompt = prompt_template(request.template_id).render(request.variables);
    json body = {{"model", request.model_id},
                 {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                 {"temperature", request.temperature}};
    const json response = client_.post("/chat/completions", body);
    try {
      const json& content = response.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) throw MalformedResponseError("message content is not a string");
      return content.get<std::string>();
    } catch (const json::exception& e) {
      throw MalformedResponseError(std::string("unexpected chat completion shape: ") + e.what());
    }
  }

 private:
  HttpJsonClient client_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpConfig config) : client_(std::move(config)) {}

  std::string kind() const override { return "http:" + client_.config().api_base; }

 protected:
  std::vector<double> compute(const EmbeddingRequest& request) override {
    json body = {{"model", request.model_id}, {"input", request.text}};
    const json response = client_.post("/embeddings", body);
    try {
      return response.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw MalformedResponseError(std::string("unexpected embedding shape: ") + e.what());
    }
  }

 private:
  HttpJsonClient client_;
};

}  // namespace pcheck

#endif  // PCHECK_HTTP_PROVIDER_HPP
