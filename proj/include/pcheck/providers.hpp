#ifndef PCHECK_PROVIDERS_HPP
#define PCHECK_PROVIDERS_HPP

// Model-call interfaces. Every stage talks to a ChatProvider and/or an
// EmbeddingProvider; concrete backends are the OpenAI-compatible HTTP client
// (http_provider.hpp) and the deterministic mocks (mock.hpp). The caching
// decorators below wrap either.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "pcheck/error.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

struct ChatRequest {
  std::string template_id;
  std::map<std::string, std::string> variables;
  double temperature = 1.0;
  std::string model_id;
  // Distinguishes otherwise identical requests that must be sampled
  // independently (re-asks, repeated evaluation runs). Part of the cache key;
  // never sent over the wire.
  std::uint64_t sample_id = 0;
};

struct EmbeddingRequest {
  std::string text;
  std::string model_id;
};

struct CacheKey {
  std::string digest;

  static CacheKey of(const ChatRequest& r, std::string_view provider_kind) {
    json j = {{"kind", provider_kind},
              {"template_id", r.template_id},
              {"variables", r.variables},
              {"temperature", r.temperature},
              {"model_id", r.model_id},
              {"sample_id", r.sample_id}};
    return {sha256_hex(j.dump(-1, ' ', false, json::error_handler_t::replace))};
  }

  static CacheKey of(const EmbeddingRequest& r, std::string_view provider_kind) {
    json j = {{"kind", provider_kind}, {"text", r.text}, {"model_id", r.model_id}};
    return {sha256_hex(j.dump(-1, ' ', false, json::error_handler_t::replace))};
  }

  bool operator==(const CacheKey&) const = default;
};

/// Caps the number of in-flight calls. A limit of 0 means unlimited.
class Throttle {
 public:
  void set_limit(std::size_t limit) {
    std::lock_guard<std::mutex> lock(mu_);
    limit_ = limit;
    cv_.notify_all();
  }

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return limit_ == 0 || in_flight_ < limit_; });
    ++in_flight_;
  }

  void release() {
    std::lock_guard<std::mutex> lock(mu_);
    --in_flight_;
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t limit_ = 0;
  std::size_t in_flight_ = 0;
};

class CallCounter {
 public:
  void record(std::string_view key) {
    total_.fetch_add(1);
    std::lock_guard<std::mutex> lock(mu_);
    ++by_key_[std::string(key)];
  }
  std::size_t total() const { return total_.load(); }
  std::size_t count(std::string_view key) const {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = by_key_.find(std::string(key));
    return it == by_key_.end() ? 0 : it->second;
  }

 private:
  std::atomic<std::size_t> total_{0};
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> by_key_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;

  /// Checks the request against its template, then dispatches.
  std::string chat(const ChatRequest& request) {
    prompt_template(request.template_id).check_filled(request.variables);
    if (!(request.temperature >= 0.0)) {
      throw ValidationError("temperature must be >= 0");
    }
    calls_.record(request.template_id);
    throttle_.acquire();
    struct Release {
      Throttle& t;
      ~Release() { t.release(); }
    } release{throttle_};
    return complete(request);
  }

  /// Short name of the backend; part of every cache key.
  virtual std::string kind() const = 0;

  std::size_t calls() const { return calls_.total(); }
  std::size_t calls_for(std::string_view template_id) const {
    return calls_.count(template_id);
  }
  void set_concurrency_limit(std::size_t limit) { throttle_.set_limit(limit); }

 protected:
  virtual std::string complete(const ChatRequest& request) = 0;

 private:
  CallCounter calls_;
  Throttle throttle_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  std::vector<double> embed(const EmbeddingRequest& request) {
    if (request.text.empty()) throw ValidationError("cannot embed empty text");
    calls_.record(request.model_id);
    throttle_.acquire();
    struct Release {
      Throttle& t;
      ~Release() { t.release(); }
    } release{throttle_};
    return compute(request);
  }

  virtual std::string kind() const = 0;

  std::size_t calls() const { return calls_.total(); }
  void set_concurrency_limit(std::size_t limit) { throttle_.set_limit(limit); }

 protected:
  virtual std::vector<double> compute(const EmbeddingRequest& request) = 0;

 private:
  CallCounter calls_;
  Throttle throttle_;
};

namespace detail {

inline std::optional<json> read_cache_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

inline void write_cache_file(const std::filesystem::path& path, const json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp" << std::this_thread::get_id();
  std::filesystem::path tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache file " + tmp.string());
    out << j.dump(-1, ' ', false, json::error_handler_t::replace);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Content-addressed response cache: one file per CacheKey digest under
/// `<dir>/chat/`. Values are deterministic per key, so concurrent writers of
/// the same key are harmless.
class CachedChatProvider : public ChatProvider {
 public:
  CachedChatProvider(ChatProvider& inner, std::filesystem::path dir)
      : inner_(inner), dir_(std::move(dir) / "chat") {}

  std::string kind() const override { return inner_.kind(); }
  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

 protected:
  std::string complete(const ChatRequest& request) override {
    const CacheKey key = CacheKey::of(request, inner_.kind());
    const auto path = dir_ / (key.digest + ".json");
    if (auto cached = detail::read_cache_file(path);
        cached && cached->contains("response") && (*cached)["response"].is_string()) {
      hits_.fetch_add(1);
      return (*cached)["response"].get<std::string>();
    }
    misses_.fetch_add(1);
    std::string response = inner_.chat(request);
    detail::write_cache_file(path, {{"template_id", request.template_id},
                                    {"model_id", request.model_id},
                                    {"response", response}});
    return response;
  }

 private:
  ChatProvider& inner_;
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

class CachedEmbeddingProvider : public EmbeddingProvider {
 public:
  CachedEmbeddingProvider(EmbeddingProvider& inner, std::filesystem::path dir)
      : inner_(inner), dir_(std::move(dir) / "embed") {}

  std::string kind() const override { return inner_.kind(); }
  std::size_t hits() const { return hits_.load(); }

 protected:
  std::vector<double> compute(const EmbeddingRequest& request) override {
    const CacheKey key = CacheKey::of(request, inner_.kind());
    const auto path = dir_ / (key.digest + ".json");
    if (auto cached = detail::read_cache_file(path);
        cached && cached->contains("embedding") && (*cached)["embedding"].is_array()) {
      hits_.fetch_add(1);
      return (*cached)["embedding"].get<std::vector<double>>();
    }
    std::vector<double> v = inner_.embed(request);
    detail::write_cache_file(path, {{"model_id", request.model_id}, {"embedding", v}});
    return v;
  }

 private:
  EmbeddingProvider& inner_;
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
};

}  // namespace pcheck

#endif  // PCHECK_PROVIDERS_HPP
