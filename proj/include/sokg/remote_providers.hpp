#pragma once

// OpenAI-compatible HTTP backends: /chat/completions and /embeddings under a
// configurable base URL, with exponential backoff on transient failures, a
// token-bucket rate limiter and a cap on concurrent requests.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <regex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "sokg/providers.hpp"

namespace sokg {

struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds initial{500};
  std::chrono::milliseconds max{8000};

  /// Delay before retry number `retry` (1-based): initial * 2^(retry-1), capped.
  std::chrono::milliseconds delay(int retry) const {
    auto d = initial.count();
    for (int i = 1; i < retry && d < max.count(); ++i) d *= 2;
    return std::chrono::milliseconds(std::min<long long>(d, max.count()));
  }
};

inline bool is_retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

class TokenBucket {
 public:
  TokenBucket(double rate_per_second, int burst)
      : rate_(rate_per_second), capacity_(std::max(1, burst)), tokens_(capacity_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mutex_);
    for (;;) {
      auto now = std::chrono::steady_clock::now();
      tokens_ = std::min<double>(capacity_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  double rate_;
  int capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

/// JSON-over-HTTP POST with retry, rate limit and in-flight cap. Shared by the
/// chat and embedding backends.
class HttpJsonTransport {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpJsonTransport(const ProviderConfig& config, Sleeper sleeper = {})
      : retry_{config.max_retries, std::chrono::milliseconds(config.backoff_initial_ms),
               std::chrono::milliseconds(config.backoff_max_ms)},
        bucket_(config.requests_per_second, config.burst),
        in_flight_(std::clamp(config.max_in_flight, 1, 1024)),
        timeout_seconds_(config.timeout_seconds),
        sleeper_(sleeper ? std::move(sleeper)
                         : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config.base_url, m, url)) {
      throw ConfigError("base_url must look like http(s)://host[:port][/prefix]: " + config.base_url);
    }
    origin_ = m[1].str();
    prefix_ = m[2].matched ? m[2].str() : std::string{};
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (!config.api_key_env.empty()) {
      if (const char* key = std::getenv(config.api_key_env.c_str())) api_key_ = key;
    }
  }

  json post(const std::string& path, const json& body) {
    const auto payload = body.dump();
    std::string last_error;
    for (int attempt = 1; attempt <= retry_.max_retries + 1; ++attempt) {
      if (attempt > 1) sleeper_(retry_.delay(attempt - 1));
      bucket_.acquire();
      attempts_.fetch_add(1);
      httplib::Result result = [&] {
        in_flight_.acquire();
        httplib::Client client(origin_);
        client.set_connection_timeout(timeout_seconds_, 0);
        client.set_read_timeout(timeout_seconds_, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto r = client.Post(prefix_ + path, headers, payload, "application/json");
        in_flight_.release();
        return r;
      }();
      if (!result) {
        last_error = "transport error: " + httplib::to_string(result.error());
      } else if (is_retryable_status(result->status)) {
        last_error = "HTTP " + std::to_string(result->status);
      } else if (result->status < 200 || result->status >= 300) {
        throw ProtocolError("HTTP " + std::to_string(result->status) + " from " + path, result->body);
      } else {
        auto parsed = json::parse(result->body, nullptr, false);
        if (parsed.is_discarded()) throw ProtocolError("reply is not JSON", result->body);
        return parsed;
      }
      spdlog::warn("{}{} attempt {} failed: {}", origin_, path, attempt, last_error);
    }
    throw RetryableFailure("giving up on " + path + " after " +
                               std::to_string(retry_.max_retries + 1) + " attempts: " + last_error,
                           retry_.max_retries + 1);
  }

  std::size_t attempts() const noexcept { return attempts_.load(); }
  std::string endpoint() const { return origin_ + prefix_; }

 private:
  RetryPolicy retry_;
  TokenBucket bucket_;
  std::counting_semaphore<1024> in_flight_;
  int timeout_seconds_;
  Sleeper sleeper_;
  std::string origin_;
  std::string prefix_;
  std::string api_key_;
  std::atomic<std::size_t> attempts_{0};
};

class RemoteChat : public ChatProvider {
 public:
  explicit RemoteChat(const ProviderConfig& config, HttpJsonTransport::Sleeper sleeper = {})
      : transport_(config, std::move(sleeper)) {}

  std::string id() const override { return "remote:" + transport_.endpoint(); }

  std::string chat(const ChatRequest& request) override {
    json body{{"model", request.model},
              {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
              {"temperature", request.temperature},
              {"max_tokens", request.max_output}};
    auto reply = transport_.post("/chat/completions", body);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw ProtocolError("chat reply lacks choices[0].message.content", reply.dump());
    }
  }

  std::size_t attempts() const noexcept { return transport_.attempts(); }

 private:
  HttpJsonTransport transport_;
};

class RemoteEmbedder : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(const ProviderConfig& config, HttpJsonTransport::Sleeper sleeper = {})
      : transport_(config, std::move(sleeper)), model_(config.embedding_model) {}

  std::string id() const override { return "remote:" + transport_.endpoint(); }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    json body{{"model", model_}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
    auto reply = transport_.post("/embeddings", body);
    try {
      const auto& data = reply.at("data");
      std::vector<EmbeddingVector> out(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto slot = data[i].value("index", i);
        if (slot >= out.size()) throw ProtocolError("embedding index out of range", reply.dump());
        out[slot].values = data[i].at("embedding").get<std::vector<double>>();
      }
      return out;
    } catch (const json::exception&) {
      throw ProtocolError("embedding reply lacks data[].embedding", reply.dump());
    }
  }

  std::size_t attempts() const noexcept { return transport_.attempts(); }

 private:
  HttpJsonTransport transport_;
  std::string model_;
};

}  // namespace sokg
