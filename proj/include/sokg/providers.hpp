#pragma once

// Chat-completion and embedding backends behind one interface, plus the
// content-addressed response cache that makes runs resumable and offline
// tests reproducible.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

namespace sokg {

using json = nlohmann::json;

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transient failures survived every retry.
class RetryableFailure : public ProviderError {
 public:
  RetryableFailure(const std::string& what, int attempts)
      : ProviderError(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// The backend answered, but not in the shape we asked for.
class ProtocolError : public ProviderError {
 public:
  ProtocolError(const std::string& what, std::string raw)
      : ProviderError(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings shared by every backend. Loaded from the "providers" block of the
/// run configuration.
struct ProviderConfig {
  std::string kind = "mock";  // "mock" | "remote"
  std::string base_url = "https://api.openai.com/v1";
  std::string chat_model = "gpt-4o-mini";
  std::string judge_model = "gpt-4o";
  std::string embedding_model = "all-MiniLM-L6-v2";
  std::string api_key_env = "SOKG_API_KEY";
  double temperature = 0.0;
  int max_output = 4096;
  std::size_t batch_size = 128;
  int max_in_flight = 4;
  double requests_per_second = 0.0;  // <= 0 disables rate limiting
  int burst = 1;
  int max_retries = 4;
  int backoff_initial_ms = 500;
  int backoff_max_ms = 8000;
  int timeout_seconds = 120;
  std::string cache_dir;  // empty keeps the cache in memory only
  std::string mock_fixtures;
  std::string mock_default_reply = "[]";
  std::string judge_mode = "llm";  // "llm" | "oracle"
  std::string affirmative_pattern = R"(^\s*["'*]*(yes|true|supported)\b)";
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    ProviderConfig, kind, base_url, chat_model, judge_model, embedding_model, api_key_env,
    temperature, max_output, batch_size, max_in_flight, requests_per_second, burst, max_retries,
    backoff_initial_ms, backoff_max_ms, timeout_seconds, cache_dir, mock_fixtures,
    mock_default_reply, judge_mode, affirmative_pattern)

struct ChatRequest {
  std::string prompt;
  std::string model;
  double temperature = 0.0;
  int max_output = 4096;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const noexcept { return values.size(); }
};

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) throw ConfigError("embedding dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

/// Cosine of two unit vectors.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return dot(a, b); }

inline void l2_normalize(EmbeddingVector& v) {
  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return;
  for (double& x : v.values) x /= norm;
}

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string id() const = 0;
  virtual std::string chat(const ChatRequest& request) = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
};

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

/// Digest over (provider id, model, temperature, payload).
struct CacheKey {
  std::string digest;

  static CacheKey make(std::string_view provider, std::string_view model, double temperature,
                       std::string_view payload) {
    json material = json::array({provider, model, temperature, payload});
    return CacheKey{sha256_hex(material.dump())};
  }

  bool operator==(const CacheKey&) const = default;
};

/// Content-addressed response store. Always memoizes in memory; with a
/// directory it also persists one file per key, written atomically.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path directory = {}) : directory_(std::move(directory)) {
    if (!directory_.empty()) std::filesystem::create_directories(directory_);
  }

  std::optional<json> get(const CacheKey& key) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = memory_.find(key.digest); it != memory_.end()) return it->second;
    }
    if (directory_.empty()) return std::nullopt;
    std::ifstream in(path_for(key));
    if (!in) return std::nullopt;
    auto value = json::parse(in, nullptr, false);
    if (value.is_discarded() || !value.contains("value")) return std::nullopt;
    std::lock_guard lock(mutex_);
    memory_[key.digest] = value["value"];
    return value["value"];
  }

  void put(const CacheKey& key, const json& value) {
    if (!directory_.empty()) {
      auto target = path_for(key);
      std::filesystem::create_directories(target.parent_path());
      std::ostringstream suffix;
      suffix << ".tmp." << std::this_thread::get_id() << '.' << counter_.fetch_add(1);
      auto temp = target;
      temp += suffix.str();
      {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        out << json{{"value", value}}.dump();
        if (!out) throw std::runtime_error("cannot write cache entry " + temp.string());
      }
      std::filesystem::rename(temp, target);
    }
    std::lock_guard lock(mutex_);
    memory_[key.digest] = value;
  }

  const std::filesystem::path& directory() const noexcept { return directory_; }

 private:
  std::filesystem::path path_for(const CacheKey& key) const {
    return directory_ / key.digest.substr(0, 2) / (key.digest + ".json");
  }

  std::filesystem::path directory_;
  std::mutex mutex_;
  std::unordered_map<std::string, json> memory_;
  std::atomic<std::uint64_t> counter_{0};
};

/// Cached front end for a chat backend. Thread-safe when the backend is.
class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatProvider> provider, std::shared_ptr<ResponseCache> cache)
      : provider_(std::move(provider)), cache_(std::move(cache)) {}

  std::string chat(const ChatRequest& request) {
    if (request.prompt.empty()) throw std::invalid_argument("chat prompt must be non-empty");
    if (request.temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
    auto key = CacheKey::make(provider_->id(), request.model, request.temperature, request.prompt);
    if (cache_) {
      if (auto hit = cache_->get(key); hit && hit->is_string()) return hit->get<std::string>();
    }
    auto reply = provider_->chat(request);
    backend_calls_.fetch_add(1);
    if (cache_) cache_->put(key, reply);
    return reply;
  }

  std::size_t backend_calls() const noexcept { return backend_calls_.load(); }
  const ChatProvider& provider() const noexcept { return *provider_; }

 private:
  std::shared_ptr<ChatProvider> provider_;
  std::shared_ptr<ResponseCache> cache_;
  std::atomic<std::size_t> backend_calls_{0};
};

/// Order-preserving, batched, cached, L2-normalizing front end for an
/// embedding backend. All vectors of a session share one dimension.
class Embedder {
 public:
  Embedder(std::shared_ptr<EmbeddingProvider> provider, std::shared_ptr<ResponseCache> cache,
           std::string model, std::size_t batch_size = 128)
      : provider_(std::move(provider)),
        cache_(std::move(cache)),
        model_(std::move(model)),
        batch_size_(batch_size == 0 ? 1 : batch_size) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) {
    if (texts.empty()) throw std::invalid_argument("embed requires at least one text");
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<CacheKey> keys;
    keys.reserve(texts.size());
    // Distinct uncached texts, in first-occurrence order.
    std::vector<std::size_t> misses;
    std::unordered_map<std::string, std::size_t> miss_slot;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      keys.push_back(CacheKey::make(provider_->id(), model_, 0.0, texts[i]));
      if (cache_) {
        if (auto hit = cache_->get(keys.back())) {
          out[i].values = hit->get<std::vector<double>>();
          check_dimension(out[i]);
          continue;
        }
      }
      if (miss_slot.emplace(texts[i], misses.size()).second) misses.push_back(i);
    }
    std::vector<EmbeddingVector> fresh;
    fresh.reserve(misses.size());
    for (std::size_t begin = 0; begin < misses.size(); begin += batch_size_) {
      auto end = std::min(misses.size(), begin + batch_size_);
      std::vector<std::string> batch;
      for (auto k = begin; k < end; ++k) batch.push_back(texts[misses[k]]);
      auto vectors = provider_->embed_batch(batch);
      provider_calls_.fetch_add(1);
      if (vectors.size() != batch.size()) {
        throw ProtocolError("embedding backend returned " + std::to_string(vectors.size()) +
                                " vectors for " + std::to_string(batch.size()) + " texts",
                            {});
      }
      for (std::size_t k = 0; k < vectors.size(); ++k) {
        l2_normalize(vectors[k]);
        check_dimension(vectors[k]);
        if (cache_) cache_->put(keys[misses[begin + k]], vectors[k].values);
        fresh.push_back(std::move(vectors[k]));
      }
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (out[i].values.empty()) out[i] = fresh[miss_slot.at(texts[i])];
    }
    return out;
  }

  EmbeddingVector embed_one(const std::string& text) {
    return embed(std::span<const std::string>(&text, 1)).front();
  }

  std::size_t provider_calls() const noexcept { return provider_calls_.load(); }
  const std::string& model() const noexcept { return model_; }

 private:
  void check_dimension(const EmbeddingVector& v) {
    std::lock_guard lock(mutex_);
    if (!dimension_) {
      dimension_ = v.dimension();
    } else if (*dimension_ != v.dimension()) {
      throw ConfigError("embedding dimension changed within a session: " +
                        std::to_string(*dimension_) + " vs " + std::to_string(v.dimension()));
    }
  }

  std::shared_ptr<EmbeddingProvider> provider_;
  std::shared_ptr<ResponseCache> cache_;
  std::string model_;
  std::size_t batch_size_;
  std::atomic<std::size_t> provider_calls_{0};
  std::mutex mutex_;
  std::optional<std::size_t> dimension_;
};

}  // namespace sokg
