#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sokg/providers.hpp"
#include "sokg/text.hpp"

namespace sokg {

/// Deterministic bag-of-words embedder: lowercase alphanumeric tokens are
/// hashed (FNV-1a) into `dimension` buckets and the counts L2-normalized.
/// Texts without tokens land in the bucket of the empty string.
class HashEmbedder : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dimension = 256) : dimension_(dimension) {}

  std::string id() const override { return "mock-hash-" + std::to_string(dimension_); }

  EmbeddingVector embed_text(std::string_view text) const {
    EmbeddingVector v;
    v.values.assign(dimension_, 0.0);
    auto tokens = tokenize(text);
    if (tokens.empty()) {
      v.values[fnv1a64("") % dimension_] = 1.0;
    }
    for (const auto& tok : tokens) v.values[fnv1a64(tok) % dimension_] += 1.0;
    l2_normalize(v);
    return v;
  }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    calls_.fetch_add(1);
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_text(t));
    return out;
  }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::size_t dimension_;
  std::atomic<std::size_t> calls_{0};
};

/// One scripted reply: chosen when every `match` substring occurs in the prompt.
/// `error` injects a failure instead ("retryable" or "protocol").
struct MockRule {
  std::vector<std::string> match;
  std::string reply;
  std::string error;
};

inline void from_json(const json& j, MockRule& r) {
  if (j.at("match").is_string()) {
    r.match = {j.at("match").get<std::string>()};
  } else {
    r.match = j.at("match").get<std::vector<std::string>>();
  }
  if (j.contains("reply")) {
    const auto& reply = j.at("reply");
    r.reply = reply.is_string() ? reply.get<std::string>() : reply.dump();
  }
  r.error = j.value("error", std::string{});
}

/// Fixture-driven chat backend. A pure function of the prompt and its rules:
/// first matching rule wins, otherwise the default reply.
class MockChat : public ChatProvider {
 public:
  using Script = std::function<std::string(const ChatRequest&)>;

  MockChat() = default;
  MockChat(std::vector<MockRule> rules, std::string default_reply)
      : rules_(std::move(rules)), default_reply_(std::move(default_reply)) {}
  explicit MockChat(Script script) : script_(std::move(script)) {}

  /// Fixture file: {"rules": [{"match": [...], "reply": ...}], "default_reply": "..."}.
  static std::shared_ptr<MockChat> from_file(const std::filesystem::path& path,
                                             std::string default_reply = "[]") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock fixture file " + path.string());
    auto j = json::parse(in);
    return std::make_shared<MockChat>(j.value("rules", std::vector<MockRule>{}),
                                      j.value("default_reply", std::move(default_reply)));
  }

  std::string id() const override { return "mock-chat"; }

  std::string chat(const ChatRequest& request) override {
    calls_.fetch_add(1);
    if (script_) return script_(request);
    for (const auto& rule : rules_) {
      bool hit = std::all_of(rule.match.begin(), rule.match.end(), [&](const std::string& s) {
        return request.prompt.find(s) != std::string::npos;
      });
      if (!hit) continue;
      if (rule.error == "retryable") throw RetryableFailure("scripted transient failure", 1);
      if (rule.error == "protocol") throw ProtocolError("scripted protocol failure", rule.reply);
      return rule.reply;
    }
    return default_reply_;
  }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::vector<MockRule> rules_;
  std::string default_reply_ = "[]";
  Script script_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace sokg
