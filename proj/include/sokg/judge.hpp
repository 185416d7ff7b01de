#pragma once

#include <memory>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "sokg/prompt_assets.hpp"
#include "sokg/providers.hpp"
#include "sokg/text.hpp"

namespace sokg {

/// Separator between the parts of one context line: "subject — relation — object".
inline constexpr std::string_view kContextSeparator = " — ";

class Judge {
 public:
  virtual ~Judge() = default;
  /// Whether `fact` is supported by `context` (one triple per line).
  virtual bool judge(const std::string& fact, const std::string& context) = 0;
};

/// Asks a chat model. A reply is affirmative when it matches the configured
/// pattern (case-insensitive); anything else counts as unsupported.
class LlmJudge : public Judge {
 public:
  LlmJudge(std::shared_ptr<ChatClient> chat, std::string model, double temperature = 0.0,
           const std::string& affirmative_pattern = ProviderConfig{}.affirmative_pattern)
      : chat_(std::move(chat)),
        model_(std::move(model)),
        temperature_(temperature),
        affirmative_(affirmative_pattern, std::regex::icase | std::regex::ECMAScript),
        negative_(R"(^\s*["'*]*(no|false|unsupported|not supported)\b)", std::regex::icase) {}

  static std::string render_prompt(const std::string& fact, const std::string& context) {
    return render_template(prompt_assets::judge, {{"fact", fact}, {"context", context}});
  }

  bool judge(const std::string& fact, const std::string& context) override {
    auto reply = chat_->chat(ChatRequest{render_prompt(fact, context), model_, temperature_, 16});
    if (std::regex_search(reply, affirmative_)) return true;
    if (!std::regex_search(reply, negative_)) {
      spdlog::warn("unparseable judge verdict counted as unsupported: {}", reply);
    }
    return false;
  }

 private:
  std::shared_ptr<ChatClient> chat_;
  std::string model_;
  double temperature_;
  std::regex affirmative_;
  std::regex negative_;
};

/// Test-mode judge: supported iff some context triple has both its subject and
/// its object occurring (case-insensitively) in the fact statement.
class ContainmentJudge : public Judge {
 public:
  bool judge(const std::string& fact, const std::string& context) override {
    const auto haystack = to_lower(fact);
    std::size_t pos = 0;
    while (pos < context.size()) {
      auto eol = context.find('\n', pos);
      std::string_view line(context.data() + pos,
                            (eol == std::string::npos ? context.size() : eol) - pos);
      pos = eol == std::string::npos ? context.size() : eol + 1;
      auto first = line.find(kContextSeparator);
      if (first == std::string_view::npos) continue;
      auto second = line.find(kContextSeparator, first + kContextSeparator.size());
      if (second == std::string_view::npos) continue;
      auto subject = to_lower(trim(line.substr(0, first)));
      auto object = to_lower(trim(line.substr(second + kContextSeparator.size())));
      if (!subject.empty() && !object.empty() && haystack.find(subject) != std::string::npos &&
          haystack.find(object) != std::string::npos) {
        return true;
      }
    }
    return false;
  }
};

}  // namespace sokg
