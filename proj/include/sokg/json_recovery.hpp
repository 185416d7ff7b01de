#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace sokg {

using json = nlohmann::json;

/// Model reply that did not contain the expected JSON payload.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::string raw)
      : std::runtime_error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Removes markdown code-fence lines (``` or ```json). Other lines are kept.
inline std::string strip_code_fences(std::string_view reply) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto eol = reply.find('\n', pos);
    auto line = reply.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    auto first = line.find_first_not_of(" \t\r");
    bool fence = first != std::string_view::npos && line.substr(first).starts_with("```");
    if (!fence) {
      out.append(line);
      if (eol != std::string_view::npos) out.push_back('\n');
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return out;
}

/// First balanced `open`...`close` span that parses as JSON. Brackets inside
/// string literals are ignored.
inline std::optional<json> first_balanced(std::string_view text, char open, char close) {
  for (std::size_t start = text.find(open); start != std::string_view::npos;
       start = text.find(open, start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == open) {
        ++depth;
      } else if (c == close && --depth == 0) {
        auto parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (!parsed.is_discarded()) return parsed;
        break;
      }
    }
  }
  return std::nullopt;
}

/// Recovers the JSON list an LLM was asked for: strip fences, then take the
/// first balanced top-level array.
inline json parse_json_list(std::string_view reply) {
  auto cleaned = strip_code_fences(reply);
  if (auto arr = first_balanced(cleaned, '[', ']')) return *arr;
  throw ParseError("no JSON list found in model reply", std::string(reply));
}

inline json parse_json_object(std::string_view reply) {
  auto cleaned = strip_code_fences(reply);
  if (auto obj = first_balanced(cleaned, '{', '}')) return *obj;
  throw ParseError("no JSON object found in model reply", std::string(reply));
}

}  // namespace sokg
