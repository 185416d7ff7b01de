#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sokg {

/// Lowercased alphanumeric runs; everything else separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    // Bytes >= 0x80 belong to UTF-8 sequences; keep them inside tokens.
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::string trim(std::string_view text) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto first = std::find_if_not(text.begin(), text.end(), is_space);
  auto last = std::find_if_not(text.rbegin(), text.rend(), is_space).base();
  if (first >= last) return {};
  return std::string(first, last);
}

/// Trims and collapses internal whitespace runs to a single space. Case is kept.
inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ch);
  }
  return out;
}

inline std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

inline constexpr std::array<std::string_view, 18> kPronounBlacklist = {
    "it",   "its",  "they",    "them",   "their", "this",
    "that", "these", "those",  "he",     "she",   "him",
    "her",  "his",  "hers",    "someone", "anyone", "whoever"};

inline bool is_blacklisted_pronoun(std::string_view token) {
  return std::find(kPronounBlacklist.begin(), kPronounBlacklist.end(), token) !=
         kPronounBlacklist.end();
}

/// First blacklisted pronoun that appears as a whole token, or empty.
inline std::string find_pronoun(std::string_view text) {
  for (auto& token : tokenize(text)) {
    if (is_blacklisted_pronoun(token)) return token;
  }
  return {};
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Python str.format style substitution: `{{` and `}}` are literal braces and
/// `{name}` is replaced by the bound value. Substituted values are inserted
/// verbatim, so braces inside them survive.
inline std::string render_template(
    std::string_view tmpl, const std::unordered_map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      auto close = tmpl.find('}', i + 1);
      if (close == std::string_view::npos) {
        throw std::invalid_argument("unterminated placeholder in template");
      }
      std::string name(tmpl.substr(i + 1, close - i - 1));
      auto it = values.find(name);
      if (it == values.end()) {
        throw std::invalid_argument("no value bound for placeholder {" + name + "}");
      }
      out += it->second;
      i = close;
    } else if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') ++i;
      out.push_back('}');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace sokg
