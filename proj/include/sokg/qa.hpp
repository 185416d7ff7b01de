#pragma once

// Document -> self-contained QA pairs. The six shipped templates cover three
// prompt archetypes, each with and without the 5W1H questioning lenses.

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "sokg/document.hpp"
#include "sokg/json_recovery.hpp"
#include "sokg/prompt_assets.hpp"
#include "sokg/providers.hpp"
#include "sokg/text.hpp"

namespace sokg {

enum class ArchetypeKind { role_oriented, procedural_step, instructional_direct };

struct PromptArchetype {
  ArchetypeKind kind = ArchetypeKind::role_oriented;
  bool with_5w1h = true;

  bool operator==(const PromptArchetype&) const = default;
};

inline std::string_view archetype_code(ArchetypeKind kind) {
  switch (kind) {
    case ArchetypeKind::role_oriented: return "ro";
    case ArchetypeKind::procedural_step: return "ps";
    case ArchetypeKind::instructional_direct: return "id";
  }
  return "ro";
}

inline ArchetypeKind parse_archetype(std::string_view code) {
  if (code == "ro") return ArchetypeKind::role_oriented;
  if (code == "ps") return ArchetypeKind::procedural_step;
  if (code == "id") return ArchetypeKind::instructional_direct;
  throw std::invalid_argument("unknown archetype '" + std::string(code) + "' (expected ro, ps, id)");
}

inline std::string_view qa_template(PromptArchetype a) {
  switch (a.kind) {
    case ArchetypeKind::role_oriented:
      return a.with_5w1h ? prompt_assets::qa_ro_5w1h : prompt_assets::qa_ro_plain;
    case ArchetypeKind::procedural_step:
      return a.with_5w1h ? prompt_assets::qa_ps_5w1h : prompt_assets::qa_ps_plain;
    case ArchetypeKind::instructional_direct:
      return a.with_5w1h ? prompt_assets::qa_id_5w1h : prompt_assets::qa_id_plain;
  }
  throw std::logic_error("unreachable archetype");
}

inline std::string render_qa_prompt(const Document& document, PromptArchetype archetype) {
  if (document.text.empty()) throw std::invalid_argument("document " + document.id + " has no text");
  return render_template(qa_template(archetype), {{"document_text", document.text}});
}

struct QAPair {
  std::string question;
  std::string answer;
  int index = 0;

  bool operator==(const QAPair&) const = default;
};

inline void to_json(json& j, const QAPair& p) {
  j = json{{"index", p.index}, {"question", p.question}, {"answer", p.answer}};
}

inline void from_json(const json& j, QAPair& p) {
  j.at("question").get_to(p.question);
  j.at("answer").get_to(p.answer);
  p.index = j.value("index", 0);
}

struct Validation {
  bool accepted = true;
  std::string reason;

  static Validation accept() { return {}; }
  static Validation reject(std::string why) { return {false, std::move(why)}; }
};

/// Answers must stand alone: no blacklisted pronoun may appear as a whole token.
inline Validation validate_context_independence(const QAPair& pair) {
  if (trim(pair.question).empty()) return Validation::reject("empty_question");
  if (trim(pair.answer).empty()) return Validation::reject("empty_answer");
  if (auto p = find_pronoun(pair.answer); !p.empty()) return Validation::reject("pronoun:" + p);
  return Validation::accept();
}

/// A parsed item that did not survive validation.
struct DroppedItem {
  int index = 0;
  std::string reason;
};

inline void to_json(json& j, const DroppedItem& d) { j = json{{"index", d.index}, {"reason", d.reason}}; }

struct QAResult {
  std::vector<QAPair> pairs;
  std::vector<DroppedItem> dropped;
  std::size_t parsed_count = 0;
};

struct QAOptions {
  std::string model;
  double temperature = 0.0;
  int max_output = 4096;
};

/// Parses a QA reply: pairs keep their position in the reply as `index`.
inline QAResult parse_qa_reply(std::string_view reply) {
  auto list = parse_json_list(reply);
  QAResult result;
  result.parsed_count = list.size();
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& item = list[i];
    const int index = static_cast<int>(i);
    if (!item.is_object() || !item.contains("question") || !item.contains("answer") ||
        !item["question"].is_string() || !item["answer"].is_string()) {
      result.dropped.push_back({index, "malformed"});
      continue;
    }
    QAPair pair{normalize_whitespace(item["question"].get<std::string>()),
                normalize_whitespace(item["answer"].get<std::string>()), index};
    if (auto v = validate_context_independence(pair); !v.accepted) {
      result.dropped.push_back({index, v.reason});
      continue;
    }
    result.pairs.push_back(std::move(pair));
  }
  return result;
}

inline QAResult generate_qa(ChatClient& chat, const Document& document, PromptArchetype archetype,
                            const QAOptions& options) {
  auto prompt = render_qa_prompt(document, archetype);
  auto reply = chat.chat(ChatRequest{prompt, options.model, options.temperature, options.max_output});
  auto result = parse_qa_reply(reply);
  for (const auto& d : result.dropped) {
    spdlog::debug("{}: dropped QA pair {} ({})", document.id, d.index, d.reason);
  }
  if (result.pairs.empty()) spdlog::warn("{}: no QA pairs survived validation", document.id);
  return result;
}

}  // namespace sokg
