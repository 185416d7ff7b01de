#pragma once

// QA pair (or raw document) -> validated atomic triples.

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "sokg/document.hpp"
#include "sokg/graph.hpp"
#include "sokg/json_recovery.hpp"
#include "sokg/prompt_assets.hpp"
#include "sokg/providers.hpp"
#include "sokg/qa.hpp"
#include "sokg/text.hpp"

namespace sokg {

/// qa_mediated extracts per QA pair; direct is the single-pass baseline.
enum class ExtractionMode { qa_mediated, direct };

inline std::string_view mode_code(ExtractionMode mode) {
  return mode == ExtractionMode::direct ? "direct" : "sokg";
}

inline ExtractionMode parse_mode(std::string_view code) {
  if (code == "sokg") return ExtractionMode::qa_mediated;
  if (code == "direct") return ExtractionMode::direct;
  throw std::invalid_argument("unknown mode '" + std::string(code) + "' (expected sokg, direct)");
}

struct RawTripleCandidate {
  std::string entity1;
  std::string entity2;
  std::string relation;
  Provenance source;
};

inline constexpr std::size_t kDefaultRelationTokenBudget = 6;

inline Validation validate_triple(const RawTripleCandidate& c,
                                  std::size_t relation_token_budget = kDefaultRelationTokenBudget) {
  const std::pair<const char*, const std::string*> fields[] = {
      {"entity1", &c.entity1}, {"relation", &c.relation}, {"entity2", &c.entity2}};
  for (auto [name, value] : fields) {
    if (trim(*value).empty()) return Validation::reject(std::string("empty_") + name);
  }
  for (auto [name, value] : fields) {
    if (auto p = find_pronoun(*value); !p.empty()) {
      return Validation::reject(std::string("pronoun_") + name + ":" + p);
    }
  }
  if (auto n = tokenize(c.relation).size(); n > relation_token_budget) {
    return Validation::reject("relation_too_long:" + std::to_string(n));
  }
  return Validation::accept();
}

struct ExtractionResult {
  std::vector<Triple> triples;
  std::vector<DroppedItem> dropped;
  std::size_t parsed_count = 0;
};

struct ExtractionOptions {
  std::string model;
  double temperature = 0.0;
  int max_output = 4096;
  std::size_t relation_token_budget = kDefaultRelationTokenBudget;
};

/// Parses an extraction reply; survivors are whitespace-normalized triples
/// carrying `source` as provenance.
inline ExtractionResult parse_triple_reply(std::string_view reply, const Provenance& source,
                                           std::size_t relation_token_budget) {
  auto list = parse_json_list(reply);
  ExtractionResult result;
  result.parsed_count = list.size();
  auto field = [](const json& item, const char* key) -> std::optional<std::string> {
    if (!item.contains(key) || !item[key].is_string()) return std::nullopt;
    return normalize_whitespace(item[key].get<std::string>());
  };
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& item = list[i];
    const int index = static_cast<int>(i);
    if (!item.is_object()) {
      result.dropped.push_back({index, "malformed"});
      continue;
    }
    auto e1 = field(item, "entity1");
    auto rel = field(item, "relation");
    auto e2 = field(item, "entity2");
    if (!e1 || !rel || !e2) {
      result.dropped.push_back({index, "malformed"});
      continue;
    }
    RawTripleCandidate candidate{*e1, *e2, *rel, source};
    if (auto v = validate_triple(candidate, relation_token_budget); !v.accepted) {
      result.dropped.push_back({index, v.reason});
      continue;
    }
    result.triples.push_back(Triple{*e1, *rel, *e2, {source}});
  }
  return result;
}

inline std::string render_qa_extraction_prompt(const QAPair& pair) {
  return render_template(prompt_assets::triples_from_qa,
                         {{"question", pair.question}, {"answer", pair.answer}});
}

inline std::string render_direct_extraction_prompt(const Document& document) {
  if (trim(document.text).empty()) {
    throw std::invalid_argument("document " + document.id + " has no text");
  }
  return render_template(prompt_assets::triples_direct, {{"document_text", document.text}});
}

inline ExtractionResult extract_from_qa(ChatClient& chat, const QAPair& pair,
                                        const std::string& document_id,
                                        const ExtractionOptions& options) {
  auto reply = chat.chat(ChatRequest{render_qa_extraction_prompt(pair), options.model,
                                     options.temperature, options.max_output});
  auto result = parse_triple_reply(reply, Provenance{document_id, pair.index},
                                   options.relation_token_budget);
  for (const auto& d : result.dropped) {
    spdlog::debug("{} qa {}: dropped candidate {} ({})", document_id, pair.index, d.index, d.reason);
  }
  return result;
}

inline ExtractionResult extract_direct(ChatClient& chat, const Document& document,
                                       const ExtractionOptions& options) {
  auto reply = chat.chat(ChatRequest{render_direct_extraction_prompt(document), options.model,
                                     options.temperature, options.max_output});
  auto result = parse_triple_reply(reply, Provenance{document.id, std::nullopt},
                                   options.relation_token_budget);
  for (const auto& d : result.dropped) {
    spdlog::debug("{}: dropped candidate {} ({})", document.id, d.index, d.reason);
  }
  return result;
}

}  // namespace sokg
