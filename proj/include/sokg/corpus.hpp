#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sokg/document.hpp"
#include "sokg/text.hpp"

namespace sokg {

class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Article ids double as directory names inside a run.
inline bool is_safe_article_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return id.find_first_of(std::string("/\\\0:", 4)) == std::string::npos;
}

/// One JSON object per line: {"id": str, "text": str, "facts": [str]}.
/// Blank lines are skipped; facts are indexed in file order.
inline std::vector<Document> parse_corpus(std::istream& in) {
  std::vector<Document> docs;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw CorpusError("not a JSON object", line_no);
    if (!j.contains("id") || !j["id"].is_string()) throw CorpusError("missing string field \"id\"", line_no);
    if (!j.contains("text") || !j["text"].is_string()) throw CorpusError("missing string field \"text\"", line_no);
    Document doc;
    doc.id = j["id"].get<std::string>();
    doc.text = j["text"].get<std::string>();
    if (!is_safe_article_id(doc.id)) throw CorpusError("article id is not a safe file name: " + doc.id, line_no);
    if (trim(doc.text).empty()) throw CorpusError("empty \"text\" for article " + doc.id, line_no);
    if (!ids.insert(doc.id).second) throw CorpusError("duplicate article id: " + doc.id, line_no);
    if (j.contains("facts")) {
      if (!j["facts"].is_array()) throw CorpusError("\"facts\" must be a list of strings", line_no);
      int index = 0;
      for (const auto& f : j["facts"]) {
        if (!f.is_string() || trim(f.get<std::string>()).empty()) {
          throw CorpusError("fact " + std::to_string(index) + " is not a non-empty string", line_no);
        }
        doc.facts.push_back(Fact{f.get<std::string>(), doc.id, index++});
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline std::vector<Document> ingest_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus file " + path.string(), 0);
  return parse_corpus(in);
}

}  // namespace sokg
