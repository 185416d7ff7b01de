#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sokg {

/// One ground-truth statement attached to an article.
struct Fact {
  std::string statement;
  std::string article_id;
  int index = 0;
};

struct Document {
  std::string id;
  std::string text;
  std::vector<Fact> facts;
};

inline void to_json(nlohmann::json& j, const Fact& f) {
  j = nlohmann::json{{"statement", f.statement}, {"article_id", f.article_id}, {"index", f.index}};
}

}  // namespace sokg
