#pragma once

// Run-level aggregation of per-article metrics and table rendering.
// Deg and NFI are averaged per graph; #Tri is summed over articles.

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sokg/graph.hpp"

namespace sokg {

struct ArticleRecord {
  std::string article_id;
  std::string mode;
  std::string model;
  std::optional<double> retention;
  StructuralMetrics metrics;
  std::size_t qa_count = 0;
  std::size_t raw_triple_count = 0;
};

inline void to_json(json& j, const ArticleRecord& r) {
  j = json{{"article_id", r.article_id}, {"mode", r.mode},
           {"model", r.model},           {"metrics", r.metrics},
           {"qa_count", r.qa_count},     {"raw_triple_count", r.raw_triple_count}};
  j["retention"] = r.retention ? json(*r.retention) : json(nullptr);
}

inline void from_json(const json& j, ArticleRecord& r) {
  j.at("article_id").get_to(r.article_id);
  j.at("mode").get_to(r.mode);
  j.at("model").get_to(r.model);
  j.at("metrics").get_to(r.metrics);
  r.qa_count = j.value("qa_count", std::size_t{0});
  r.raw_triple_count = j.value("raw_triple_count", std::size_t{0});
  if (j.contains("retention") && !j["retention"].is_null()) {
    r.retention = j["retention"].get<double>();
  } else {
    r.retention.reset();
  }
}

struct RunReport {
  std::string label;
  std::string mode;
  std::string model;
  std::vector<ArticleRecord> records;
  std::vector<std::string> failed_articles;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;
  double mean_degree = 0.0;
  double mean_nfi = 0.0;
  std::size_t total_triples = 0;
  std::optional<double> retention;
};

inline void to_json(json& j, const RunReport& r) {
  j = json{{"label", r.label},
           {"mode", r.mode},
           {"model", r.model},
           {"records", r.records},
           {"failed_articles", r.failed_articles},
           {"aggregates",
            {{"N", r.mean_nodes},
             {"E", r.mean_edges},
             {"Deg", r.mean_degree},
             {"NFI", r.mean_nfi},
             {"Tri", r.total_triples},
             {"retention", r.retention ? json(*r.retention) : json(nullptr)}}}};
}

inline void from_json(const json& j, RunReport& r) {
  j.at("label").get_to(r.label);
  j.at("mode").get_to(r.mode);
  j.at("model").get_to(r.model);
  j.at("records").get_to(r.records);
  r.failed_articles = j.value("failed_articles", std::vector<std::string>{});
  const auto& a = j.at("aggregates");
  a.at("N").get_to(r.mean_nodes);
  a.at("E").get_to(r.mean_edges);
  a.at("Deg").get_to(r.mean_degree);
  a.at("NFI").get_to(r.mean_nfi);
  a.at("Tri").get_to(r.total_triples);
  if (a.contains("retention") && !a["retention"].is_null()) {
    r.retention = a["retention"].get<double>();
  } else {
    r.retention.reset();
  }
}

/// Mean of per-article N, E, Deg and NFI; summed #Tri; mean retention over the
/// articles that were evaluated. Records must share mode and model.
inline RunReport aggregate(const std::vector<ArticleRecord>& records, std::string label = {}) {
  if (records.empty()) throw std::invalid_argument("cannot aggregate an empty record list");
  RunReport report;
  report.label = std::move(label);
  report.mode = records.front().mode;
  report.model = records.front().model;
  for (const auto& r : records) {
    if (r.mode != report.mode || r.model != report.model) {
      throw std::invalid_argument("records mix (" + report.mode + ", " + report.model + ") with (" + r.mode +
                                  ", " + r.model + ")");
    }
  }
  // Sum in article-id order so the result does not depend on record order.
  std::vector<const ArticleRecord*> ordered;
  for (const auto& r : records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const ArticleRecord* a, const ArticleRecord* b) { return a->article_id < b->article_id; });
  double nodes = 0, edges = 0, degree = 0, nfi = 0, retention = 0;
  std::size_t evaluated = 0;
  for (const auto* r : ordered) {
    nodes += static_cast<double>(r->metrics.node_count);
    edges += static_cast<double>(r->metrics.unique_edge_count);
    degree += r->metrics.average_degree;
    nfi += r->metrics.nfi;
    report.total_triples += r->metrics.triple_count;
    if (r->retention) {
      retention += *r->retention;
      ++evaluated;
    }
  }
  const auto n = static_cast<double>(records.size());
  report.mean_nodes = nodes / n;
  report.mean_edges = edges / n;
  report.mean_degree = degree / n;
  report.mean_nfi = nfi / n;
  if (evaluated > 0) report.retention = retention / static_cast<double>(evaluated);
  report.records = records;
  return report;
}

enum class TableFormat { text, csv, markdown };

inline TableFormat parse_table_format(std::string_view name) {
  if (name == "text") return TableFormat::text;
  if (name == "csv") return TableFormat::csv;
  if (name == "markdown" || name == "md") return TableFormat::markdown;
  throw std::invalid_argument("unknown table format: " + std::string(name));
}

namespace detail {

inline std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

/// Display width as a UTF-8 code-point count; good enough for the headers and
/// labels used here, which carry no wide or combining characters.
inline std::size_t display_width(std::string_view s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

inline std::string pad(const std::string& s, std::size_t width, bool left) {
  const auto w = display_width(s);
  if (w >= width) return s;
  std::string fill(width - w, ' ');
  return left ? s + fill : fill + s;
}

inline std::string render_grid(const std::vector<std::string>& header,
                               const std::vector<std::vector<std::string>>& rows, TableFormat format) {
  std::string out;
  switch (format) {
    case TableFormat::csv: {
      auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (i) out.push_back(',');
          out += csv_field(cells[i]);
        }
        out.push_back('\n');
      };
      line(header);
      for (const auto& r : rows) line(r);
      break;
    }
    case TableFormat::markdown: {
      auto line = [&](const std::vector<std::string>& cells) {
        out += "|";
        for (const auto& c : cells) out += " " + c + " |";
        out.push_back('\n');
      };
      line(header);
      out += "|";
      for (std::size_t i = 0; i < header.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
      out.push_back('\n');
      for (const auto& r : rows) line(r);
      break;
    }
    case TableFormat::text: {
      std::vector<std::size_t> width(header.size());
      for (std::size_t i = 0; i < header.size(); ++i) width[i] = display_width(header[i]);
      for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], display_width(r[i]));
      }
      auto line = [&](const std::vector<std::string>& cells) {
        std::string l;
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (i) l += "  ";
          l += pad(cells[i], width[i], i == 0);
        }
        while (!l.empty() && l.back() == ' ') l.pop_back();
        out += l + "\n";
      };
      line(header);
      for (const auto& r : rows) line(r);
      break;
    }
  }
  return out;
}

inline std::string absent_marker(TableFormat format) { return format == TableFormat::csv ? "" : "-"; }

}  // namespace detail

/// Columns: Run, Mode, Model, Retention (1 dp), N, E (1 dp), Deg (2 dp),
/// NFI (3 dp), #Tri.
inline std::string render_tables(const std::vector<RunReport>& reports, TableFormat format) {
  const std::vector<std::string> header = {"Run", "Mode", "Model", "Retention", "N", "E", "Deg", "NFI", "#Tri"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    rows.push_back({r.label, r.mode, r.model,
                    r.retention ? fmt::format("{:.1f}", *r.retention) : detail::absent_marker(format),
                    fmt::format("{:.1f}", r.mean_nodes), fmt::format("{:.1f}", r.mean_edges),
                    fmt::format("{:.2f}", r.mean_degree), fmt::format("{:.3f}", r.mean_nfi),
                    std::to_string(r.total_triples)});
  }
  return detail::render_grid(header, rows, format);
}

/// Per-article breakdown of one report.
inline std::string render_articles(const RunReport& report, TableFormat format) {
  const std::vector<std::string> header = {"Article", "Retention", "N", "E", "Deg", "C", "NFI", "#Tri", "QA"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.records) {
    const auto& m = r.metrics;
    rows.push_back({r.article_id, r.retention ? fmt::format("{:.1f}", *r.retention) : detail::absent_marker(format),
                    std::to_string(m.node_count), std::to_string(m.unique_edge_count),
                    fmt::format("{:.2f}", m.average_degree), std::to_string(m.component_count),
                    fmt::format("{:.3f}", m.nfi), std::to_string(m.triple_count), std::to_string(r.qa_count)});
  }
  return detail::render_grid(header, rows, format);
}

struct ComparisonRow {
  std::string label;
  std::optional<double> retention_delta;
  double degree_delta = 0.0;
  double nfi_delta = 0.0;
  long long triple_delta = 0;
};

/// Deltas of every report against the first one.
inline std::vector<ComparisonRow> compare_reports(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("nothing to compare");
  const auto& base = reports.front();
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    ComparisonRow row{r.label, std::nullopt, r.mean_degree - base.mean_degree, r.mean_nfi - base.mean_nfi,
                      static_cast<long long>(r.total_triples) - static_cast<long long>(base.total_triples)};
    if (r.retention && base.retention) row.retention_delta = *r.retention - *base.retention;
    rows.push_back(row);
  }
  return rows;
}

inline std::string render_comparison(const std::vector<RunReport>& reports, TableFormat format) {
  auto deltas = compare_reports(reports);
  const std::vector<std::string> header = {"Run",  "Mode", "Model", "Retention", "ΔRetention", "Deg",
                                           "ΔDeg", "NFI",  "ΔNFI",  "#Tri",      "Δ#Tri"};
  std::vector<std::vector<std::string>> rows;
  const auto absent = detail::absent_marker(format);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const auto& d = deltas[i];
    rows.push_back({r.label, r.mode, r.model, r.retention ? fmt::format("{:.1f}", *r.retention) : absent,
                    d.retention_delta ? fmt::format("{:+.1f}", *d.retention_delta) : absent,
                    fmt::format("{:.2f}", r.mean_degree), fmt::format("{:+.2f}", d.degree_delta),
                    fmt::format("{:.3f}", r.mean_nfi), fmt::format("{:+.3f}", d.nfi_delta),
                    std::to_string(r.total_triples), fmt::format("{:+d}", d.triple_delta)});
  }
  return detail::render_grid(header, rows, format);
}

}  // namespace sokg
