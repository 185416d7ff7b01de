#pragma once

// End-to-end orchestration. Every article gets its own directory under
// runs/<run-id>/ and moves through the stages
//
//   qa -> extract -> canonicalize -> metrics [-> eval]
//
// (qa only in sokg mode). Each finished stage is flagged in manifest.json, so
// a resumed run reloads finished stages from disk instead of recomputing them.
// A failing article is marked failed and never touches other articles.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sokg/canonicalizer.hpp"
#include "sokg/corpus.hpp"
#include "sokg/extraction.hpp"
#include "sokg/graph.hpp"
#include "sokg/judge.hpp"
#include "sokg/mock_providers.hpp"
#include "sokg/parallel.hpp"
#include "sokg/providers.hpp"
#include "sokg/qa.hpp"
#include "sokg/remote_providers.hpp"
#include "sokg/report.hpp"
#include "sokg/retention.hpp"

namespace sokg {

namespace fs = std::filesystem;

struct PipelineConfig {
  ExtractionMode mode = ExtractionMode::qa_mediated;
  PromptArchetype archetype;
  bool evaluate = false;
  std::uint64_t seed = 0;
  std::size_t cluster_cap = kDefaultClusterCap;
  std::size_t candidate_k = kDefaultCandidateK;
  std::size_t relation_token_budget = kDefaultRelationTokenBudget;
  std::size_t top_n = kDefaultSeedCount;
  int hops = kDefaultHops;
  std::size_t workers = 1;  // articles in flight
  std::size_t fanout = 4;   // concurrent calls within one article
  ProviderConfig providers;
};

inline void from_json(const json& j, PipelineConfig& c) {
  PipelineConfig defaults;
  c.mode = parse_mode(j.value("mode", std::string(mode_code(defaults.mode))));
  c.archetype.kind = parse_archetype(j.value("archetype", std::string("ro")));
  c.archetype.with_5w1h = j.value("with_5w1h", true);
  c.evaluate = j.value("eval", false);
  c.seed = j.value("seed", defaults.seed);
  c.cluster_cap = j.value("cluster_cap", defaults.cluster_cap);
  c.candidate_k = j.value("candidate_k", defaults.candidate_k);
  c.relation_token_budget = j.value("relation_token_budget", defaults.relation_token_budget);
  c.top_n = j.value("top_n", defaults.top_n);
  c.hops = j.value("hops", defaults.hops);
  c.workers = j.value("workers", defaults.workers);
  c.fanout = j.value("fanout", defaults.fanout);
  c.providers = j.value("providers", ProviderConfig{});
}

/// Reads a JSON config file. A relative mock fixture path or cache directory
/// is resolved against the config file's directory.
inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config file is not a JSON object: " + path.string());
  auto config = j.get<PipelineConfig>();
  auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(config.providers.mock_fixtures);
  resolve(config.providers.cache_dir);
  return config;
}

/// The settings that determine a run's output. Resuming requires an equal
/// snapshot. Evaluation is opt-in per invocation and is not part of it.
inline json config_snapshot(const PipelineConfig& c) {
  return json{{"mode", mode_code(c.mode)},
              {"archetype", archetype_code(c.archetype.kind)},
              {"with_5w1h", c.archetype.with_5w1h},
              {"provider", c.providers.kind},
              {"chat_model", c.providers.chat_model},
              {"judge_model", c.providers.judge_model},
              {"embedding_model", c.providers.embedding_model},
              {"judge_mode", c.providers.judge_mode},
              {"temperature", c.providers.temperature},
              {"cluster_cap", c.cluster_cap},
              {"candidate_k", c.candidate_k},
              {"relation_token_budget", c.relation_token_budget},
              {"top_n", c.top_n},
              {"hops", c.hops},
              {"seed", c.seed}};
}

struct Services {
  std::shared_ptr<ChatClient> chat;
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<Judge> judge;
};

inline Services make_services(const ProviderConfig& config) {
  auto cache = std::make_shared<ResponseCache>(config.cache_dir);
  std::shared_ptr<ChatProvider> chat_backend;
  std::shared_ptr<EmbeddingProvider> embed_backend;
  if (config.kind == "mock") {
    chat_backend = config.mock_fixtures.empty()
                       ? std::make_shared<MockChat>(std::vector<MockRule>{}, config.mock_default_reply)
                       : std::static_pointer_cast<ChatProvider>(
                             MockChat::from_file(config.mock_fixtures, config.mock_default_reply));
    embed_backend = std::make_shared<HashEmbedder>();
  } else if (config.kind == "remote") {
    chat_backend = std::make_shared<RemoteChat>(config);
    embed_backend = std::make_shared<RemoteEmbedder>(config);
  } else {
    throw ConfigError("unknown provider kind '" + config.kind + "' (expected mock or remote)");
  }
  Services s;
  s.chat = std::make_shared<ChatClient>(chat_backend, cache);
  s.embedder = std::make_shared<Embedder>(embed_backend, cache, config.embedding_model, config.batch_size);
  if (config.judge_mode == "oracle") {
    s.judge = std::make_shared<ContainmentJudge>();
  } else if (config.judge_mode == "llm") {
    s.judge = std::make_shared<LlmJudge>(s.chat, config.judge_model, config.temperature, config.affirmative_pattern);
  } else {
    throw ConfigError("unknown judge mode '" + config.judge_mode + "' (expected llm or oracle)");
  }
  return s;
}

enum class Stage { qa, extract, canonicalize, metrics, eval };

inline std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::qa: return "qa";
    case Stage::extract: return "extract";
    case Stage::canonicalize: return "canonicalize";
    case Stage::metrics: return "metrics";
    case Stage::eval: return "eval";
  }
  return "?";
}

inline Stage parse_stage(std::string_view name) {
  for (auto s : {Stage::qa, Stage::extract, Stage::canonicalize, Stage::metrics, Stage::eval}) {
    if (stage_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown stage: " + std::string(name));
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const fs::path& path) { return json::parse(read_file(path)); }

/// Write-temp-then-rename.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  static std::atomic<std::uint64_t> counter{0};
  fs::create_directories(path.parent_path());
  auto temp = path;
  temp += fmt::format(".tmp{}", counter.fetch_add(1));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + temp.string());
  }
  fs::rename(temp, path);
}

inline void write_json(const fs::path& path, const json& value) { write_file_atomic(path, value.dump(2) + "\n"); }

inline void write_jsonl(const fs::path& path, const std::vector<json>& lines) {
  std::string content;
  for (const auto& l : lines) content += l.dump() + "\n";
  write_file_atomic(path, content);
}

inline std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) out.push_back(json::parse(line));
  }
  return out;
}

/// manifest.json plus the run directory layout. Manifest updates are serialized.
class RunStore {
 public:
  RunStore(fs::path run_dir, json manifest) : dir_(std::move(run_dir)), manifest_(std::move(manifest)) {}

  const fs::path& dir() const noexcept { return dir_; }
  fs::path article_dir(const std::string& id) const { return dir_ / id; }

  bool done(const std::string& article, Stage stage) const {
    std::lock_guard lock(mutex_);
    const auto& a = manifest_["articles"][article];
    return a.contains("stages") && a["stages"].value(std::string(stage_name(stage)), false);
  }

  void mark_done(const std::string& article, Stage stage) {
    std::lock_guard lock(mutex_);
    manifest_["articles"][article]["stages"][std::string(stage_name(stage))] = true;
    flush_locked();
  }

  void set_status(const std::string& article, const std::string& status, const std::string& error = {}) {
    std::lock_guard lock(mutex_);
    auto& a = manifest_["articles"][article];
    a["status"] = status;
    if (error.empty()) {
      a.erase("error");
    } else {
      a["error"] = error;
    }
    flush_locked();
  }

  std::string status(const std::string& article) const {
    std::lock_guard lock(mutex_);
    return manifest_["articles"][article].value("status", std::string("pending"));
  }

  void flush() {
    std::lock_guard lock(mutex_);
    flush_locked();
  }

  json manifest() const {
    std::lock_guard lock(mutex_);
    return manifest_;
  }

 private:
  void flush_locked() { write_json(dir_ / "manifest.json", manifest_); }

  fs::path dir_;
  mutable std::mutex mutex_;
  mutable json manifest_;
};

struct RunOptions {
  fs::path runs_dir = "runs";
  std::string run_id;  // empty: derived from the config snapshot and corpus digest
  bool resume = false;
  std::optional<Stage> stop_after;  // halt every article after this stage
  std::string corpus_digest;
};

struct RunOutcome {
  std::string run_id;
  fs::path run_dir;
  std::optional<RunReport> report;
  std::vector<std::string> failed;
  std::vector<std::string> incomplete;
};

inline std::string corpus_digest(const std::vector<Document>& docs) {
  json j = json::array();
  for (const auto& d : docs) {
    json facts = json::array();
    for (const auto& f : d.facts) facts.push_back(f.statement);
    j.push_back(json{{"id", d.id}, {"text", d.text}, {"facts", facts}});
  }
  return sha256_hex(j.dump());
}

namespace detail {

inline std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                   std::chrono::system_clock::now())));
}

/// Wall-clock events live beside the manifest so the rest of the run
/// directory stays a pure function of its inputs.
inline void log_event(const fs::path& run_dir, const std::string& event) {
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  auto path = run_dir / "timestamps.json";
  json events = fs::exists(path) ? read_json(path) : json::array();
  events.push_back(json{{"event", event}, {"time", utc_now()}});
  write_json(path, events);
}

/// Everything one article needs while it moves through the stages.
class ArticleJob {
 public:
  ArticleJob(const Document& doc, const PipelineConfig& config, Services& services, RunStore& store,
             std::optional<Stage> stop_after)
      : doc_(doc), config_(config), services_(services), store_(store), stop_after_(stop_after),
        dir_(store.article_dir(doc.id)) {}

  /// Returns false when stopped early by `stop_after`.
  bool run() {
    fs::create_directories(dir_);
    const bool sokg = config_.mode == ExtractionMode::qa_mediated;
    if (sokg) {
      if (!store_.done(doc_.id, Stage::qa)) {
        write_qa();
        store_.mark_done(doc_.id, Stage::qa);
      }
      if (stop_after_ == Stage::qa) return false;
    }
    if (!store_.done(doc_.id, Stage::extract)) {
      write_triples(sokg);
      store_.mark_done(doc_.id, Stage::extract);
    }
    if (stop_after_ == Stage::extract) return false;
    if (!store_.done(doc_.id, Stage::canonicalize)) {
      write_canonical();
      store_.mark_done(doc_.id, Stage::canonicalize);
    }
    if (stop_after_ == Stage::canonicalize) return false;
    if (!store_.done(doc_.id, Stage::metrics)) {
      auto graph = graph_from_json(read_json(dir_ / "graph.json"));
      write_json(dir_ / "metrics.json", structural_metrics(graph));
      store_.mark_done(doc_.id, Stage::metrics);
    }
    if (stop_after_ == Stage::metrics) return false;
    if (config_.evaluate && !doc_.facts.empty() && !store_.done(doc_.id, Stage::eval)) {
      write_retention();
      store_.mark_done(doc_.id, Stage::eval);
    }
    return true;
  }

 private:
  void write_qa() {
    QAOptions options{config_.providers.chat_model, config_.providers.temperature, config_.providers.max_output};
    auto result = generate_qa(*services_.chat, doc_, config_.archetype, options);
    write_json(dir_ / "qa.json", json{{"article_id", doc_.id},
                                      {"archetype", archetype_code(config_.archetype.kind)},
                                      {"with_5w1h", config_.archetype.with_5w1h},
                                      {"parsed_count", result.parsed_count},
                                      {"pairs", result.pairs},
                                      {"dropped", result.dropped}});
  }

  void write_triples(bool sokg) {
    ExtractionOptions options{config_.providers.chat_model, config_.providers.temperature,
                              config_.providers.max_output, config_.relation_token_budget};
    std::vector<Triple> triples;
    json dropped = json::array();
    std::size_t parsed = 0;
    if (sokg) {
      auto pairs = read_json(dir_ / "qa.json").at("pairs").get<std::vector<QAPair>>();
      std::vector<ExtractionResult> results(pairs.size());
      parallel_for(pairs.size(), config_.fanout, [&](std::size_t i) {
        results[i] = extract_from_qa(*services_.chat, pairs[i], doc_.id, options);
      });
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        parsed += results[i].parsed_count;
        triples.insert(triples.end(), results[i].triples.begin(), results[i].triples.end());
        for (const auto& d : results[i].dropped) {
          dropped.push_back(json{{"qa_index", pairs[i].index}, {"index", d.index}, {"reason", d.reason}});
        }
      }
    } else {
      auto result = extract_direct(*services_.chat, doc_, options);
      parsed = result.parsed_count;
      triples = std::move(result.triples);
      for (const auto& d : result.dropped) dropped.push_back(d);
    }
    write_json(dir_ / "triples.json", json{{"article_id", doc_.id},
                                           {"mode", mode_code(config_.mode)},
                                           {"parsed_count", parsed},
                                           {"triples", triples},
                                           {"dropped", dropped}});
  }

  void write_canonical() {
    auto triples = read_json(dir_ / "triples.json").at("triples").get<std::vector<Triple>>();
    CanonicalizerOptions options;
    options.cluster_cap = config_.cluster_cap;
    options.candidate_k = config_.candidate_k;
    options.seed = config_.seed;
    options.workers = config_.fanout;
    options.merge = MergeOptions{config_.providers.chat_model, config_.providers.temperature, 1024};
    auto result = canonicalize(triples, *services_.embedder, *services_.chat, options);
    std::vector<json> audit(result.audit.begin(), result.audit.end());
    write_jsonl(dir_ / "merge_audit.jsonl", audit);
    write_json(dir_ / "canonical_map.json", json{{"entities", result.entities}, {"relations", result.relations}});
    write_json(dir_ / "graph.json", graph_to_json(build_graph(result.triples, doc_.id)));
  }

  void write_retention() {
    auto graph = graph_from_json(read_json(dir_ / "graph.json"));
    RetentionOptions options{config_.top_n, config_.hops, config_.fanout};
    auto report = score_retention(doc_.facts, graph, *services_.embedder, *services_.judge, options);
    std::vector<json> lines(report.results.begin(), report.results.end());
    write_jsonl(dir_ / "retention.jsonl", lines);
    auto supported = std::count_if(report.results.begin(), report.results.end(),
                                   [](const RetentionResult& r) { return r.supported; });
    write_json(dir_ / "retention.json",
               json{{"score", report.score}, {"supported", supported}, {"total", report.results.size()}});
  }

  const Document& doc_;
  const PipelineConfig& config_;
  Services& services_;
  RunStore& store_;
  std::optional<Stage> stop_after_;
  fs::path dir_;
};

}  // namespace detail

/// Rebuilds an article's report row from the files in its directory.
inline ArticleRecord load_article_record(const fs::path& article_dir, const std::string& article_id,
                                         const std::string& mode, const std::string& model) {
  ArticleRecord r;
  r.article_id = article_id;
  r.mode = mode;
  r.model = model;
  r.metrics = read_json(article_dir / "metrics.json").get<StructuralMetrics>();
  if (fs::exists(article_dir / "qa.json")) r.qa_count = read_json(article_dir / "qa.json").at("pairs").size();
  r.raw_triple_count = read_json(article_dir / "triples.json").at("triples").size();
  if (fs::exists(article_dir / "retention.json")) {
    r.retention = read_json(article_dir / "retention.json").at("score").get<double>();
  }
  return r;
}

inline void write_report_files(const fs::path& run_dir, const RunReport& report) {
  write_json(run_dir / "report.json", report);
  write_file_atomic(run_dir / "report.csv", render_tables({report}, TableFormat::csv));
  std::string md = "# Run " + report.label + "\n\n" + render_tables({report}, TableFormat::markdown) +
                   "\n## Articles\n\n" + render_articles(report, TableFormat::markdown);
  if (!report.failed_articles.empty()) {
    md += "\n## Failed articles\n\n";
    for (const auto& id : report.failed_articles) md += "- " + id + "\n";
  }
  write_file_atomic(run_dir / "report.md", md);
}

inline RunOutcome run_pipeline(const std::vector<Document>& corpus, const PipelineConfig& config,
                               Services& services, const RunOptions& options) {
  const auto snapshot = config_snapshot(config);
  const auto digest = options.corpus_digest.empty() ? corpus_digest(corpus) : options.corpus_digest;
  RunOutcome outcome;
  outcome.run_id = options.run_id.empty()
                       ? "run-" + sha256_hex(snapshot.dump() + digest).substr(0, 12)
                       : options.run_id;
  outcome.run_dir = options.runs_dir / outcome.run_id;

  json manifest;
  const auto manifest_path = outcome.run_dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    if (!options.resume) {
      throw ConfigError("run " + outcome.run_id + " already exists; resume it or choose another run id");
    }
    manifest = read_json(manifest_path);
    if (manifest.at("config") != snapshot) {
      throw ConfigError("cannot resume run " + outcome.run_id + ": configuration differs from the recorded snapshot");
    }
    if (manifest.at("corpus_sha256") != digest) {
      throw ConfigError("cannot resume run " + outcome.run_id + ": corpus differs from the recorded one");
    }
  } else {
    if (options.resume) throw ConfigError("no run named " + outcome.run_id + " to resume");
    manifest = json{{"run_id", outcome.run_id}, {"config", snapshot}, {"corpus_sha256", digest},
                    {"articles", json::object()}};
    for (const auto& d : corpus) manifest["articles"][d.id] = json{{"status", "pending"}, {"stages", json::object()}};
  }
  fs::create_directories(outcome.run_dir);
  RunStore store(outcome.run_dir, std::move(manifest));
  store.flush();
  detail::log_event(outcome.run_dir, options.resume ? "resume" : "start");

  parallel_for(corpus.size(), config.workers, [&](std::size_t i) {
    const auto& doc = corpus[i];
    try {
      detail::ArticleJob job(doc, config, services, store, options.stop_after);
      store.set_status(doc.id, job.run() ? "complete" : "pending");
    } catch (const std::exception& e) {
      spdlog::error("article {} failed: {}", doc.id, e.what());
      store.set_status(doc.id, "failed", e.what());
    }
  });

  const auto mode = std::string(mode_code(config.mode));
  std::vector<ArticleRecord> records;
  for (const auto& doc : corpus) {
    auto status = store.status(doc.id);
    if (status == "failed") {
      outcome.failed.push_back(doc.id);
    } else if (status != "complete") {
      outcome.incomplete.push_back(doc.id);
    } else {
      records.push_back(load_article_record(store.article_dir(doc.id), doc.id, mode, config.providers.chat_model));
    }
  }
  if (outcome.incomplete.empty() && !records.empty()) {
    auto report = aggregate(records, outcome.run_id);
    report.failed_articles = outcome.failed;
    write_report_files(outcome.run_dir, report);
    outcome.report = std::move(report);
  }
  detail::log_event(outcome.run_dir, outcome.incomplete.empty() ? "finish" : "stop");
  return outcome;
}

/// Loads runs/<id>/report.json for each id.
inline std::vector<RunReport> load_reports(const fs::path& runs_dir, const std::vector<std::string>& run_ids) {
  std::vector<RunReport> reports;
  for (const auto& id : run_ids) {
    auto path = runs_dir / id / "report.json";
    if (!fs::exists(path)) throw std::runtime_error("run not found or has no report: " + id);
    reports.push_back(read_json(path).get<RunReport>());
  }
  return reports;
}

inline std::string compare_runs(const fs::path& runs_dir, const std::vector<std::string>& run_ids,
                                TableFormat format = TableFormat::text) {
  return render_comparison(load_reports(runs_dir, run_ids), format);
}

}  // namespace sokg
