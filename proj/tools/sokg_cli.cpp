// sokg: build, evaluate and inspect per-article knowledge graphs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "sokg/sokg.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string runs_dir = "runs";
  bool verbose = false;
};

sokg::PipelineConfig base_config(const GlobalOptions& g) {
  return g.config_path.empty() ? sokg::PipelineConfig{} : sokg::load_config(g.config_path);
}

/// Makes `config` agree with a recorded snapshot (used when re-entering a run).
void apply_snapshot(sokg::PipelineConfig& config, const nlohmann::json& s) {
  config.mode = sokg::parse_mode(s.at("mode").get<std::string>());
  config.archetype.kind = sokg::parse_archetype(s.at("archetype").get<std::string>());
  config.archetype.with_5w1h = s.at("with_5w1h").get<bool>();
  config.providers.kind = s.at("provider").get<std::string>();
  config.providers.chat_model = s.at("chat_model").get<std::string>();
  config.providers.judge_model = s.at("judge_model").get<std::string>();
  config.providers.embedding_model = s.at("embedding_model").get<std::string>();
  config.providers.judge_mode = s.at("judge_mode").get<std::string>();
  config.providers.temperature = s.at("temperature").get<double>();
  config.cluster_cap = s.at("cluster_cap").get<std::size_t>();
  config.candidate_k = s.at("candidate_k").get<std::size_t>();
  config.relation_token_budget = s.at("relation_token_budget").get<std::size_t>();
  config.top_n = s.at("top_n").get<std::size_t>();
  config.hops = s.at("hops").get<int>();
  config.seed = s.at("seed").get<std::uint64_t>();
}

int report_outcome(const sokg::RunOutcome& outcome) {
  std::cout << "run " << outcome.run_id << " -> " << outcome.run_dir.string() << "\n";
  if (outcome.report) std::cout << sokg::render_tables({*outcome.report}, sokg::TableFormat::text);
  for (const auto& id : outcome.incomplete) std::cout << "incomplete: " << id << "\n";
  for (const auto& id : outcome.failed) std::cerr << "failed: " << id << "\n";
  return outcome.failed.empty() ? EXIT_SUCCESS : EXIT_FAILURE;
}

sokg::KnowledgeGraph load_graph(const GlobalOptions& g, const std::string& run, const std::string& article,
                                const std::string& graph_file) {
  fs::path path = graph_file.empty() ? fs::path(g.runs_dir) / run / article / "graph.json" : fs::path(graph_file);
  if (!fs::exists(path)) throw std::runtime_error("graph not found: " + path.string());
  return sokg::graph_from_json(sokg::read_json(path));
}

void emit(const std::string& text, const std::string& output) {
  if (output.empty()) {
    std::cout << text;
  } else {
    sokg::write_file_atomic(output, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge graph construction from QA-mediated triple extraction"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--runs-dir", g.runs_dir, "Directory holding run directories");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");

  // build
  auto* build = app.add_subcommand("build", "Construct one graph per corpus article");
  std::string corpus_path, mode, archetype, run_id, resume_id, stop_after;
  bool no_5w1h = false, evaluate = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  build->add_option("--corpus", corpus_path, "JSONL corpus")->required()->check(CLI::ExistingFile);
  build->add_option("--mode", mode, "Extraction mode")->check(CLI::IsMember({"sokg", "direct"}));
  build->add_option("--archetype", archetype, "QA prompt archetype")->check(CLI::IsMember({"ro", "ps", "id"}));
  build->add_flag("--no-5w1h", no_5w1h, "Use the QA template without 5W1H lenses");
  build->add_flag("--eval", evaluate, "Score factual retention after building");
  build->add_option("--seed", seed, "Seed for clustering");
  build->add_option("--workers", workers, "Articles processed concurrently");
  build->add_option("--run-id", run_id, "Name of the run directory");
  build->add_option("--resume", resume_id, "Resume an existing run");
  build->add_option("--stop-after", stop_after, "Halt every article after this stage")
      ->check(CLI::IsMember({"qa", "extract", "canonicalize", "metrics"}));

  // eval
  auto* eval = app.add_subcommand("eval", "Score factual retention on an existing run");
  std::string eval_run, eval_corpus;
  eval->add_option("--run", eval_run, "Run id")->required();
  eval->add_option("--corpus", eval_corpus, "Corpus the run was built from")->required()->check(CLI::ExistingFile);

  // stats
  auto* stats = app.add_subcommand("stats", "Structural metrics of existing graphs");
  std::string stats_run, stats_graph, stats_format = "text";
  stats->add_option("--run", stats_run, "Run id");
  stats->add_option("--graph", stats_graph, "Single graph.json file")->check(CLI::ExistingFile);
  stats->add_option("--format", stats_format)->check(CLI::IsMember({"text", "csv", "markdown"}));

  // export
  auto* exp = app.add_subcommand("export", "Write a graph as DOT or JSON");
  std::string exp_run, exp_article, exp_graph, exp_format = "dot", exp_output;
  exp->add_option("--run", exp_run, "Run id");
  exp->add_option("--article", exp_article, "Article id");
  exp->add_option("--graph", exp_graph, "graph.json file instead of run/article")->check(CLI::ExistingFile);
  exp->add_option("--format", exp_format)->check(CLI::IsMember({"dot", "json"}));
  exp->add_option("-o,--output", exp_output, "Output file (default stdout)");

  // compare
  auto* cmp = app.add_subcommand("compare", "Side-by-side metrics of several runs");
  std::vector<std::string> cmp_runs;
  std::string cmp_format = "text";
  cmp->add_option("runs", cmp_runs, "Run ids; deltas are against the first")->required();
  cmp->add_option("--format", cmp_format)->check(CLI::IsMember({"text", "csv", "markdown"}));

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Show the subgraph retrieved for one fact");
  std::string ins_run, ins_article, ins_corpus;
  int ins_fact = 0;
  inspect->add_option("--run", ins_run, "Run id")->required();
  inspect->add_option("--article", ins_article, "Article id")->required();
  inspect->add_option("--corpus", ins_corpus, "Corpus with the article's facts")->required()->check(CLI::ExistingFile);
  inspect->add_option("--fact", ins_fact, "Fact index")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (build->parsed()) {
      auto config = base_config(g);
      if (!mode.empty()) config.mode = sokg::parse_mode(mode);
      if (!archetype.empty()) config.archetype.kind = sokg::parse_archetype(archetype);
      if (no_5w1h) config.archetype.with_5w1h = false;
      if (evaluate) config.evaluate = true;
      if (seed) config.seed = *seed;
      if (workers) config.workers = *workers;
      auto corpus = sokg::ingest_corpus(corpus_path);
      auto services = sokg::make_services(config.providers);
      sokg::RunOptions options;
      options.runs_dir = g.runs_dir;
      options.run_id = resume_id.empty() ? run_id : resume_id;
      options.resume = !resume_id.empty();
      if (!stop_after.empty()) options.stop_after = sokg::parse_stage(stop_after);
      return report_outcome(sokg::run_pipeline(corpus, config, services, options));
    }

    if (eval->parsed()) {
      auto config = base_config(g);
      auto manifest = sokg::read_json(fs::path(g.runs_dir) / eval_run / "manifest.json");
      apply_snapshot(config, manifest.at("config"));
      config.evaluate = true;
      auto corpus = sokg::ingest_corpus(eval_corpus);
      auto services = sokg::make_services(config.providers);
      sokg::RunOptions options;
      options.runs_dir = g.runs_dir;
      options.run_id = eval_run;
      options.resume = true;
      return report_outcome(sokg::run_pipeline(corpus, config, services, options));
    }

    if (stats->parsed()) {
      auto format = sokg::parse_table_format(stats_format);
      if (!stats_graph.empty()) {
        auto m = sokg::structural_metrics(load_graph(g, {}, {}, stats_graph));
        std::cout << nlohmann::json(m).dump(2) << "\n";
        return EXIT_SUCCESS;
      }
      if (stats_run.empty()) throw CLI::ValidationError("stats", "give --run or --graph");
      auto run_dir = fs::path(g.runs_dir) / stats_run;
      auto manifest = sokg::read_json(run_dir / "manifest.json");
      std::vector<sokg::ArticleRecord> records;
      for (const auto& [id, entry] : manifest.at("articles").items()) {
        auto graph_path = run_dir / id / "graph.json";
        if (!fs::exists(graph_path)) continue;
        sokg::ArticleRecord r;
        r.article_id = id;
        r.mode = manifest["config"]["mode"].get<std::string>();
        r.model = manifest["config"]["chat_model"].get<std::string>();
        r.metrics = sokg::structural_metrics(sokg::graph_from_json(sokg::read_json(graph_path)));
        if (fs::exists(run_dir / id / "qa.json")) r.qa_count = sokg::read_json(run_dir / id / "qa.json").at("pairs").size();
        if (fs::exists(run_dir / id / "triples.json")) {
          r.raw_triple_count = sokg::read_json(run_dir / id / "triples.json").at("triples").size();
        }
        if (fs::exists(run_dir / id / "retention.json")) {
          r.retention = sokg::read_json(run_dir / id / "retention.json").at("score").get<double>();
        }
        records.push_back(std::move(r));
      }
      if (records.empty()) throw std::runtime_error("run " + stats_run + " has no graphs yet");
      auto report = sokg::aggregate(records, stats_run);
      std::cout << sokg::render_articles(report, format) << "\n" << sokg::render_tables({report}, format);
      return EXIT_SUCCESS;
    }

    if (exp->parsed()) {
      if (exp_graph.empty() && (exp_run.empty() || exp_article.empty())) {
        throw CLI::ValidationError("export", "give --graph or both --run and --article");
      }
      auto graph = load_graph(g, exp_run, exp_article, exp_graph);
      emit(exp_format == "dot" ? sokg::graph_to_dot(graph) : sokg::graph_to_json(graph).dump(2) + "\n", exp_output);
      return EXIT_SUCCESS;
    }

    if (cmp->parsed()) {
      std::cout << sokg::compare_runs(g.runs_dir, cmp_runs, sokg::parse_table_format(cmp_format));
      return EXIT_SUCCESS;
    }

    if (inspect->parsed()) {
      auto config = base_config(g);
      auto manifest = sokg::read_json(fs::path(g.runs_dir) / ins_run / "manifest.json");
      apply_snapshot(config, manifest.at("config"));
      auto corpus = sokg::ingest_corpus(ins_corpus);
      auto doc = std::find_if(corpus.begin(), corpus.end(), [&](const auto& d) { return d.id == ins_article; });
      if (doc == corpus.end()) throw std::runtime_error("article not in corpus: " + ins_article);
      if (ins_fact < 0 || static_cast<std::size_t>(ins_fact) >= doc->facts.size()) {
        throw std::runtime_error("article " + ins_article + " has no fact " + std::to_string(ins_fact));
      }
      auto graph = load_graph(g, ins_run, ins_article, {});
      auto services = sokg::make_services(config.providers);
      sokg::GraphIndex index(graph, *services.embedder);
      const auto& fact = doc->facts[static_cast<std::size_t>(ins_fact)];
      auto retrieved = sokg::retrieve_fact_subgraph(fact, index, *services.embedder, config.top_n, config.hops);
      nlohmann::json out{{"fact", fact.statement},
                         {"seeds", retrieved.seeds},
                         {"subgraph", sokg::graph_to_json(retrieved.subgraph)},
                         {"context", sokg::serialize_context(retrieved.subgraph)}};
      std::cout << out.dump(2) << "\n";
      return EXIT_SUCCESS;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
