// Command-line front end: one subcommand per pipeline stage plus `pipeline`,
// `synth` and `report`. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "convctx/pipeline.hpp"
#include "convctx/synthgen.hpp"

namespace {

using json = nlohmann::json;
using namespace convctx;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int default_threads() {
  if (const char* env = std::getenv("CONVCTX_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring CONVCTX_THREADS='" << env << "'\n";
  }
  return 1;
}

void print_report(const std::string& workdir) {
  namespace fs = std::filesystem;
  const fs::path dir(workdir);
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("no manifest at '" + manifest_path.string() + "'");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  std::cout << "convctx " << manifest.value("tool_version", "?") << "  config " << manifest.value("config_hash", "?").substr(0, 12)
            << "\n\n";
  std::cout << std::left << std::setw(16) << "stage" << std::setw(8) << "cached" << std::setw(10) << "seconds"
            << "outputs\n";
  for (const auto& s : manifest.at("stages")) {
    std::cout << std::setw(16) << s.at("stage").get<std::string>() << std::setw(8) << (s.at("cached").get<bool>() ? "yes" : "no")
              << std::setw(10) << std::fixed << std::setprecision(2) << s.at("seconds").get<double>();
    bool first = true;
    for (const auto& [file, digest] : s.at("outputs").items()) {
      std::cout << (first ? "" : ", ") << file << " " << digest.get<std::string>().substr(0, 12);
      first = false;
    }
    std::cout << '\n';
  }

  auto load = [&](const char* name) -> json {
    std::ifstream f(dir / name);
    if (!f) return nullptr;
    try {
      return json::parse(f);
    } catch (const json::exception&) {
      return nullptr;
    }
  };
  std::cout << '\n';
  if (const auto train = load("train_report.json"); !train.is_null()) {
    const auto& losses = train.at("epoch_losses");
    std::cout << "train: " << losses.size() << " epochs, best epoch " << train.at("best_epoch") << ", loss "
              << losses.front() << " -> " << losses.at(train.at("best_epoch").get<std::size_t>() - 1)
              << ", discriminator AUC " << train.at("discriminator_auc") << '\n';
  }
  if (const auto cl = load("cluster_report.json"); !cl.is_null()) {
    for (const auto& d : cl.at("days")) {
      std::cout << "cluster " << d.at("day").get<std::string>() << ": " << d.dump() << '\n';
    }
  }
  if (const auto c = load("centrality.json"); !c.is_null() && c.contains("centrality")) {
    std::cout << "centrality: overall kendall tau " << c["centrality"]["kendall_tau"].value("overall", json(nullptr)).dump() << '\n';
  }
  if (const auto t = load("transitions.json"); !t.is_null() && t.contains("transitions")) {
    std::cout << "transitions: " << t["transitions"].value("kept", json::array()).size() << " edges kept at trim "
              << t.value("trim", 0.0) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conversational context discovery over tweet, hashtag and URL graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // ingest
  std::string in, out, report;
  auto* ingest = app.add_subcommand("ingest", "Parse and clean raw message records");
  ingest->add_option("--in", in, "Raw records (one JSON object per line)")->required();
  ingest->add_option("--out", out, "Cleaned records")->required();
  ingest->add_option("--report", report, "Parse report (JSON)");

  // build-graph
  std::string records;
  bool directed_tt = false;
  auto* build = app.add_subcommand("build-graph", "Build the tweet/hashtag/URL graph");
  build->add_option("--in", records, "Cleaned records")->required();
  build->add_option("--out", out, "Graph file")->required();
  build->add_flag("--directed-tt", directed_tt, "Keep reply/quote edges directed");
  build->add_option("--report", report, "Build report (JSON)");

  // embed-features
  std::string graph, vectors;
  PropagationConfig propagation;
  auto* features_cmd = app.add_subcommand("embed-features", "Tf-idf text features plus feature propagation");
  features_cmd->add_option("--graph", graph, "Graph file")->required();
  features_cmd->add_option("--records", records, "Cleaned records")->required();
  features_cmd->add_option("--vectors", vectors, "Directory of <lang>.vec word vector files")->required();
  features_cmd->add_option("--out", out, "Feature matrix")->required();
  features_cmd->add_option("--max-iters", propagation.max_iters, "Propagation iteration cap")->capture_default_str();
  features_cmd->add_option("--tol", propagation.tol, "Propagation convergence tolerance")->capture_default_str();
  features_cmd->add_flag("--tweet-tweet-only", propagation.tweet_tweet_only, "Propagate over tweet-tweet edges only");
  features_cmd->add_option("--report", report, "Propagation report (JSON)");

  // train
  std::string features;
  dti::TrainConfig train;
  bool deterministic = false;
  auto* train_cmd = app.add_subcommand("train", "Train the encoder with the infomax objective");
  train_cmd->add_option("--graph", graph, "Graph file")->required();
  train_cmd->add_option("--features", features, "Feature matrix")->required();
  train_cmd->add_option("--out", out, "Parameter file")->required();
  train_cmd->add_option("--batch", train.batch_size, "Seed tweets per minibatch")->capture_default_str();
  train_cmd->add_option("--fanout", train.fanout, "Neighbors sampled per node and hop")->capture_default_str();
  train_cmd->add_option("--depth", train.depth, "Sampling hops")->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "Adam learning rate")->default_str("1e-3");
  train_cmd->add_option("--epochs", train.epochs, "Maximum epochs")->capture_default_str();
  train_cmd->add_option("--patience", train.patience, "Early-stopping patience in epochs")->capture_default_str();
  train_cmd->add_option("--hidden", train.hidden_dim, "Embedding dimension")->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "Random seed")->capture_default_str();
  train_cmd->add_flag("--deterministic", deterministic, "Single-threaded, fixed reduction order");
  train_cmd->add_option("--report", report, "Training report (JSON)");

  // embed
  std::string params;
  auto* embed_cmd = app.add_subcommand("embed", "Embed every tweet, hashtag and URL");
  embed_cmd->add_option("--graph", graph, "Graph file")->required();
  embed_cmd->add_option("--features", features, "Feature matrix")->required();
  embed_cmd->add_option("--params", params, "Parameter file")->required();
  embed_cmd->add_option("--out", out, "Embedding file")->required();

  // cluster
  std::string embeddings;
  hdbscan::ClusterConfig cluster;
  int threads = default_threads();
  auto* cluster_cmd = app.add_subcommand("cluster", "Cluster tweet embeddings per day with HDBSCAN");
  cluster_cmd->add_option("--embeddings", embeddings, "Embedding file")->required();
  cluster_cmd->add_option("--records", records, "Cleaned records, for the day of each tweet (default: one day \"all\")");
  cluster_cmd->add_option("--out", out, "Labels CSV")->required();
  cluster_cmd->add_option("--min-cluster-size", cluster.min_cluster_size, "HDBSCAN minimum cluster size")
      ->capture_default_str();
  cluster_cmd->add_option("--min-samples", cluster.min_samples, "HDBSCAN min_samples")->capture_default_str();
  cluster_cmd->add_option("--threads", threads, "Days clustered in parallel (env CONVCTX_THREADS)")
      ->capture_default_str();
  cluster_cmd->add_option("--report", report, "Cluster report (JSON)");

  // analyze
  std::string kind_name, labels, context_a, context_b;
  AnalyzeOptions analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Context overlap, centrality, transitions, labels, neighbors");
  analyze_cmd->add_option("kind", kind_name, "overlap | centrality | transitions | labels | neighbors")
      ->required()
      ->check(CLI::IsMember({"overlap", "centrality", "transitions", "labels", "neighbors"}));
  analyze_cmd->add_option("--labels", labels, "Labels CSV from cluster");
  analyze_cmd->add_option("--records", records, "Cleaned records");
  analyze_cmd->add_option("--graph", graph, "Graph file")->required();
  analyze_cmd->add_option("--embeddings", embeddings, "Embedding file (neighbors)");
  analyze_cmd->add_option("--out", out, "Report (JSON)")->required();
  analyze_cmd->add_option("--top-k", analyze.top_k, "Largest contexts compared")->capture_default_str();
  analyze_cmd->add_option("--top-n", analyze.top_n, "Top users per context / nodes per type")->capture_default_str();
  analyze_cmd->add_option("--trim", analyze.trim, "Transition probability threshold")->capture_default_str();
  analyze_cmd->add_option("--damping", analyze.pagerank.damping, "PageRank damping")->capture_default_str();
  analyze_cmd->add_option("--context-a", context_a, "First centrality context (day/cluster), default largest");
  analyze_cmd->add_option("--context-b", context_b, "Second centrality context, default second largest");
  analyze_cmd->add_option("--url-labels", analyze.url_labels, "CSV url,label (labels)");
  analyze_cmd->add_option("--steps", analyze.propagation_steps, "Label propagation hops")->capture_default_str();

  // synth
  std::string config_path, out_truth, out_vectors;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with planted contexts");
  synth_cmd->add_option("--config", config_path, "Generator config (INI)")->required();
  synth_cmd->add_option("--out-records", out, "Raw records")->required();
  synth_cmd->add_option("--out-truth", out_truth, "Ground truth (JSON)")->required();
  synth_cmd->add_option("--out-vectors", out_vectors, "Directory for <lang>.vec files")->required();

  // pipeline
  std::string workdir;
  std::vector<std::string> overrides;
  bool force = false;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run every stage with caching and a manifest");
  pipeline_cmd->add_option("--config", config_path, "Pipeline config (INI)")->required();
  pipeline_cmd->add_option("--workdir", workdir, "Output directory (overrides run.workdir)");
  pipeline_cmd->add_option("--threads", threads, "Intra-stage threads (env CONVCTX_THREADS)")->capture_default_str();
  pipeline_cmd->add_flag("--deterministic", deterministic, "Single-threaded, reproducible digests");
  pipeline_cmd->add_flag("--force", force, "Ignore cached stage outputs");
  pipeline_cmd->add_option("--set", overrides, "Override a config value, section.key=value (repeatable)");
  pipeline_cmd->footer(
      "Config defaults: train.batch_size=24000 train.fanout=20 train.depth=3 train.lr=1e-3 train.epochs=25 "
      "cluster.min_cluster_size=100 cluster.min_samples=1 analyze.trim=0.05 analyze.damping=0.85");

  // report
  auto* report_cmd = app.add_subcommand("report", "Summarize a pipeline working directory");
  report_cmd->add_option("--workdir", workdir, "Pipeline working directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*ingest) {
      const auto r = run_ingest(in, out, report);
      std::cerr << "ingest: " << r.to_json().dump() << '\n';
    } else if (*build) {
      const auto r = run_build_graph(records, out, directed_tt, report);
      std::cerr << "build-graph: " << r.to_json().dump() << '\n';
    } else if (*features_cmd) {
      const auto r = run_embed_features(graph, records, vectors, out, propagation, report);
      if (!r.converged) std::cerr << "warning: propagation did not converge\n";
    } else if (*train_cmd) {
      run_train(graph, features, out, train, report, &std::cerr);
    } else if (*embed_cmd) {
      run_embed(graph, features, params, out);
    } else if (*cluster_cmd) {
      run_cluster(embeddings, records, out, cluster, threads, report);
    } else if (*analyze_cmd) {
      if (context_a.empty() != context_b.empty()) throw std::invalid_argument("give both --context-a and --context-b");
      if (!context_a.empty()) analyze.centrality_contexts = std::make_pair(context_a, context_b);
      run_analyze(parse_analysis_kind(kind_name), labels, records, graph, embeddings, out, analyze);
    } else if (*synth_cmd) {
      const auto config = synth::load_synth_config(config_path);
      const auto data = synth::generate(config);
      synth::write_dataset(config, data, out, out_truth, out_vectors);
      std::cerr << "synth: " << data.records.size() << " records\n";
    } else if (*pipeline_cmd) {
      auto config = load_pipeline_config(config_path);
      for (const auto& o : overrides) apply_override(config, o);
      if (!workdir.empty()) config.workdir = workdir;
      if (pipeline_cmd->count("--threads") || std::getenv("CONVCTX_THREADS")) config.threads = threads;
      if (deterministic) config.deterministic = true;
      config.force = force;
      const auto manifest = run_pipeline(config, &std::cerr);
      std::cerr << "pipeline: manifest written to " << (std::filesystem::path(config.workdir) / "manifest.json").string()
                << '\n';
      (void)manifest;
    } else if (*report_cmd) {
      print_report(workdir);
    }
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
