#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "convctx/analysis.hpp"
#include "convctx/dti.hpp"
#include "convctx/features.hpp"
#include "convctx/hdbscan.hpp"

namespace convctx {

// Lowercase hex SHA-256 of a file's bytes / of a string.
std::string sha256_file(const std::string& path);
std::string sha256_hex(std::string_view data);

struct AnalyzeOptions {
  std::size_t top_k = 15;
  std::size_t top_n = 5;  // users per context in the centrality table
  double trim = 0.05;
  analysis::PageRankConfig pagerank;
  std::optional<std::pair<std::string, std::string>> centrality_contexts;  // context names
  std::string url_labels;  // CSV; empty disables the labels report
  int propagation_steps = 2;
};

// One function per stage; each writes only the paths it is given.
ParseReport run_ingest(const std::string& in, const std::string& out, const std::string& report);
GraphBuildReport run_build_graph(const std::string& records, const std::string& out, bool directed_tt,
                                 const std::string& report);
PropagationReport run_embed_features(const std::string& graph, const std::string& records,
                                     const std::string& vectors_dir, const std::string& out,
                                     const PropagationConfig& config, const std::string& report);
nlohmann::json run_train(const std::string& graph, const std::string& features, const std::string& out,
                         const dti::TrainConfig& config, const std::string& report, std::ostream* log = nullptr);
void run_embed(const std::string& graph, const std::string& features, const std::string& params,
               const std::string& out);
// Days come from the records' timestamps; without records every tweet is
// clustered as one day named "all".
nlohmann::json run_cluster(const std::string& embeddings, const std::string& records, const std::string& out,
                           const hdbscan::ClusterConfig& config, int threads, const std::string& report);

enum class AnalysisKind { Overlap, Centrality, Transitions, Labels, Neighbors };
AnalysisKind parse_analysis_kind(const std::string& s);
std::string to_string(AnalysisKind k);

nlohmann::json run_analyze(AnalysisKind kind, const std::string& labels, const std::string& records,
                           const std::string& graph, const std::string& embeddings, const std::string& out,
                           const AnalyzeOptions& options);

struct PipelineConfig {
  std::string workdir = "convctx-run";
  std::string records;      // raw input records
  std::string vectors_dir;  // word vector directory
  bool directed_tt = false;
  PropagationConfig propagation;
  dti::TrainConfig train;
  hdbscan::ClusterConfig cluster;
  AnalyzeOptions analyze;
  int threads = 1;
  bool deterministic = false;
  bool force = false;  // ignore the stage cache

  nlohmann::json to_json() const;
};

// INI file with sections [run], [input], [graph], [features], [train],
// [cluster], [analyze]. Relative paths resolve against the file's directory.
PipelineConfig load_pipeline_config(const std::string& path);
// Applies "section.key=value" overrides.
void apply_override(PipelineConfig& config, const std::string& assignment);

struct StageRecord {
  std::string name;
  bool cached = false;
  std::string key;  // digest of parameters and input digests
  std::map<std::string, std::string> inputs;   // file -> digest
  std::map<std::string, std::string> outputs;  // file -> digest
  double seconds = 0.0;
};

struct RunManifest {
  std::string version;
  std::string config_hash;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<StageRecord> stages;

  nlohmann::json to_json() const;
  // Every output digest keyed "stage/file", for run-to-run comparison.
  std::map<std::string, std::string> output_digests() const;
};

// Runs every stage in order, skipping stages whose key and outputs match the
// cache. A stage failure is rethrown with the stage name prefixed, keeping
// its error type.
RunManifest run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr);

}  // namespace convctx
