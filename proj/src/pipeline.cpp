#include "convctx/pipeline.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace convctx {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return out.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

void write_json(const std::string& path, const json& j) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::vector<MessageRecord> load_records(const std::string& path) { return read_records_file(path); }

analysis::ContextSet load_contexts(const std::string& labels, const std::vector<MessageRecord>& records,
                                   const HeteroGraph& g) {
  return analysis::assign_contexts(analysis::read_labels(labels), records, analysis::retweet_origins(g));
}

std::optional<std::size_t> context_by_name(const analysis::ContextSet& set, const std::string& name) {
  for (std::size_t i = 0; i < set.contexts.size(); ++i) {
    if (set.contexts[i].name() == name) return i;
  }
  return std::nullopt;
}

json overlap_json(const analysis::ContextSet& set, const analysis::OverlapMatrix& m) {
  json names = json::array(), sizes = json::array();
  for (auto i : m.contexts) {
    names.push_back(set.contexts[i].name());
    sizes.push_back(set.contexts[i].members.size());
  }
  auto rows = [](const RowMatrix<double>& x) {
    json out = json::array();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < x.cols(); ++j) row.push_back(x(i, j));
      out.push_back(std::move(row));
    }
    return out;
  };
  return {{"contexts", names}, {"members", sizes}, {"jaccard_percent", rows(m.jaccard)},
          {"directional_percent", rows(m.directional)}};
}

template <typename Error>
[[noreturn]] void rethrow_as(const std::string& prefix, const Error& e) {
  throw Error(prefix + e.what());
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "' for hashing");
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

ParseReport run_ingest(const std::string& in, const std::string& out, const std::string& report) {
  std::ifstream input(in);
  if (!input) throw DataError("cannot open records '" + in + "'");
  auto result = parse_records(input);
  std::ofstream output(out);
  if (!output) throw DataError("cannot write '" + out + "'");
  write_records(output, result.records);
  if (!output) throw DataError("write failed for '" + out + "'");
  write_json(report, result.report.to_json());
  return result.report;
}

GraphBuildReport run_build_graph(const std::string& records, const std::string& out, bool directed_tt,
                                 const std::string& report) {
  auto built = build_graph(load_records(records), directed_tt);
  write_graph_file(out, built.graph);
  write_json(report, built.report.to_json());
  return built.report;
}

PropagationReport run_embed_features(const std::string& graph, const std::string& records,
                                     const std::string& vectors_dir, const std::string& out,
                                     const PropagationConfig& config, const std::string& report) {
  const auto g = read_graph_file(graph);
  const auto recs = load_records(records);
  const auto vectors = WordVectorTable::load_directory(vectors_dir);
  const auto text = embed_tweets(g, recs, vectors);
  auto result = propagate_features(g, text, config);
  write_features(out, result.features);
  json j = result.report.to_json();
  j["text_rows"] = std::count(text.known.begin(), text.known.end(), 1);
  j["rows"] = text.rows();
  j["dim"] = text.dim();
  write_json(report, j);
  return result.report;
}

json run_train(const std::string& graph, const std::string& features, const std::string& out,
               const dti::TrainConfig& config, const std::string& report, std::ostream* log) {
  const auto g = read_graph_file(graph);
  const auto f = read_features(features);
  auto result = dti::train(g, f, config, [&](int epoch, double loss) {
    if (log) *log << "epoch " << epoch + 1 << " loss " << loss << '\n';
  });
  dti::write_params(out, result.params);
  Rng rng(config.seed + 1);
  const double auc = dti::discriminator_auc(g, f, result.params, rng);
  json j = {{"epoch_losses", result.epoch_losses},
            {"best_epoch", result.best_epoch + 1},
            {"early_stopped", result.early_stopped},
            {"discriminator_auc", auc},
            {"config",
             {{"batch_size", config.batch_size},
              {"fanout", config.fanout},
              {"depth", config.depth},
              {"lr", config.lr},
              {"epochs", config.epochs},
              {"patience", config.patience},
              {"hidden_dim", config.hidden_dim},
              {"seed", config.seed}}}};
  write_json(report, j);
  return j;
}

void run_embed(const std::string& graph, const std::string& features, const std::string& params,
               const std::string& out) {
  const auto g = read_graph_file(graph);
  const auto f = read_features(features);
  const auto p = dti::read_params(params);
  dti::write_embeddings(out, dti::embed_all(g, f, p));
}

json run_cluster(const std::string& embeddings, const std::string& records, const std::string& out,
                 const hdbscan::ClusterConfig& config, int threads, const std::string& report) {
  const auto emb = dti::read_embeddings(embeddings);
  std::vector<std::string> days(emb.tweet_ids.size(), "all");
  if (!records.empty()) {
    const auto recs = load_records(records);
    const auto index = analysis::index_records(recs);
    for (std::size_t i = 0; i < days.size(); ++i) {
      const auto it = index.find(emb.tweet_ids[i]);
      if (it == index.end()) throw DataError("embedded tweet '" + emb.tweet_ids[i] + "' missing from records");
      days[i] = utc_day(it->second->created_at);
    }
  }
  const auto daily = analysis::cluster_daily(emb.tweet_ids, days, emb.tweets, config, threads);
  analysis::write_labels(out, daily.labels);
  json per_day = json::array();
  for (const auto& d : daily.days) {
    json s = d.result.summary();
    s["day"] = d.day;
    per_day.push_back(std::move(s));
  }
  json j = {{"days", std::move(per_day)},
            {"min_cluster_size", config.min_cluster_size},
            {"min_samples", config.min_samples}};
  write_json(report, j);
  return j;
}

AnalysisKind parse_analysis_kind(const std::string& s) {
  if (s == "overlap") return AnalysisKind::Overlap;
  if (s == "centrality") return AnalysisKind::Centrality;
  if (s == "transitions") return AnalysisKind::Transitions;
  if (s == "labels") return AnalysisKind::Labels;
  if (s == "neighbors") return AnalysisKind::Neighbors;
  throw std::invalid_argument("unknown analysis '" + s + "'");
}

std::string to_string(AnalysisKind k) {
  switch (k) {
    case AnalysisKind::Overlap: return "overlap";
    case AnalysisKind::Centrality: return "centrality";
    case AnalysisKind::Transitions: return "transitions";
    case AnalysisKind::Labels: return "labels";
    case AnalysisKind::Neighbors: return "neighbors";
  }
  return "";
}

json run_analyze(AnalysisKind kind, const std::string& labels, const std::string& records, const std::string& graph,
                 const std::string& embeddings, const std::string& out, const AnalyzeOptions& options) {
  auto need = [&](const std::string& path, const char* what) {
    if (path.empty()) throw std::invalid_argument(to_string(kind) + " analysis needs --" + what);
  };
  need(graph, "graph");
  const auto g = read_graph_file(graph);
  json j;
  j["analysis"] = to_string(kind);

  if (kind == AnalysisKind::Labels) {
    need(options.url_labels, "url-labels");
    const auto url_labels = analysis::read_url_labels(options.url_labels);
    const auto prop = analysis::propagate_labels(url_labels, g, options.propagation_steps);
    std::map<std::string, std::size_t> per_label;
    for (const auto& [t, l] : prop.labels) ++per_label[l];
    j["steps"] = options.propagation_steps;
    j["labeled"] = prop.labels.size();
    j["labeled_per_step"] = prop.labeled_per_step;
    j["conflicts"] = prop.conflicts;
    j["per_label"] = per_label;
    j["labels"] = prop.labels;
    if (!labels.empty()) {
      // How the clusters line up with the propagated story labels.
      std::map<std::string, int> story_ids;
      std::vector<int> cluster_ids, truth;
      std::map<std::string, int> cluster_index;
      for (const auto& l : analysis::read_labels(labels)) {
        const auto it = prop.labels.find(l.tweet_id);
        if (it == prop.labels.end()) continue;
        const int story = story_ids.emplace(it->second, static_cast<int>(story_ids.size())).first->second;
        int cluster = hdbscan::kNoise;
        if (l.cluster != hdbscan::kNoise) {
          cluster = cluster_index.emplace(l.day + "/" + std::to_string(l.cluster), static_cast<int>(cluster_index.size()))
                        .first->second;
        }
        cluster_ids.push_back(cluster);
        truth.push_back(story);
      }
      j["cluster_agreement"] = analysis::partition_quality(cluster_ids, truth).to_json();
    }
    write_json(out, j);
    return j;
  }

  if (kind == AnalysisKind::Neighbors) {
    need(embeddings, "embeddings");
    const auto emb = dti::read_embeddings(embeddings);
    auto section = [&](NodeType type, const RowMatrix<float>& m, const std::vector<std::string>& ids) {
      if (ids != g.ids(type).names()) throw DataError("embedding ids do not match the graph's " + std::string(to_string(type)) + " nodes");
      json pairs = json::array();
      for (const auto& p : analysis::nearest_pairs(m, ids, analysis::cumulative_retweets(g, type), 100, options.top_n)) {
        pairs.push_back({{"a", p.a}, {"b", p.b}, {"distance", p.distance}});
      }
      return pairs;
    };
    j["urls"] = section(NodeType::Url, emb.urls, emb.url_ids);
    j["hashtags"] = section(NodeType::Hashtag, emb.hashtags, emb.hashtag_ids);
    j["tweets"] = section(NodeType::Tweet, emb.tweets, emb.tweet_ids);
    write_json(out, j);
    return j;
  }

  need(labels, "labels");
  need(records, "records");
  const auto recs = load_records(records);
  const auto index = analysis::index_records(recs);
  const auto set = load_contexts(labels, recs, g);
  j["summary"] = set.summary();

  switch (kind) {
    case AnalysisKind::Overlap:
      j["overlap"] = overlap_json(set, analysis::overlap_matrix(set, options.top_k));
      break;
    case AnalysisKind::Centrality: {
      std::size_t a = 0, b = 1;
      if (options.centrality_contexts) {
        const auto ia = context_by_name(set, options.centrality_contexts->first);
        const auto ib = context_by_name(set, options.centrality_contexts->second);
        if (!ia || !ib) throw DataError("centrality: unknown context name");
        a = *ia;
        b = *ib;
      } else {
        const auto largest = analysis::largest_contexts(set, 2);
        if (largest.size() < 2) {
          j["skipped"] = "fewer than two contexts";
          break;
        }
        a = largest[0];
        b = largest[1];
      }
      j["centrality"] = analysis::compare_centrality(set, index, a, b, options.top_n, options.pagerank).to_json(set);
      break;
    }
    case AnalysisKind::Transitions: {
      const auto covered = analysis::largest_contexts(set, options.top_k == 0 ? set.contexts.size() : options.top_k);
      std::vector<std::size_t> ordered(covered.begin(), covered.end());
      std::sort(ordered.begin(), ordered.end());
      j["transitions"] = analysis::transition_matrix(set, index, options.trim, ordered).to_json(set);
      j["trim"] = options.trim;
      break;
    }
    default:
      break;
  }
  write_json(out, j);
  return j;
}

json PipelineConfig::to_json() const {
  json centrality = nullptr;
  if (analyze.centrality_contexts) centrality = {analyze.centrality_contexts->first, analyze.centrality_contexts->second};
  return {{"records", records},
          {"vectors_dir", vectors_dir},
          {"directed_tt", directed_tt},
          {"features", {{"max_iters", propagation.max_iters}, {"tol", propagation.tol},
                        {"tweet_tweet_only", propagation.tweet_tweet_only}}},
          {"train", {{"batch_size", train.batch_size}, {"fanout", train.fanout}, {"depth", train.depth},
                     {"lr", train.lr}, {"epochs", train.epochs}, {"patience", train.patience},
                     {"hidden_dim", train.hidden_dim}, {"seed", train.seed}}},
          {"cluster", {{"min_cluster_size", cluster.min_cluster_size}, {"min_samples", cluster.min_samples}}},
          {"analyze", {{"top_k", analyze.top_k}, {"top_n", analyze.top_n}, {"trim", analyze.trim},
                       {"damping", analyze.pagerank.damping}, {"tol", analyze.pagerank.tol},
                       {"max_iters", analyze.pagerank.max_iters}, {"centrality_contexts", centrality},
                       {"url_labels", analyze.url_labels}, {"propagation_steps", analyze.propagation_steps}}},
          {"deterministic", deterministic}};
}

namespace {

struct Setting {
  std::function<void(const std::string&)> set;
  bool is_path = false;
};

std::map<std::string, Setting> settings(PipelineConfig& c) {
  auto to_int = [](const std::string& key) {
    return [key](const std::string& v, auto& field) {
      try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        field = static_cast<std::remove_reference_t<decltype(field)>>(x);
      } catch (const std::exception&) {
        throw DataError("config: " + key + " expects an integer, got '" + v + "'");
      }
    };
  };
  auto to_double = [](const std::string& key, double& field) {
    return [key, &field](const std::string& v) {
      try {
        std::size_t used = 0;
        field = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw DataError("config: " + key + " expects a number, got '" + v + "'");
      }
    };
  };
  auto to_bool = [](const std::string& key, bool& field) {
    return [key, &field](const std::string& v) {
      const auto s = boost::algorithm::to_lower_copy(v);
      if (s == "true" || s == "1" || s == "yes" || s == "on") {
        field = true;
      } else if (s == "false" || s == "0" || s == "no" || s == "off") {
        field = false;
      } else {
        throw DataError("config: " + key + " expects a boolean, got '" + v + "'");
      }
    };
  };
  auto int_field = [&](const std::string& key, auto& field) {
    return [conv = to_int(key), &field](const std::string& v) { conv(v, field); };
  };
  auto string_field = [](std::string& field) { return [&field](const std::string& v) { field = v; }; };

  std::map<std::string, Setting> s;
  s["run.workdir"] = {string_field(c.workdir), true};
  s["run.threads"] = {int_field("run.threads", c.threads)};
  s["run.deterministic"] = {to_bool("run.deterministic", c.deterministic)};
  s["input.records"] = {string_field(c.records), true};
  s["input.vectors"] = {string_field(c.vectors_dir), true};
  s["input.url_labels"] = {string_field(c.analyze.url_labels), true};
  s["graph.directed_tt"] = {to_bool("graph.directed_tt", c.directed_tt)};
  s["features.max_iters"] = {int_field("features.max_iters", c.propagation.max_iters)};
  s["features.tol"] = {to_double("features.tol", c.propagation.tol)};
  s["features.tweet_tweet_only"] = {to_bool("features.tweet_tweet_only", c.propagation.tweet_tweet_only)};
  s["train.batch_size"] = {int_field("train.batch_size", c.train.batch_size)};
  s["train.fanout"] = {int_field("train.fanout", c.train.fanout)};
  s["train.depth"] = {int_field("train.depth", c.train.depth)};
  s["train.lr"] = {to_double("train.lr", c.train.lr)};
  s["train.epochs"] = {int_field("train.epochs", c.train.epochs)};
  s["train.patience"] = {int_field("train.patience", c.train.patience)};
  s["train.hidden_dim"] = {int_field("train.hidden_dim", c.train.hidden_dim)};
  s["train.seed"] = {int_field("train.seed", c.train.seed)};
  s["cluster.min_cluster_size"] = {int_field("cluster.min_cluster_size", c.cluster.min_cluster_size)};
  s["cluster.min_samples"] = {int_field("cluster.min_samples", c.cluster.min_samples)};
  s["analyze.top_k"] = {int_field("analyze.top_k", c.analyze.top_k)};
  s["analyze.top_n"] = {int_field("analyze.top_n", c.analyze.top_n)};
  s["analyze.trim"] = {to_double("analyze.trim", c.analyze.trim)};
  s["analyze.damping"] = {to_double("analyze.damping", c.analyze.pagerank.damping)};
  s["analyze.pagerank_tol"] = {to_double("analyze.pagerank_tol", c.analyze.pagerank.tol)};
  s["analyze.pagerank_max_iters"] = {int_field("analyze.pagerank_max_iters", c.analyze.pagerank.max_iters)};
  s["analyze.propagation_steps"] = {int_field("analyze.propagation_steps", c.analyze.propagation_steps)};
  s["analyze.centrality_contexts"] = {[&c](const std::string& v) {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, v, boost::is_any_of(","));
    for (auto& p : parts) boost::algorithm::trim(p);
    if (v.empty()) {
      c.analyze.centrality_contexts.reset();
    } else if (parts.size() == 2) {
      c.analyze.centrality_contexts = std::make_pair(parts[0], parts[1]);
    } else {
      throw DataError("config: analyze.centrality_contexts expects two context names");
    }
  }};
  return s;
}

}  // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  auto table = settings(c);
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw DataError("config: key '" + section + "' must be inside a section");
    for (const auto& [key, value] : body) {
      const auto name = section + "." + key;
      const auto it = table.find(name);
      if (it == table.end()) throw DataError("config: unknown key '" + name + "'");
      auto v = boost::algorithm::trim_copy(value.data());
      if (it->second.is_path && !v.empty() && fs::path(v).is_relative()) v = (base / v).lexically_normal().string();
      it->second.set(v);
    }
  }
  return c;
}

void apply_override(PipelineConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override must look like section.key=value");
  auto table = settings(config);
  const auto key = boost::algorithm::trim_copy(assignment.substr(0, eq));
  const auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown setting '" + key + "'");
  try {
    it->second.set(boost::algorithm::trim_copy(assignment.substr(eq + 1)));
  } catch (const DataError& e) {
    throw std::invalid_argument(e.what());
  }
}

json RunManifest::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"stage", s.name},
                           {"cached", s.cached},
                           {"key", s.key},
                           {"inputs", s.inputs},
                           {"outputs", s.outputs},
                           {"seconds", s.seconds}});
  }
  return {{"tool_version", version}, {"config_hash", config_hash}, {"seeds", seeds}, {"stages", std::move(stages_json)}};
}

std::map<std::string, std::string> RunManifest::output_digests() const {
  std::map<std::string, std::string> out;
  for (const auto& s : stages) {
    for (const auto& [file, digest] : s.outputs) out[s.name + "/" + file] = digest;
  }
  return out;
}

RunManifest run_pipeline(const PipelineConfig& config_in, std::ostream* log) {
  PipelineConfig config = config_in;
  if (config.records.empty()) throw std::invalid_argument("pipeline: input.records is not set");
  if (config.vectors_dir.empty()) throw std::invalid_argument("pipeline: input.vectors is not set");
  if (config.deterministic) config.threads = 1;
  dti::validate(config.train);

  const fs::path work(config.workdir);
  fs::create_directories(work / ".cache");
  auto at = [&](const char* name) { return (work / name).string(); };

  RunManifest manifest;
  manifest.version = kVersion;
  manifest.config_hash = sha256_hex(config.to_json().dump());
  manifest.seeds["train"] = config.train.seed;

  // Stage keys cover parameters and input contents, never file names or times.
  auto stage = [&](const std::string& name, const json& params, const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs, const std::function<void()>& body) {
    StageRecord rec;
    rec.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      json key_material = {{"stage", name}, {"version", kVersion}, {"params", params}};
      for (const auto& in : inputs) {
        const auto d = fs::is_directory(in) ? [&] {
          json listing = json::object();
          std::vector<fs::path> files;
          for (const auto& e : fs::directory_iterator(in)) {
            if (e.is_regular_file()) files.push_back(e.path());
          }
          std::sort(files.begin(), files.end());
          for (const auto& f : files) listing[f.filename().string()] = sha256_file(f.string());
          return sha256_hex(listing.dump());
        }()
                                            : sha256_file(in);
        rec.inputs[fs::path(in).filename().string()] = d;
        key_material["inputs"].push_back(d);
      }
      rec.key = sha256_hex(key_material.dump());

      const auto cache_file = (work / ".cache" / (name + ".json")).string();
      bool hit = false;
      if (!config.force && fs::exists(cache_file)) {
        const json cached = read_json(cache_file);
        if (cached.value("key", "") == rec.key) {
          hit = true;
          for (const auto& out : outputs) {
            const auto file = fs::path(out).filename().string();
            if (!fs::exists(out)) {
              hit = false;
              break;
            }
            const auto d = sha256_file(out);
            if (cached.at("outputs").value(file, "") != d) {
              throw DataError("cached output '" + out + "' was modified after it was written (digest mismatch); "
                              "delete it or rerun with --force");
            }
            rec.outputs[file] = d;
          }
        }
      }
      if (hit) {
        rec.cached = true;
        if (log) *log << "[" << name << "] cached\n";
      } else {
        if (log) *log << "[" << name << "] running\n";
        body();
        rec.outputs.clear();
        for (const auto& out : outputs) rec.outputs[fs::path(out).filename().string()] = sha256_file(out);
        write_json(cache_file, {{"key", rec.key}, {"outputs", rec.outputs}});
      }
    } catch (const DataError& e) {
      rethrow_as("stage '" + name + "': ", e);
    } catch (const NumericError& e) {
      rethrow_as("stage '" + name + "': ", e);
    } catch (const std::invalid_argument& e) {
      rethrow_as("stage '" + name + "': ", e);
    } catch (const std::exception& e) {
      throw DataError("stage '" + name + "': " + e.what());
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.stages.push_back(std::move(rec));
  };

  const auto records = at("records.jsonl"), graph = at("graph.txt"), features = at("features.bin"),
             params = at("params.bin"), embeddings = at("embeddings.bin"), labels = at("labels.csv");
  const json cfg = config.to_json();

  stage("ingest", json::object(), {config.records}, {records, at("ingest_report.json")},
        [&] { run_ingest(config.records, records, at("ingest_report.json")); });
  stage("build-graph", {{"directed_tt", config.directed_tt}}, {records}, {graph, at("graph_report.json")},
        [&] { run_build_graph(records, graph, config.directed_tt, at("graph_report.json")); });
  stage("embed-features", cfg["features"], {graph, records, config.vectors_dir}, {features, at("features_report.json")},
        [&] {
          const auto rep = run_embed_features(graph, records, config.vectors_dir, features, config.propagation,
                                              at("features_report.json"));
          if (log && !rep.converged) *log << "[embed-features] warning: propagation did not converge\n";
        });
  stage("train", cfg["train"], {graph, features}, {params, at("train_report.json")},
        [&] { run_train(graph, features, params, config.train, at("train_report.json"), log); });
  stage("embed", json::object(), {graph, features, params}, {embeddings},
        [&] { run_embed(graph, features, params, embeddings); });
  stage("cluster", cfg["cluster"], {embeddings, records}, {labels, at("cluster_report.json")},
        [&] { run_cluster(embeddings, records, labels, config.cluster, config.threads, at("cluster_report.json")); });

  std::vector<std::string> analysis_inputs = {labels, records, graph, embeddings};
  std::vector<std::string> analysis_outputs = {at("overlap.json"), at("centrality.json"), at("transitions.json"),
                                               at("neighbors.json")};
  if (!config.analyze.url_labels.empty()) {
    analysis_inputs.push_back(config.analyze.url_labels);
    analysis_outputs.push_back(at("labels.json"));
  }
  stage("analyze", cfg["analyze"], analysis_inputs, analysis_outputs, [&] {
    for (auto kind : {AnalysisKind::Overlap, AnalysisKind::Centrality, AnalysisKind::Transitions,
                      AnalysisKind::Neighbors}) {
      run_analyze(kind, labels, records, graph, embeddings, at((to_string(kind) + ".json").c_str()), config.analyze);
    }
    if (!config.analyze.url_labels.empty()) {
      run_analyze(AnalysisKind::Labels, labels, records, graph, embeddings, at("labels.json"), config.analyze);
    }
  });

  write_json(at("manifest.json"), manifest.to_json());
  return manifest;
}

}  // namespace convctx
