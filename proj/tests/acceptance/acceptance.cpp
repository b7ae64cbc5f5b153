// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line with
// the measured values; the exit status is nonzero if any criterion fails.
// Pass criterion ids (A1..A12) as arguments to run a subset.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "convctx/analysis.hpp"
#include "convctx/dti.hpp"
#include "convctx/features.hpp"
#include "convctx/graph.hpp"
#include "convctx/hdbscan.hpp"
#include "convctx/ingest.hpp"
#include "convctx/synthgen.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace convctx;
using convctx::testing::quote;
using convctx::testing::reply;
using convctx::testing::tweet;

namespace {

// Tolerances and thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kLossDrop = 0.20;
constexpr double kMinAuc = 0.9;
constexpr double kMinAri = 0.8;
constexpr double kMinAriGain = 0.3;
constexpr int kPropagationIters = 40;
constexpr double kPropagationTol = 1e-6;
constexpr double kPathTol = 1e-12;
constexpr double kPageRankSumTol = 1e-9;
constexpr double kPageRankOracleTol = 1e-8;
constexpr double kRowSumTol = 1e-9;
constexpr double kCentralityPercentile = 50.0;
constexpr double kCentralityTau = 0.5;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED(" << what << ")";
    }
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("convctx_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A generated dataset pushed through ingest, graph and text features.
struct Prepared {
  synth::SynthConfig config;
  synth::SynthDataset data;
  std::vector<MessageRecord> records;
  HeteroGraph graph;
  FeatureMatrix raw;
  PropagationResult features;
};

Prepared prepare(const synth::SynthConfig& config, const std::string& name) {
  Prepared p;
  p.config = config;
  p.data = synth::generate(config);
  const auto dir = scratch(name);
  synth::write_dataset(config, p.data, (dir / "records.jsonl").string(), "", "");
  std::ifstream in(dir / "records.jsonl");
  p.records = parse_records(in).records;
  p.graph = build_graph(p.records).graph;
  p.raw = embed_tweets(p.graph, p.records, synth::word_vectors(config, p.data.vocabulary));
  PropagationConfig pc;
  pc.max_iters = kPropagationIters;
  pc.tol = kPropagationTol;
  p.features = propagate_features(p.graph, p.raw, pc);
  return p;
}

synth::SynthConfig main_config() {
  synth::SynthConfig c;
  c.n_contexts = 4;
  c.tweets_per_context = {500};
  c.users_per_context = {80};
  c.hubs_per_context = {4};
  c.vocab_per_context = 30;
  c.vocab_overlap = 0.3;
  c.hashtags_per_context = 10;
  c.urls_per_context = 10;
  c.url_probability = 1.0;
  c.vector_dim = 300;
  c.seed = 7;
  return c;
}

synth::SynthConfig structure_only_config(double word_skew) {
  auto c = main_config();
  c.vocab_overlap = 1.0;
  c.word_skew = word_skew;
  return c;
}

synth::SynthConfig centrality_config() {
  synth::SynthConfig c;
  c.n_contexts = 2;
  c.tweets_per_context = {150, 3000};
  c.users_per_context = {150, 250};
  c.hubs_per_context = {5};
  c.hub_decay = 0.4;
  c.hub_bias = {0.7, 0.1};
  c.reply_probability = {0.3, 0.5};
  c.retweet_probability = {0.1, 0.3};
  c.mention_probability = {0.1, 0.5};
  c.cross_context_user_fraction = 0.22;
  c.vector_dim = 50;
  c.seed = 5;
  return c;
}

// Many tweets without a language, so most rows start unknown.
synth::SynthConfig sparse_text_config() {
  auto c = main_config();
  c.missing_lang_fraction = 0.6;
  c.vector_dim = 50;
  c.seed = 8;
  return c;
}

// Row 0 holds a 4% edge that the 5% trim must remove.
const std::vector<std::vector<double>> kPlantedTransitions = {
    {0.0, 0.96, 0.04},
    {0.5, 0.0, 0.5},
    {0.25, 0.75, 0.0},
};

synth::SynthConfig transition_config() {
  synth::SynthConfig c;
  c.n_contexts = 3;
  c.tweets_per_context = {600};
  c.users_per_context = {200};
  c.hubs_per_context = {5};
  c.transitions = kPlantedTransitions;
  c.transition_users_per_row = 100;
  c.vector_dim = 50;
  c.seed = 11;
  return c;
}

std::vector<analysis::TweetLabel> truth_labels(const Prepared& p) {
  std::vector<analysis::TweetLabel> labels;
  for (const auto& r : p.records) {
    if (r.kind == MessageKind::Retweet) continue;
    labels.push_back({r.id, "d", p.data.truth.message_context.at(r.id)});
  }
  return labels;
}

std::vector<int> truth_of_tweets(const Prepared& p) {
  std::vector<int> truth;
  for (const auto& id : p.graph.ids(NodeType::Tweet).names()) truth.push_back(p.data.truth.message_context.at(id));
  return truth;
}

analysis::PartitionQuality cluster_quality(const RowMatrix<double>& x, const std::vector<int>& truth, int mcs) {
  const auto r = hdbscan::cluster(x, {mcs, 1});
  return analysis::partition_quality(r.labels, truth);
}

dti::TrainConfig train_config() {
  dti::TrainConfig t;
  t.batch_size = 128;
  t.epochs = 10;
  t.seed = 3;
  return t;
}

struct Trained {
  dti::TrainResult result;
  RowMatrix<double> tweets;  // embeddings in graph tweet order
};

Trained train_and_embed(const Prepared& p) {
  Trained t{dti::train(p.graph, p.features.features, train_config()), {}};
  t.tweets = dti::embed_all(p.graph, p.features.features, t.result.params).tweets.cast<double>();
  return t;
}

// Datasets shared between criteria, built on first use.
struct Corpus {
  std::unique_ptr<Prepared> main, structure, iid, centrality, transitions, sparse;
  std::unique_ptr<Trained> main_model;

  const Prepared& get(std::unique_ptr<Prepared>& slot, const std::function<synth::SynthConfig()>& make,
                      const std::string& name) {
    if (!slot) slot = std::make_unique<Prepared>(prepare(make(), name));
    return *slot;
  }
  const Prepared& main_set() { return get(main, main_config, "main"); }
  const Prepared& structure_set() { return get(structure, [] { return structure_only_config(1.0); }, "structure"); }
  const Prepared& iid_set() { return get(iid, [] { return structure_only_config(0.0); }, "iid"); }
  const Prepared& centrality_set() { return get(centrality, centrality_config, "centrality"); }
  const Prepared& transition_set() { return get(transitions, transition_config, "transitions"); }
  const Prepared& sparse_set() { return get(sparse, sparse_text_config, "sparse"); }
  const Trained& main_trained() {
    if (!main_model) main_model = std::make_unique<Trained>(train_and_embed(main_set()));
    return *main_model;
  }
};

Corpus corpus;

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  Outcome o;
  Rng rng(2024);
  double worst = 0;
  std::set<std::string> blocks;
  const int graphs = 6;
  for (int k = 0; k < graphs; ++k) {
    std::uniform_int_distribution<int> n_tweets(8, 30), n_tags(1, 8), n_urls(1, 4), coin(0, 3);
    const int nt = n_tweets(rng), nh = n_tags(rng), nu = n_urls(rng);
    std::vector<MessageRecord> recs;
    for (int i = 0; i < nt; ++i) {
      const auto id = "t" + std::to_string(i);
      const auto parent = "t" + std::to_string(std::uniform_int_distribution<int>(0, std::max(0, i - 1))(rng));
      auto r = i == 0 || coin(rng) == 0 ? tweet(id) : coin(rng) == 1 ? quote(id, parent) : reply(id, parent);
      if (coin(rng) < 2) r.canonical_hashtags = {"h" + std::to_string(std::uniform_int_distribution<int>(0, nh - 1)(rng))};
      if (coin(rng) == 0) r.canonical_urls = {"u.com/" + std::to_string(std::uniform_int_distribution<int>(0, nu - 1)(rng))};
      recs.push_back(r);
    }
    const auto g = build_graph(recs).graph;
    const int in_dim = 5, hidden = 4;
    RowMatrix<double> x(static_cast<Eigen::Index>(g.num_nodes(NodeType::Tweet)), in_dim);
    std::normal_distribution<double> normal(0, 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    auto params = dti::ModelParams<double>::init(in_dim, hidden, rng);
    for (auto& layer : params.layers) layer.prelu_slope = std::uniform_real_distribution<double>(0.1, 0.4)(rng);
    for (auto& layer : params.layers) {
      for (auto& rel : layer.relations) {
        for (Eigen::Index i = 0; i < rel.bias.size(); ++i) rel.bias(i) = 0.1 * normal(rng);
      }
    }
    const auto ops = dti::MeanOperators<double>::build(g);
    const auto corrupted = dti::corrupt(x, rng);
    std::vector<NodeIndex> rows(g.num_nodes(NodeType::Tweet));
    std::iota(rows.begin(), rows.end(), 0);
    for (const auto& [name, err] : oracle::gradient_errors(ops, x, corrupted, rows, params)) {
      blocks.insert(name);
      worst = std::max(worst, err);
      o.require(err <= kGradTol, "graph " + std::to_string(k) + " block " + name + " err " + fmt(err));
    }
    o.require(g.num_nodes(NodeType::Hashtag) <= 8 && g.num_nodes(NodeType::Url) <= 4, "graph size");
  }
  o.detail << graphs << " graphs, " << blocks.size() << " blocks, max rel err " << fmt(worst, 3) << " (tol "
           << kGradTol << ")";
  return o;
}

Outcome training_sanity() {
  Outcome o;
  const auto& p = corpus.main_set();
  const auto& t = corpus.main_trained();
  const auto& losses = t.result.epoch_losses;
  const double first = losses.front(), best = losses[static_cast<std::size_t>(t.result.best_epoch)];
  const double drop = (first - best) / first;
  Rng rng(99);
  const double auc = dti::discriminator_auc(p.graph, p.features.features, t.result.params, rng);
  o.detail << losses.size() << " epochs, loss " << fmt(first) << " -> " << fmt(best) << " (drop "
           << fmt(100 * drop, 3) << "%, need >= " << 100 * kLossDrop << "%), AUC " << fmt(auc) << " (need >= "
           << kMinAuc << ")";
  o.require(best < first, "loss did not decrease");
  o.require(drop >= kLossDrop, "loss drop");
  o.require(auc >= kMinAuc, "auc");
  return o;
}

// ARI is scored over every tweet with noise as one more label, so a clustering
// cannot score well by discarding the tweets it cannot place.
Outcome context_recovery() {
  Outcome o;
  const int mcs = 100;
  const auto& p = corpus.main_set();
  const auto dti_main = cluster_quality(corpus.main_trained().tweets, truth_of_tweets(p), mcs);
  o.detail << "ARI " << fmt(dti_main.ari_with_noise) << " (need >= " << kMinAri << "; noise "
           << fmt(100 * dti_main.noise_fraction, 3) << "%, ARI without noise " << fmt(dti_main.ari) << ")";
  o.require(dti_main.ari_with_noise >= kMinAri, "ari");

  const auto& s = corpus.structure_set();
  const auto truth = truth_of_tweets(s);
  const auto text = cluster_quality(s.features.features.values.cast<double>(), truth, mcs);
  const auto dti_s = cluster_quality(train_and_embed(s).tweets, truth, mcs);
  const double gain = dti_s.ari_with_noise - text.ari_with_noise;
  o.detail << "; structure-only: DTI ARI " << fmt(dti_s.ari_with_noise) << " vs text ARI " << fmt(text.ari_with_noise)
           << " (gain " << fmt(gain) << ", need >= " << kMinAriGain << "; noise DTI "
           << fmt(100 * dti_s.noise_fraction, 3) << "% text " << fmt(100 * text.noise_fraction, 3)
           << "%, ARI without noise DTI " << fmt(dti_s.ari) << " text " << fmt(text.ari) << ")";
  o.require(gain >= kMinAriGain, "structure-only gain");

  // Identical vocabularies with identical word frequencies: reported only.
  const auto& iid = corpus.iid_set();
  const auto iid_truth = truth_of_tweets(iid);
  const auto iid_text = cluster_quality(iid.features.features.values.cast<double>(), iid_truth, mcs);
  const auto iid_dti = cluster_quality(train_and_embed(iid).tweets, iid_truth, mcs);
  std::cout << "  info: identical word frequencies: DTI ARI " << fmt(iid_dti.ari_with_noise) << ", text ARI "
            << fmt(iid_text.ari_with_noise) << "\n";
  return o;
}

Outcome feature_propagation() {
  Outcome o;
  // Hand-computed path A - B - C with B unknown.
  const auto path = build_graph({tweet("A"), reply("B", "A"), reply("C", "B")}).graph;
  FeatureMatrix f;
  f.values = RowMatrix<float>::Zero(3, 2);
  f.values(0, 0) = 1;
  f.values(2, 1) = 1;
  f.known = {1, 0, 1};
  const auto res = propagate_features(path, f, {kPropagationIters, kPropagationTol, false});
  const double path_err = std::max(std::abs(res.features.values(1, 0) - 0.5), std::abs(res.features.values(1, 1) - 0.5));
  o.require(path_err <= kPathTol, "path example");
  o.detail << "path error " << path_err << " (tol " << kPathTol << ")";

  std::vector<std::pair<std::string, const Prepared*>> sets = {
      {"main", &corpus.main_set()},           {"structure", &corpus.structure_set()},
      {"iid", &corpus.iid_set()},             {"centrality", &corpus.centrality_set()},
      {"transitions", &corpus.transition_set()}, {"sparse-text", &corpus.sparse_set()}};
  for (const auto& [name, p] : sets) {
    const auto& rep = p->features.report;
    o.detail << "; " << name << " " << rep.iterations << " iters (" << rep.unknown_rows << " unknown)";
    o.require(rep.converged && rep.iterations <= kPropagationIters, name + " convergence");
    bool bitwise = true;
    for (std::size_t i = 0; i < p->raw.rows(); ++i) {
      if (!p->raw.known[i]) continue;
      for (int j = 0; j < p->raw.dim(); ++j) {
        const auto r = static_cast<Eigen::Index>(i);
        bitwise &= std::bit_cast<std::uint32_t>(p->raw.values(r, j)) ==
                   std::bit_cast<std::uint32_t>(p->features.features.values(r, j));
      }
    }
    o.require(bitwise, name + " known rows changed");
  }
  return o;
}

Outcome hdbscan_equivalence() {
  Outcome o;
  Rng rng(77);
  int matched = 0;
  const int sets = 20;
  for (int s = 0; s < sets; ++s) {
    std::uniform_int_distribution<int> size(5, 50), dim(1, 3), blobs(1, 4), mcs_d(2, 6), ms_d(1, 4);
    const int n = size(rng), d = dim(rng), k = blobs(rng), mcs = mcs_d(rng), ms = ms_d(rng);
    std::normal_distribution<double> normal(0, 1);
    std::uniform_real_distribution<double> centre(-10, 10), spread(0.2, 2.0);
    std::vector<std::vector<double>> centres(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& c : centres) {
      for (auto& v : c) v = centre(rng);
    }
    RowMatrix<double> x(n, d);
    for (int i = 0; i < n; ++i) {
      const auto& c = centres[static_cast<std::size_t>(i % k)];
      const double sd = spread(rng);
      for (int j = 0; j < d; ++j) x(i, j) = c[static_cast<std::size_t>(j)] + sd * normal(rng);
    }
    const auto got = hdbscan::cluster(x, {mcs, ms});
    if (oracle::same_partition(got.labels, oracle::Reference::run(x, mcs, ms))) {
      ++matched;
    } else {
      o.require(false, "set " + std::to_string(s));
    }
  }
  RowMatrix<double> line(4, 1);
  line << 1, 2, 10, 11;
  const auto ex = hdbscan::cluster(line, {2, 1});
  o.require(ex.labels == std::vector<int>{0, 0, 1, 1}, "1-D example");
  o.detail << matched << "/" << sets << " point sets match the reference; 1-D example "
           << (ex.labels == std::vector<int>{0, 0, 1, 1} ? "{1,2},{10,11}" : "wrong");
  return o;
}

Outcome pagerank_checks() {
  Outcome o;
  analysis::UserNetwork pair;
  pair.add_interaction("a", "b");
  pair.add_interaction("b", "a");
  const auto two = analysis::pagerank(pair);
  o.require(two == std::vector<double>{0.5, 0.5}, "two-node case");

  Rng rng(6);
  double worst_sum = 0, worst_diff = 0;
  const int nets = 30;
  for (int k = 0; k < nets; ++k) {
    const int n = std::uniform_int_distribution<int>(2, 100)(rng);
    const double density = std::uniform_real_distribution<double>(0.01, 0.2)(rng);
    analysis::UserNetwork net;
    for (int i = 0; i < n; ++i) net.add_user("u" + std::to_string(i));
    std::bernoulli_distribution edge(density);
    std::uniform_real_distribution<double> w(0.1, 5.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j && edge(rng)) net.add_interaction("u" + std::to_string(i), "u" + std::to_string(j), w(rng));
      }
    }
    const auto pr = analysis::pagerank(net);
    const auto dense = oracle::dense_pagerank(net, 0.85);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(pr.begin(), pr.end(), 0.0) - 1.0));
    for (std::size_t i = 0; i < pr.size(); ++i) worst_diff = std::max(worst_diff, std::abs(pr[i] - dense[i]));
  }
  o.require(worst_sum <= kPageRankSumTol, "sum");
  o.require(worst_diff <= kPageRankOracleTol, "oracle");
  o.detail << "pair (" << two[0] << ", " << two[1] << "); " << nets << " nets: max |sum-1| " << fmt(worst_sum, 2)
           << " (tol " << kPageRankSumTol << "), max L-inf vs dense solve " << fmt(worst_diff, 2) << " (tol "
           << kPageRankOracleTol << ")";
  return o;
}

Outcome kendall_checks() {
  Outcome o;
  const std::vector<double> a{1, 2, 3, 4, 5}, rev{5, 4, 3, 2, 1};
  o.require(analysis::kendall_tau(a, a) == 1.0, "identical");
  o.require(analysis::kendall_tau(a, rev) == -1.0, "reversed");
  Rng rng(12);
  int exact = 0;
  const int cases = 100;
  for (int k = 0; k < cases; ++k) {
    const int n = std::uniform_int_distribution<int>(2, 40)(rng);
    const int levels = std::uniform_int_distribution<int>(2, 8)(rng);
    std::uniform_int_distribution<int> v(0, levels);
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = v(rng), y[static_cast<std::size_t>(i)] = v(rng);
    if (std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end() ||
        std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) == y.end()) {
      x[0] = levels + 1;  // keep both rankings non-constant
      y[0] = levels + 1;
    }
    const double got = analysis::kendall_tau(x, y), want = oracle::pair_count_tau_b(x, y);
    if (got == want) ++exact;
  }
  o.require(exact == cases, "oracle mismatch");
  o.detail << "identical +1, reversed -1; " << exact << "/" << cases << " tied cases equal the pair-count oracle exactly";
  return o;
}

Outcome centrality_direction() {
  Outcome o;
  const auto& p = corpus.centrality_set();
  const auto set = analysis::assign_contexts(truth_labels(p), p.records, analysis::retweet_origins(p.graph));
  const auto cmp = analysis::compare_centrality(set, analysis::index_records(p.records), 0, 1, 5);
  double lowest = 100;
  std::string who;
  for (const auto& u : cmp.top) {
    if (u.combined_percentile < lowest) lowest = u.combined_percentile, who = u.user;
  }
  o.detail << "member overlap " << fmt(cmp.member_overlap, 3) << "%, lowest top-5 combined percentile " << fmt(lowest, 3)
           << " (" << who << ", need < " << kCentralityPercentile << "), overall tau " << fmt(cmp.tau_overall, 3)
           << " (need < " << kCentralityTau << "), intersection tau " << fmt(cmp.tau_overall_intersection, 3);
  o.require(cmp.member_overlap >= 10 && cmp.member_overlap <= 18, "overlap near 14%");
  o.require(lowest < kCentralityPercentile, "percentile");
  o.require(cmp.tau_overall < kCentralityTau, "tau");
  return o;
}

Outcome transition_recovery() {
  Outcome o;
  const auto& p = corpus.transition_set();
  const auto set = analysis::assign_contexts(truth_labels(p), p.records, analysis::retweet_origins(p.graph));
  const auto t = analysis::transition_matrix(set, analysis::index_records(p.records), 0.05);
  const auto n = kPlantedTransitions.size();
  o.require(static_cast<std::size_t>(t.probabilities.rows()) == n, "matrix size");
  if (!o.pass) return o;
  bool exact = true;
  double worst_row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      exact &= t.probabilities(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == kPlantedTransitions[i][j];
    }
    worst_row = std::max(worst_row, std::abs(t.probabilities.row(static_cast<Eigen::Index>(i)).sum() - 1.0));
  }
  std::set<std::pair<std::size_t, std::size_t>> trimmed, planted_low;
  for (const auto& e : t.trimmed) trimmed.emplace(e.from, e.to);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (kPlantedTransitions[i][j] > 0 && kPlantedTransitions[i][j] < 0.05) planted_low.emplace(i, j);
    }
  }
  o.require(exact, "matrix differs");
  o.require(worst_row <= kRowSumTol, "row sums");
  o.require(trimmed == planted_low, "trimmed edges");
  std::size_t planted_edges = 0;
  for (const auto& row : kPlantedTransitions) planted_edges += static_cast<std::size_t>(std::count_if(row.begin(), row.end(), [](double v) { return v > 0; }));
  o.require(t.kept.size() + t.trimmed.size() == planted_edges, "edge count");
  o.detail << "exact " << (exact ? "yes" : "no") << ", max |row sum-1| " << fmt(worst_row, 2) << ", trimmed "
           << trimmed.size() << " of " << planted_low.size() << " planted sub-threshold edges, "
           << t.users_with_transitions << " moving users";
  return o;
}

Outcome cleaning_exactness() {
  Outcome o;
  const std::vector<std::pair<std::string, std::string>> urls = {
      {"http://aje.io/3p45z", "aje.io/3p45z"},
      {"https://aje.io/3p45z?utm_source=twitter", "aje.io/3p45z"},
      {"https://m.youtube.com/watch?v=ivT2z5UgHxo", "youtu.be/ivT2z5UgHxo"},
      {"https://www.youtube.com/watch?v=ivT2z5UgHxo&feature=youtu.be", "youtu.be/ivT2z5UgHxo"},
      {"https://youtu.be/ivT2z5UgHxo", "youtu.be/ivT2z5UgHxo"},
      {"yout.be/ivT2z5UgHxo", "youtu.be/ivT2z5UgHxo"},
      {"https://www.nytimes.com/2020/story?smid=tw-share", "nytimes.com/2020/story"},
      {"HTTPS://WWW.Example.COM/Path/Page", "example.com/Path/Page"},
      {"https://example.com/a#section", "example.com/a"},
      {"https://www.facebook.com/watch/?v=123", "facebook.com/watch/?v=123"},
      {"https://amp.theguardian.com/us-news/2020/nov/04/story", "theguardian.com/us-news/2020/nov/04/story"},
  };
  const std::vector<std::pair<std::string, std::string>> tags = {
      {"#MAGA", "maga"}, {"blm", "blm"}, {"#BidenHarris2020", "bidenharris2020"}, {"#ÉLECTION", "élection"}};
  int table_ok = 0;
  for (const auto& [raw, want] : urls) {
    const auto got = normalize_url(raw);
    if (got == want) {
      ++table_ok;
    } else {
      o.require(false, raw + " -> " + got);
    }
  }
  for (const auto& [raw, want] : tags) {
    const auto got = normalize_hashtag(raw);
    if (got == want) {
      ++table_ok;
    } else {
      o.require(false, raw + " -> " + got);
    }
  }

  std::mt19937_64 rng(11);
  const std::vector<std::string> schemes = {"", "http://", "https://", "HTTPS://"};
  const std::vector<std::string> prefixes = {"", "www.", "m.", "amp.", "mobile."};
  const std::vector<std::string> domains = {"example.com", "news.site.org", "youtube.com", "youtu.be",
                                            "facebook.com", "google.com", "aje.io",   "Shop.CO.uk"};
  const std::vector<std::string> segments = {"a", "B", "story", "amp", "x.amp", "2020", "watch", "page.html", "v1"};
  const std::vector<std::string> queries = {"", "?v=abcdefghijk", "?utm_source=tw&x=1", "?q=1#frag", "#top"};
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  int idempotent = 0, rejected = 0;
  std::string first_rejected;
  const int fuzz = 1000;
  for (int i = 0; i < fuzz; ++i) {
    std::string url = pick(schemes) + pick(prefixes) + pick(domains);
    const int depth = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int d = 0; d < depth; ++d) url += "/" + pick(segments);
    url += pick(queries);
    try {
      const auto once = normalize_url(url);
      if (normalize_url(once) == once) {
        ++idempotent;
      } else {
        o.require(false, "not idempotent: " + url);
      }
    } catch (const std::invalid_argument&) {
      if (rejected++ == 0) first_rejected = url;
    }
  }
  o.require(rejected == 0, std::to_string(rejected) + " fuzz URLs rejected, first " + first_rejected);
  o.detail << table_ok << "/" << urls.size() + tags.size() << " table entries byte-exact; " << idempotent << "/" << fuzz
           << " fuzz URLs idempotent";
  return o;
}

std::map<std::string, std::string> manifest_digests(const fs::path& workdir) {
  std::ifstream in(workdir / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  std::map<std::string, std::string> out;
  for (const auto& s : j.at("stages")) {
    for (const auto& [file, digest] : s.at("outputs").items()) {
      out[s.at("stage").get<std::string>() + "/" + file] = digest.get<std::string>();
    }
  }
  return out;
}

Outcome determinism() {
  Outcome o;
  const auto dir = scratch("determinism");
  synth::SynthConfig c;
  c.n_contexts = 3;
  c.tweets_per_context = {200};
  c.users_per_context = {40};
  c.hubs_per_context = {3};
  c.url_probability = 1.0;
  c.vector_dim = 32;
  c.seed = 21;
  fs::create_directories(dir / "vectors");
  synth::write_dataset(c, synth::generate(c), (dir / "records.jsonl").string(), (dir / "truth.json").string(),
                       (dir / "vectors").string());
  std::ofstream(dir / "pipeline.ini") << "[input]\nrecords = records.jsonl\nvectors = vectors\n"
                                      << "[train]\nbatch_size = 64\nepochs = 3\nhidden_dim = 32\nseed = 4\n"
                                      << "[cluster]\nmin_cluster_size = 20\n";
  std::vector<std::map<std::string, std::string>> runs;
  for (const std::string run : {"run1", "run2"}) {
    const auto cmd = std::string(CONVCTX_CLI) + " pipeline --deterministic --config " + (dir / "pipeline.ini").string() +
                     " --workdir " + (dir / run).string() + " > " + (dir / (run + ".log")).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    o.require(status == 0, run + " exit status " + std::to_string(status));
    if (status != 0) return o;
    runs.push_back(manifest_digests(dir / run));
  }
  o.require(!runs[0].empty(), "empty manifest");
  o.require(runs[0] == runs[1], "digests differ");
  std::size_t same = 0;
  for (const auto& [k, v] : runs[0]) same += runs[1].count(k) && runs[1].at(k) == v;
  o.detail << same << "/" << runs[0].size() << " stage output digests identical across two runs";
  return o;
}

Outcome label_propagation() {
  Outcome o;
  using LabelMap = std::map<std::string, std::string>;
  {
    const auto g = build_graph({tweet("t1", "a", {}, {"x.com/1"}), reply("t2", "t1"), reply("t3", "t2"),
                                tweet("t4", "a", {}, {"x.com/1", "y.com/2"}), tweet("t5", "a", {}, {"y.com/2"}),
                                reply("t6", "t5"), reply("t7", "t1"), quote("t7b", "t5")})
                       .graph;
    const auto lp = analysis::propagate_labels({{"x.com/1", "X"}, {"y.com/2", "Y"}}, g, 2);
    const LabelMap want{{"t1", "X"}, {"t2", "X"}, {"t7", "X"}, {"t5", "Y"}, {"t6", "Y"}, {"t7b", "Y"}};
    o.require(lp.labels == want, "two-step graph labels");
    o.require(lp.conflicts == 1, "two-step graph conflicts");
  }
  {
    // m is offered X and Y in the same step: dropped, and n behind it stays
    // unlabeled. The z chain stops after steps-1 hops.
    // b replies to m and carries the Y URL.
    auto records = std::vector<MessageRecord>{tweet("a", "a", {}, {"x.com/a"}), reply("m", "a"),
                                              reply("b", "m", "b"), reply("n", "m"), tweet("z0", "c", {}, {"z.com/0"}),
                                              reply("z1", "z0"), reply("z2", "z1"), reply("z3", "z2")};
    records[2].canonical_urls = {"y.com/b"};
    const auto g = build_graph(records).graph;
    const auto lp = analysis::propagate_labels({{"x.com/a", "X"}, {"y.com/b", "Y"}, {"z.com/0", "Z"}}, g, 3);
    const LabelMap want{{"a", "X"}, {"b", "Y"}, {"z0", "Z"}, {"z1", "Z"}, {"z2", "Z"}};
    const std::map<std::string, int> hops{{"a", 0}, {"b", 0}, {"z0", 0}, {"z1", 1}, {"z2", 2}};
    o.require(lp.labels == want, "conflict graph labels");
    o.require(lp.hops == hops, "conflict graph hops");
    o.require(lp.conflicts == 1, "conflict graph conflicts");
    const auto lp1 = analysis::propagate_labels({{"z.com/0", "Z"}}, g, 1);
    o.require(lp1.labels == LabelMap{{"z0", "Z"}}, "one step labels only URL users");
  }
  o.detail << "exact label maps on two constructed graphs, one conflict each, hop bound steps-1";
  return o;
}

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"A1", "gradient check", gradient_check},
      {"A2", "training sanity", training_sanity},
      {"A3", "context recovery", context_recovery},
      {"A4", "feature propagation", feature_propagation},
      {"A5", "hdbscan reference", hdbscan_equivalence},
      {"A6", "pagerank", pagerank_checks},
      {"A7", "kendall tau", kendall_checks},
      {"A8", "centrality direction", centrality_direction},
      {"A9", "transition recovery", transition_recovery},
      {"A10", "cleaning", cleaning_exactness},
      {"A11", "determinism", determinism},
      {"A12", "label propagation", label_propagation},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.id << " " << c.title << ": " << o.detail.str() << " ["
              << fmt(secs, 3) << "s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
