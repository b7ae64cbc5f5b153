#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convctx/common.hpp"
#include "convctx/graph.hpp"
#include "convctx/hdbscan.hpp"
#include "convctx/ingest.hpp"

namespace convctx::analysis {

// One clustered tweet: a tweet node id, the UTC day it was clustered in, and
// its cluster (hdbscan::kNoise for noise).
struct TweetLabel {
  std::string tweet_id;
  std::string day;
  int cluster = hdbscan::kNoise;
};

// CSV with header "tweet_id,day,cluster_id".
void write_labels(const std::string& path, const std::vector<TweetLabel>& labels);
std::vector<TweetLabel> read_labels(const std::string& path);

struct DayClustering {
  std::string day;
  std::size_t points = 0;
  hdbscan::ClusterResult result;
};

struct DailyClusters {
  std::vector<TweetLabel> labels;  // in input row order
  std::vector<DayClustering> days;  // ascending by day
};

// Clusters the rows of each day independently. `days[i]` is the day of row i.
DailyClusters cluster_daily(const std::vector<std::string>& ids, const std::vector<std::string>& days,
                            const RowMatrix<float>& embeddings, const hdbscan::ClusterConfig& config,
                            int threads = 1);

struct Context {
  std::string day;
  int cluster_id = 0;
  std::vector<std::string> tweets;    // tweet node ids
  std::vector<std::string> retweets;  // retweets of those tweets
  std::vector<std::string> members;   // author ids, sorted

  std::string name() const { return day + "/" + std::to_string(cluster_id); }
};

struct ContextSet {
  std::vector<Context> contexts;  // ordered by (day, cluster_id)
  std::unordered_map<std::string, std::size_t> context_of;  // message id -> context index
  std::size_t noise_tweets = 0;
  std::size_t unlabeled_tweets = 0;  // tweet records with no label row
  std::size_t orphan_retweets = 0;    // retweets whose original has no context

  nlohmann::json summary() const;
};

using RecordIndex = std::unordered_map<std::string, const MessageRecord*>;
RecordIndex index_records(const std::vector<MessageRecord>& records);

// retweet id -> original tweet id.
std::unordered_map<std::string, std::string> retweet_origins(const HeteroGraph& g);

// Contexts from per-day labels. Retweets join the context of their original;
// members are the authors of every message in the context.
ContextSet assign_contexts(const std::vector<TweetLabel>& labels, const std::vector<MessageRecord>& records,
                           const std::unordered_map<std::string, std::string>& retweet_origin);

// Indices of the k contexts with most members (ties by context order).
std::vector<std::size_t> largest_contexts(const ContextSet& set, std::size_t k);

double jaccard_percent(const std::vector<std::string>& a, const std::vector<std::string>& b);
// 100 * |a ∩ b| / |a|.
double directional_percent(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct OverlapMatrix {
  std::vector<std::size_t> contexts;  // row/column order
  RowMatrix<double> jaccard;          // symmetric, zero diagonal
  RowMatrix<double> directional;      // row context as denominator, zero diagonal
};

OverlapMatrix overlap_matrix(const ContextSet& set, std::size_t top_k);

struct WeightedEdge {
  NodeIndex from;
  NodeIndex to;
  double weight;
};

// Directed user-user interaction network with accumulated weights.
class UserNetwork {
 public:
  NodeIndex add_user(const std::string& user);
  // Self interactions are ignored. Weight must be positive.
  void add_interaction(const std::string& from, const std::string& to, double weight = 1.0);

  std::size_t size() const { return users_.size(); }
  const IndexMap& users() const { return users_; }
  std::vector<WeightedEdge> edges() const;  // sorted by (from, to)
  double weight(const std::string& from, const std::string& to) const;
  std::size_t num_edges() const { return weights_.size(); }

 private:
  IndexMap users_;
  std::map<std::pair<NodeIndex, NodeIndex>, double> weights_;
};

// Edges author -> target author for every retweet, reply, quote (including
// quote links) and mention made by a message of the context. Members are
// nodes even without interactions. Targets missing from `records` are skipped.
UserNetwork build_user_network(const Context& context, const RecordIndex& records);

// Node union (a's order, then b's new users) with summed weights.
UserNetwork combine_networks(const UserNetwork& a, const UserNetwork& b);

struct PageRankConfig {
  double damping = 0.85;
  double tol = 1e-10;
  int max_iters = 200;
};

// Weighted PageRank by power iteration with uniform teleport; dangling mass
// is spread uniformly. Throws NumericError when L1 change stays >= tol.
std::vector<double> pagerank(const UserNetwork& net, const PageRankConfig& config = {});

// 100 * |{v != i : s_v < s_i}| / (n - 1); 100 for a single node.
double percentile_rank(const std::vector<double>& scores, std::size_t i);
double percentile_rank(const std::unordered_map<std::string, double>& scores, const std::string& user);

// Kendall tau-b; NaN when either input is constant. Throws for n < 2 or
// length mismatch.
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);
// Keyed form; the key sets must match exactly.
double kendall_tau(const std::unordered_map<std::string, double>& a, const std::unordered_map<std::string, double>& b);

struct RankedUser {
  std::string user;
  std::size_t context = 0;  // 0 or 1: which of the two compared contexts
  int rank = 0;             // 1-based rank within its context
  double context_score = 0.0;
  double combined_score = 0.0;
  double combined_percentile = 0.0;
};

struct CentralityComparison {
  std::array<std::size_t, 2> contexts{};  // indices into the ContextSet
  double member_overlap = 0.0;            // Jaccard percent
  std::array<std::size_t, 2> network_sizes{};
  std::size_t combined_size = 0;
  std::vector<RankedUser> top;  // top-n of each context
  // Tau between contextual and combined scores over each context's nodes.
  std::array<double, 2> tau_intersection{};
  // Same over all combined nodes, contextual score 0 where absent.
  std::array<double, 2> tau_union{};
  // Pooled over both contexts of the union form: (contextual percentile with
  // zero fill, combined percentile) per (context, combined user).
  double tau_overall = 0.0;
  // Pooled intersection form: one pair per (context, member).
  double tau_overall_intersection = 0.0;

  nlohmann::json to_json(const ContextSet& set) const;
};

CentralityComparison compare_centrality(const ContextSet& set, const RecordIndex& records, std::size_t context_a,
                                        std::size_t context_b, std::size_t top_n = 5,
                                        const PageRankConfig& config = {});

struct TransitionEdge {
  std::size_t from, to;  // positions in TransitionResult::contexts
  double probability;
  double count;
};

struct TransitionResult {
  std::vector<std::size_t> contexts;  // context indices covered
  RowMatrix<double> counts;           // after collapsing repeats
  RowMatrix<double> probabilities;    // row-normalized; empty rows stay zero
  std::vector<double> repeats;        // raw consecutive same-context engagements per context
  std::vector<TransitionEdge> kept;     // probability >= trim
  std::vector<TransitionEdge> trimmed;  // 0 < probability < trim
  std::size_t users_with_transitions = 0;

  nlohmann::json to_json(const ContextSet& set) const;
};

// Each user's engagements (tweets and retweets in a covered context) are
// ordered by (timestamp, context, message id); consecutive repeats collapse.
// Empty `only` covers every context.
TransitionResult transition_matrix(const ContextSet& set, const RecordIndex& records, double trim = 0.05,
                                   const std::vector<std::size_t>& only = {});

struct LabelPropagation {
  std::map<std::string, std::string> labels;  // tweet id -> label
  std::map<std::string, int> hops;            // tweet id -> 0 (uses the URL) .. steps-1
  std::size_t conflicts = 0;
  std::vector<std::size_t> labeled_per_step;
};

// Step 1 labels the tweets using a labeled URL; each later step labels
// unlabeled tweets adjacent (either direction) to tweets labeled in the
// previous step. Tweets offered two or more distinct labels in a step are
// dropped, counted, and do not propagate.
LabelPropagation propagate_labels(const std::unordered_map<std::string, std::string>& url_labels,
                                  const HeteroGraph& g, int steps = 2);

// CSV "url,label" (header optional); URLs are normalized.
std::unordered_map<std::string, std::string> read_url_labels(const std::string& path);

struct NodePair {
  std::string a, b;  // a < b
  double distance;
};

// Retweets received per node: tweets directly, hashtags/URLs summed over
// the tweets using them.
std::vector<std::size_t> cumulative_retweets(const HeteroGraph& g, NodeType type);

// The top_n nodes by weight (ties by id), then their closest top_k pairs by
// Euclidean distance (ties by ids).
std::vector<NodePair> nearest_pairs(const RowMatrix<float>& embeddings, const std::vector<std::string>& ids,
                                    const std::vector<std::size_t>& weights, std::size_t top_n, std::size_t top_k);

struct PartitionQuality {
  double ari = 0.0;
  double ari_with_noise = 0.0;  // over every item, noise scored as one more label
  double nmi = 0.0;
  double purity = 0.0;
  double noise_fraction = 0.0;
  std::size_t items = 0;  // scored (non-noise) items

  nlohmann::json to_json() const;
};

// Items labelled hdbscan::kNoise in `labels` are excluded.
PartitionQuality partition_quality(const std::vector<int>& labels, const std::vector<int>& truth);

}  // namespace convctx::analysis
