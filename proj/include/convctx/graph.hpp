#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convctx/common.hpp"
#include "convctx/ingest.hpp"

namespace convctx {

enum class NodeType : std::uint8_t { Tweet = 0, Hashtag = 1, Url = 2 };
enum class EdgeType : std::uint8_t { TweetTweet = 0, TweetHashtag = 1, TweetUrl = 2 };

std::string_view to_string(NodeType t);
std::string_view to_string(EdgeType t);

using NodeIndex = std::int32_t;

// Bidirectional string <-> dense index map.
class IndexMap {
 public:
  NodeIndex add(const std::string& name);
  std::optional<NodeIndex> find(std::string_view name) const;
  const std::string& name(NodeIndex i) const { return names_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, NodeIndex> index_;
};

// Compressed sparse rows: neighbors of row i are targets[offsets[i], offsets[i+1]).
struct Csr {
  std::vector<std::int64_t> offsets{0};
  std::vector<NodeIndex> targets;

  static Csr from_pairs(std::size_t rows, std::vector<std::pair<NodeIndex, NodeIndex>> pairs);
  std::size_t rows() const { return offsets.size() - 1; }
  std::size_t nnz() const { return targets.size(); }
  std::span<const NodeIndex> row(NodeIndex i) const {
    const auto b = offsets[static_cast<std::size_t>(i)];
    const auto e = offsets[static_cast<std::size_t>(i) + 1];
    return {targets.data() + b, static_cast<std::size_t>(e - b)};
  }
};

struct GraphBuildReport {
  std::size_t tweets = 0;
  std::size_t hashtags = 0;
  std::size_t urls = 0;
  std::size_t retweets = 0;
  std::size_t tweet_tweet_edges = 0;  // unordered pairs when undirected
  std::size_t tweet_hashtag_edges = 0;
  std::size_t tweet_url_edges = 0;
  std::size_t dangling_references = 0;
  std::size_t dropped_retweets = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Immutable typed graph of tweets, hashtags and URLs. Retweets are not nodes;
// they resolve to their root original through retweet_map().
class HeteroGraph {
 public:
  HeteroGraph() = default;

  std::size_t num_nodes(NodeType t) const;
  const IndexMap& ids(NodeType t) const;
  bool directed_tweet_tweet() const { return directed_tt_; }

  // Aggregation neighbors, sorted ascending. For (Tweet, TweetTweet) in
  // directed mode these are the out-neighbors (the tweets replied to or
  // quoted). Throws std::out_of_range for a bad index and
  // std::invalid_argument when the edge type is not incident to the node type.
  std::span<const NodeIndex> neighbors(NodeType type, NodeIndex node, EdgeType edge) const;
  // Tweets that reply to / quote `node`; equals neighbors() when undirected.
  std::span<const NodeIndex> tweet_in_neighbors(NodeIndex node) const;

  std::size_t num_edges(EdgeType e) const;

  // retweet id -> original tweet index.
  const std::unordered_map<std::string, NodeIndex>& retweet_map() const { return retweet_map_; }
  // Resolves a tweet or retweet id to a tweet node index.
  std::optional<NodeIndex> resolve_tweet(std::string_view id) const;

  // Raw edge lists for serialization: (tweet, tweet) directed pairs as stored
  // (each unordered pair once, smaller index first, when undirected).
  std::vector<std::pair<NodeIndex, NodeIndex>> edge_list(EdgeType e) const;

  // Assembles a graph from explicit parts. Edges are deduplicated; tweet-tweet
  // self loops are dropped.
  static HeteroGraph from_edges(IndexMap tweets, IndexMap hashtags, IndexMap urls,
                                std::vector<std::pair<NodeIndex, NodeIndex>> tweet_tweet,
                                std::vector<std::pair<NodeIndex, NodeIndex>> tweet_hashtag,
                                std::vector<std::pair<NodeIndex, NodeIndex>> tweet_url, bool directed_tt,
                                std::unordered_map<std::string, NodeIndex> retweet_map = {});

 private:
  void check_node(NodeType type, NodeIndex node) const;

  IndexMap tweets_, hashtags_, urls_;
  bool directed_tt_ = false;
  Csr tt_out_, tt_in_;  // tt_in_ equals tt_out_ when undirected
  Csr th_, ht_, tu_, ut_;
  std::size_t tt_edges_ = 0;
  std::unordered_map<std::string, NodeIndex> retweet_map_;
};

struct GraphBuildResult {
  HeteroGraph graph;
  GraphBuildReport report;
};

GraphBuildResult build_graph(const std::vector<MessageRecord>& records, bool directed_tt = false);

// Textual edge-list format, see docs/formats.md.
void write_graph(std::ostream& out, const HeteroGraph& g);
HeteroGraph read_graph(std::istream& in);
void write_graph_file(const std::string& path, const HeteroGraph& g);
HeteroGraph read_graph_file(const std::string& path);

struct SampledEdge {
  NodeType src_type;
  NodeIndex src;  // global index of the aggregating node
  NodeType dst_type;
  NodeIndex dst;  // global index of the sampled neighbor
  EdgeType edge;
};

// Layered neighbor sample around seed tweets, plus the local graph induced by
// the sampled edges. Local tweet indices 0..k-1 are the distinct seeds in
// first-occurrence order.
struct SampledSubgraph {
  std::vector<NodeIndex> seeds;                   // global tweet indices as given
  std::vector<NodeIndex> seed_local;              // local index of each seed
  std::vector<std::vector<SampledEdge>> layers;   // edges sampled per iteration
  std::vector<NodeIndex> tweets, hashtags, urls;  // local -> global
  HeteroGraph local;

  const std::vector<NodeIndex>& global_of(NodeType t) const;
};

SampledSubgraph sample_subgraph(const HeteroGraph& g, std::span<const NodeIndex> seeds, int fanout, int depth,
                                Rng& rng);

// Subgraph covering the whole graph (no sampling), seeds = all tweets.
SampledSubgraph full_scope(const HeteroGraph& g);

}  // namespace convctx
