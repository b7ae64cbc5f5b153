#include "convctx/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace convctx {
namespace {

constexpr std::string_view kGraphMagic = "convctx-graph";
constexpr int kGraphVersion = 1;

std::vector<std::pair<NodeIndex, NodeIndex>> swapped(const std::vector<std::pair<NodeIndex, NodeIndex>>& pairs) {
  std::vector<std::pair<NodeIndex, NodeIndex>> out;
  out.reserve(pairs.size());
  for (auto [a, b] : pairs) out.emplace_back(b, a);
  return out;
}

void check_token(const std::string& s, std::string_view what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
    throw DataError("cannot serialize " + std::string(what) + " '" + s + "': empty or contains whitespace");
  }
}

}  // namespace

std::string_view to_string(NodeType t) {
  switch (t) {
    case NodeType::Tweet: return "tweet";
    case NodeType::Hashtag: return "hashtag";
    case NodeType::Url: return "url";
  }
  return "tweet";
}

std::string_view to_string(EdgeType t) {
  switch (t) {
    case EdgeType::TweetTweet: return "tweet_tweet";
    case EdgeType::TweetHashtag: return "tweet_hashtag";
    case EdgeType::TweetUrl: return "tweet_url";
  }
  return "tweet_tweet";
}

NodeIndex IndexMap::add(const std::string& name) {
  auto [it, inserted] = index_.emplace(name, static_cast<NodeIndex>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

std::optional<NodeIndex> IndexMap::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Csr Csr::from_pairs(std::size_t rows, std::vector<std::pair<NodeIndex, NodeIndex>> pairs) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  Csr csr;
  csr.offsets.assign(rows + 1, 0);
  csr.targets.reserve(pairs.size());
  for (auto [r, c] : pairs) {
    ++csr.offsets[static_cast<std::size_t>(r) + 1];
    csr.targets.push_back(c);
  }
  for (std::size_t i = 0; i < rows; ++i) csr.offsets[i + 1] += csr.offsets[i];
  return csr;
}

nlohmann::json GraphBuildReport::to_json() const {
  return {{"tweets", tweets},
          {"hashtags", hashtags},
          {"urls", urls},
          {"retweets", retweets},
          {"tweet_tweet_edges", tweet_tweet_edges},
          {"tweet_hashtag_edges", tweet_hashtag_edges},
          {"tweet_url_edges", tweet_url_edges},
          {"dangling_references", dangling_references},
          {"dropped_retweets", dropped_retweets},
          {"warnings", warnings}};
}

std::size_t HeteroGraph::num_nodes(NodeType t) const { return ids(t).size(); }

const IndexMap& HeteroGraph::ids(NodeType t) const {
  switch (t) {
    case NodeType::Tweet: return tweets_;
    case NodeType::Hashtag: return hashtags_;
    case NodeType::Url: return urls_;
  }
  return tweets_;
}

void HeteroGraph::check_node(NodeType type, NodeIndex node) const {
  if (node < 0 || static_cast<std::size_t>(node) >= num_nodes(type)) {
    throw std::out_of_range("invalid " + std::string(to_string(type)) + " index " + std::to_string(node));
  }
}

std::span<const NodeIndex> HeteroGraph::neighbors(NodeType type, NodeIndex node, EdgeType edge) const {
  check_node(type, node);
  switch (type) {
    case NodeType::Tweet:
      switch (edge) {
        case EdgeType::TweetTweet: return tt_out_.row(node);
        case EdgeType::TweetHashtag: return th_.row(node);
        case EdgeType::TweetUrl: return tu_.row(node);
      }
      break;
    case NodeType::Hashtag:
      if (edge == EdgeType::TweetHashtag) return ht_.row(node);
      break;
    case NodeType::Url:
      if (edge == EdgeType::TweetUrl) return ut_.row(node);
      break;
  }
  throw std::invalid_argument("edge type " + std::string(to_string(edge)) + " is not incident to " +
                              std::string(to_string(type)) + " nodes");
}

std::span<const NodeIndex> HeteroGraph::tweet_in_neighbors(NodeIndex node) const {
  check_node(NodeType::Tweet, node);
  return tt_in_.row(node);
}

std::size_t HeteroGraph::num_edges(EdgeType e) const {
  switch (e) {
    case EdgeType::TweetTweet: return tt_edges_;
    case EdgeType::TweetHashtag: return th_.nnz();
    case EdgeType::TweetUrl: return tu_.nnz();
  }
  return 0;
}

std::optional<NodeIndex> HeteroGraph::resolve_tweet(std::string_view id) const {
  if (auto t = tweets_.find(id)) return t;
  auto it = retweet_map_.find(std::string(id));
  if (it != retweet_map_.end()) return it->second;
  return std::nullopt;
}

std::vector<std::pair<NodeIndex, NodeIndex>> HeteroGraph::edge_list(EdgeType e) const {
  std::vector<std::pair<NodeIndex, NodeIndex>> out;
  const Csr& csr = e == EdgeType::TweetTweet ? tt_out_ : (e == EdgeType::TweetHashtag ? th_ : tu_);
  for (std::size_t r = 0; r < csr.rows(); ++r) {
    for (NodeIndex c : csr.row(static_cast<NodeIndex>(r))) {
      if (e == EdgeType::TweetTweet && !directed_tt_ && c < static_cast<NodeIndex>(r)) continue;
      out.emplace_back(static_cast<NodeIndex>(r), c);
    }
  }
  return out;
}

HeteroGraph HeteroGraph::from_edges(IndexMap tweets, IndexMap hashtags, IndexMap urls,
                                    std::vector<std::pair<NodeIndex, NodeIndex>> tweet_tweet,
                                    std::vector<std::pair<NodeIndex, NodeIndex>> tweet_hashtag,
                                    std::vector<std::pair<NodeIndex, NodeIndex>> tweet_url, bool directed_tt,
                                    std::unordered_map<std::string, NodeIndex> retweet_map) {
  HeteroGraph g;
  g.tweets_ = std::move(tweets);
  g.hashtags_ = std::move(hashtags);
  g.urls_ = std::move(urls);
  g.directed_tt_ = directed_tt;
  g.retweet_map_ = std::move(retweet_map);
  const auto nt = g.tweets_.size(), nh = g.hashtags_.size(), nu = g.urls_.size();

  auto check = [](const auto& pairs, std::size_t na, std::size_t nb, std::string_view what) {
    for (auto [a, b] : pairs) {
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= na || static_cast<std::size_t>(b) >= nb) {
        throw DataError(std::string(what) + " edge endpoint out of range");
      }
    }
  };
  check(tweet_tweet, nt, nt, "tweet_tweet");
  check(tweet_hashtag, nt, nh, "tweet_hashtag");
  check(tweet_url, nt, nu, "tweet_url");
  for (const auto& [rt, idx] : g.retweet_map_) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= nt) throw DataError("retweet_map target out of range for " + rt);
  }

  std::erase_if(tweet_tweet, [](const auto& p) { return p.first == p.second; });
  if (directed_tt) {
    g.tt_out_ = Csr::from_pairs(nt, tweet_tweet);
    g.tt_in_ = Csr::from_pairs(nt, swapped(tweet_tweet));
    g.tt_edges_ = g.tt_out_.nnz();
  } else {
    auto sym = tweet_tweet;
    for (auto [a, b] : tweet_tweet) sym.emplace_back(b, a);
    g.tt_out_ = Csr::from_pairs(nt, std::move(sym));
    g.tt_in_ = g.tt_out_;
    g.tt_edges_ = g.tt_out_.nnz() / 2;
  }
  g.th_ = Csr::from_pairs(nt, tweet_hashtag);
  g.ht_ = Csr::from_pairs(nh, swapped(tweet_hashtag));
  g.tu_ = Csr::from_pairs(nt, tweet_url);
  g.ut_ = Csr::from_pairs(nu, swapped(tweet_url));
  return g;
}

GraphBuildResult build_graph(const std::vector<MessageRecord>& records, bool directed_tt) {
  GraphBuildResult result;
  auto& rep = result.report;

  std::unordered_map<std::string, std::size_t> by_id;
  by_id.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) by_id.emplace(records[i].id, i);

  IndexMap tweets, hashtags, urls;
  std::vector<std::size_t> tweet_records;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].kind == MessageKind::Retweet || records[i].retweet_of) continue;
    tweets.add(records[i].id);
    tweet_records.push_back(i);
  }

  // Retweet chains resolve to the root original.
  std::unordered_map<std::string, NodeIndex> retweet_map;
  for (const auto& r : records) {
    if (!r.retweet_of) continue;
    std::string cur = *r.retweet_of;
    std::size_t hops = 0;
    std::optional<NodeIndex> root;
    while (hops <= records.size()) {
      if (auto t = tweets.find(cur)) {
        root = t;
        break;
      }
      auto it = by_id.find(cur);
      if (it == by_id.end() || !records[it->second].retweet_of) break;
      cur = *records[it->second].retweet_of;
      ++hops;
    }
    if (root) {
      retweet_map.emplace(r.id, *root);
    } else {
      ++rep.dropped_retweets;
      rep.warnings.push_back("retweet " + r.id + (hops ? " has a retweet chain with missing root" : " of missing tweet " + cur) +
                             "; dropped");
    }
  }

  auto resolve = [&](const std::string& id) -> std::optional<NodeIndex> {
    if (auto t = tweets.find(id)) return t;
    if (auto it = retweet_map.find(id); it != retweet_map.end()) return it->second;
    return std::nullopt;
  };

  std::vector<std::pair<NodeIndex, NodeIndex>> tt, th, tu;
  for (std::size_t k = 0; k < tweet_records.size(); ++k) {
    const auto& r = records[tweet_records[k]];
    const auto src = static_cast<NodeIndex>(k);
    auto link = [&](const std::string& target) {
      if (auto dst = resolve(target)) {
        if (*dst != src) tt.emplace_back(src, *dst);
      } else {
        ++rep.dangling_references;
      }
    };
    if (r.reply_to) link(*r.reply_to);
    if (r.quote_of) link(*r.quote_of);
    for (const auto& q : r.quote_links) {
      if (!r.quote_of || q != *r.quote_of) link(q);
    }
    for (const auto& h : r.canonical_hashtags) th.emplace_back(src, hashtags.add(h));
    for (const auto& u : r.canonical_urls) tu.emplace_back(src, urls.add(u));
  }

  result.graph = HeteroGraph::from_edges(std::move(tweets), std::move(hashtags), std::move(urls), std::move(tt),
                                         std::move(th), std::move(tu), directed_tt, std::move(retweet_map));
  const auto& g = result.graph;
  rep.tweets = g.num_nodes(NodeType::Tweet);
  rep.hashtags = g.num_nodes(NodeType::Hashtag);
  rep.urls = g.num_nodes(NodeType::Url);
  rep.retweets = g.retweet_map().size();
  rep.tweet_tweet_edges = g.num_edges(EdgeType::TweetTweet);
  rep.tweet_hashtag_edges = g.num_edges(EdgeType::TweetHashtag);
  rep.tweet_url_edges = g.num_edges(EdgeType::TweetUrl);
  return result;
}

void write_graph(std::ostream& out, const HeteroGraph& g) {
  out << kGraphMagic << " v" << kGraphVersion << '\n';
  out << "directed_tt " << (g.directed_tweet_tweet() ? 1 : 0) << '\n';
  for (auto [label, type] : {std::pair{"tweets", NodeType::Tweet}, std::pair{"hashtags", NodeType::Hashtag},
                             std::pair{"urls", NodeType::Url}}) {
    const auto& names = g.ids(type).names();
    out << label << ' ' << names.size() << '\n';
    for (const auto& n : names) {
      check_token(n, label);
      out << n << '\n';
    }
  }
  std::vector<std::pair<std::string, NodeIndex>> rts(g.retweet_map().begin(), g.retweet_map().end());
  std::sort(rts.begin(), rts.end());
  out << "retweets " << rts.size() << '\n';
  for (const auto& [id, idx] : rts) {
    check_token(id, "retweet id");
    out << id << ' ' << idx << '\n';
  }
  for (EdgeType e : {EdgeType::TweetTweet, EdgeType::TweetHashtag, EdgeType::TweetUrl}) {
    const auto edges = g.edge_list(e);
    out << to_string(e) << ' ' << edges.size() << '\n';
    for (auto [a, b] : edges) out << a << ' ' << b << '\n';
  }
}

HeteroGraph read_graph(std::istream& in) {
  auto fail = [](const std::string& why) -> DataError { return DataError("graph file: " + why); };
  std::string magic, version;
  if (!(in >> magic >> version) || magic != kGraphMagic) throw fail("bad header");
  if (version != "v" + std::to_string(kGraphVersion)) throw fail("unsupported version " + version);
  std::string key;
  int directed = 0;
  if (!(in >> key >> directed) || key != "directed_tt") throw fail("missing directed_tt");

  auto read_section = [&](std::string_view expected) {
    std::string k;
    std::size_t n = 0;
    if (!(in >> k >> n) || k != expected) throw fail("expected section '" + std::string(expected) + "'");
    return n;
  };
  auto read_names = [&](std::string_view label) {
    IndexMap m;
    const auto n = read_section(label);
    for (std::size_t i = 0; i < n; ++i) {
      std::string name;
      if (!(in >> name)) throw fail("truncated " + std::string(label) + " section");
      if (m.add(name) != static_cast<NodeIndex>(i)) throw fail("duplicate name '" + name + "'");
    }
    return m;
  };
  IndexMap tweets = read_names("tweets");
  IndexMap hashtags = read_names("hashtags");
  IndexMap urls = read_names("urls");
  std::unordered_map<std::string, NodeIndex> rt;
  const auto nrt = read_section("retweets");
  for (std::size_t i = 0; i < nrt; ++i) {
    std::string id;
    NodeIndex idx;
    if (!(in >> id >> idx)) throw fail("truncated retweets section");
    rt.emplace(id, idx);
  }
  auto read_edges = [&](EdgeType e) {
    std::vector<std::pair<NodeIndex, NodeIndex>> edges(read_section(to_string(e)));
    for (auto& [a, b] : edges) {
      if (!(in >> a >> b)) throw fail("truncated " + std::string(to_string(e)) + " section");
    }
    return edges;
  };
  auto tt = read_edges(EdgeType::TweetTweet);
  auto th = read_edges(EdgeType::TweetHashtag);
  auto tu = read_edges(EdgeType::TweetUrl);
  return HeteroGraph::from_edges(std::move(tweets), std::move(hashtags), std::move(urls), std::move(tt), std::move(th),
                                 std::move(tu), directed != 0, std::move(rt));
}

void write_graph_file(const std::string& path, const HeteroGraph& g) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write graph file '" + path + "'");
  write_graph(out, g);
}

HeteroGraph read_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph file '" + path + "'");
  return read_graph(in);
}

const std::vector<NodeIndex>& SampledSubgraph::global_of(NodeType t) const {
  switch (t) {
    case NodeType::Tweet: return tweets;
    case NodeType::Hashtag: return hashtags;
    case NodeType::Url: return urls;
  }
  return tweets;
}

namespace {

struct LocalNodes {
  std::vector<NodeIndex> globals;
  std::unordered_map<NodeIndex, NodeIndex> local;

  std::pair<NodeIndex, bool> add(NodeIndex global) {
    auto [it, inserted] = local.emplace(global, static_cast<NodeIndex>(globals.size()));
    if (inserted) globals.push_back(global);
    return {it->second, inserted};
  }
};

IndexMap names_of(const HeteroGraph& g, NodeType t, const std::vector<NodeIndex>& globals) {
  IndexMap m;
  for (NodeIndex v : globals) m.add(g.ids(t).name(v));
  return m;
}

}  // namespace

SampledSubgraph sample_subgraph(const HeteroGraph& g, std::span<const NodeIndex> seeds, int fanout, int depth,
                                Rng& rng) {
  if (fanout < 1 || depth < 1) throw std::invalid_argument("sample_subgraph: fanout and depth must be >= 1");
  SampledSubgraph sub;
  std::array<LocalNodes, 3> nodes;
  auto slot = [&](NodeType t) -> LocalNodes& { return nodes[static_cast<std::size_t>(t)]; };

  std::vector<std::pair<NodeType, NodeIndex>> frontier;
  for (NodeIndex s : seeds) {
    if (s < 0 || static_cast<std::size_t>(s) >= g.num_nodes(NodeType::Tweet)) {
      throw std::out_of_range("sample_subgraph: invalid seed " + std::to_string(s));
    }
    auto [loc, fresh] = slot(NodeType::Tweet).add(s);
    sub.seeds.push_back(s);
    sub.seed_local.push_back(loc);
    if (fresh) frontier.emplace_back(NodeType::Tweet, s);
  }

  std::vector<NodeIndex> pool;
  for (int layer = 0; layer < depth; ++layer) {
    std::vector<SampledEdge> edges;
    std::vector<std::pair<NodeType, NodeIndex>> next;
    for (auto [type, node] : frontier) {
      static constexpr EdgeType kTweetEdges[] = {EdgeType::TweetTweet, EdgeType::TweetHashtag, EdgeType::TweetUrl};
      std::span<const EdgeType> incident;
      EdgeType single;
      if (type == NodeType::Tweet) {
        incident = kTweetEdges;
      } else {
        single = type == NodeType::Hashtag ? EdgeType::TweetHashtag : EdgeType::TweetUrl;
        incident = {&single, 1};
      }
      for (EdgeType e : incident) {
        const auto nbrs = g.neighbors(type, node, e);
        const NodeType dst_type = type != NodeType::Tweet ? NodeType::Tweet
                                  : e == EdgeType::TweetTweet ? NodeType::Tweet
                                  : e == EdgeType::TweetHashtag ? NodeType::Hashtag
                                                                : NodeType::Url;
        pool.assign(nbrs.begin(), nbrs.end());
        const auto take = std::min<std::size_t>(static_cast<std::size_t>(fanout), pool.size());
        if (take < pool.size()) {
          // Partial Fisher-Yates: the first `take` slots are a uniform sample.
          for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
          }
          pool.resize(take);
          std::sort(pool.begin(), pool.end());
        }
        for (NodeIndex dst : pool) {
          edges.push_back({type, node, dst_type, dst, e});
          if (slot(dst_type).add(dst).second) next.emplace_back(dst_type, dst);
        }
      }
    }
    sub.layers.push_back(std::move(edges));
    frontier = std::move(next);
  }

  std::vector<std::pair<NodeIndex, NodeIndex>> tt, th, tu;
  for (const auto& layer : sub.layers) {
    for (const auto& e : layer) {
      const auto src = slot(e.src_type).local.at(e.src);
      const auto dst = slot(e.dst_type).local.at(e.dst);
      switch (e.edge) {
        case EdgeType::TweetTweet: tt.emplace_back(src, dst); break;
        case EdgeType::TweetHashtag:
          th.emplace_back(e.src_type == NodeType::Tweet ? std::pair{src, dst} : std::pair{dst, src});
          break;
        case EdgeType::TweetUrl:
          tu.emplace_back(e.src_type == NodeType::Tweet ? std::pair{src, dst} : std::pair{dst, src});
          break;
      }
    }
  }
  sub.tweets = slot(NodeType::Tweet).globals;
  sub.hashtags = slot(NodeType::Hashtag).globals;
  sub.urls = slot(NodeType::Url).globals;
  sub.local = HeteroGraph::from_edges(names_of(g, NodeType::Tweet, sub.tweets),
                                      names_of(g, NodeType::Hashtag, sub.hashtags),
                                      names_of(g, NodeType::Url, sub.urls), std::move(tt), std::move(th),
                                      std::move(tu), g.directed_tweet_tweet());
  return sub;
}

SampledSubgraph full_scope(const HeteroGraph& g) {
  SampledSubgraph sub;
  for (NodeType t : {NodeType::Tweet, NodeType::Hashtag, NodeType::Url}) {
    auto& v = t == NodeType::Tweet ? sub.tweets : (t == NodeType::Hashtag ? sub.hashtags : sub.urls);
    v.resize(g.num_nodes(t));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<NodeIndex>(i);
  }
  sub.seeds = sub.tweets;
  sub.seed_local = sub.tweets;
  sub.local = g;
  return sub;
}

}  // namespace convctx
