#include "convctx/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace convctx::analysis {
namespace {

using json = nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t intersection_size(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

// Percentile of every entry under the strict-less rule.
std::vector<double> percentiles(const std::vector<double>& scores) {
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(scores.size(), 100.0);
  if (scores.size() < 2) return out;
  const double denom = static_cast<double>(scores.size() - 1);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), scores[i]) - sorted.begin();
    out[i] = 100.0 * static_cast<double>(below) / denom;
  }
  return out;
}

std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

std::int64_t tied_pairs(const std::vector<double>& sorted) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

json matrix_json(const RowMatrix<double>& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json number_or_null(double x) { return std::isnan(x) ? json(nullptr) : json(x); }

std::vector<std::string> context_names(const ContextSet& set, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(set.contexts[i].name());
  return out;
}

}  // namespace

void write_labels(const std::string& path, const std::vector<TweetLabel>& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write labels file '" + path + "'");
  out << "tweet_id,day,cluster_id\n";
  for (const auto& l : labels) out << l.tweet_id << ',' << l.day << ',' << l.cluster << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<TweetLabel> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line) != "tweet_id,day,cluster_id") {
    throw DataError(path + ": expected header 'tweet_id,day,cluster_id'");
  }
  std::vector<TweetLabel> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::stringstream ss(trim(line));
    TweetLabel l;
    std::string cluster;
    if (!std::getline(ss, l.tweet_id, ',') || !std::getline(ss, l.day, ',') || !std::getline(ss, cluster)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 3 columns");
    }
    try {
      std::size_t used = 0;
      l.cluster = std::stoi(cluster, &used);
      if (used != cluster.size() || l.cluster < hdbscan::kNoise) throw std::invalid_argument(cluster);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad cluster id '" + cluster + "'");
    }
    out.push_back(std::move(l));
  }
  return out;
}

DailyClusters cluster_daily(const std::vector<std::string>& ids, const std::vector<std::string>& days,
                            const RowMatrix<float>& embeddings, const hdbscan::ClusterConfig& config,
                            int threads) {
  if (ids.size() != days.size() || static_cast<Eigen::Index>(ids.size()) != embeddings.rows()) {
    throw DataError("cluster_daily: ids, days and embedding rows differ in length");
  }
  std::map<std::string, std::vector<std::size_t>> by_day;
  for (std::size_t i = 0; i < days.size(); ++i) by_day[days[i]].push_back(i);

  DailyClusters out;
  std::vector<const std::vector<std::size_t>*> rows;
  for (const auto& [day, r] : by_day) {
    out.days.push_back({day, r.size(), {}});
    rows.push_back(&r);
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(rows.size());
  auto worker = [&] {
    for (std::size_t d = next++; d < rows.size(); d = next++) {
      try {
        const auto& r = *rows[d];
        RowMatrix<double> points(static_cast<Eigen::Index>(r.size()), embeddings.cols());
        for (std::size_t i = 0; i < r.size(); ++i) {
          points.row(static_cast<Eigen::Index>(i)) = embeddings.row(static_cast<Eigen::Index>(r[i])).cast<double>();
        }
        out.days[d].result = hdbscan::cluster(points, config);
      } catch (...) {
        errors[d] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp(threads, 1, 64));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(n_threads, rows.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  out.labels.resize(ids.size());
  for (std::size_t d = 0; d < rows.size(); ++d) {
    const auto& r = *rows[d];
    for (std::size_t i = 0; i < r.size(); ++i) {
      out.labels[r[i]] = {ids[r[i]], out.days[d].day, out.days[d].result.labels[i]};
    }
  }
  return out;
}

json ContextSet::summary() const {
  json ctx = json::array();
  for (const auto& c : contexts) {
    ctx.push_back({{"context", c.name()}, {"tweets", c.tweets.size()}, {"retweets", c.retweets.size()},
                   {"members", c.members.size()}});
  }
  return {{"contexts", std::move(ctx)},
          {"noise_tweets", noise_tweets},
          {"unlabeled_tweets", unlabeled_tweets},
          {"orphan_retweets", orphan_retweets}};
}

RecordIndex index_records(const std::vector<MessageRecord>& records) {
  RecordIndex index;
  index.reserve(records.size());
  for (const auto& r : records) index.emplace(r.id, &r);
  return index;
}

std::unordered_map<std::string, std::string> retweet_origins(const HeteroGraph& g) {
  std::unordered_map<std::string, std::string> out;
  const auto& tweets = g.ids(NodeType::Tweet);
  for (const auto& [rt, idx] : g.retweet_map()) out.emplace(rt, tweets.name(idx));
  return out;
}

ContextSet assign_contexts(const std::vector<TweetLabel>& labels, const std::vector<MessageRecord>& records,
                           const std::unordered_map<std::string, std::string>& retweet_origin) {
  const auto index = index_records(records);
  std::map<std::pair<std::string, int>, std::vector<std::string>> grouped;
  std::unordered_map<std::string, std::pair<std::string, int>> key_of;
  ContextSet set;
  for (const auto& l : labels) {
    if (!index.count(l.tweet_id)) throw DataError("label for unknown tweet '" + l.tweet_id + "'");
    if (!key_of.emplace(l.tweet_id, std::make_pair(l.day, l.cluster)).second) {
      throw DataError("duplicate label for tweet '" + l.tweet_id + "'");
    }
    if (l.cluster == hdbscan::kNoise) {
      ++set.noise_tweets;
      continue;
    }
    grouped[{l.day, l.cluster}].push_back(l.tweet_id);
  }

  std::map<std::pair<std::string, int>, std::size_t> position;
  for (auto& [key, tweets] : grouped) {
    position[key] = set.contexts.size();
    Context c;
    c.day = key.first;
    c.cluster_id = key.second;
    c.tweets = std::move(tweets);
    for (const auto& t : c.tweets) set.context_of[t] = set.contexts.size();
    set.contexts.push_back(std::move(c));
  }

  for (const auto& r : records) {
    if (r.kind != MessageKind::Retweet) {
      if (!key_of.count(r.id)) ++set.unlabeled_tweets;
      continue;
    }
    const auto origin = retweet_origin.find(r.id);
    const auto ctx = origin == retweet_origin.end() ? set.context_of.end() : set.context_of.find(origin->second);
    if (ctx == set.context_of.end()) {
      ++set.orphan_retweets;
      continue;
    }
    set.contexts[ctx->second].retweets.push_back(r.id);
    set.context_of[r.id] = ctx->second;
  }

  for (auto& c : set.contexts) {
    for (const auto* list : {&c.tweets, &c.retweets}) {
      for (const auto& id : *list) c.members.push_back(index.at(id)->author_id);
    }
    std::sort(c.members.begin(), c.members.end());
    c.members.erase(std::unique(c.members.begin(), c.members.end()), c.members.end());
  }
  return set;
}

std::vector<std::size_t> largest_contexts(const ContextSet& set, std::size_t k) {
  std::vector<std::size_t> idx(set.contexts.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return set.contexts[a].members.size() > set.contexts[b].members.size();
  });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

double jaccard_percent(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto inter = intersection_size(a, b);
  const auto uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

double directional_percent(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty()) return 0.0;
  return 100.0 * static_cast<double>(intersection_size(a, b)) / static_cast<double>(a.size());
}

OverlapMatrix overlap_matrix(const ContextSet& set, std::size_t top_k) {
  OverlapMatrix m;
  m.contexts = largest_contexts(set, top_k);
  const auto k = static_cast<Eigen::Index>(m.contexts.size());
  m.jaccard = RowMatrix<double>::Zero(k, k);
  m.directional = RowMatrix<double>::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& a = set.contexts[m.contexts[i]].members;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      const auto& b = set.contexts[m.contexts[j]].members;
      m.jaccard(i, j) = j > i ? jaccard_percent(a, b) : m.jaccard(j, i);
      m.directional(i, j) = directional_percent(a, b);
    }
  }
  return m;
}

NodeIndex UserNetwork::add_user(const std::string& user) {
  if (auto i = users_.find(user)) return *i;
  return users_.add(user);
}

void UserNetwork::add_interaction(const std::string& from, const std::string& to, double weight) {
  if (!(weight > 0.0)) throw std::invalid_argument("interaction weight must be positive");
  const auto a = add_user(from);
  const auto b = add_user(to);
  if (a == b) return;
  weights_[{a, b}] += weight;
}

std::vector<WeightedEdge> UserNetwork::edges() const {
  std::vector<WeightedEdge> out;
  out.reserve(weights_.size());
  for (const auto& [k, w] : weights_) out.push_back({k.first, k.second, w});
  return out;
}

double UserNetwork::weight(const std::string& from, const std::string& to) const {
  const auto a = users_.find(from);
  const auto b = users_.find(to);
  if (!a || !b) return 0.0;
  const auto it = weights_.find({*a, *b});
  return it == weights_.end() ? 0.0 : it->second;
}

UserNetwork build_user_network(const Context& context, const RecordIndex& records) {
  UserNetwork net;
  for (const auto& m : context.members) net.add_user(m);
  auto author_of = [&](const std::optional<std::string>& id) -> const std::string* {
    if (!id) return nullptr;
    const auto it = records.find(*id);
    return it == records.end() ? nullptr : &it->second->author_id;
  };
  for (const auto* list : {&context.tweets, &context.retweets}) {
    for (const auto& id : *list) {
      const auto it = records.find(id);
      if (it == records.end()) continue;
      const auto& r = *it->second;
      for (const auto& target : {r.retweet_of, r.reply_to, r.quote_of}) {
        if (const auto* a = author_of(target)) net.add_interaction(r.author_id, *a);
      }
      for (const auto& q : r.quote_links) {
        if (r.quote_of && *r.quote_of == q) continue;
        if (const auto* a = author_of(q)) net.add_interaction(r.author_id, *a);
      }
      for (const auto& m : r.mentions) {
        if (!m.empty()) net.add_interaction(r.author_id, m);
      }
    }
  }
  return net;
}

UserNetwork combine_networks(const UserNetwork& a, const UserNetwork& b) {
  UserNetwork out;
  for (const auto* net : {&a, &b}) {
    for (const auto& u : net->users().names()) out.add_user(u);
  }
  for (const auto* net : {&a, &b}) {
    const auto& names = net->users();
    for (const auto& e : net->edges()) out.add_interaction(names.name(e.from), names.name(e.to), e.weight);
  }
  return out;
}

std::vector<double> pagerank(const UserNetwork& net, const PageRankConfig& config) {
  const auto n = net.size();
  if (n == 0) throw std::invalid_argument("pagerank: empty network");
  if (!(config.damping >= 0.0 && config.damping <= 1.0)) throw std::invalid_argument("pagerank: damping outside [0,1]");
  const auto edges = net.edges();
  std::vector<double> out_weight(n, 0.0);
  for (const auto& e : edges) out_weight[static_cast<std::size_t>(e.from)] += e.weight;

  const double d = config.damping;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> x(n, inv_n), y(n);
  double change = std::numeric_limits<double>::infinity();
  for (int it = 0; it < config.max_iters; ++it) {
    double dangling = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      if (out_weight[u] == 0.0) dangling += x[u];
    }
    std::fill(y.begin(), y.end(), (1.0 - d) * inv_n + d * dangling * inv_n);
    for (const auto& e : edges) {
      y[static_cast<std::size_t>(e.to)] +=
          d * x[static_cast<std::size_t>(e.from)] * e.weight / out_weight[static_cast<std::size_t>(e.from)];
    }
    change = 0.0;
    for (std::size_t v = 0; v < n; ++v) change += std::abs(y[v] - x[v]);
    x.swap(y);
    if (change < config.tol) {
      const double total = std::accumulate(x.begin(), x.end(), 0.0);
      for (auto& v : x) v /= total;
      return x;
    }
  }
  throw NumericError("pagerank did not converge in " + std::to_string(config.max_iters) +
                     " iterations (L1 residual " + std::to_string(change) + ")");
}

double percentile_rank(const std::vector<double>& scores, std::size_t i) {
  if (i >= scores.size()) throw std::out_of_range("percentile_rank: index out of range");
  if (scores.size() == 1) return 100.0;
  std::size_t below = 0;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    if (v != i && scores[v] < scores[i]) ++below;
  }
  return 100.0 * static_cast<double>(below) / static_cast<double>(scores.size() - 1);
}

double percentile_rank(const std::unordered_map<std::string, double>& scores, const std::string& user) {
  const auto it = scores.find(user);
  if (it == scores.end()) throw std::out_of_range("percentile_rank: unknown user '" + user + "'");
  if (scores.size() == 1) return 100.0;
  std::size_t below = 0;
  for (const auto& [u, s] : scores) {
    if (s < it->second) ++below;
  }
  return 100.0 * static_cast<double>(below) / static_cast<double>(scores.size() - 1);
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("kendall_tau: length mismatch");
  const auto n = a.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: need at least 2 items");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i] != a[j] ? a[i] < a[j] : b[i] < b[j];
  });
  std::vector<double> sa(n), sb(n);
  for (std::size_t k = 0; k < n; ++k) {
    sa[k] = a[order[k]];
    sb[k] = b[order[k]];
  }
  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t ties_a = tied_pairs(sa);
  std::int64_t ties_joint = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sa[j] == sa[i] && sb[j] == sb[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    ties_joint += t * (t - 1) / 2;
    i = j;
  }
  std::vector<double> buf(n);
  const std::int64_t swaps = count_inversions(sb, buf, 0, n);
  const std::int64_t ties_b = tied_pairs(sb);
  if (n0 == ties_a || n0 == ties_b) return std::numeric_limits<double>::quiet_NaN();
  const double numer = static_cast<double>(n0 - ties_a - ties_b + ties_joint - 2 * swaps);
  return numer / std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
}

double kendall_tau(const std::unordered_map<std::string, double>& a, const std::unordered_map<std::string, double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("kendall_tau: key sets differ");
  std::vector<std::string> keys;
  keys.reserve(a.size());
  for (const auto& [k, v] : a) {
    if (!b.count(k)) throw std::invalid_argument("kendall_tau: key '" + k + "' missing from second ranking");
    keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());
  std::vector<double> va, vb;
  for (const auto& k : keys) {
    va.push_back(a.at(k));
    vb.push_back(b.at(k));
  }
  return kendall_tau(va, vb);
}

json CentralityComparison::to_json(const ContextSet& set) const {
  json top_json = json::array();
  for (const auto& u : top) {
    top_json.push_back({{"user", u.user},
                        {"context", set.contexts[contexts[u.context]].name()},
                        {"true_rank", std::to_string(u.rank) + "_" + std::to_string(u.context + 1)},
                        {"context_score", u.context_score},
                        {"combined_score", u.combined_score},
                        {"combined_percentile", u.combined_percentile}});
  }
  return {{"contexts", {set.contexts[contexts[0]].name(), set.contexts[contexts[1]].name()}},
          {"member_overlap_percent", member_overlap},
          {"network_sizes", network_sizes},
          {"combined_size", combined_size},
          {"top", std::move(top_json)},
          {"kendall_tau",
           {{"overall", number_or_null(tau_overall)},
            {"overall_intersection", number_or_null(tau_overall_intersection)},
            {"per_context_intersection", {number_or_null(tau_intersection[0]), number_or_null(tau_intersection[1])}},
            {"per_context_union", {number_or_null(tau_union[0]), number_or_null(tau_union[1])}}}}};
}

CentralityComparison compare_centrality(const ContextSet& set, const RecordIndex& records, std::size_t context_a,
                                        std::size_t context_b, std::size_t top_n, const PageRankConfig& config) {
  if (context_a >= set.contexts.size() || context_b >= set.contexts.size() || context_a == context_b) {
    throw std::invalid_argument("compare_centrality: need two distinct existing contexts");
  }
  CentralityComparison out;
  out.contexts = {context_a, context_b};
  out.member_overlap = jaccard_percent(set.contexts[context_a].members, set.contexts[context_b].members);
  const std::array<UserNetwork, 2> nets = {build_user_network(set.contexts[context_a], records),
                                           build_user_network(set.contexts[context_b], records)};
  const UserNetwork combined = combine_networks(nets[0], nets[1]);
  const auto combined_scores = pagerank(combined, config);
  const auto combined_pct = percentiles(combined_scores);
  out.combined_size = combined.size();

  std::vector<double> pooled_ctx, pooled_comb, pooled_ctx_union, pooled_comb_union;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& net = nets[c];
    out.network_sizes[c] = net.size();
    const auto scores = pagerank(net, config);
    const auto ctx_pct = percentiles(scores);
    std::vector<double> comb_of(net.size());
    for (std::size_t u = 0; u < net.size(); ++u) {
      comb_of[u] = combined_scores[static_cast<std::size_t>(*combined.users().find(net.users().name(static_cast<NodeIndex>(u))))];
    }

    std::vector<std::size_t> order(net.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (scores[x] != scores[y]) return scores[x] > scores[y];
      return net.users().name(static_cast<NodeIndex>(x)) < net.users().name(static_cast<NodeIndex>(y));
    });
    for (std::size_t r = 0; r < std::min(top_n, order.size()); ++r) {
      const auto u = order[r];
      const auto& name = net.users().name(static_cast<NodeIndex>(u));
      const auto ci = static_cast<std::size_t>(*combined.users().find(name));
      out.top.push_back({name, c, static_cast<int>(r + 1), scores[u], combined_scores[ci], combined_pct[ci]});
    }

    out.tau_intersection[c] = net.size() >= 2 ? kendall_tau(scores, comb_of) : std::nan("");
    for (std::size_t u = 0; u < net.size(); ++u) {
      pooled_ctx.push_back(ctx_pct[u]);
      pooled_comb.push_back(combined_pct[static_cast<std::size_t>(*combined.users().find(net.users().name(static_cast<NodeIndex>(u))))]);
    }

    std::vector<double> filled(combined.size(), 0.0);
    for (std::size_t u = 0; u < net.size(); ++u) {
      filled[static_cast<std::size_t>(*combined.users().find(net.users().name(static_cast<NodeIndex>(u))))] = scores[u];
    }
    out.tau_union[c] = combined.size() >= 2 ? kendall_tau(filled, combined_scores) : std::nan("");
    const auto filled_pct = percentiles(filled);
    pooled_ctx_union.insert(pooled_ctx_union.end(), filled_pct.begin(), filled_pct.end());
    pooled_comb_union.insert(pooled_comb_union.end(), combined_pct.begin(), combined_pct.end());
  }
  out.tau_overall = pooled_ctx_union.size() >= 2 ? kendall_tau(pooled_ctx_union, pooled_comb_union) : std::nan("");
  out.tau_overall_intersection = pooled_ctx.size() >= 2 ? kendall_tau(pooled_ctx, pooled_comb) : std::nan("");
  return out;
}

json TransitionResult::to_json(const ContextSet& set) const {
  auto edges_json = [&](const std::vector<TransitionEdge>& edges) {
    json arr = json::array();
    for (const auto& e : edges) {
      arr.push_back({{"from", set.contexts[contexts[e.from]].name()},
                     {"to", set.contexts[contexts[e.to]].name()},
                     {"probability", e.probability},
                     {"count", e.count}});
    }
    return arr;
  };
  return {{"contexts", context_names(set, contexts)},
          {"counts", matrix_json(counts)},
          {"probabilities", matrix_json(probabilities)},
          {"repeats", repeats},
          {"kept", edges_json(kept)},
          {"trimmed", edges_json(trimmed)},
          {"users_with_transitions", users_with_transitions}};
}

TransitionResult transition_matrix(const ContextSet& set, const RecordIndex& records, double trim,
                                   const std::vector<std::size_t>& only) {
  if (!(trim >= 0.0 && trim <= 1.0)) throw std::invalid_argument("transition_matrix: trim outside [0,1]");
  TransitionResult out;
  if (only.empty()) {
    out.contexts.resize(set.contexts.size());
    std::iota(out.contexts.begin(), out.contexts.end(), std::size_t{0});
  } else {
    out.contexts = only;
  }
  const auto k = static_cast<Eigen::Index>(out.contexts.size());
  out.counts = RowMatrix<double>::Zero(k, k);
  out.probabilities = RowMatrix<double>::Zero(k, k);
  out.repeats.assign(out.contexts.size(), 0.0);

  struct Engagement {
    std::int64_t time;
    std::size_t pos;
    const std::string* id;
  };
  std::map<std::string, std::vector<Engagement>> by_user;
  for (std::size_t p = 0; p < out.contexts.size(); ++p) {
    const auto& c = set.contexts.at(out.contexts[p]);
    for (const auto* list : {&c.tweets, &c.retweets}) {
      for (const auto& id : *list) {
        const auto it = records.find(id);
        if (it == records.end()) continue;
        by_user[it->second->author_id].push_back({it->second->created_at, p, &it->first});
      }
    }
  }
  for (auto& [user, events] : by_user) {
    std::sort(events.begin(), events.end(), [](const Engagement& a, const Engagement& b) {
      if (a.time != b.time) return a.time < b.time;
      if (a.pos != b.pos) return a.pos < b.pos;
      return *a.id < *b.id;
    });
    bool moved = false;
    for (std::size_t i = 1; i < events.size(); ++i) {
      const auto from = events[i - 1].pos, to = events[i].pos;
      if (from == to) {
        out.repeats[from] += 1.0;
      } else {
        out.counts(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to)) += 1.0;
        moved = true;
      }
    }
    if (moved) ++out.users_with_transitions;
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    const double total = out.counts.row(i).sum();
    if (total <= 0.0) continue;
    out.probabilities.row(i) = out.counts.row(i) / total;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (out.counts(i, j) <= 0.0) continue;
      TransitionEdge e{static_cast<std::size_t>(i), static_cast<std::size_t>(j), out.probabilities(i, j),
                       out.counts(i, j)};
      (e.probability >= trim ? out.kept : out.trimmed).push_back(e);
    }
  }
  return out;
}

LabelPropagation propagate_labels(const std::unordered_map<std::string, std::string>& url_labels,
                                  const HeteroGraph& g, int steps) {
  if (steps < 1) throw std::invalid_argument("propagate_labels: steps must be >= 1");
  const auto nt = g.num_nodes(NodeType::Tweet);
  const auto& tweet_ids = g.ids(NodeType::Tweet);
  std::vector<const std::string*> label(nt, nullptr);
  std::vector<char> settled(nt, 0);  // labeled or dropped
  LabelPropagation out;

  std::map<NodeIndex, std::set<std::string>> offers;
  for (const auto& [url, lab] : url_labels) {
    const auto u = g.ids(NodeType::Url).find(url);
    if (!u) continue;
    for (NodeIndex t : g.neighbors(NodeType::Url, *u, EdgeType::TweetUrl)) offers[t].insert(lab);
  }
  for (int step = 0; step < steps; ++step) {
    if (step > 0) {
      offers.clear();
      for (std::size_t t = 0; t < nt; ++t) {
        if (!label[t] || out.hops[tweet_ids.name(static_cast<NodeIndex>(t))] != step - 1) continue;
        for (auto nbrs : {g.neighbors(NodeType::Tweet, static_cast<NodeIndex>(t), EdgeType::TweetTweet),
                          g.tweet_in_neighbors(static_cast<NodeIndex>(t))}) {
          for (NodeIndex v : nbrs) {
            if (!settled[v]) offers[v].insert(*label[t]);
          }
        }
      }
    }
    std::size_t labeled = 0;
    for (const auto& [t, labs] : offers) {
      settled[t] = 1;
      if (labs.size() > 1) {
        ++out.conflicts;
        continue;
      }
      const auto& name = tweet_ids.name(t);
      label[t] = &out.labels.emplace(name, *labs.begin()).first->second;
      out.hops[name] = step;
      ++labeled;
    }
    out.labeled_per_step.push_back(labeled);
  }
  return out;
}

std::unordered_map<std::string, std::string> read_url_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open URL label file '" + path + "'");
  std::unordered_map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || (lineno == 1 && t == "url,label")) continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos) throw DataError(path + ":" + std::to_string(lineno) + ": expected 'url,label'");
    const auto label = trim(t.substr(comma + 1));
    if (label.empty()) throw DataError(path + ":" + std::to_string(lineno) + ": empty label");
    try {
      out[normalize_url(trim(t.substr(0, comma)))] = label;
    } catch (const std::invalid_argument& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::size_t> cumulative_retweets(const HeteroGraph& g, NodeType type) {
  std::vector<std::size_t> per_tweet(g.num_nodes(NodeType::Tweet), 0);
  for (const auto& [rt, idx] : g.retweet_map()) ++per_tweet[static_cast<std::size_t>(idx)];
  if (type == NodeType::Tweet) return per_tweet;
  const auto edge = type == NodeType::Hashtag ? EdgeType::TweetHashtag : EdgeType::TweetUrl;
  std::vector<std::size_t> out(g.num_nodes(type), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (NodeIndex t : g.neighbors(type, static_cast<NodeIndex>(i), edge)) out[i] += per_tweet[static_cast<std::size_t>(t)];
  }
  return out;
}

std::vector<NodePair> nearest_pairs(const RowMatrix<float>& embeddings, const std::vector<std::string>& ids,
                                    const std::vector<std::size_t>& weights, std::size_t top_n, std::size_t top_k) {
  if (ids.size() != weights.size() || static_cast<Eigen::Index>(ids.size()) != embeddings.rows()) {
    throw std::invalid_argument("nearest_pairs: ids, weights and rows differ in length");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return weights[a] != weights[b] ? weights[a] > weights[b] : ids[a] < ids[b];
  });
  if (order.size() > top_n) order.resize(top_n);
  std::vector<NodePair> pairs;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const auto a = static_cast<Eigen::Index>(order[i]);
      const auto b = static_cast<Eigen::Index>(order[j]);
      const double d = (embeddings.row(a).cast<double>() - embeddings.row(b).cast<double>()).norm();
      const auto& ia = ids[order[i]];
      const auto& ib = ids[order[j]];
      pairs.push_back(ia < ib ? NodePair{ia, ib, d} : NodePair{ib, ia, d});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const NodePair& x, const NodePair& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  if (pairs.size() > top_k) pairs.resize(top_k);
  return pairs;
}

json PartitionQuality::to_json() const {
  return {{"ari", ari},       {"ari_with_noise", ari_with_noise}, {"nmi", nmi},
          {"purity", purity}, {"noise_fraction", noise_fraction}, {"items", items}};
}

namespace {

double adjusted_rand(const std::vector<int>& labels, const std::vector<int>& truth, bool skip_noise) {
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  double n = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (skip_noise && labels[i] == hdbscan::kNoise) continue;
    table[{labels[i], truth[i]}] += 1.0;
    rows[labels[i]] += 1.0;
    cols[truth[i]] += 1.0;
    n += 1.0;
  }
  if (n == 0.0) return 0.0;
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : table) sum_ij += pairs(v);
  for (const auto& [k, v] : rows) sum_a += pairs(v);
  for (const auto& [k, v] : cols) sum_b += pairs(v);
  const double expected = sum_a * sum_b / pairs(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  return max_index == expected ? 1.0 : (sum_ij - expected) / (max_index - expected);
}

}  // namespace

PartitionQuality partition_quality(const std::vector<int>& labels, const std::vector<int>& truth) {
  if (labels.size() != truth.size()) throw std::invalid_argument("partition_quality: length mismatch");
  PartitionQuality q;
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == hdbscan::kNoise) continue;
    table[{labels[i], truth[i]}] += 1.0;
    rows[labels[i]] += 1.0;
    cols[truth[i]] += 1.0;
    ++q.items;
  }
  q.noise_fraction = labels.empty() ? 0.0 : 1.0 - static_cast<double>(q.items) / static_cast<double>(labels.size());
  q.ari_with_noise = adjusted_rand(labels, truth, false);
  if (q.items == 0) return q;
  const double n = static_cast<double>(q.items);
  q.ari = adjusted_rand(labels, truth, true);

  double h_rows = 0.0, h_cols = 0.0, mi = 0.0;
  for (const auto& [k, v] : rows) h_rows -= v / n * std::log(v / n);
  for (const auto& [k, v] : cols) h_cols -= v / n * std::log(v / n);
  for (const auto& [k, v] : table) mi += v / n * std::log(n * v / (rows[k.first] * cols[k.second]));
  q.nmi = h_rows + h_cols == 0.0 ? 1.0 : std::max(0.0, 2.0 * mi / (h_rows + h_cols));

  std::map<int, double> best;
  for (const auto& [k, v] : table) best[k.first] = std::max(best[k.first], v);
  double majority = 0.0;
  for (const auto& [k, v] : best) majority += v;
  q.purity = majority / n;
  return q;
}

}  // namespace convctx::analysis
