#include "convctx/dti.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "binio.hpp"

namespace convctx::dti {
namespace {

constexpr std::array<Relation, kNumRelations> kRelations = {
    Relation::HashtagFromTweet, Relation::UrlFromTweet, Relation::TweetFromTweet, Relation::TweetFromHashtag,
    Relation::TweetFromUrl};

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
RowMatrix<T> glorot(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  RowMatrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
  return m;
}

template <typename T>
RowMatrix<T> prelu_matrix(const RowMatrix<T>& x, T slope) {
  return x.unaryExpr([slope](T v) { return v >= T(0) ? v : slope * v; });
}

// Gradient of PReLU wrt its input and accumulated slope gradient.
template <typename T>
RowMatrix<T> prelu_backward(const RowMatrix<T>& pre, const RowMatrix<T>& d_out, T slope, T& d_slope) {
  RowMatrix<T> d_pre(pre.rows(), pre.cols());
  T acc = T(0);
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    const T z = pre.data()[i];
    const T g = d_out.data()[i];
    if (z >= T(0)) {
      d_pre.data()[i] = g;
    } else {
      d_pre.data()[i] = slope * g;
      acc += g * z;
    }
  }
  d_slope += acc;
  return d_pre;
}

template <typename T>
typename MeanOperators<T>::Sparse mean_operator(const HeteroGraph& g, NodeType row_type, EdgeType edge,
                                                std::size_t cols, bool include_self = false) {
  using Triplet = Eigen::Triplet<T>;
  const auto rows = g.num_nodes(row_type);
  std::vector<Triplet> trips;
  for (std::size_t i = 0; i < rows; ++i) {
    const auto nbrs = g.neighbors(row_type, static_cast<NodeIndex>(i), edge);
    const std::size_t n = nbrs.size() + (include_self ? 1 : 0);
    if (n == 0) continue;
    const T w = T(1) / static_cast<T>(n);
    for (NodeIndex j : nbrs) trips.emplace_back(static_cast<int>(i), j, w);
    if (include_self) trips.emplace_back(static_cast<int>(i), static_cast<int>(i), w);
  }
  typename MeanOperators<T>::Sparse m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

template <typename T>
struct LayerCache {
  RowMatrix<T> input;
  RowMatrix<T> mean_ht, mean_ut, mean_tt;
  RowMatrix<T> hashtag_pre, hashtag_out, url_pre, url_out;
  RowMatrix<T> mean_th, mean_tu;
  RowMatrix<T> tweet_pre, tweet_out;
};

template <typename T>
LayerCache<T> forward_layer(const MeanOperators<T>& ops, const RowMatrix<T>& x, const LayerParams<T>& p) {
  LayerCache<T> c;
  c.input = x;
  const auto& ht = p[Relation::HashtagFromTweet];
  const auto& ut = p[Relation::UrlFromTweet];
  const auto& tt = p[Relation::TweetFromTweet];
  const auto& th = p[Relation::TweetFromHashtag];
  const auto& tu = p[Relation::TweetFromUrl];

  c.mean_ht = ops.hashtag_from_tweet * x;
  c.hashtag_pre = c.mean_ht * ht.neighbor_weight;
  c.hashtag_pre.rowwise() += ht.bias.transpose();
  c.hashtag_out = prelu_matrix(c.hashtag_pre, p.prelu_slope);

  c.mean_ut = ops.url_from_tweet * x;
  c.url_pre = c.mean_ut * ut.neighbor_weight;
  c.url_pre.rowwise() += ut.bias.transpose();
  c.url_out = prelu_matrix(c.url_pre, p.prelu_slope);

  c.mean_th = ops.tweet_from_hashtag * c.hashtag_out;
  c.mean_tu = ops.tweet_from_url * c.url_out;
  c.mean_tt = ops.tweet_from_tweet * x;
  c.tweet_pre = c.mean_th * th.neighbor_weight + c.mean_tu * tu.neighbor_weight + x * tt.self_weight +
                c.mean_tt * tt.neighbor_weight;
  const Vector<T> bias_sum = th.bias + tu.bias + tt.bias;
  c.tweet_pre.rowwise() += bias_sum.transpose();
  c.tweet_pre /= T(3);
  c.tweet_out = prelu_matrix(c.tweet_pre, p.prelu_slope);
  return c;
}

// Accumulates parameter gradients into `grad`; returns d(input) when asked.
template <typename T>
RowMatrix<T> backward_layer(const MeanOperators<T>& ops, const LayerCache<T>& c, const LayerParams<T>& p,
                            const RowMatrix<T>& d_tweet_out, LayerParams<T>& grad, bool need_input_grad) {
  const auto& ht = p[Relation::HashtagFromTweet];
  const auto& ut = p[Relation::UrlFromTweet];
  const auto& tt = p[Relation::TweetFromTweet];
  const auto& th = p[Relation::TweetFromHashtag];
  const auto& tu = p[Relation::TweetFromUrl];
  auto& g_ht = grad[Relation::HashtagFromTweet];
  auto& g_ut = grad[Relation::UrlFromTweet];
  auto& g_tt = grad[Relation::TweetFromTweet];
  auto& g_th = grad[Relation::TweetFromHashtag];
  auto& g_tu = grad[Relation::TweetFromUrl];

  RowMatrix<T> d_sum = prelu_backward(c.tweet_pre, d_tweet_out, p.prelu_slope, grad.prelu_slope);
  d_sum /= T(3);
  const Vector<T> d_bias = d_sum.colwise().sum().transpose();

  g_th.neighbor_weight.noalias() += c.mean_th.transpose() * d_sum;
  g_th.bias += d_bias;
  const RowMatrix<T> d_hashtag_out = ops.tweet_from_hashtag.transpose() * (d_sum * th.neighbor_weight.transpose());

  g_tu.neighbor_weight.noalias() += c.mean_tu.transpose() * d_sum;
  g_tu.bias += d_bias;
  const RowMatrix<T> d_url_out = ops.tweet_from_url.transpose() * (d_sum * tu.neighbor_weight.transpose());

  g_tt.self_weight.noalias() += c.input.transpose() * d_sum;
  g_tt.neighbor_weight.noalias() += c.mean_tt.transpose() * d_sum;
  g_tt.bias += d_bias;

  const RowMatrix<T> d_hashtag_pre = prelu_backward(c.hashtag_pre, d_hashtag_out, p.prelu_slope, grad.prelu_slope);
  g_ht.neighbor_weight.noalias() += c.mean_ht.transpose() * d_hashtag_pre;
  g_ht.bias += d_hashtag_pre.colwise().sum().transpose();

  const RowMatrix<T> d_url_pre = prelu_backward(c.url_pre, d_url_out, p.prelu_slope, grad.prelu_slope);
  g_ut.neighbor_weight.noalias() += c.mean_ut.transpose() * d_url_pre;
  g_ut.bias += d_url_pre.colwise().sum().transpose();

  if (!need_input_grad) return {};
  RowMatrix<T> d_x = d_sum * tt.self_weight.transpose();
  d_x += ops.tweet_from_tweet.transpose() * (d_sum * tt.neighbor_weight.transpose());
  d_x += ops.hashtag_from_tweet.transpose() * (d_hashtag_pre * ht.neighbor_weight.transpose());
  d_x += ops.url_from_tweet.transpose() * (d_url_pre * ut.neighbor_weight.transpose());
  return d_x;
}

template <typename T>
RowMatrix<T> gather_rows(const RowMatrix<T>& m, std::span<const NodeIndex> rows) {
  RowMatrix<T> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

template <typename T>
void check_features(const HeteroGraph& g, const RowMatrix<T>& x, int in_dim) {
  if (static_cast<std::size_t>(x.rows()) != g.num_nodes(NodeType::Tweet)) {
    throw DataError("feature rows (" + std::to_string(x.rows()) + ") do not match tweet count (" +
                    std::to_string(g.num_nodes(NodeType::Tweet)) + ")");
  }
  if (x.cols() != in_dim) {
    throw DataError("feature dimension " + std::to_string(x.cols()) + " does not match model input dimension " +
                    std::to_string(in_dim));
  }
}

double auc(std::vector<double> pos, std::vector<double> neg) {
  std::vector<std::pair<double, int>> all;
  all.reserve(pos.size() + neg.size());
  for (double p : pos) all.emplace_back(p, 1);
  for (double n : neg) all.emplace_back(n, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second) rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  return (rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

}  // namespace

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::HashtagFromTweet: return "hashtag_from_tweet";
    case Relation::UrlFromTweet: return "url_from_tweet";
    case Relation::TweetFromTweet: return "tweet_from_tweet";
    case Relation::TweetFromHashtag: return "tweet_from_hashtag";
    case Relation::TweetFromUrl: return "tweet_from_url";
  }
  return "";
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(int in_dim, int hidden_dim) {
  if (in_dim < 1 || hidden_dim < 1) throw std::invalid_argument("model dimensions must be positive");
  ModelParams p;
  p.in_dim = in_dim;
  p.hidden_dim = hidden_dim;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const int d_in = l == 0 ? in_dim : hidden_dim;
    auto& layer = p.layers[l];
    layer.prelu_slope = T(0);
    for (Relation r : kRelations) {
      auto& rel = layer[r];
      const bool from_tweets = r == Relation::HashtagFromTweet || r == Relation::UrlFromTweet ||
                               r == Relation::TweetFromTweet;
      rel.neighbor_weight = RowMatrix<T>::Zero(from_tweets ? d_in : hidden_dim, hidden_dim);
      if (r == Relation::TweetFromTweet) rel.self_weight = RowMatrix<T>::Zero(d_in, hidden_dim);
      rel.bias = Vector<T>::Zero(hidden_dim);
    }
  }
  p.discriminator = RowMatrix<T>::Zero(hidden_dim, hidden_dim);
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(int in_dim, int hidden_dim, Rng& rng) {
  ModelParams p = zeros(in_dim, hidden_dim);
  for (auto& layer : p.layers) {
    layer.prelu_slope = T(0.25);
    for (auto& rel : layer.relations) {
      if (rel.self_weight.size()) {
        rel.self_weight = glorot<T>(static_cast<int>(rel.self_weight.rows()), hidden_dim, rng);
      }
      rel.neighbor_weight = glorot<T>(static_cast<int>(rel.neighbor_weight.rows()), hidden_dim, rng);
    }
  }
  p.discriminator = glorot<T>(hidden_dim, hidden_dim, rng);
  return p;
}

template <typename T>
std::vector<ParamBlock<T>> ModelParams<T>::blocks() {
  std::vector<ParamBlock<T>> out;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1) + ".";
    auto& layer = layers[l];
    for (Relation r : kRelations) {
      auto& rel = layer[r];
      const std::string base = prefix + std::string(to_string(r)) + ".";
      if (rel.self_weight.size()) {
        out.push_back({base + "self_weight", rel.self_weight.data(), static_cast<std::size_t>(rel.self_weight.size())});
      }
      out.push_back(
          {base + "neighbor_weight", rel.neighbor_weight.data(), static_cast<std::size_t>(rel.neighbor_weight.size())});
      out.push_back({base + "bias", rel.bias.data(), static_cast<std::size_t>(rel.bias.size())});
    }
    out.push_back({prefix + "prelu_slope", &layer.prelu_slope, 1});
  }
  out.push_back({"discriminator", discriminator.data(), static_cast<std::size_t>(discriminator.size())});
  return out;
}

template <typename T>
std::vector<ParamBlock<const T>> ModelParams<T>::blocks() const {
  auto mutable_blocks = const_cast<ModelParams*>(this)->blocks();
  std::vector<ParamBlock<const T>> out;
  out.reserve(mutable_blocks.size());
  for (auto& b : mutable_blocks) out.push_back({std::move(b.name), b.data, b.size});
  return out;
}

template <typename T>
std::size_t ModelParams<T>::size() const {
  std::size_t n = 0;
  for (const auto& b : blocks()) n += b.size;
  return n;
}

template <typename T>
Vector<T> ModelParams<T>::pack() const {
  Vector<T> flat(static_cast<Eigen::Index>(size()));
  std::size_t off = 0;
  for (const auto& b : blocks()) {
    std::copy(b.data, b.data + b.size, flat.data() + off);
    off += b.size;
  }
  return flat;
}

template <typename T>
void ModelParams<T>::unpack(const Vector<T>& flat) {
  if (static_cast<std::size_t>(flat.size()) != size()) {
    throw std::invalid_argument("unpack: expected " + std::to_string(size()) + " values, got " +
                                std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (auto& b : blocks()) {
    std::copy(flat.data() + off, flat.data() + off + b.size, b.data);
    off += b.size;
  }
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.in_dim = in_dim;
  out.hidden_dim = hidden_dim;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    out.layers[l].prelu_slope = static_cast<U>(layers[l].prelu_slope);
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      const auto& src = layers[l].relations[r];
      auto& dst = out.layers[l].relations[r];
      dst.self_weight = src.self_weight.template cast<U>();
      dst.neighbor_weight = src.neighbor_weight.template cast<U>();
      dst.bias = src.bias.template cast<U>();
    }
  }
  out.discriminator = discriminator.template cast<U>();
  return out;
}

template <typename T>
Vector<T> sage_aggregate(const std::optional<Vector<T>>& x_self, const std::vector<Vector<T>>& neighbors,
                         const RowMatrix<T>& self_weight, const RowMatrix<T>& neighbor_weight, const Vector<T>& bias) {
  const auto d_out = bias.size();
  if (neighbor_weight.cols() != d_out) throw std::invalid_argument("sage_aggregate: neighbor weight/bias mismatch");
  Vector<T> out = bias;
  if (x_self) {
    if (self_weight.rows() != x_self->size() || self_weight.cols() != d_out) {
      throw std::invalid_argument("sage_aggregate: self weight shape mismatch");
    }
    out.noalias() += self_weight.transpose() * *x_self;
  }
  if (!neighbors.empty()) {
    Vector<T> mean = Vector<T>::Zero(neighbor_weight.rows());
    for (const auto& n : neighbors) {
      if (n.size() != neighbor_weight.rows()) throw std::invalid_argument("sage_aggregate: neighbor dimension mismatch");
      mean += n;
    }
    mean /= static_cast<T>(neighbors.size());
    out.noalias() += neighbor_weight.transpose() * mean;
  }
  return out;
}

template <typename T>
Vector<T> prelu(const Vector<T>& x, T slope) {
  return x.unaryExpr([slope](T v) { return v >= T(0) ? v : slope * v; });
}

template <typename T>
MeanOperators<T> MeanOperators<T>::build(const HeteroGraph& g) {
  const auto nt = g.num_nodes(NodeType::Tweet);
  const auto nh = g.num_nodes(NodeType::Hashtag);
  const auto nu = g.num_nodes(NodeType::Url);
  MeanOperators ops;
  ops.hashtag_from_tweet = mean_operator<T>(g, NodeType::Hashtag, EdgeType::TweetHashtag, nt);
  ops.url_from_tweet = mean_operator<T>(g, NodeType::Url, EdgeType::TweetUrl, nt);
  // The tweet relation averages over N(t) plus t itself.
  ops.tweet_from_tweet = mean_operator<T>(g, NodeType::Tweet, EdgeType::TweetTweet, nt, true);
  ops.tweet_from_hashtag = mean_operator<T>(g, NodeType::Tweet, EdgeType::TweetHashtag, nh);
  ops.tweet_from_url = mean_operator<T>(g, NodeType::Tweet, EdgeType::TweetUrl, nu);
  return ops;
}

template <typename T>
Embeddings<T> forward(const MeanOperators<T>& ops, const RowMatrix<T>& x, const ModelParams<T>& params) {
  if (x.cols() != params.in_dim) throw std::invalid_argument("forward: feature dimension mismatch");
  auto l1 = forward_layer(ops, x, params.layers[0]);
  auto l2 = forward_layer(ops, l1.tweet_out, params.layers[1]);
  return {std::move(l2.tweet_out), std::move(l2.hashtag_out), std::move(l2.url_out)};
}

template <typename T>
Embeddings<T> forward(const HeteroGraph& g, const RowMatrix<T>& x, const ModelParams<T>& params,
                      const SampledSubgraph* scope) {
  check_features(g, x, params.in_dim);
  if (!scope) return forward(MeanOperators<T>::build(g), x, params);
  for (NodeType t : {NodeType::Tweet, NodeType::Hashtag, NodeType::Url}) {
    for (NodeIndex v : scope->global_of(t)) {
      if (v < 0 || static_cast<std::size_t>(v) >= g.num_nodes(t)) {
        throw std::out_of_range("forward: scope references invalid " + std::string(convctx::to_string(t)) + " " +
                                std::to_string(v));
      }
    }
  }
  return forward(MeanOperators<T>::build(scope->local), gather_rows(x, scope->tweets), params);
}

template <typename T>
RowMatrix<T> corrupt(const RowMatrix<T>& x, Rng& rng) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  RowMatrix<T> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

template <typename T>
Vector<T> readout(const RowMatrix<T>& e) {
  if (e.rows() == 0) throw std::invalid_argument("readout: no embeddings");
  Vector<T> mean = e.colwise().mean().transpose();
  return mean.unaryExpr([](T v) { return sigmoid(v); });
}

template <typename T>
T discriminate(const Vector<T>& x, const Vector<T>& s, const RowMatrix<T>& w) {
  if (w.rows() != x.size() || w.cols() != s.size()) throw std::invalid_argument("discriminate: dimension mismatch");
  return sigmoid(x.dot(w * s));
}

double dgi_loss(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw std::invalid_argument("dgi_loss: empty score list");
  double total = 0.0;
  for (double d : pos) total -= std::log(std::clamp(d, kBceEpsilon, 1.0 - kBceEpsilon));
  for (double d : neg) total -= std::log(1.0 - std::clamp(d, kBceEpsilon, 1.0 - kBceEpsilon));
  return total / static_cast<double>(pos.size() + neg.size());
}

template <typename T>
LossResult<T> loss_and_gradient(const MeanOperators<T>& ops, const RowMatrix<T>& x, const RowMatrix<T>& x_corrupt,
                                std::span<const NodeIndex> rows, const ModelParams<T>& params, bool with_gradient) {
  if (rows.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  const auto pos1 = forward_layer(ops, x, params.layers[0]);
  const auto pos2 = forward_layer(ops, pos1.tweet_out, params.layers[1]);
  const auto neg1 = forward_layer(ops, x_corrupt, params.layers[0]);
  const auto neg2 = forward_layer(ops, neg1.tweet_out, params.layers[1]);

  const RowMatrix<T> e_pos = gather_rows(pos2.tweet_out, rows);
  const RowMatrix<T> e_neg = gather_rows(neg2.tweet_out, rows);
  const auto m = static_cast<Eigen::Index>(rows.size());
  const Vector<T> summary = readout(e_pos);
  const Vector<T> ws = params.discriminator * summary;
  const Vector<T> logit_pos = e_pos * ws;
  const Vector<T> logit_neg = e_neg * ws;

  const T eps = static_cast<T>(kBceEpsilon);
  const T inv_n = T(1) / static_cast<T>(2 * m);
  LossResult<T> result;
  result.pos_scores.resize(static_cast<std::size_t>(m));
  result.neg_scores.resize(static_cast<std::size_t>(m));
  Vector<T> g_pos(m), g_neg(m);
  T loss = T(0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const T dp = sigmoid(logit_pos[i]);
    const T dn = sigmoid(logit_neg[i]);
    result.pos_scores[static_cast<std::size_t>(i)] = dp;
    result.neg_scores[static_cast<std::size_t>(i)] = dn;
    const T cp = std::clamp(dp, eps, T(1) - eps);
    const T cn = std::clamp(dn, eps, T(1) - eps);
    loss -= std::log(cp) + std::log(T(1) - cn);
    // d/dlogit of the clamped BCE; zero where the clamp is active.
    g_pos[i] = (dp > eps && dp < T(1) - eps) ? (dp - T(1)) * inv_n : T(0);
    g_neg[i] = (dn > eps && dn < T(1) - eps) ? dn * inv_n : T(0);
  }
  result.loss = loss * inv_n;
  if (!with_gradient) return result;

  result.gradient = ModelParams<T>::zeros(params.in_dim, params.hidden_dim);
  auto& grad = result.gradient;

  const Vector<T> d_ws = e_pos.transpose() * g_pos + e_neg.transpose() * g_neg;
  grad.discriminator = d_ws * summary.transpose();
  const Vector<T> d_summary = params.discriminator.transpose() * d_ws;
  const Vector<T> d_mean = d_summary.cwiseProduct(summary.cwiseProduct(Vector<T>::Ones(summary.size()) - summary));

  RowMatrix<T> d_e_pos = g_pos * ws.transpose();
  d_e_pos.rowwise() += (d_mean / static_cast<T>(m)).transpose();
  const RowMatrix<T> d_e_neg = g_neg * ws.transpose();

  RowMatrix<T> d_out_pos = RowMatrix<T>::Zero(pos2.tweet_out.rows(), pos2.tweet_out.cols());
  RowMatrix<T> d_out_neg = RowMatrix<T>::Zero(neg2.tweet_out.rows(), neg2.tweet_out.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    d_out_pos.row(rows[static_cast<std::size_t>(i)]) += d_e_pos.row(i);
    d_out_neg.row(rows[static_cast<std::size_t>(i)]) += d_e_neg.row(i);
  }

  const RowMatrix<T> d_l1_pos = backward_layer(ops, pos2, params.layers[1], d_out_pos, grad.layers[1], true);
  backward_layer(ops, pos1, params.layers[0], d_l1_pos, grad.layers[0], false);
  const RowMatrix<T> d_l1_neg = backward_layer(ops, neg2, params.layers[1], d_out_neg, grad.layers[1], true);
  backward_layer(ops, neg1, params.layers[0], d_l1_neg, grad.layers[0], false);
  return result;
}

template <typename T>
Vector<T> gradients(const HeteroGraph& g, const RowMatrix<T>& x, const ModelParams<T>& params,
                    const SampledSubgraph& batch, Rng& rng, T* loss_out) {
  check_features(g, x, params.in_dim);
  const auto ops = MeanOperators<T>::build(batch.local);
  const RowMatrix<T> local = gather_rows(x, batch.tweets);
  const RowMatrix<T> corrupted = corrupt(local, rng);
  auto result = loss_and_gradient(ops, local, corrupted, batch.seed_local, params, true);
  for (const auto& b : result.gradient.blocks()) {
    for (std::size_t i = 0; i < b.size; ++i) {
      if (!std::isfinite(static_cast<double>(b.data[i]))) {
        throw NumericError("non-finite gradient in parameter block '" + b.name + "'");
      }
    }
  }
  if (loss_out) *loss_out = result.loss;
  return result.gradient.pack();
}

template <typename T>
Adam<T>::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_ = Vector<T>::Zero(static_cast<Eigen::Index>(n));
  v_ = Vector<T>::Zero(static_cast<Eigen::Index>(n));
}

template <typename T>
void Adam<T>::step(Vector<T>& params, const Vector<T>& grad) {
  if (grad.size() != params.size() || grad.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double m = beta1_ * static_cast<double>(m_[i]) + (1.0 - beta1_) * g;
    const double v = beta2_ * static_cast<double>(v_[i]) + (1.0 - beta2_) * g * g;
    m_[i] = static_cast<T>(m);
    v_[i] = static_cast<T>(v);
    params[i] -= static_cast<T>(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
  }
}

void validate(const TrainConfig& c) {
  if (c.batch_size < 1 || c.fanout < 1 || c.depth < 1 || c.epochs < 1 || c.patience < 1 || c.hidden_dim < 1) {
    throw std::invalid_argument("train config: batch_size, fanout, depth, epochs, patience, hidden_dim must be positive");
  }
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw std::invalid_argument("train config: lr must be finite and >= 0");
}

TrainResult train(const HeteroGraph& g, const FeatureMatrix& features, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  validate(config);
  const auto nt = g.num_nodes(NodeType::Tweet);
  if (nt == 0) throw DataError("train: graph has no tweets");
  Rng rng(config.seed);
  auto params = ModelParams<float>::init(features.dim(), config.hidden_dim, rng);
  check_features(g, features.values, params.in_dim);
  Vector<float> flat = params.pack();
  Adam<float> adam(static_cast<std::size_t>(flat.size()), config.lr);

  std::vector<NodeIndex> order(nt);
  std::iota(order.begin(), order.end(), NodeIndex{0});
  TrainResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < nt; start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(nt, start + static_cast<std::size_t>(config.batch_size));
      const std::span<const NodeIndex> seeds(order.data() + start, end - start);
      const auto batch = sample_subgraph(g, seeds, config.fanout, config.depth, rng);
      float loss = 0.0f;
      const Vector<float> grad = gradients(g, features.values, params, batch, rng, &loss);
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batches + 1));
      }
      adam.step(flat, grad);
      params.unpack(flat);
      total += loss;
      ++batches;
    }
    const double mean = total / batches;
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
    if (mean < best) {
      best = mean;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

double discriminator_auc(const HeteroGraph& g, const FeatureMatrix& features, const ModelParams<float>& params,
                         Rng& rng) {
  check_features(g, features.values, params.in_dim);
  const auto ops = MeanOperators<float>::build(g);
  const auto pos = forward(ops, features.values, params);
  const auto neg = forward(ops, corrupt(features.values, rng), params);
  const Vector<float> summary = readout(pos.tweets);
  const Vector<float> ws = params.discriminator * summary;
  const Vector<float> lp = pos.tweets * ws;
  const Vector<float> ln = neg.tweets * ws;
  return auc(std::vector<double>(lp.data(), lp.data() + lp.size()),
             std::vector<double>(ln.data(), ln.data() + ln.size()));
}

std::pair<std::vector<std::string>, RowMatrix<float>> EmbeddingSet::expanded_tweets() const {
  std::vector<std::string> ids = tweet_ids;
  RowMatrix<float> m(tweets.rows() + static_cast<Eigen::Index>(retweet_rows.size()), tweets.cols());
  m.topRows(tweets.rows()) = tweets;
  Eigen::Index r = tweets.rows();
  for (const auto& [id, row] : retweet_rows) {
    ids.push_back(id);
    m.row(r++) = tweets.row(row);
  }
  return {std::move(ids), std::move(m)};
}

EmbeddingSet embed_all(const HeteroGraph& g, const FeatureMatrix& features, const ModelParams<float>& params) {
  auto emb = forward(g, features.values, params);
  EmbeddingSet out;
  out.tweet_ids = g.ids(NodeType::Tweet).names();
  out.hashtag_ids = g.ids(NodeType::Hashtag).names();
  out.url_ids = g.ids(NodeType::Url).names();
  out.tweets = std::move(emb.tweets);
  out.hashtags = std::move(emb.hashtags);
  out.urls = std::move(emb.urls);
  for (const auto& [id, idx] : g.retweet_map()) out.retweet_rows.emplace_back(id, idx);
  std::sort(out.retweet_rows.begin(), out.retweet_rows.end());
  return out;
}

namespace {
constexpr std::string_view kParamsMagic = "CCPARAM";
constexpr std::string_view kEmbMagic = "CCEMB";
constexpr std::uint32_t kFormatVersion = 1;

void put_matrix(std::ostream& out, const RowMatrix<float>& m) {
  binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(float) * m.size()));
}

RowMatrix<float> get_matrix(std::istream& in, std::string_view what) {
  const auto rows = binio::get<std::uint64_t>(in, what);
  const auto cols = binio::get<std::uint32_t>(in, what);
  if (rows > (1ull << 32) || cols > (1u << 16)) throw DataError(std::string(what) + ": implausible shape");
  RowMatrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (m.size() && !in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(float) * m.size()))) {
    throw DataError("truncated " + std::string(what));
  }
  return m;
}
}  // namespace

void write_params(const std::string& path, const ModelParams<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write params file '" + path + "'");
  binio::put_magic(out, kParamsMagic, kFormatVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.in_dim));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.hidden_dim));
  const auto blocks = params.blocks();
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    binio::put_string(out, b.name);
    binio::put<std::uint64_t>(out, b.size);
    out.write(reinterpret_cast<const char*>(b.data), static_cast<std::streamsize>(sizeof(float) * b.size));
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

ModelParams<float> read_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open params file '" + path + "'");
  binio::expect_magic(in, kParamsMagic, kFormatVersion, "params file");
  const auto in_dim = binio::get<std::uint32_t>(in, "params header");
  const auto hidden = binio::get<std::uint32_t>(in, "params header");
  if (in_dim == 0 || hidden == 0 || in_dim > (1u << 16) || hidden > (1u << 16)) {
    throw DataError("params file: implausible dimensions");
  }
  auto params = ModelParams<float>::zeros(static_cast<int>(in_dim), static_cast<int>(hidden));
  auto blocks = params.blocks();
  const auto count = binio::get<std::uint32_t>(in, "params header");
  if (count != blocks.size()) throw DataError("params file: expected " + std::to_string(blocks.size()) + " blocks");
  for (auto& b : blocks) {
    const auto name = binio::get_string(in, "params block name");
    const auto size = binio::get<std::uint64_t>(in, "params block size");
    if (name != b.name || size != b.size) throw DataError("params file: unexpected block '" + name + "'");
    if (!in.read(reinterpret_cast<char*>(b.data), static_cast<std::streamsize>(sizeof(float) * size))) {
      throw DataError("params file: truncated block '" + name + "'");
    }
    for (std::size_t i = 0; i < b.size; ++i) {
      if (!std::isfinite(b.data[i])) throw DataError("params file: non-finite value in '" + name + "'");
    }
  }
  return params;
}

void write_embeddings(const std::string& path, const EmbeddingSet& emb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding file '" + path + "'");
  binio::put_magic(out, kEmbMagic, kFormatVersion);
  binio::put<std::uint32_t>(out, 3);
  auto section = [&](NodeType t, const RowMatrix<float>& m, const std::vector<std::string>& ids) {
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(t));
    put_matrix(out, m);
    for (const auto& id : ids) binio::put_string(out, id);
  };
  section(NodeType::Tweet, emb.tweets, emb.tweet_ids);
  section(NodeType::Hashtag, emb.hashtags, emb.hashtag_ids);
  section(NodeType::Url, emb.urls, emb.url_ids);
  binio::put<std::uint64_t>(out, emb.retweet_rows.size());
  for (const auto& [id, row] : emb.retweet_rows) {
    binio::put_string(out, id);
    binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(row));
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

EmbeddingSet read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file '" + path + "'");
  binio::expect_magic(in, kEmbMagic, kFormatVersion, "embedding file");
  if (binio::get<std::uint32_t>(in, "embedding header") != 3) throw DataError("embedding file: expected 3 sections");
  EmbeddingSet emb;
  auto section = [&](NodeType t, RowMatrix<float>& m, std::vector<std::string>& ids) {
    if (binio::get<std::uint8_t>(in, "embedding section") != static_cast<std::uint8_t>(t)) {
      throw DataError("embedding file: sections out of order");
    }
    m = get_matrix(in, "embedding section");
    ids.resize(static_cast<std::size_t>(m.rows()));
    for (auto& id : ids) id = binio::get_string(in, "embedding ids");
    if (!m.allFinite()) throw DataError("embedding file: non-finite values");
  };
  section(NodeType::Tweet, emb.tweets, emb.tweet_ids);
  section(NodeType::Hashtag, emb.hashtags, emb.hashtag_ids);
  section(NodeType::Url, emb.urls, emb.url_ids);
  const auto n = binio::get<std::uint64_t>(in, "retweet table");
  if (n > (1ull << 32)) throw DataError("embedding file: implausible retweet count");
  for (std::uint64_t i = 0; i < n; ++i) {
    auto id = binio::get_string(in, "retweet table");
    const auto row = binio::get<std::uint64_t>(in, "retweet table");
    if (row >= static_cast<std::uint64_t>(emb.tweets.rows())) throw DataError("embedding file: retweet row out of range");
    emb.retweet_rows.emplace_back(std::move(id), static_cast<std::int64_t>(row));
  }
  return emb;
}

#define CONVCTX_INSTANTIATE(T)                                                                                    \
  template struct ModelParams<T>;                                                                                 \
  template struct MeanOperators<T>;                                                                               \
  template class Adam<T>;                                                                                         \
  template Vector<T> sage_aggregate<T>(const std::optional<Vector<T>>&, const std::vector<Vector<T>>&,            \
                                       const RowMatrix<T>&, const RowMatrix<T>&, const Vector<T>&);               \
  template Vector<T> prelu<T>(const Vector<T>&, T);                                                               \
  template Embeddings<T> forward<T>(const MeanOperators<T>&, const RowMatrix<T>&, const ModelParams<T>&);         \
  template Embeddings<T> forward<T>(const HeteroGraph&, const RowMatrix<T>&, const ModelParams<T>&,               \
                                    const SampledSubgraph*);                                                      \
  template RowMatrix<T> corrupt<T>(const RowMatrix<T>&, Rng&);                                                    \
  template Vector<T> readout<T>(const RowMatrix<T>&);                                                             \
  template T discriminate<T>(const Vector<T>&, const Vector<T>&, const RowMatrix<T>&);                            \
  template LossResult<T> loss_and_gradient<T>(const MeanOperators<T>&, const RowMatrix<T>&, const RowMatrix<T>&, \
                                              std::span<const NodeIndex>, const ModelParams<T>&, bool);           \
  template Vector<T> gradients<T>(const HeteroGraph&, const RowMatrix<T>&, const ModelParams<T>&,                 \
                                  const SampledSubgraph&, Rng&, T*);

CONVCTX_INSTANTIATE(float)
CONVCTX_INSTANTIATE(double)
#undef CONVCTX_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace convctx::dti
