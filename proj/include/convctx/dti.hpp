#pragma once

// Two-layer heterogeneous GraphSAGE encoder over tweets, hashtags and URLs,
// trained without labels by discriminating real from feature-shuffled graphs.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>

#include "convctx/common.hpp"
#include "convctx/features.hpp"
#include "convctx/graph.hpp"

namespace convctx::dti {

enum class Relation : std::uint8_t {
  HashtagFromTweet = 0,
  UrlFromTweet = 1,
  TweetFromTweet = 2,
  TweetFromHashtag = 3,
  TweetFromUrl = 4,
};
inline constexpr std::size_t kNumRelations = 5;
inline constexpr std::size_t kNumLayers = 2;

std::string_view to_string(Relation r);

template <typename T>
struct RelationParams {
  RowMatrix<T> self_weight;      // d_self x d_out, empty when the relation has no self term
  RowMatrix<T> neighbor_weight;  // d_neighbor x d_out
  Vector<T> bias;                // d_out
};

template <typename T>
struct LayerParams {
  std::array<RelationParams<T>, kNumRelations> relations;
  T prelu_slope = T(0.25);

  RelationParams<T>& operator[](Relation r) { return relations[static_cast<std::size_t>(r)]; }
  const RelationParams<T>& operator[](Relation r) const { return relations[static_cast<std::size_t>(r)]; }
};

template <typename T>
struct ParamBlock {
  std::string name;
  T* data;
  std::size_t size;
};

template <typename T>
struct ModelParams {
  std::array<LayerParams<T>, kNumLayers> layers;
  RowMatrix<T> discriminator;  // hidden x hidden
  int in_dim = 0;
  int hidden_dim = 0;

  // Glorot-uniform weights, zero biases, PReLU slope 0.25.
  static ModelParams init(int in_dim, int hidden_dim, Rng& rng);
  static ModelParams zeros(int in_dim, int hidden_dim);

  // Every trainable tensor in a fixed order; pack/unpack follow it.
  std::vector<ParamBlock<T>> blocks();
  std::vector<ParamBlock<const T>> blocks() const;
  std::size_t size() const;
  Vector<T> pack() const;
  void unpack(const Vector<T>& flat);

  template <typename U>
  ModelParams<U> cast() const;
};

// out = W1^T x_self (if present) + mean_j W2^T x_j + b; the neighbor term is
// zero for an empty neighbor list. Weights are d_in x d_out.
template <typename T>
Vector<T> sage_aggregate(const std::optional<Vector<T>>& x_self, const std::vector<Vector<T>>& neighbors,
                         const RowMatrix<T>& self_weight, const RowMatrix<T>& neighbor_weight, const Vector<T>& bias);

template <typename T>
Vector<T> prelu(const Vector<T>& x, T slope);

// Row-normalized (mean) aggregation operators of a graph. Rows with no
// neighbors are empty.
template <typename T>
struct MeanOperators {
  using Sparse = Eigen::SparseMatrix<T, Eigen::RowMajor>;
  Sparse hashtag_from_tweet;  // hashtags x tweets
  Sparse url_from_tweet;      // urls x tweets
  Sparse tweet_from_tweet;    // tweets x tweets, each row averages N(t) and t
  Sparse tweet_from_hashtag;  // tweets x hashtags
  Sparse tweet_from_url;      // tweets x urls

  static MeanOperators build(const HeteroGraph& g);
};

template <typename T>
struct Embeddings {
  RowMatrix<T> tweets, hashtags, urls;
};

template <typename T>
Embeddings<T> forward(const MeanOperators<T>& ops, const RowMatrix<T>& tweet_features, const ModelParams<T>& params);

// Forward over a sampled scope: rows follow scope.tweets / hashtags / urls.
template <typename T>
Embeddings<T> forward(const HeteroGraph& g, const RowMatrix<T>& tweet_features, const ModelParams<T>& params,
                      const SampledSubgraph* scope = nullptr);

// Uniform random row permutation.
template <typename T>
RowMatrix<T> corrupt(const RowMatrix<T>& features, Rng& rng);

// sigmoid(mean of rows). Throws on empty input.
template <typename T>
Vector<T> readout(const RowMatrix<T>& embeddings);

template <typename T>
T discriminate(const Vector<T>& x, const Vector<T>& summary, const RowMatrix<T>& weight);

inline constexpr double kBceEpsilon = 1e-7;

// Mean binary cross entropy, positives labelled 1, negatives 0.
double dgi_loss(std::span<const double> pos_scores, std::span<const double> neg_scores);

template <typename T>
struct LossResult {
  T loss = T(0);
  ModelParams<T> gradient;
  std::vector<T> pos_scores, neg_scores;
};

// Loss over `rows` (local tweet indices, duplicates allowed) with the summary
// taken from the positive pass, and its exact gradient when requested.
template <typename T>
LossResult<T> loss_and_gradient(const MeanOperators<T>& ops, const RowMatrix<T>& features,
                                const RowMatrix<T>& corrupted, std::span<const NodeIndex> rows,
                                const ModelParams<T>& params, bool with_gradient = true);

// Flat gradient of the loss on a sampled batch; the negative pass uses the
// same subgraph with shuffled tweet features. Throws NumericError naming the
// first parameter block with a non-finite entry.
template <typename T>
Vector<T> gradients(const HeteroGraph& g, const RowMatrix<T>& features, const ModelParams<T>& params,
                    const SampledSubgraph& batch, Rng& rng, T* loss_out = nullptr);

template <typename T>
class Adam {
 public:
  explicit Adam(std::size_t n, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Vector<T>& params, const Vector<T>& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  Vector<T> m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  int batch_size = 24000;
  int fanout = 20;
  int depth = 3;
  double lr = 1e-3;
  int epochs = 25;
  int patience = 3;
  int hidden_dim = 128;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

struct TrainResult {
  ModelParams<float> params;  // at the best epoch
  std::vector<double> epoch_losses;
  int best_epoch = 0;  // zero-based
  bool early_stopped = false;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

TrainResult train(const HeteroGraph& g, const FeatureMatrix& features, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// AUC of the discriminator separating real from corrupted tweet embeddings
// over the full graph.
double discriminator_auc(const HeteroGraph& g, const FeatureMatrix& features, const ModelParams<float>& params,
                         Rng& rng);

struct EmbeddingSet {
  std::vector<std::string> tweet_ids;
  RowMatrix<float> tweets;
  std::vector<std::string> hashtag_ids;
  RowMatrix<float> hashtags;
  std::vector<std::string> url_ids;
  RowMatrix<float> urls;
  // retweet id -> row in `tweets`
  std::vector<std::pair<std::string, std::int64_t>> retweet_rows;

  // Tweet rows extended to retweets: (ids, matrix) with retweets appended.
  std::pair<std::vector<std::string>, RowMatrix<float>> expanded_tweets() const;
};

EmbeddingSet embed_all(const HeteroGraph& g, const FeatureMatrix& features, const ModelParams<float>& params);

void write_params(const std::string& path, const ModelParams<float>& params);
ModelParams<float> read_params(const std::string& path);
void write_embeddings(const std::string& path, const EmbeddingSet& emb);
EmbeddingSet read_embeddings(const std::string& path);

}  // namespace convctx::dti
