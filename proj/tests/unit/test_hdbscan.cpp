#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <tuple>

#include "convctx/hdbscan.hpp"
#include "oracles.hpp"

using namespace convctx;
using namespace convctx::hdbscan;
using convctx::oracle::Reference;
using convctx::oracle::same_partition;

namespace {

using Mat = RowMatrix<double>;

Mat points_1d(std::initializer_list<double> xs) {
  Mat m(static_cast<Eigen::Index>(xs.size()), 1);
  std::copy(xs.begin(), xs.end(), m.data());
  return m;
}

Mat blobs(Rng& rng, std::vector<std::pair<int, double>> groups, int dim = 2) {
  std::normal_distribution<double> n(0, 1);
  int total = 0;
  for (auto [count, spread] : groups) total += count;
  Mat m(total, dim);
  int row = 0;
  for (std::size_t b = 0; b < groups.size(); ++b) {
    for (int i = 0; i < groups[b].first; ++i, ++row) {
      for (int d = 0; d < dim; ++d) m(row, d) = 8.0 * static_cast<double>(b) * (d == 0) + groups[b].second * n(rng);
    }
  }
  return m;
}

double tree_weight(const std::vector<Edge>& t) {
  double w = 0;
  for (const auto& e : t) w += e.weight;
  return w;
}

// Minimum spanning weight over every labelled tree (Pruefer sequences).
double exhaustive_mst_weight(const Mat& d) {
  const int n = static_cast<int>(d.rows());
  if (n < 2) return 0;
  std::vector<int> seq(static_cast<std::size_t>(n - 2), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<int> degree(static_cast<std::size_t>(n), 1);
    for (int s : seq) ++degree[static_cast<std::size_t>(s)];
    double w = 0;
    for (int s : seq) {
      int leaf = 0;
      while (degree[static_cast<std::size_t>(leaf)] != 1) ++leaf;
      w += d(leaf, s);
      --degree[static_cast<std::size_t>(leaf)];
      --degree[static_cast<std::size_t>(s)];
    }
    int u = -1, v = -1;
    for (int i = 0; i < n; ++i) {
      if (degree[static_cast<std::size_t>(i)] == 1) (u < 0 ? u : v) = i;
    }
    w += d(u, v);
    best = std::min(best, w);
    std::size_t k = 0;
    while (k < seq.size() && ++seq[k] == n) seq[k++] = 0;
    if (k == seq.size()) break;
  }
  return best;
}

}  // namespace

TEST(Mst, CollinearAndTrivial) {
  const Mat x = points_1d({0, 1, 3});
  Mat d(3, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) d(i, j) = std::abs(x(i, 0) - x(j, 0));
  }
  const auto t = mst(d);
  ASSERT_EQ(t.size(), 2u);
  std::set<std::pair<int, int>> edges;
  for (const auto& e : t) edges.emplace(e.a, e.b);
  EXPECT_EQ(edges, (std::set<std::pair<int, int>>{{0, 1}, {1, 2}}));
  EXPECT_TRUE(mst(Mat::Zero(1, 1)).empty());
}

TEST(Mst, MatchesExhaustiveMinimum) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0, 10);
  for (int n = 2; n <= 8; ++n) {
    for (int trial = 0; trial < (n == 8 ? 1 : 3); ++trial) {
      Mat d = Mat::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = std::round(u(rng));  // rounding forces ties
      }
      const auto t = mst(d);
      ASSERT_EQ(t.size(), static_cast<std::size_t>(n - 1));
      EXPECT_NEAR(tree_weight(t), exhaustive_mst_weight(d), 1e-12) << "n=" << n;
      EXPECT_EQ(mst(d).size(), t.size());
      for (std::size_t k = 0; k < t.size(); ++k) {
        EXPECT_LT(t[k].a, t[k].b);
        EXPECT_EQ(mst(d)[k].a, t[k].a);
      }
    }
  }
}

TEST(CoreDistances, CountsSelfFirst) {
  const Mat x = points_1d({0, 1, 3, 7});
  EXPECT_EQ(core_distances(x, 1), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(core_distances(x, 2), (std::vector<double>{1, 1, 2, 4}));
  EXPECT_EQ(core_distances(x, 9), (std::vector<double>{7, 6, 4, 7}));
}

TEST(Cluster, OneDimensionalExample) {
  const auto r = cluster(points_1d({1, 2, 10, 11}), {2, 1});
  EXPECT_EQ(r.labels, (std::vector<int>{0, 0, 1, 1}));
  EXPECT_EQ(r.num_clusters, 2);
  EXPECT_EQ(r.stability.size(), 2u);
}

TEST(Cluster, TooFewPointsAllNoise) {
  const auto r = cluster(points_1d({1, 2, 3}), {5, 1});
  EXPECT_EQ(r.labels, (std::vector<int>{kNoise, kNoise, kNoise}));
  EXPECT_EQ(r.num_clusters, 0);
  EXPECT_DOUBLE_EQ(r.noise_fraction(), 1.0);
}

TEST(Cluster, InputErrors) {
  Mat bad = points_1d({1, 2});
  bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(cluster(bad, {2, 1}), DataError);
  EXPECT_THROW(cluster(Mat(0, 2), {2, 1}), std::invalid_argument);
  EXPECT_THROW(cluster(points_1d({1, 2}), {1, 1}), std::invalid_argument);
  EXPECT_THROW(cluster(points_1d({1, 2}), {2, 0}), std::invalid_argument);
}

TEST(Cluster, MatchesReferenceOnSmallInputs) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> size(4, 16);
    std::uniform_real_distribution<double> spread(0.3, 2.5);
    std::vector<std::pair<int, double>> groups;
    const int nblobs = 1 + static_cast<int>(seed % 3);
    for (int b = 0; b < nblobs; ++b) groups.emplace_back(size(rng), spread(rng));
    const Mat x = blobs(rng, groups, 1 + static_cast<int>(seed % 3));
    if (x.rows() > 50) continue;
    for (int mcs : {2, 3, 5, 8}) {
      for (int ms : {1, 2, 4}) {
        const auto got = cluster(x, {mcs, ms});
        EXPECT_EQ(got.labels, Reference::run(x, mcs, ms)) << "seed " << seed << " mcs " << mcs << " ms " << ms;
        for (int k = 0; k < got.num_clusters; ++k) {
          EXPECT_GE(std::count(got.labels.begin(), got.labels.end(), k), mcs);
        }
      }
    }
  }
}

TEST(Cluster, InvariantToPointOrder) {
  Rng rng(31);
  const Mat x = blobs(rng, {{40, 0.6}, {30, 0.8}, {25, 0.5}}, 3);
  const auto base = cluster(x, {10, 1});
  std::vector<int> perm(static_cast<std::size_t>(x.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat y(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);
  const auto shuffled = cluster(y, {10, 1});
  std::vector<int> back(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) back[static_cast<std::size_t>(perm[i])] = shuffled.labels[i];
  EXPECT_TRUE(same_partition(base.labels, back));
}

TEST(Cluster, TranslatedCopiesClusterLikeTheOriginal) {
  Rng rng(8);
  const Mat x = blobs(rng, {{15, 0.5}, {12, 0.7}}, 2);
  const auto original = cluster(x, {4, 1});
  Mat both(2 * x.rows(), x.cols());
  both.topRows(x.rows()) = x;
  both.bottomRows(x.rows()) = x;
  both.bottomRows(x.rows()).col(0).array() += 1000.0;
  const auto doubled = cluster(both, {4, 1});
  const std::vector<int> first(doubled.labels.begin(), doubled.labels.begin() + x.rows());
  const std::vector<int> second(doubled.labels.begin() + x.rows(), doubled.labels.end());
  EXPECT_TRUE(same_partition(first, original.labels));
  EXPECT_TRUE(same_partition(second, original.labels));
  EXPECT_EQ(doubled.labels, Reference::run(both, 4, 1));
}

TEST(Cluster, MinSamplesOneIsEuclideanSingleLinkage) {
  Rng rng(13);
  const Mat x = blobs(rng, {{20, 0.5}, {20, 1.0}}, 2);
  const auto via_reach = mutual_reachability_mst(x, 1);
  Mat d(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  }
  const auto direct = mst(d);
  EXPECT_NEAR(tree_weight(via_reach), tree_weight(direct), 1e-9);
  const auto dendro = single_linkage(static_cast<int>(x.rows()), direct);
  const auto manual = select_clusters(condense(dendro, static_cast<int>(x.rows()), 5), static_cast<int>(x.rows()));
  EXPECT_EQ(manual.labels, cluster(x, {5, 1}).labels);
}

TEST(SingleLinkage, MergeSizesAndHeights) {
  const auto d = single_linkage(4, {{0, 1, 1.0}, {2, 3, 1.0}, {1, 2, 8.0}});
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[2].size, 4);
  EXPECT_DOUBLE_EQ(d[2].distance, 8.0);
  EXPECT_TRUE(std::is_sorted(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.distance < b.distance; }));
}
