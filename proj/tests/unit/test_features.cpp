#include <gtest/gtest.h>

#include <cmath>
#include <bit>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <fstream>

#include "convctx/features.hpp"
#include "fixtures.hpp"

using namespace convctx;
using namespace convctx::testing;

namespace {

IdfTable two_doc_idf() { return fit_tfidf({{"en", {"a", "b"}}, {"en", {"a", "c"}}}); }

WordVectorTable unit_vectors() {
  WordVectorTable t(2);
  t.add("en", "a", {1, 0});
  t.add("en", "b", {0, 1});
  t.add("en", "c", {0.5f, 0.5f});
  return t;
}

FeatureMatrix matrix(const std::vector<std::vector<float>>& rows, const std::vector<std::uint8_t>& known) {
  FeatureMatrix f;
  f.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  f.known = known;
  return f;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("convctx_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(FitTfidf, HandComputedIdf) {
  const auto idf = two_doc_idf();
  EXPECT_DOUBLE_EQ(*idf.idf("en", "a"), 0.0);
  EXPECT_DOUBLE_EQ(*idf.idf("en", "b"), std::log(2.0));
  EXPECT_DOUBLE_EQ(*idf.idf("en", "c"), std::log(2.0));
  EXPECT_FALSE(idf.idf("en", "z").has_value());
  EXPECT_EQ(idf.documents("en"), 2u);
}

TEST(FitTfidf, SingleDocumentLanguageAndDisjointLanguages) {
  const auto idf = fit_tfidf({{"de", {"x", "y", "x"}}, {"en", {"x"}}, {"en", {"q"}}});
  EXPECT_DOUBLE_EQ(*idf.idf("de", "x"), 0.0);
  EXPECT_DOUBLE_EQ(*idf.idf("de", "y"), 0.0);
  EXPECT_DOUBLE_EQ(*idf.idf("en", "x"), std::log(2.0));
  EXPECT_FALSE(idf.idf("de", "q").has_value());
}

TEST(FitTfidf, RecordsWithoutLanguageIgnored) {
  auto a = tweet("1");
  a.tokens = {"w"};
  auto b = tweet("2");
  b.tokens = {"v"};
  b.lang.reset();
  const auto idf = fit_tfidf(std::vector<const MessageRecord*>{&a, &b});
  EXPECT_EQ(idf.documents("en"), 1u);
  EXPECT_FALSE(idf.idf("en", "v").has_value());
}

TEST(EmbedText, WeightedAverage) {
  const auto idf = two_doc_idf();
  const auto v = unit_vectors();
  const auto out = embed_text({"a", "b"}, std::string("en"), v, idf);
  ASSERT_TRUE(out);
  EXPECT_DOUBLE_EQ((*out)[0], 0.0);
  EXPECT_DOUBLE_EQ((*out)[1], 1.0);

  // tf 2 for b against tf 1 for c at equal idf gives weights 2/3 and 1/3.
  const auto mix = embed_text({"b", "b", "c"}, std::string("en"), v, idf);
  ASSERT_TRUE(mix);
  EXPECT_NEAR((*mix)[0], 0.5 / 3, 1e-7);
  EXPECT_NEAR((*mix)[1], 2.0 / 3 + 0.5 / 3, 1e-7);
}

TEST(EmbedText, AbsentCases) {
  const auto idf = two_doc_idf();
  const auto v = unit_vectors();
  EXPECT_FALSE(embed_text({"b"}, std::nullopt, v, idf));
  EXPECT_FALSE(embed_text({"b"}, std::string("fr"), v, idf));
  EXPECT_FALSE(embed_text({"a"}, std::string("en"), v, idf));
  EXPECT_FALSE(embed_text({"zzz"}, std::string("en"), v, idf));
  EXPECT_FALSE(embed_text({}, std::string("en"), v, idf));
}

TEST(EmbedText, SingleTokenIsItsVector) {
  const auto idf = two_doc_idf();
  const auto out = embed_text({"c"}, std::string("en"), unit_vectors(), idf);
  ASSERT_TRUE(out);
  EXPECT_FLOAT_EQ(static_cast<float>((*out)[0]), 0.5f);
  EXPECT_FLOAT_EQ(static_cast<float>((*out)[1]), 0.5f);
}

TEST(EmbedText, NormBoundedByLargestTokenVector) {
  Rng rng(9);
  std::normal_distribution<float> n(0, 1);
  WordVectorTable t(8);
  std::vector<std::pair<std::string, std::vector<std::string>>> docs;
  for (int w = 0; w < 30; ++w) {
    std::vector<float> vec(8);
    for (auto& x : vec) x = n(rng);
    t.add("en", "w" + std::to_string(w), vec);
  }
  for (int d = 0; d < 20; ++d) {
    std::vector<std::string> doc;
    for (int k = 0; k < 6; ++k) doc.push_back("w" + std::to_string(std::uniform_int_distribution<int>(0, 29)(rng)));
    docs.emplace_back("en", doc);
  }
  const auto idf = fit_tfidf(docs);
  for (const auto& [lang, doc] : docs) {
    const auto out = embed_text(doc, lang, t, idf);
    if (!out) continue;
    double norm = 0, bound = 0;
    for (double x : *out) norm += x * x;
    for (const auto& w : doc) {
      double s = 0;
      for (float x : *t.find(lang, w)) s += double(x) * x;
      bound = std::max(bound, s);
    }
    EXPECT_LE(std::sqrt(norm), std::sqrt(bound) + 1e-6);
  }
}

TEST(WordVectorTable, DimensionMismatchAndFiles) {
  WordVectorTable t(2);
  EXPECT_THROW(t.add("en", "x", {1, 2, 3}), DataError);
  const auto dir = temp_dir("vectors");
  {
    std::ofstream out(dir / "en.vec");
    out << "2 2\nhello 1 2\nworld 3 4\n";
    std::ofstream fr(dir / "wiki.fr.align.vec");
    fr << "1 2\nbonjour 0.5 0.25\n";
  }
  const auto loaded = WordVectorTable::load_directory(dir.string());
  EXPECT_EQ(loaded.dim(), 2);
  EXPECT_EQ(loaded.size("en"), 2u);
  EXPECT_EQ(loaded.size("fr"), 1u);
  EXPECT_EQ(*loaded.find("en", "world"), (std::vector<float>{3, 4}));
  EXPECT_EQ(loaded.find("fr", "hello"), nullptr);
  {
    std::ofstream bad(dir / "de.vec");
    bad << "1 3\nhallo 1 2 3\n";
  }
  EXPECT_THROW(WordVectorTable::load_directory(dir.string()), DataError);
}

TEST(PropagateFeatures, PathExample) {
  const auto g = build_graph({tweet("A"), reply("B", "A"), reply("C", "B")}).graph;
  const auto f = matrix({{1, 0}, {0, 0}, {0, 1}}, {1, 0, 1});
  const auto res = propagate_features(g, f);
  EXPECT_FLOAT_EQ(res.features.values(1, 0), 0.5f);
  EXPECT_FLOAT_EQ(res.features.values(1, 1), 0.5f);
  EXPECT_TRUE(res.report.converged);
  EXPECT_LE(res.report.iterations, 2);
  EXPECT_EQ(res.report.unknown_rows, 1u);
}

TEST(PropagateFeatures, AllKnownIsFixedPoint) {
  const auto g = build_graph({tweet("A", "a", {"h"}), reply("B", "A")}).graph;
  const auto f = matrix({{1, 2}, {3, 4}}, {1, 1});
  const auto res = propagate_features(g, f);
  EXPECT_EQ(res.features.values, f.values);
  EXPECT_TRUE(res.report.converged);
}

TEST(PropagateFeatures, UnreachableRowsStayZeroAndAreReported) {
  const auto g = build_graph({tweet("A"), reply("B", "A"), tweet("X"), reply("Y", "X")}).graph;
  const auto f = matrix({{1, 1}, {0, 0}, {0, 0}, {0, 0}}, {1, 0, 0, 0});
  const auto res = propagate_features(g, f);
  EXPECT_FLOAT_EQ(res.features.values(1, 0), 1.0f);
  EXPECT_EQ(res.features.values.row(2).norm(), 0.0f);
  EXPECT_EQ(res.features.values.row(3).norm(), 0.0f);
  EXPECT_EQ(res.report.unreached, (std::vector<NodeIndex>{2, 3}));
}

TEST(PropagateFeatures, HashtagsRelayFeaturesUnlessTweetOnly) {
  const auto g = build_graph({tweet("A", "a", {"h"}), tweet("B", "a", {"h"})}).graph;
  const auto f = matrix({{2, 4}, {0, 0}}, {1, 0});
  EXPECT_FLOAT_EQ(propagate_features(g, f).features.values(1, 1), 4.0f);
  PropagationConfig tt_only;
  tt_only.tweet_tweet_only = true;
  EXPECT_FLOAT_EQ(propagate_features(g, f, tt_only).features.values(1, 1), 0.0f);
}

TEST(PropagateFeatures, KnownRowsBitwiseAndConvexHull) {
  Rng rng(17);
  std::uniform_real_distribution<float> u(-3, 3);
  std::bernoulli_distribution known(0.4);
  std::vector<MessageRecord> recs;
  for (int i = 0; i < 300; ++i) {
    const auto id = "t" + std::to_string(i);
    auto r = i > 0 && known(rng) ? reply(id, "t" + std::to_string(std::uniform_int_distribution<int>(0, i - 1)(rng)))
                                 : tweet(id);
    if (known(rng)) r.canonical_hashtags.push_back("h" + std::to_string(i % 13));
    recs.push_back(r);
  }
  const auto g = build_graph(recs).graph;
  const auto n = g.num_nodes(NodeType::Tweet);
  FeatureMatrix f;
  f.values.resize(static_cast<Eigen::Index>(n), 3);
  f.known.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.known[i] = known(rng);
    for (int j = 0; j < 3; ++j) f.values(static_cast<Eigen::Index>(i), j) = f.known[i] ? u(rng) : 0.0f;
  }
  // Long unknown chains mix slowly, so this graph gets a larger budget.
  PropagationConfig config;
  config.max_iters = 5000;
  const auto res = propagate_features(g, f, config);
  EXPECT_TRUE(res.report.converged);

  // Component labels over tweets and hashtags by union-find.
  const auto nh = g.num_nodes(NodeType::Hashtag);
  std::vector<std::size_t> parent(n + nh);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (std::size_t t = 0; t < n; ++t) {
    for (auto v : g.neighbors(NodeType::Tweet, static_cast<NodeIndex>(t), EdgeType::TweetTweet)) parent[find(t)] = find(v);
    for (auto h : g.neighbors(NodeType::Tweet, static_cast<NodeIndex>(t), EdgeType::TweetHashtag)) parent[find(t)] = find(n + h);
  }
  std::map<std::size_t, std::pair<Eigen::RowVector3f, Eigen::RowVector3f>> hull;
  for (std::size_t t = 0; t < n; ++t) {
    if (!f.known[t]) continue;
    Eigen::RowVector3f row = f.values.row(static_cast<Eigen::Index>(t));
    auto [it, fresh] = hull.emplace(find(t), std::pair{row, row});
    if (!fresh) {
      it->second.first = it->second.first.cwiseMin(row);
      it->second.second = it->second.second.cwiseMax(row);
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    if (f.known[t]) {
      for (int j = 0; j < 3; ++j) {
        EXPECT_EQ(std::bit_cast<std::uint32_t>(res.features.values(i, j)), std::bit_cast<std::uint32_t>(f.values(i, j)));
      }
      continue;
    }
    auto it = hull.find(find(t));
    if (it == hull.end()) {
      EXPECT_EQ(res.features.values.row(i).norm(), 0.0f);
      continue;
    }
    for (int j = 0; j < 3; ++j) {
      EXPECT_GE(res.features.values(i, j), it->second.first(j) - 1e-5f);
      EXPECT_LE(res.features.values(i, j), it->second.second(j) + 1e-5f);
    }
  }
}

TEST(EmbedTweets, RowsFollowGraphOrder) {
  auto a = tweet("A");
  a.tokens = {"b"};
  auto b = tweet("B");
  b.tokens = {"nothing"};
  auto c = tweet("C");
  c.tokens = {"c"};
  std::vector<MessageRecord> recs{a, b, c};
  const auto g = build_graph(recs).graph;
  const auto f = embed_tweets(g, recs, unit_vectors());
  ASSERT_EQ(f.rows(), 3u);
  EXPECT_EQ(f.known, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_FLOAT_EQ(f.values(0, 1), 1.0f);
  EXPECT_FLOAT_EQ(f.values(2, 0), 0.5f);
}

TEST(FeatureIo, RoundTripAndCorruption) {
  const auto dir = temp_dir("features");
  const auto f = matrix({{1.5f, -2}, {0, 0}, {3, 1e-20f}}, {1, 0, 1});
  const auto path = (dir / "f.bin").string();
  write_features(path, f);
  const auto back = read_features(path);
  EXPECT_EQ(back.values, f.values);
  EXPECT_EQ(back.known, f.known);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 2);
  EXPECT_THROW(read_features(path), DataError);
  EXPECT_THROW(read_features((dir / "missing.bin").string()), DataError);
}
