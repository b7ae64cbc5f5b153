#include "convctx/features.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "binio.hpp"

namespace convctx {

namespace fs = std::filesystem;

void WordVectorTable::add(const std::string& lang, const std::string& word, std::vector<float> vec) {
  if (static_cast<int>(vec.size()) != dim_) {
    throw DataError("word vector for '" + word + "' (" + lang + ") has dimension " + std::to_string(vec.size()) +
                    ", table dimension is " + std::to_string(dim_));
  }
  table_[lang].insert_or_assign(word, std::move(vec));
}

const std::vector<float>* WordVectorTable::find(const std::string& lang, const std::string& word) const {
  auto l = table_.find(lang);
  if (l == table_.end()) return nullptr;
  auto w = l->second.find(word);
  return w == l->second.end() ? nullptr : &w->second;
}

std::vector<std::string> WordVectorTable::languages() const {
  std::vector<std::string> out;
  for (const auto& [lang, _] : table_) out.push_back(lang);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t WordVectorTable::size(const std::string& lang) const {
  auto l = table_.find(lang);
  return l == table_.end() ? 0 : l->second.size();
}

void WordVectorTable::load_file(const std::string& lang, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vector file '" + path + "'");
  std::size_t count = 0;
  int dim = 0;
  std::string header;
  if (!std::getline(in, header) || !(std::istringstream(header) >> count >> dim)) {
    throw DataError(path + ": missing 'count dim' header");
  }
  if (dim != dim_) {
    throw DataError(path + ": dimension " + std::to_string(dim) + " does not match table dimension " +
                    std::to_string(dim_));
  }
  table_[lang];
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<float> v(static_cast<std::size_t>(dim));
    for (auto& x : v) {
      if (!(ls >> x)) throw DataError(path + ":" + std::to_string(lineno) + ": short vector for '" + word + "'");
    }
    add(lang, word, std::move(v));
  }
}

WordVectorTable WordVectorTable::load_directory(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("word vector directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".vec") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .vec files in '" + dir + "'");
  int dim = 0;
  {
    std::ifstream in(files.front());
    std::size_t count = 0;
    if (!(in >> count >> dim) || dim <= 0) throw DataError(files.front().string() + ": missing 'count dim' header");
  }
  WordVectorTable table(dim);
  for (const auto& f : files) {
    std::string lang = f.stem().string();
    if (lang.rfind("wiki.", 0) == 0) {
      lang = lang.substr(5);
      if (auto dot = lang.find('.'); dot != std::string::npos) lang.erase(dot);
    }
    table.load_file(lang, f.string());
  }
  return table;
}

void WordVectorTable::write_file(const std::string& lang, const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write word vector file '" + path + "'");
  auto l = table_.find(lang);
  std::vector<std::pair<std::string, const std::vector<float>*>> rows;
  if (l != table_.end()) {
    for (const auto& [w, v] : l->second) rows.emplace_back(w, &v);
  }
  std::sort(rows.begin(), rows.end());
  out << rows.size() << ' ' << dim_ << '\n';
  out.precision(9);
  for (const auto& [w, v] : rows) {
    out << w;
    for (float x : *v) out << ' ' << x;
    out << '\n';
  }
}

std::optional<double> IdfTable::idf(const std::string& lang, const std::string& word) const {
  auto l = idf_.find(lang);
  if (l == idf_.end()) return std::nullopt;
  auto w = l->second.find(word);
  if (w == l->second.end()) return std::nullopt;
  return w->second;
}

std::size_t IdfTable::documents(const std::string& lang) const {
  auto it = docs_.find(lang);
  return it == docs_.end() ? 0 : it->second;
}

IdfTable fit_tfidf(const std::vector<std::pair<std::string, std::vector<std::string>>>& lang_docs) {
  std::map<std::string, std::pair<std::size_t, std::unordered_map<std::string, std::size_t>>> stats;
  for (const auto& [lang, tokens] : lang_docs) {
    auto& [n, df] = stats[lang];
    ++n;
    std::unordered_set<std::string> uniq(tokens.begin(), tokens.end());
    for (const auto& w : uniq) ++df[w];
  }
  IdfTable table;
  for (const auto& [lang, s] : stats) {
    const auto& [n, df] = s;
    table.set_documents(lang, n);
    for (const auto& [w, count] : df) {
      table.set(lang, w, std::log(static_cast<double>(n) / static_cast<double>(count)));
    }
  }
  return table;
}

IdfTable fit_tfidf(const std::vector<const MessageRecord*>& docs) {
  std::vector<std::pair<std::string, std::vector<std::string>>> lang_docs;
  for (const auto* r : docs) {
    if (r->lang) lang_docs.emplace_back(*r->lang, r->tokens);
  }
  return fit_tfidf(lang_docs);
}

std::optional<std::vector<double>> embed_text(const std::vector<std::string>& tokens,
                                              const std::optional<std::string>& lang, const WordVectorTable& vectors,
                                              const IdfTable& idf) {
  if (!lang || !vectors.has_language(*lang)) return std::nullopt;
  std::map<std::string, int> tf;
  for (const auto& t : tokens) ++tf[t];
  std::vector<double> out(static_cast<std::size_t>(vectors.dim()), 0.0);
  double total = 0.0;
  for (const auto& [word, count] : tf) {
    const auto* vec = vectors.find(*lang, word);
    const auto w_idf = idf.idf(*lang, word);
    if (!vec || !w_idf) continue;
    const double weight = count * *w_idf;
    if (!(weight > 0.0)) continue;
    total += weight;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += weight * (*vec)[k];
  }
  if (!(total > 0.0)) return std::nullopt;
  for (auto& x : out) x /= total;
  return out;
}

FeatureMatrix embed_tweets(const HeteroGraph& g, const std::vector<MessageRecord>& records,
                           const WordVectorTable& vectors) {
  const auto nt = g.num_nodes(NodeType::Tweet);
  std::vector<const MessageRecord*> by_node(nt, nullptr);
  for (const auto& r : records) {
    if (auto t = g.ids(NodeType::Tweet).find(r.id)) by_node[static_cast<std::size_t>(*t)] = &r;
  }
  std::vector<const MessageRecord*> docs;
  for (const auto* r : by_node) {
    if (r) docs.push_back(r);
  }
  const IdfTable idf = fit_tfidf(docs);

  FeatureMatrix f;
  f.values = RowMatrix<float>::Zero(static_cast<Eigen::Index>(nt), vectors.dim());
  f.known.assign(nt, 0);
  for (std::size_t i = 0; i < nt; ++i) {
    if (!by_node[i]) continue;
    if (auto v = embed_text(by_node[i]->tokens, by_node[i]->lang, vectors, idf)) {
      for (std::size_t k = 0; k < v->size(); ++k) {
        f.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = static_cast<float>((*v)[k]);
      }
      f.known[i] = 1;
    }
  }
  return f;
}

nlohmann::json PropagationReport::to_json() const {
  return {{"iterations", iterations},
          {"converged", converged},
          {"last_change", last_change},
          {"unknown_rows", unknown_rows},
          {"unreached", unreached.size()}};
}

PropagationResult propagate_features(const HeteroGraph& g, const FeatureMatrix& feats,
                                     const PropagationConfig& config) {
  const auto nt = g.num_nodes(NodeType::Tweet);
  if (feats.rows() != nt || feats.known.size() != nt) {
    throw DataError("feature matrix has " + std::to_string(feats.rows()) + " rows, graph has " + std::to_string(nt) +
                    " tweets");
  }
  const std::size_t nh = config.tweet_tweet_only ? 0 : g.num_nodes(NodeType::Hashtag);
  const std::size_t nu = config.tweet_tweet_only ? 0 : g.num_nodes(NodeType::Url);
  const std::size_t n = nt + nh + nu;
  const auto d = feats.values.cols();

  // Propagation graph over tweets, then hashtags, then URLs.
  std::vector<std::vector<NodeIndex>> adj(n);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto ti = static_cast<NodeIndex>(t);
    auto& a = adj[t];
    for (NodeIndex v : g.neighbors(NodeType::Tweet, ti, EdgeType::TweetTweet)) a.push_back(v);
    for (NodeIndex v : g.tweet_in_neighbors(ti)) a.push_back(v);
    if (!config.tweet_tweet_only) {
      for (NodeIndex h : g.neighbors(NodeType::Tweet, ti, EdgeType::TweetHashtag)) {
        a.push_back(static_cast<NodeIndex>(nt) + h);
      }
      for (NodeIndex u : g.neighbors(NodeType::Tweet, ti, EdgeType::TweetUrl)) {
        a.push_back(static_cast<NodeIndex>(nt + nh) + u);
      }
    }
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  for (std::size_t h = 0; h < nh; ++h) {
    auto nb = g.neighbors(NodeType::Hashtag, static_cast<NodeIndex>(h), EdgeType::TweetHashtag);
    adj[nt + h].assign(nb.begin(), nb.end());
  }
  for (std::size_t u = 0; u < nu; ++u) {
    auto nb = g.neighbors(NodeType::Url, static_cast<NodeIndex>(u), EdgeType::TweetUrl);
    adj[nt + nh + u].assign(nb.begin(), nb.end());
  }

  RowMatrix<double> x = RowMatrix<double>::Zero(static_cast<Eigen::Index>(n), d);
  std::vector<std::uint8_t> reached(n, 0);
  std::vector<std::size_t> unknown;
  for (std::size_t i = 0; i < nt; ++i) {
    if (feats.known[i]) {
      x.row(static_cast<Eigen::Index>(i)) = feats.values.row(static_cast<Eigen::Index>(i)).cast<double>();
      reached[i] = 1;
    } else {
      unknown.push_back(i);
    }
  }
  for (std::size_t i = nt; i < n; ++i) unknown.push_back(i);

  PropagationResult result;
  auto& rep = result.report;
  rep.unknown_rows = static_cast<std::size_t>(std::count(feats.known.begin(), feats.known.end(), 0));

  RowMatrix<double> next = x;
  std::vector<std::uint8_t> next_reached = reached;
  Vector<double> acc(d);
  for (int it = 1; it <= config.max_iters && !unknown.empty(); ++it) {
    double change = 0.0;
    bool newly_reached = false;
    for (std::size_t v : unknown) {
      acc.setZero();
      int count = 0;
      for (NodeIndex u : adj[v]) {
        if (!reached[static_cast<std::size_t>(u)]) continue;
        acc += x.row(u).transpose();
        ++count;
      }
      if (count == 0) continue;
      next.row(static_cast<Eigen::Index>(v)) = (acc / count).transpose();
      if (!reached[v]) newly_reached = true;
      next_reached[v] = 1;
      change = std::max(change, (next.row(static_cast<Eigen::Index>(v)) - x.row(static_cast<Eigen::Index>(v)))
                                    .cwiseAbs()
                                    .maxCoeff());
    }
    x = next;
    reached = next_reached;
    rep.iterations = it;
    rep.last_change = change;
    if (change < config.tol && !newly_reached) {
      rep.converged = true;
      break;
    }
  }
  if (unknown.empty()) rep.converged = true;

  result.features.values = feats.values;
  result.features.known = feats.known;
  for (std::size_t i = 0; i < nt; ++i) {
    if (feats.known[i]) continue;
    if (!reached[i]) {
      rep.unreached.push_back(static_cast<NodeIndex>(i));
      result.features.values.row(static_cast<Eigen::Index>(i)).setZero();
    } else {
      result.features.values.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(i)).cast<float>();
    }
  }
  return result;
}

namespace {
constexpr std::string_view kFeatMagic = "CCFEAT";
constexpr std::uint32_t kFeatVersion = 1;
}  // namespace

void write_features(const std::string& path, const FeatureMatrix& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file '" + path + "'");
  binio::put_magic(out, kFeatMagic, kFeatVersion);
  binio::put<std::uint64_t>(out, f.rows());
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.dim()));
  out.write(reinterpret_cast<const char*>(f.values.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(f.values.size())));
  out.write(reinterpret_cast<const char*>(f.known.data()), static_cast<std::streamsize>(f.known.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

FeatureMatrix read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file '" + path + "'");
  binio::expect_magic(in, kFeatMagic, kFeatVersion, "feature file");
  const auto rows = binio::get<std::uint64_t>(in, "feature header");
  const auto dim = binio::get<std::uint32_t>(in, "feature header");
  if (rows > (1ull << 32) || dim == 0 || dim > (1u << 16)) throw DataError("feature file: implausible shape");
  FeatureMatrix f;
  f.values.resize(static_cast<Eigen::Index>(rows), dim);
  if (!in.read(reinterpret_cast<char*>(f.values.data()),
               static_cast<std::streamsize>(sizeof(float) * rows * dim))) {
    throw DataError("feature file: truncated values");
  }
  f.known.resize(rows);
  if (rows && !in.read(reinterpret_cast<char*>(f.known.data()), static_cast<std::streamsize>(rows))) {
    throw DataError("feature file: truncated mask");
  }
  if (!f.values.allFinite()) throw DataError("feature file: non-finite values");
  return f;
}

}  // namespace convctx
