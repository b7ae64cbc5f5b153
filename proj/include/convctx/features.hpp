#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "convctx/common.hpp"
#include "convctx/graph.hpp"
#include "convctx/ingest.hpp"

namespace convctx {

// Per-language word vectors sharing one dimension. Languages are disjoint
// keyspaces: the same word in two languages is two entries.
class WordVectorTable {
 public:
  explicit WordVectorTable(int dim = 300) : dim_(dim) {}

  int dim() const { return dim_; }
  // Throws DataError on a dimension mismatch.
  void add(const std::string& lang, const std::string& word, std::vector<float> vec);
  const std::vector<float>* find(const std::string& lang, const std::string& word) const;
  bool has_language(const std::string& lang) const { return table_.count(lang) != 0; }
  std::vector<std::string> languages() const;
  std::size_t size(const std::string& lang) const;

  // Text format: first line "count dim", then "word v1 ... vd".
  void load_file(const std::string& lang, const std::string& path);
  // Loads every *.vec file; the language code is the file stem, or XX for
  // fastText's "wiki.XX.align.vec" naming.
  static WordVectorTable load_directory(const std::string& dir);
  void write_file(const std::string& lang, const std::string& path) const;

 private:
  int dim_;
  std::unordered_map<std::string, std::unordered_map<std::string, std::vector<float>>> table_;
};

// idf(w, lang) = ln(N_lang / df(w, lang)).
class IdfTable {
 public:
  std::optional<double> idf(const std::string& lang, const std::string& word) const;
  std::size_t documents(const std::string& lang) const;
  void set(const std::string& lang, const std::string& word, double value) { idf_[lang][word] = value; }
  void set_documents(const std::string& lang, std::size_t n) { docs_[lang] = n; }

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, double>> idf_;
  std::unordered_map<std::string, std::size_t> docs_;
};

// Documents without a language are ignored.
IdfTable fit_tfidf(const std::vector<const MessageRecord*>& docs);
IdfTable fit_tfidf(const std::vector<std::pair<std::string, std::vector<std::string>>>& lang_docs);

// tf-idf weighted mean of the word vectors (weights normalized to sum 1).
// nullopt when the language is missing/unsupported or no token carries a
// vector with positive weight.
std::optional<std::vector<double>> embed_text(const std::vector<std::string>& tokens,
                                              const std::optional<std::string>& lang, const WordVectorTable& vectors,
                                              const IdfTable& idf);

struct FeatureMatrix {
  RowMatrix<float> values;         // one row per tweet node
  std::vector<std::uint8_t> known;  // 1 when the row came from text

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }
};

// Text features for every tweet node of `g` (rows in graph order).
FeatureMatrix embed_tweets(const HeteroGraph& g, const std::vector<MessageRecord>& records,
                           const WordVectorTable& vectors);

struct PropagationConfig {
  int max_iters = 40;
  double tol = 1e-6;
  bool tweet_tweet_only = false;
};

struct PropagationReport {
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
  std::size_t unknown_rows = 0;
  std::vector<NodeIndex> unreached;  // tweets left at zero

  nlohmann::json to_json() const;
};

struct PropagationResult {
  FeatureMatrix features;
  PropagationReport report;
};

// Fills unknown rows by iterated neighbor averaging over the tweet-tweet,
// tweet-hashtag and tweet-url edges (hashtag and URL nodes act as unknown
// relay nodes). Known rows are copied unchanged.
PropagationResult propagate_features(const HeteroGraph& g, const FeatureMatrix& feats,
                                     const PropagationConfig& config = {});

// Versioned binary: magic, version, rows, dim, row-major float32, mask bytes.
void write_features(const std::string& path, const FeatureMatrix& f);
FeatureMatrix read_features(const std::string& path);

}  // namespace convctx
