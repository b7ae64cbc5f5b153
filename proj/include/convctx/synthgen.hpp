#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "convctx/common.hpp"
#include "convctx/features.hpp"
#include "convctx/ingest.hpp"

namespace convctx::synth {

// Per-context knobs are lists; a single value applies to every context.
struct SynthConfig {
  int n_contexts = 2;
  std::vector<int> tweets_per_context{500};  // non-retweet messages
  std::vector<int> users_per_context{100};
  std::vector<int> hubs_per_context{5};
  double hub_decay = 0.7;               // weight of hub k is hub_decay^k
  std::vector<double> hub_bias{0.5};    // chance a target is hub-authored
  double cross_context_user_fraction = 0.0;
  double cross_context_edge_probability = 0.0;

  int vocab_per_context = 30;
  double vocab_overlap = 0.0;  // fraction of each vocabulary shared by all contexts
  // Zipf exponent of word frequencies; each context ranks its pool from a
  // different starting word, so shared vocabularies still differ in usage.
  double word_skew = 0.0;
  int tokens_per_tweet = 6;
  int hashtags_per_context = 12;
  double hashtag_overlap = 0.0;
  int urls_per_context = 12;
  double url_overlap = 0.0;
  double url_probability = 0.3;

  std::vector<double> reply_probability{0.3};
  std::vector<double> quote_probability{0.1};
  std::vector<double> retweet_probability{0.2};
  std::vector<double> mention_probability{0.2};

  std::vector<std::string> languages{"en"};
  double missing_lang_fraction = 0.0;
  int days = 1;
  std::int64_t start_time = 1604361600;  // 2020-11-03T00:00:00Z

  // Planted context transitions: row i, column j gives the share of the
  // transition_users_per_row users of context i who move to j at mid-span.
  std::vector<std::vector<double>> transitions;
  int transition_users_per_row = 0;

  int vector_dim = 300;
  std::uint64_t seed = 1;

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  nlohmann::json to_json() const;
};

// Key/value file with an optional [synth] section; lists are comma
// separated, matrix rows separated by ';'.
SynthConfig parse_synth_config(std::istream& in);
SynthConfig load_synth_config(const std::string& path);

struct TransitionUser {
  std::string user;
  int from;
  int to;
};

struct GroundTruth {
  std::map<std::string, int> message_context;  // every message id
  std::map<std::string, std::vector<int>> user_contexts;
  std::vector<std::vector<std::string>> hubs;  // per context, strongest first
  std::vector<std::vector<double>> transitions;
  std::vector<TransitionUser> transition_users;
  std::vector<int> context_tweets;  // non-retweet messages per context

  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);
};

struct SynthDataset {
  std::vector<MessageRecord> records;  // raw fields only, ordered by (created_at, id)
  GroundTruth truth;
  std::vector<std::string> vocabulary;  // every word, sorted
};

SynthDataset generate(const SynthConfig& config);

// Fixed random unit vectors for every word in every configured language.
WordVectorTable word_vectors(const SynthConfig& config, const std::vector<std::string>& vocabulary);

// Writes records (raw line-delimited JSON), truth JSON and one <lang>.vec
// per language into vectors_dir. Empty paths are skipped.
void write_dataset(const SynthConfig& config, const SynthDataset& data, const std::string& records_path,
                   const std::string& truth_path, const std::string& vectors_dir);

}  // namespace convctx::synth
