#include "convctx/synthgen.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace convctx::synth {
namespace {

using json = nlohmann::json;

template <typename T>
const T& per_context(const std::vector<T>& v, int c) {
  return v.size() == 1 ? v[0] : v[static_cast<std::size_t>(c)];
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("synth config: " + what);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

template <typename T>
void check_list(const std::vector<T>& v, int n, const std::string& key) {
  require(v.size() == 1 || v.size() == static_cast<std::size_t>(n),
          key + " must have 1 or n_contexts (" + std::to_string(n) + ") entries");
}

int planted_count(double p, int users) { return static_cast<int>(std::llround(p * users)); }

std::string user_name(int c, int k) { return "u" + std::to_string(c) + "_" + std::to_string(k); }

std::string message_id(std::size_t k) {
  std::string s = std::to_string(k);
  return "1" + std::string(12 - std::min<std::size_t>(12, s.size()), '0') + s;
}

struct Pools {
  std::vector<std::string> words;
  std::vector<std::string> hashtags;  // raw, mixed case
  std::vector<std::string> urls;      // canonical form
};

std::vector<Pools> make_pools(const SynthConfig& c) {
  std::vector<Pools> pools(static_cast<std::size_t>(c.n_contexts));
  const int shared_words = static_cast<int>(std::llround(c.vocab_overlap * c.vocab_per_context));
  const int shared_tags = static_cast<int>(std::llround(c.hashtag_overlap * c.hashtags_per_context));
  const int shared_urls = static_cast<int>(std::llround(c.url_overlap * c.urls_per_context));
  for (int k = 0; k < c.n_contexts; ++k) {
    auto& p = pools[static_cast<std::size_t>(k)];
    for (int i = 0; i < c.vocab_per_context; ++i) {
      p.words.push_back(i < shared_words ? "vs" + std::to_string(i) : "v" + std::to_string(k) + "x" + std::to_string(i));
    }
    for (int i = 0; i < c.hashtags_per_context; ++i) {
      p.hashtags.push_back(i < shared_tags ? "Shared" + std::to_string(i)
                                           : "Ctx" + std::to_string(k) + "Tag" + std::to_string(i));
    }
    for (int i = 0; i < c.urls_per_context; ++i) {
      p.urls.push_back(i < shared_urls ? "sharednews.com/story/" + std::to_string(i)
                                       : "c" + std::to_string(k) + "news.com/story/" + std::to_string(i));
    }
  }
  return pools;
}

// A raw URL that normalizes to `canonical`.
std::string decorate_url(const std::string& canonical, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, 7);
  const int v = pick(rng);
  std::string out = (v & 1) ? "https://" : "http://";
  if (v & 2) out += "www.";
  out += canonical;
  if (v & 4) out += "?utm_source=twitter&ref=" + std::to_string(pick(rng));
  return out;
}

struct Message {
  int context;
  std::size_t local;
  std::int64_t time;
  bool retweet;
  int author = -1;  // global user index
};

}  // namespace

void SynthConfig::validate() const {
  require(n_contexts >= 1, "n_contexts must be >= 1");
  check_list(tweets_per_context, n_contexts, "tweets_per_context");
  check_list(users_per_context, n_contexts, "users_per_context");
  check_list(hubs_per_context, n_contexts, "hubs_per_context");
  check_list(hub_bias, n_contexts, "hub_bias");
  check_list(reply_probability, n_contexts, "reply_probability");
  check_list(quote_probability, n_contexts, "quote_probability");
  check_list(retweet_probability, n_contexts, "retweet_probability");
  check_list(mention_probability, n_contexts, "mention_probability");
  for (int c = 0; c < n_contexts; ++c) {
    const auto ctx = " (context " + std::to_string(c) + ")";
    require(per_context(tweets_per_context, c) >= 1, "tweets_per_context must be >= 1" + ctx);
    require(per_context(users_per_context, c) >= 2, "users_per_context must be >= 2" + ctx);
    require(per_context(hubs_per_context, c) >= 0, "hubs_per_context must be >= 0" + ctx);
    require(per_context(hubs_per_context, c) <= per_context(users_per_context, c), "more hubs than users" + ctx);
    require(is_probability(per_context(hub_bias, c)), "hub_bias outside [0,1]" + ctx);
    require(is_probability(per_context(reply_probability, c)), "reply_probability outside [0,1]" + ctx);
    require(is_probability(per_context(quote_probability, c)), "quote_probability outside [0,1]" + ctx);
    require(per_context(reply_probability, c) + per_context(quote_probability, c) <= 1.0,
            "reply_probability + quote_probability exceeds 1" + ctx);
    require(per_context(retweet_probability, c) >= 0.0 && per_context(retweet_probability, c) < 1.0,
            "retweet_probability outside [0,1)" + ctx);
    require(is_probability(per_context(mention_probability, c)), "mention_probability outside [0,1]" + ctx);
  }
  require(hub_decay > 0.0 && hub_decay <= 1.0, "hub_decay outside (0,1]");
  for (auto [p, key] : {std::pair{cross_context_user_fraction, "cross_context_user_fraction"},
                        std::pair{cross_context_edge_probability, "cross_context_edge_probability"},
                        std::pair{vocab_overlap, "vocab_overlap"}, std::pair{hashtag_overlap, "hashtag_overlap"},
                        std::pair{url_overlap, "url_overlap"}, std::pair{url_probability, "url_probability"},
                        std::pair{missing_lang_fraction, "missing_lang_fraction"}}) {
    require(is_probability(p), std::string(key) + " outside [0,1]");
  }
  require(n_contexts > 1 || (cross_context_user_fraction == 0.0 && cross_context_edge_probability == 0.0),
          "cross-context settings need at least 2 contexts");
  require(vocab_per_context >= 1 && tokens_per_tweet >= 1, "vocabulary and tokens_per_tweet must be >= 1");
  require(std::isfinite(word_skew) && word_skew >= 0.0, "word_skew must be >= 0");
  require(hashtags_per_context >= 1 && urls_per_context >= 1, "hashtag and URL pools must be nonempty");
  require(!languages.empty(), "languages must be nonempty");
  for (const auto& l : languages) {
    require(!l.empty() && std::all_of(l.begin(), l.end(), [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)); }),
            "language codes must be alphanumeric");
  }
  require(days >= 1, "days must be >= 1");
  require(vector_dim >= 1, "vector_dim must be >= 1");

  std::vector<int> outgoing(static_cast<std::size_t>(n_contexts), 0);
  if (!transitions.empty()) {
    require(transitions.size() == static_cast<std::size_t>(n_contexts), "transitions must be n_contexts x n_contexts");
    require(transition_users_per_row >= 1, "transition_users_per_row must be >= 1 when transitions are planted");
    for (int i = 0; i < n_contexts; ++i) {
      const auto& row = transitions[static_cast<std::size_t>(i)];
      require(row.size() == static_cast<std::size_t>(n_contexts), "transitions must be n_contexts x n_contexts");
      double total = 0.0;
      for (int j = 0; j < n_contexts; ++j) {
        const double p = row[static_cast<std::size_t>(j)];
        require(is_probability(p), "transition probability outside [0,1]");
        require(i != j || p == 0.0, "transitions diagonal must be 0");
        const double users = p * transition_users_per_row;
        require(std::abs(users - std::round(users)) < 1e-9,
                "transition " + std::to_string(i) + "->" + std::to_string(j) +
                    " does not give a whole number of users");
        total += p;
        outgoing[static_cast<std::size_t>(i)] += planted_count(p, transition_users_per_row);
      }
      require(total == 0.0 || std::abs(total - 1.0) < 1e-9, "transition rows must sum to 1 or 0");
    }
  }
  for (int c = 0; c < n_contexts; ++c) {
    const int users = per_context(users_per_context, c);
    const int cross = static_cast<int>(std::llround(cross_context_user_fraction * users));
    require(per_context(hubs_per_context, c) + outgoing[static_cast<std::size_t>(c)] + cross <= users,
            "hubs + transition users + cross-context users exceed users_per_context (context " + std::to_string(c) + ")");
  }
}

json SynthConfig::to_json() const {
  return {{"n_contexts", n_contexts},
          {"tweets_per_context", tweets_per_context},
          {"users_per_context", users_per_context},
          {"hubs_per_context", hubs_per_context},
          {"hub_decay", hub_decay},
          {"hub_bias", hub_bias},
          {"cross_context_user_fraction", cross_context_user_fraction},
          {"cross_context_edge_probability", cross_context_edge_probability},
          {"vocab_per_context", vocab_per_context},
          {"vocab_overlap", vocab_overlap},
          {"word_skew", word_skew},
          {"tokens_per_tweet", tokens_per_tweet},
          {"hashtags_per_context", hashtags_per_context},
          {"hashtag_overlap", hashtag_overlap},
          {"urls_per_context", urls_per_context},
          {"url_overlap", url_overlap},
          {"url_probability", url_probability},
          {"reply_probability", reply_probability},
          {"quote_probability", quote_probability},
          {"retweet_probability", retweet_probability},
          {"mention_probability", mention_probability},
          {"languages", languages},
          {"missing_lang_fraction", missing_lang_fraction},
          {"days", days},
          {"start_time", start_time},
          {"transitions", transitions},
          {"transition_users_per_row", transition_users_per_row},
          {"vector_dim", vector_dim},
          {"seed", seed}};
}

SynthConfig parse_synth_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError(std::string("synth config: ") + e.what());
  }
  const pt::ptree& root = tree.get_child_optional("synth") ? tree.get_child("synth") : tree;
  SynthConfig c;
  std::set<std::string> known;
  auto raw = [&](const std::string& key) -> std::optional<std::string> {
    known.insert(key);
    if (auto v = root.get_optional<std::string>(key)) return boost::algorithm::trim_copy(*v);
    return std::nullopt;
  };
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, s, [sep](char ch) { return ch == sep; });
    for (auto& p : parts) boost::algorithm::trim(p);
    return parts;
  };
  auto number = [](const std::string& key, const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw DataError("synth config: bad number '" + s + "' for " + key);
    }
  };
  auto integer = [&](const std::string& key, const std::string& s) {
    const double v = number(key, s);
    if (v != std::floor(v)) throw DataError("synth config: " + key + " must be an integer");
    return static_cast<long long>(v);
  };
  auto set_int = [&](const char* key, auto& field) {
    if (auto v = raw(key)) field = static_cast<std::remove_reference_t<decltype(field)>>(integer(key, *v));
  };
  auto set_double = [&](const char* key, double& field) {
    if (auto v = raw(key)) field = number(key, *v);
  };
  auto set_ints = [&](const char* key, std::vector<int>& field) {
    if (auto v = raw(key)) {
      field.clear();
      for (const auto& p : split(*v, ',')) field.push_back(static_cast<int>(integer(key, p)));
    }
  };
  auto set_doubles = [&](const char* key, std::vector<double>& field) {
    if (auto v = raw(key)) {
      field.clear();
      for (const auto& p : split(*v, ',')) field.push_back(number(key, p));
    }
  };

  set_int("n_contexts", c.n_contexts);
  set_ints("tweets_per_context", c.tweets_per_context);
  set_ints("users_per_context", c.users_per_context);
  set_ints("hubs_per_context", c.hubs_per_context);
  set_double("hub_decay", c.hub_decay);
  set_doubles("hub_bias", c.hub_bias);
  set_double("cross_context_user_fraction", c.cross_context_user_fraction);
  set_double("cross_context_edge_probability", c.cross_context_edge_probability);
  set_int("vocab_per_context", c.vocab_per_context);
  set_double("vocab_overlap", c.vocab_overlap);
  set_double("word_skew", c.word_skew);
  set_int("tokens_per_tweet", c.tokens_per_tweet);
  set_int("hashtags_per_context", c.hashtags_per_context);
  set_double("hashtag_overlap", c.hashtag_overlap);
  set_int("urls_per_context", c.urls_per_context);
  set_double("url_overlap", c.url_overlap);
  set_double("url_probability", c.url_probability);
  set_doubles("reply_probability", c.reply_probability);
  set_doubles("quote_probability", c.quote_probability);
  set_doubles("retweet_probability", c.retweet_probability);
  set_doubles("mention_probability", c.mention_probability);
  if (auto v = raw("languages")) c.languages = split(*v, ',');
  set_double("missing_lang_fraction", c.missing_lang_fraction);
  set_int("days", c.days);
  set_int("start_time", c.start_time);
  if (auto v = raw("transitions")) {
    c.transitions.clear();
    for (const auto& row : split(*v, ';')) {
      if (row.empty()) continue;
      std::vector<double> r;
      for (const auto& p : split(row, ',')) r.push_back(number("transitions", p));
      c.transitions.push_back(std::move(r));
    }
  }
  set_int("transition_users_per_row", c.transition_users_per_row);
  set_int("vector_dim", c.vector_dim);
  if (auto v = raw("seed")) {
    try {
      c.seed = std::stoull(*v);
    } catch (const std::exception&) {
      throw DataError("synth config: bad seed '" + *v + "'");
    }
  }
  for (const auto& [key, value] : root) {
    if (!value.empty() && value.data().empty()) continue;
    if (!known.count(key)) throw DataError("synth config: unknown key '" + key + "'");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return c;
}

SynthConfig load_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synth config '" + path + "'");
  return parse_synth_config(in);
}

json GroundTruth::to_json() const {
  json users = json::object();
  for (const auto& [u, cs] : user_contexts) users[u] = cs;
  json movers = json::array();
  for (const auto& t : transition_users) movers.push_back({{"user", t.user}, {"from", t.from}, {"to", t.to}});
  return {{"message_context", message_context}, {"user_contexts", std::move(users)},
          {"hubs", hubs},                       {"transitions", transitions},
          {"transition_users", std::move(movers)}, {"context_tweets", context_tweets}};
}

GroundTruth GroundTruth::from_json(const json& j) {
  try {
    GroundTruth t;
    t.message_context = j.at("message_context").get<std::map<std::string, int>>();
    t.user_contexts = j.at("user_contexts").get<std::map<std::string, std::vector<int>>>();
    t.hubs = j.at("hubs").get<std::vector<std::vector<std::string>>>();
    t.transitions = j.at("transitions").get<std::vector<std::vector<double>>>();
    for (const auto& m : j.at("transition_users")) {
      t.transition_users.push_back({m.at("user").get<std::string>(), m.at("from").get<int>(), m.at("to").get<int>()});
    }
    t.context_tweets = j.at("context_tweets").get<std::vector<int>>();
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("truth file: ") + e.what());
  }
}

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  const int n_ctx = config.n_contexts;
  Rng rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto chance = [&](double p) { return p > 0.0 && unit(rng) < p; };
  auto uniform_index = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  const auto pools = make_pools(config);
  std::vector<std::discrete_distribution<std::size_t>> word_dist;
  for (int c = 0; c < config.n_contexts; ++c) {
    const auto n = pools[static_cast<std::size_t>(c)].words.size();
    const auto offset = static_cast<std::size_t>(c) * n / static_cast<std::size_t>(config.n_contexts);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::pow(static_cast<double>((i + n - offset) % n + 1), -config.word_skew);
    word_dist.emplace_back(w.begin(), w.end());
  }
  const std::int64_t span = static_cast<std::int64_t>(config.days) * 86400;
  const std::int64_t mid = config.start_time + span / 2;

  // Users: natives per context; hubs first, then movers, then cross users.
  std::vector<std::string> user_names;
  std::vector<std::vector<int>> natives(static_cast<std::size_t>(n_ctx));
  for (int c = 0; c < n_ctx; ++c) {
    for (int k = 0; k < per_context(config.users_per_context, c); ++k) {
      natives[static_cast<std::size_t>(c)].push_back(static_cast<int>(user_names.size()));
      user_names.push_back(user_name(c, k));
    }
  }
  GroundTruth truth;
  truth.transitions = config.transitions;
  truth.hubs.resize(static_cast<std::size_t>(n_ctx));
  std::vector<std::vector<int>> hubs(static_cast<std::size_t>(n_ctx));
  std::vector<std::vector<int>> always(static_cast<std::size_t>(n_ctx));  // eligible authors throughout
  std::vector<std::array<std::vector<int>, 2>> phase(static_cast<std::size_t>(n_ctx));  // movers by half
  std::vector<std::set<int>> membership(user_names.size());
  for (int c = 0; c < n_ctx; ++c) {
    const auto& nat = natives[static_cast<std::size_t>(c)];
    std::size_t next = 0;
    for (int k = 0; k < per_context(config.hubs_per_context, c); ++k) {
      hubs[static_cast<std::size_t>(c)].push_back(nat[next]);
      truth.hubs[static_cast<std::size_t>(c)].push_back(user_names[static_cast<std::size_t>(nat[next])]);
      always[static_cast<std::size_t>(c)].push_back(nat[next]);
      membership[static_cast<std::size_t>(nat[next])].insert(c);
      ++next;
    }
    if (!config.transitions.empty()) {
      for (int j = 0; j < n_ctx; ++j) {
        const int movers = planted_count(config.transitions[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)],
                                         config.transition_users_per_row);
        for (int m = 0; m < movers; ++m) {
          const int u = nat[next++];
          phase[static_cast<std::size_t>(c)][0].push_back(u);
          phase[static_cast<std::size_t>(j)][1].push_back(u);
          membership[static_cast<std::size_t>(u)].insert(c);
          membership[static_cast<std::size_t>(u)].insert(j);
          truth.transition_users.push_back({user_names[static_cast<std::size_t>(u)], c, j});
        }
      }
    }
    const int cross = static_cast<int>(std::llround(config.cross_context_user_fraction *
                                                    per_context(config.users_per_context, c)));
    for (int m = 0; m < cross; ++m) {
      const int u = nat[next++];
      int other = static_cast<int>(uniform_index(static_cast<std::size_t>(n_ctx - 1)));
      if (other >= c) ++other;
      always[static_cast<std::size_t>(c)].push_back(u);
      always[static_cast<std::size_t>(other)].push_back(u);
      membership[static_cast<std::size_t>(u)].insert(c);
      membership[static_cast<std::size_t>(u)].insert(other);
    }
    for (; next < nat.size(); ++next) {
      always[static_cast<std::size_t>(c)].push_back(nat[next]);
      membership[static_cast<std::size_t>(nat[next])].insert(c);
    }
  }

  // Message skeletons: retweet flags and sorted timestamps per context.
  std::vector<Message> messages;
  for (int c = 0; c < n_ctx; ++c) {
    std::vector<bool> retweet;
    int originals = 0;
    while (originals < per_context(config.tweets_per_context, c)) {
      const bool rt = originals > 0 && chance(per_context(config.retweet_probability, c));
      retweet.push_back(rt);
      if (!rt) ++originals;
    }
    std::vector<std::int64_t> times(retweet.size());
    std::uniform_int_distribution<std::int64_t> when(0, span - 1);
    for (auto& t : times) t = config.start_time + when(rng);
    std::sort(times.begin(), times.end());
    // Every mover needs at least one message in each of its phases.
    std::array<std::vector<std::size_t>, 2> slots;
    for (std::size_t i = 0; i < times.size(); ++i) slots[times[i] < mid ? 0 : 1].push_back(i);
    std::vector<int> authors(times.size(), -1);
    for (int h = 0; h < 2; ++h) {
      auto& movers = phase[static_cast<std::size_t>(c)][static_cast<std::size_t>(h)];
      if (movers.size() > slots[h].size()) {
        throw std::invalid_argument("synth config: context " + std::to_string(c) +
                                    " has too few messages to place its transition users");
      }
      std::shuffle(slots[h].begin(), slots[h].end(), rng);
      for (std::size_t m = 0; m < movers.size(); ++m) authors[slots[h][m]] = movers[m];
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (authors[i] < 0) {
        const auto& base = always[static_cast<std::size_t>(c)];
        const auto& extra = phase[static_cast<std::size_t>(c)][times[i] < mid ? 0 : 1];
        const auto k = uniform_index(base.size() + extra.size());
        authors[i] = k < base.size() ? base[k] : extra[k - base.size()];
      }
      messages.push_back({c, i, times[i], retweet[i], authors[i]});
    }
  }
  std::stable_sort(messages.begin(), messages.end(), [](const Message& a, const Message& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.context != b.context) return a.context < b.context;
    return a.local < b.local;
  });

  SynthDataset data;
  data.records.reserve(messages.size());
  truth.context_tweets.assign(static_cast<std::size_t>(n_ctx), 0);
  // Earlier non-retweet messages: per context, and per (context, hub rank).
  std::vector<std::vector<std::size_t>> originals(static_cast<std::size_t>(n_ctx));
  std::vector<std::vector<std::vector<std::size_t>>> by_hub(static_cast<std::size_t>(n_ctx));
  for (int c = 0; c < n_ctx; ++c) by_hub[static_cast<std::size_t>(c)].resize(hubs[static_cast<std::size_t>(c)].size());
  std::vector<int> record_context;
  std::vector<int> record_author;

  auto pick_hub = [&](int c) -> int {
    const auto& hs = hubs[static_cast<std::size_t>(c)];
    std::vector<double> w(hs.size());
    for (std::size_t k = 0; k < hs.size(); ++k) w[k] = std::pow(config.hub_decay, static_cast<double>(k));
    return static_cast<int>(std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng));
  };
  auto pick_target = [&](int c) -> std::optional<std::size_t> {
    int ctx = c;
    if (n_ctx > 1 && chance(config.cross_context_edge_probability)) {
      ctx = static_cast<int>(uniform_index(static_cast<std::size_t>(n_ctx - 1)));
      if (ctx >= c) ++ctx;
    }
    if (!hubs[static_cast<std::size_t>(ctx)].empty() && chance(per_context(config.hub_bias, ctx))) {
      const auto& pool = by_hub[static_cast<std::size_t>(ctx)][static_cast<std::size_t>(pick_hub(ctx))];
      if (!pool.empty()) return pool[uniform_index(pool.size())];
    }
    const auto& pool = originals[static_cast<std::size_t>(ctx)];
    if (pool.empty()) return std::nullopt;
    return pool[uniform_index(pool.size())];
  };

  for (std::size_t k = 0; k < messages.size(); ++k) {
    const auto& m = messages[k];
    const int c = m.context;
    std::optional<std::size_t> target;
    for (int attempt = 0; attempt < 4 && !target; ++attempt) {
      target = pick_target(c);
      if (target && record_author[*target] == m.author) target.reset();
    }
    // A retweet with nothing eligible to retweet is dropped, keeping the
    // per-context original counts as configured.
    if (m.retweet && !target) continue;

    const std::size_t index = data.records.size();
    MessageRecord r;
    r.id = message_id(index);
    r.author_id = user_names[static_cast<std::size_t>(m.author)];
    r.created_at = m.time;
    int context = c;
    if (m.retweet) {
      const auto& orig = data.records[*target];
      r.retweet_of = orig.id;
      r.text = orig.text;
      r.lang = orig.lang;
      context = record_context[*target];
    } else {
      const double u = unit(rng);
      const double p_reply = per_context(config.reply_probability, c);
      const double p_quote = per_context(config.quote_probability, c);
      if (target && u < p_reply) {
        r.reply_to = data.records[*target].id;
      } else if (target && u < p_reply + p_quote) {
        r.quote_of = data.records[*target].id;
      }
      const auto& pool = pools[static_cast<std::size_t>(c)];
      std::vector<std::string> parts;
      for (int t = 0; t < config.tokens_per_tweet; ++t) parts.push_back(pool.words[word_dist[static_cast<std::size_t>(c)](rng)]);
      const int n_tags = chance(0.35) && pool.hashtags.size() > 1 ? 2 : 1;
      while (static_cast<int>(r.hashtags.size()) < n_tags) {
        const auto tag = "#" + pool.hashtags[uniform_index(pool.hashtags.size())];
        if (std::find(r.hashtags.begin(), r.hashtags.end(), tag) == r.hashtags.end()) r.hashtags.push_back(tag);
      }
      for (const auto& h : r.hashtags) parts.push_back(h);
      if (chance(config.url_probability)) {
        r.urls.push_back(decorate_url(pool.urls[uniform_index(pool.urls.size())], rng));
        parts.push_back(r.urls.back());
      }
      if (chance(per_context(config.mention_probability, c))) {
        int who = -1;
        if (!hubs[static_cast<std::size_t>(c)].empty() && chance(per_context(config.hub_bias, c))) {
          who = hubs[static_cast<std::size_t>(c)][static_cast<std::size_t>(pick_hub(c))];
        } else {
          const auto& base = always[static_cast<std::size_t>(c)];
          who = base[uniform_index(base.size())];
        }
        if (who != m.author) {
          r.mentions.push_back(user_names[static_cast<std::size_t>(who)]);
          parts.push_back("@" + r.mentions.back());
        }
      }
      r.text = boost::algorithm::join(parts, " ");
      if (!chance(config.missing_lang_fraction)) r.lang = config.languages[uniform_index(config.languages.size())];

      originals[static_cast<std::size_t>(c)].push_back(index);
      const auto& hs = hubs[static_cast<std::size_t>(c)];
      if (const auto it = std::find(hs.begin(), hs.end(), m.author); it != hs.end()) {
        by_hub[static_cast<std::size_t>(c)][static_cast<std::size_t>(it - hs.begin())].push_back(index);
      }
      ++truth.context_tweets[static_cast<std::size_t>(c)];
    }
    record_context.push_back(context);
    record_author.push_back(m.author);
    truth.message_context[r.id] = context;
    data.records.push_back(std::move(r));
  }

  for (std::size_t u = 0; u < user_names.size(); ++u) {
    if (!membership[u].empty()) truth.user_contexts[user_names[u]] = {membership[u].begin(), membership[u].end()};
  }
  std::set<std::string> vocab;
  for (const auto& p : pools) vocab.insert(p.words.begin(), p.words.end());
  data.vocabulary.assign(vocab.begin(), vocab.end());
  data.truth = std::move(truth);
  return data;
}

WordVectorTable word_vectors(const SynthConfig& config, const std::vector<std::string>& vocabulary) {
  WordVectorTable table(config.vector_dim);
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& lang : config.languages) {
    for (const auto& word : vocabulary) {
      std::vector<double> v(static_cast<std::size_t>(config.vector_dim));
      double norm = 0.0;
      for (auto& x : v) {
        x = normal(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
      std::vector<float> f(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i] / norm);
      table.add(lang, word, std::move(f));
    }
  }
  return table;
}

void write_dataset(const SynthConfig& config, const SynthDataset& data, const std::string& records_path,
                   const std::string& truth_path, const std::string& vectors_dir) {
  for (const auto& file : {records_path, truth_path}) {
    const auto parent = std::filesystem::path(file).parent_path();
    if (!file.empty() && !parent.empty()) std::filesystem::create_directories(parent);
  }
  if (!records_path.empty()) {
    std::ofstream out(records_path);
    if (!out) throw DataError("cannot write records file '" + records_path + "'");
    for (const auto& r : data.records) out << raw_to_json(r).dump() << '\n';
    if (!out) throw DataError("write failed for '" + records_path + "'");
  }
  if (!truth_path.empty()) {
    std::ofstream out(truth_path);
    if (!out) throw DataError("cannot write truth file '" + truth_path + "'");
    json j = data.truth.to_json();
    j["config"] = config.to_json();
    out << j.dump(1) << '\n';
  }
  if (!vectors_dir.empty()) {
    std::filesystem::create_directories(vectors_dir);
    const auto table = word_vectors(config, data.vocabulary);
    for (const auto& lang : config.languages) {
      table.write_file(lang, (std::filesystem::path(vectors_dir) / (lang + ".vec")).string());
    }
  }
}

}  // namespace convctx::synth
