#include "convctx/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "convctx/common.hpp"
#include "unicode.hpp"

namespace convctx {
namespace {

using nlohmann::json;

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool ends_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

bool valid_scheme(std::string_view s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '+' || c == '-' || c == '.';
  });
}

bool valid_host(std::string_view host) {
  if (host.empty() || host.find('.') == std::string_view::npos) return false;
  if (host.front() == '.' || host.find("..") != std::string_view::npos) return false;
  return std::all_of(host.begin(), host.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '.' || c >= 0x80;
  });
}

bool is_youtube_host(std::string_view host) {
  return host == "youtube.com" || ends_with(host, ".youtube.com") ||
         host == "youtube-nocookie.com" || ends_with(host, ".youtube-nocookie.com");
}

bool keeps_query(std::string_view host) {
  return host.find("facebook") != std::string_view::npos ||
         host.find("google") != std::string_view::npos ||
         host.find("youtube") != std::string_view::npos;
}

std::optional<std::string> query_param(std::string_view query, std::string_view key) {
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto pair = query.substr(0, amp);
    const auto eq = pair.find('=');
    if (eq != std::string_view::npos && pair.substr(0, eq) == key) {
      return std::string(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return std::nullopt;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> segs;
  std::size_t start = 0;
  while (true) {
    const auto slash = path.find('/', start);
    segs.emplace_back(path.substr(start, slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return segs;
}

std::string strip_amp(std::string_view path) {
  auto segs = split_path(path);
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& seg : segs) {
      const std::string low = ascii_lower(seg);
      if (ends_with(low, ".amp")) {
        seg.erase(seg.size() - 4);
        changed = true;
      } else if (auto pos = low.find(".amp."); pos != std::string::npos) {
        seg.erase(pos, 4);
        changed = true;
      }
    }
    const auto before = segs.size();
    // The leading empty segment (from the initial '/') is kept.
    segs.erase(std::remove_if(segs.begin() + 1, segs.end(),
                              [](const std::string& s) { return ascii_lower(s) == "amp"; }),
               segs.end());
    if (segs.size() != before) changed = true;
  }
  std::string out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i) out.push_back('/');
    out += segs[i];
  }
  return out;
}

std::optional<std::string> youtube_video_id(std::string_view host, std::string_view path,
                                            std::string_view query) {
  auto first_segment = [](std::string_view p) -> std::string {
    if (!p.empty() && p.front() == '/') p.remove_prefix(1);
    return std::string(p.substr(0, p.find('/')));
  };
  if (host == "youtu.be" || host == "yout.be") {
    auto id = first_segment(path);
    if (!id.empty()) return id;
    return std::nullopt;
  }
  if (!is_youtube_host(host)) return std::nullopt;
  if (path == "/watch" || path == "/watch/") {
    if (auto v = query_param(query, "v"); v && !v->empty()) return v;
    return std::nullopt;
  }
  for (std::string_view prefix : {"/shorts/", "/embed/", "/v/", "/live/", "/e/"}) {
    if (starts_with(path, prefix)) {
      auto id = first_segment(path.substr(prefix.size() - 1));
      if (!id.empty()) return id;
    }
  }
  return std::nullopt;
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw std::invalid_argument(std::string("field '") + key + "' must be a string");
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return out;
  if (!it->is_array()) throw std::invalid_argument(std::string("field '") + key + "' must be a list");
  for (const auto& v : *it) {
    if (v.is_string()) {
      out.push_back(v.get<std::string>());
    } else if (v.is_number_integer()) {
      out.push_back(std::to_string(v.get<long long>()));
    } else {
      throw std::invalid_argument(std::string("field '") + key + "' must hold strings");
    }
  }
  return out;
}

MessageKind derive_kind(const MessageRecord& r) {
  if (r.retweet_of) return MessageKind::Retweet;
  if (r.quote_of || !r.quote_links.empty()) return MessageKind::Quote;
  if (r.reply_to) return MessageKind::Reply;
  return MessageKind::Original;
}

MessageRecord raw_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  MessageRecord r;
  auto id = opt_string(j, "id");
  auto author = opt_string(j, "author_id");
  if (!id || id->empty()) throw std::invalid_argument("missing id");
  if (!author || author->empty()) throw std::invalid_argument("missing author_id");
  r.id = std::move(*id);
  r.author_id = std::move(*author);
  auto ts = j.find("created_at");
  if (ts == j.end() || ts->is_null()) throw std::invalid_argument("missing created_at");
  if (ts->is_number_integer()) {
    r.created_at = ts->get<std::int64_t>();
  } else if (ts->is_string()) {
    r.created_at = parse_timestamp(ts->get<std::string>());
  } else {
    throw std::invalid_argument("created_at must be a string or integer");
  }
  r.text = opt_string(j, "text").value_or("");
  r.lang = opt_string(j, "lang");
  if (r.lang && (r.lang->empty() || *r.lang == "und")) r.lang.reset();
  r.hashtags = string_list(j, "hashtags");
  r.urls = string_list(j, "urls");
  r.mentions = string_list(j, "mentions");
  r.reply_to = opt_string(j, "reply_to");
  r.quote_of = opt_string(j, "quote_of");
  r.retweet_of = opt_string(j, "retweet_of");
  return r;
}

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::Original: return "original";
    case MessageKind::Reply: return "reply";
    case MessageKind::Quote: return "quote";
    case MessageKind::Retweet: return "retweet";
  }
  return "original";
}

MessageKind parse_kind(std::string_view s) {
  if (s == "original") return MessageKind::Original;
  if (s == "reply") return MessageKind::Reply;
  if (s == "quote") return MessageKind::Quote;
  if (s == "retweet") return MessageKind::Retweet;
  throw std::invalid_argument("unknown message kind: " + std::string(s));
}

std::string normalize_url(std::string_view raw) {
  std::string_view s = trim(raw);
  const std::string input(s);
  if (s.empty()) throw std::invalid_argument("normalize_url: empty input");

  if (auto p = s.find("://"); p != std::string_view::npos && valid_scheme(s.substr(0, p))) {
    s.remove_prefix(p + 3);
  } else if (starts_with(s, "//")) {
    s.remove_prefix(2);
  }

  const auto host_end = s.find_first_of("/?#");
  std::string host = ascii_lower(s.substr(0, host_end));
  std::string_view rest = host_end == std::string_view::npos ? std::string_view{} : s.substr(host_end);
  if (auto at = host.rfind('@'); at != std::string::npos) host.erase(0, at + 1);
  if (auto colon = host.find(':'); colon != std::string::npos) host.erase(colon);
  while (!host.empty() && host.back() == '.') host.pop_back();
  if (!valid_host(host)) throw std::invalid_argument("normalize_url: no recognizable domain in '" + input + "'");

  bool stripped = true;
  while (stripped) {
    stripped = false;
    for (std::string_view prefix : {"www.", "m.", "mobile.", "amp."}) {
      if (starts_with(host, prefix) && host.find('.', prefix.size()) != std::string::npos) {
        host.erase(0, prefix.size());
        stripped = true;
      }
    }
  }

  const auto frag = rest.find('#');
  if (frag != std::string_view::npos) rest = rest.substr(0, frag);
  const auto qpos = rest.find('?');
  std::string_view path = rest.substr(0, qpos);
  std::string_view query = qpos == std::string_view::npos ? std::string_view{} : rest.substr(qpos + 1);

  // AMP caches wrap the real destination in the path.
  // A wrapped path that is not itself a URL falls through to the plain rules.
  auto unwrap = [&](std::string_view inner) -> std::optional<std::string> {
    std::string target(inner);
    if (!query.empty()) target += "?" + std::string(query);
    try {
      return normalize_url(target);
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  };
  if (host.find("google.") != std::string::npos && starts_with(path, "/amp/")) {
    auto inner = path.substr(5);
    if (starts_with(inner, "s/")) inner.remove_prefix(2);
    if (!inner.empty()) {
      if (auto u = unwrap(inner)) return *u;
    }
  }
  if (ends_with(host, ".cdn.ampproject.org") || host == "cdn.ampproject.org") {
    for (std::string_view prefix : {"/c/s/", "/v/s/", "/c/", "/v/"}) {
      if (starts_with(path, prefix) && path.size() > prefix.size()) {
        if (auto u = unwrap(path.substr(prefix.size()))) return *u;
      }
    }
  }

  std::string clean_path = strip_amp(path);
  if (auto vid = youtube_video_id(host, clean_path, query)) return "youtu.be/" + *vid;

  std::string out = host;
  if (clean_path != "/") out += clean_path;
  if (!query.empty() && keeps_query(host)) {
    out += "?";
    out += query;
  }
  return out;
}

std::string normalize_hashtag(std::string_view raw) {
  std::string_view s = trim(raw);
  while (!s.empty() && s.front() == '#') s.remove_prefix(1);
  // Full-width number sign.
  while (starts_with(s, "\xEF\xBC\x83")) s.remove_prefix(3);
  if (s.empty()) throw std::invalid_argument("normalize_hashtag: empty hashtag");
  return unicode::to_lower(s);
}

std::vector<std::string> clean_text(std::string_view text, const std::vector<std::string>& hashtags,
                                    const std::vector<std::string>& urls,
                                    const std::vector<std::string>& mentions) {
  std::string work(text);
  auto erase_all = [&work](const std::string& needle) {
    if (needle.empty()) return;
    for (auto pos = work.find(needle); pos != std::string::npos; pos = work.find(needle, pos)) {
      work.replace(pos, needle.size(), " ");
    }
  };
  // Hashtags and mentions are removed by pattern below; literal erasure
  // would also cut prefixes of longer tags.
  (void)hashtags;
  (void)mentions;
  for (const auto& u : urls) erase_all(u);

  auto cps = unicode::decode(work);
  std::u32string kept;
  kept.reserve(cps.size());
  auto token_end = [&cps](std::size_t i) {
    while (i < cps.size() && !unicode::is_space(cps[i])) ++i;
    return i;
  };
  auto matches_at = [&cps](std::size_t i, std::u32string_view p) {
    if (i + p.size() > cps.size()) return false;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (unicode::to_lower(cps[i + k]) != p[k]) return false;
    }
    return true;
  };
  auto word_char = [](char32_t c) {
    return c == '_' || c >= 0x80 || (c < 0x80 && std::isalnum(static_cast<int>(c)));
  };
  for (std::size_t i = 0; i < cps.size();) {
    const bool boundary = i == 0 || !word_char(cps[i - 1]);
    if (boundary && (matches_at(i, U"http://") || matches_at(i, U"https://") || matches_at(i, U"www."))) {
      i = token_end(i);
      kept.push_back(' ');
      continue;
    }
    if ((cps[i] == '#' || cps[i] == 0xFF03) && i + 1 < cps.size() && word_char(cps[i + 1]) &&
        !unicode::is_punct(cps[i + 1])) {
      ++i;
      while (i < cps.size() && word_char(cps[i]) && !unicode::is_punct(cps[i])) ++i;
      kept.push_back(' ');
      continue;
    }
    if (cps[i] == '@' && i + 1 < cps.size() && cps[i + 1] < 0x80 && word_char(cps[i + 1])) {
      ++i;
      while (i < cps.size() && cps[i] < 0x80 && word_char(cps[i])) ++i;
      kept.push_back(' ');
      continue;
    }
    kept.push_back(cps[i]);
    ++i;
  }

  std::vector<std::string> tokens;
  std::u32string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(unicode::encode(current));
    current.clear();
  };
  for (char32_t c : kept) {
    if (unicode::is_space(c)) {
      flush();
    } else if (c == '\'' || c == 0x2019) {
      // Apostrophes are dropped so contractions stay one token.
    } else if (unicode::is_punct(c)) {
      flush();
    } else {
      current.push_back(unicode::to_lower(c));
    }
  }
  flush();
  return tokens;
}

bool is_platform_url(std::string_view url) {
  const auto host = url.substr(0, url.find('/'));
  return host == "twitter.com" || host == "x.com" || host == "t.co";
}

std::optional<std::string> platform_status_id(std::string_view url) {
  if (!is_platform_url(url)) return std::nullopt;
  const auto slash = url.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto segs = split_path(url.substr(slash));
  // ["", user, "status", id, ...] or ["", "i", "web", "status", id, ...]
  for (std::size_t i = 1; i + 1 < segs.size(); ++i) {
    if (segs[i] != "status" && segs[i] != "statuses") continue;
    const auto& id = segs[i + 1];
    if (id.empty() || !std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return std::nullopt;
    }
    if (i + 2 < segs.size() && (segs[i + 2] == "photo" || segs[i + 2] == "video")) return std::nullopt;
    return id;
  }
  return std::nullopt;
}

std::int64_t parse_timestamp(std::string_view s) {
  s = trim(s);
  int y, mo, d, h = 0, mi = 0, sec = 0;
  int consumed = 0;
  const std::string str(s);
  if (std::sscanf(str.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3) {
    throw std::invalid_argument("unparseable timestamp: '" + str + "'");
  }
  std::string_view rest = s.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && (rest.front() == 'T' || rest.front() == ' ')) {
    int n = 0;
    const std::string r(rest.substr(1));
    if (std::sscanf(r.c_str(), "%2d:%2d:%2d%n", &h, &mi, &sec, &n) != 3) {
      throw std::invalid_argument("unparseable timestamp: '" + str + "'");
    }
    rest = rest.substr(1 + static_cast<std::size_t>(n));
  }
  if (!rest.empty() && rest.front() == '.') {
    rest.remove_prefix(1);
    while (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
  }
  long offset = 0;
  if (rest == "Z" || rest == "z" || rest.empty()) {
  } else if (rest.size() >= 5 && (rest.front() == '+' || rest.front() == '-')) {
    int oh = 0, om = 0;
    const std::string r(rest.substr(1));
    if (std::sscanf(r.c_str(), "%2d:%2d", &oh, &om) != 2 && std::sscanf(r.c_str(), "%2d%2d", &oh, &om) != 2) {
      throw std::invalid_argument("unparseable timestamp offset: '" + str + "'");
    }
    offset = (oh * 3600L + om * 60L) * (rest.front() == '-' ? -1 : 1);
  } else {
    throw std::invalid_argument("unparseable timestamp: '" + str + "'");
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) {
    throw std::invalid_argument("timestamp out of range: '" + str + "'");
  }
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = sec;
  return static_cast<std::int64_t>(timegm(&tm)) - offset;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  const std::time_t t = static_cast<std::time_t>(epoch_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string utc_day(std::int64_t epoch_seconds) {
  return format_timestamp(epoch_seconds).substr(0, 10);
}

std::size_t clean_record(MessageRecord& rec, std::size_t* media_links) {
  std::size_t failed = 0;
  rec.canonical_hashtags.clear();
  rec.canonical_urls.clear();
  rec.quote_links.clear();
  std::unordered_set<std::string> seen;
  for (const auto& h : rec.hashtags) {
    try {
      auto c = normalize_hashtag(h);
      if (seen.insert(c).second) rec.canonical_hashtags.push_back(std::move(c));
    } catch (const std::invalid_argument&) {
    }
  }
  seen.clear();
  for (const auto& u : rec.urls) {
    std::string c;
    try {
      c = normalize_url(u);
    } catch (const std::invalid_argument&) {
      ++failed;
      continue;
    }
    if (is_platform_url(c)) {
      if (auto id = platform_status_id(c)) {
        if (*id != rec.id && std::find(rec.quote_links.begin(), rec.quote_links.end(), *id) == rec.quote_links.end()) {
          rec.quote_links.push_back(*id);
        }
      } else if (media_links) {
        ++*media_links;
      }
      continue;
    }
    if (seen.insert(c).second) rec.canonical_urls.push_back(std::move(c));
  }
  rec.tokens = clean_text(rec.text, rec.hashtags, rec.urls, rec.mentions);
  rec.kind = derive_kind(rec);
  return failed;
}

nlohmann::json ParseReport::to_json() const {
  json j = {{"lines", lines},         {"records", records},           {"malformed", malformed},
            {"duplicates", duplicates}, {"dropped_urls", dropped_urls}, {"media_links", media_links},
            {"warning_count", warnings.size()}};
  json w = json::array();
  for (const auto& pw : warnings) w.push_back({{"line", pw.line}, {"reason", pw.reason}});
  j["warnings"] = std::move(w);
  return j;
}

ParseResult parse_records(std::istream& in) {
  if (!in) throw DataError("parse_records: unreadable stream");
  ParseResult result;
  auto& rep = result.report;
  std::unordered_set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    ++rep.lines;
    if (trim(line).empty()) continue;
    MessageRecord rec;
    try {
      rec = raw_from_json(json::parse(line));
    } catch (const std::exception& e) {
      ++rep.malformed;
      rep.warnings.push_back({rep.lines, e.what()});
      continue;
    }
    if (!ids.insert(rec.id).second) {
      ++rep.duplicates;
      rep.warnings.push_back({rep.lines, "duplicate id " + rec.id});
      continue;
    }
    if (auto failed = clean_record(rec, &rep.media_links)) {
      rep.dropped_urls += failed;
      rep.warnings.push_back({rep.lines, std::to_string(failed) + " unrecognizable url(s) dropped"});
    }
    result.records.push_back(std::move(rec));
  }
  if (in.bad()) throw DataError("parse_records: read error");
  rep.records = result.records.size();
  return result;
}

json raw_to_json(const MessageRecord& r) {
  json j;
  j["id"] = r.id;
  j["author_id"] = r.author_id;
  j["text"] = r.text;
  j["lang"] = r.lang ? json(*r.lang) : json(nullptr);
  j["created_at"] = format_timestamp(r.created_at);
  j["hashtags"] = r.hashtags;
  j["urls"] = r.urls;
  j["mentions"] = r.mentions;
  j["reply_to"] = r.reply_to ? json(*r.reply_to) : json(nullptr);
  j["quote_of"] = r.quote_of ? json(*r.quote_of) : json(nullptr);
  j["retweet_of"] = r.retweet_of ? json(*r.retweet_of) : json(nullptr);
  return j;
}

json to_json(const MessageRecord& r) {
  json j = raw_to_json(r);
  j["kind"] = std::string(to_string(r.kind));
  j["tokens"] = r.tokens;
  j["canonical_hashtags"] = r.canonical_hashtags;
  j["canonical_urls"] = r.canonical_urls;
  j["quote_links"] = r.quote_links;
  return j;
}

void write_records(std::ostream& out, const std::vector<MessageRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<MessageRecord> read_records(std::istream& in) {
  if (!in) throw DataError("read_records: unreadable stream");
  std::vector<MessageRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      MessageRecord r = raw_from_json(j);
      if (j.contains("kind") && j.contains("tokens")) {
        r.kind = parse_kind(j.at("kind").get<std::string>());
        r.tokens = j.at("tokens").get<std::vector<std::string>>();
        r.canonical_hashtags = string_list(j, "canonical_hashtags");
        r.canonical_urls = string_list(j, "canonical_urls");
        r.quote_links = string_list(j, "quote_links");
      } else {
        clean_record(r);
      }
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw DataError("records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<MessageRecord> read_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open records file '" + path + "'");
  return read_records(in);
}

}  // namespace convctx
