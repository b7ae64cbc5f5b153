#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace convctx {

enum class MessageKind { Original, Reply, Quote, Retweet };

std::string_view to_string(MessageKind kind);
MessageKind parse_kind(std::string_view s);

// One cleaned message. The raw fields mirror the input record; the derived
// fields (kind, tokens, canonical_*, quote_links) are filled by ingest.
struct MessageRecord {
  std::string id;
  std::string author_id;
  std::string text;
  std::optional<std::string> lang;
  std::int64_t created_at = 0;  // seconds since the UNIX epoch, UTC
  std::vector<std::string> hashtags;
  std::vector<std::string> urls;
  std::vector<std::string> mentions;  // user ids
  std::optional<std::string> reply_to;
  std::optional<std::string> quote_of;
  std::optional<std::string> retweet_of;

  MessageKind kind = MessageKind::Original;
  std::vector<std::string> tokens;
  std::vector<std::string> canonical_hashtags;
  std::vector<std::string> canonical_urls;
  // Tweet ids referenced by quote links to the platform domain.
  std::vector<std::string> quote_links;
};

struct ParseWarning {
  std::size_t line = 0;
  std::string reason;
};

struct ParseReport {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  std::size_t dropped_urls = 0;
  std::size_t media_links = 0;
  std::vector<ParseWarning> warnings;

  std::size_t warning_count() const { return warnings.size(); }
  nlohmann::json to_json() const;
};

struct ParseResult {
  std::vector<MessageRecord> records;
  ParseReport report;
};

// Strips scheme and www/mobile prefixes, drops query and fragment (kept for
// facebook/google/youtube), de-amps, and rewrites youtube video links to
// youtu.be/<id>. Throws std::invalid_argument when no domain is recognizable.
std::string normalize_url(std::string_view raw);

// Lowercases (Unicode) and removes a leading '#'. Throws on empty result.
std::string normalize_hashtag(std::string_view raw);

// Removes URLs, hashtags and @-mentions, strips punctuation, lowercases and
// splits on whitespace.
std::vector<std::string> clean_text(std::string_view text,
                                    const std::vector<std::string>& hashtags = {},
                                    const std::vector<std::string>& urls = {},
                                    const std::vector<std::string>& mentions = {});

// If `canonical_url` is a link to a post on the platform domain, returns the
// referenced post id.
std::optional<std::string> platform_status_id(std::string_view canonical_url);
bool is_platform_url(std::string_view canonical_url);

// Parses "2020-11-03T14:05:00Z" style timestamps (optional fraction and
// offset) into epoch seconds.
std::int64_t parse_timestamp(std::string_view s);
std::string format_timestamp(std::int64_t epoch_seconds);
// UTC calendar day, "YYYY-MM-DD".
std::string utc_day(std::int64_t epoch_seconds);

// Applies the cleaning rules to a record whose raw fields are populated.
// Returns the number of URLs that failed normalization.
std::size_t clean_record(MessageRecord& rec, std::size_t* media_links = nullptr);

// Reads raw line-delimited JSON records, derives kind and cleaned fields.
// Malformed lines and duplicate ids are skipped and reported.
ParseResult parse_records(std::istream& in);

// Reads records already written by write_records (derived fields trusted).
std::vector<MessageRecord> read_records(std::istream& in);
std::vector<MessageRecord> read_records_file(const std::string& path);

void write_records(std::ostream& out, const std::vector<MessageRecord>& records);

nlohmann::json raw_to_json(const MessageRecord& rec);
nlohmann::json to_json(const MessageRecord& rec);

}  // namespace convctx
