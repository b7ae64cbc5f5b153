#pragma once

#include <optional>
#include <string>
#include <vector>

#include "convctx/ingest.hpp"

namespace convctx::testing {

inline MessageRecord tweet(const std::string& id, const std::string& author = "a",
                           std::vector<std::string> hashtags = {}, std::vector<std::string> urls = {}) {
  MessageRecord r;
  r.id = id;
  r.author_id = author;
  r.lang = "en";
  r.created_at = 1604361600;
  r.canonical_hashtags = std::move(hashtags);
  r.canonical_urls = std::move(urls);
  return r;
}

inline MessageRecord reply(const std::string& id, const std::string& to, const std::string& author = "a") {
  auto r = tweet(id, author);
  r.reply_to = to;
  r.kind = MessageKind::Reply;
  return r;
}

inline MessageRecord quote(const std::string& id, const std::string& of, const std::string& author = "a") {
  auto r = tweet(id, author);
  r.quote_of = of;
  r.kind = MessageKind::Quote;
  return r;
}

inline MessageRecord retweet(const std::string& id, const std::string& of, const std::string& author = "a") {
  auto r = tweet(id, author);
  r.retweet_of = of;
  r.kind = MessageKind::Retweet;
  return r;
}

}  // namespace convctx::testing
