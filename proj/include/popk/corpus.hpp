#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "popk/tsv.hpp"

namespace popk {

struct NewsArticle {
  std::string article_id;
  std::string category;
  std::string subcategory;            // empty = absent
  std::vector<std::string> title;     // whitespace tokens
  std::vector<std::string> abstract;  // whitespace tokens, empty = absent
  std::vector<std::string> entities;  // entity id strings

  bool operator==(const NewsArticle&) const = default;
};

struct Candidate {
  std::string article_id;
  int label = 0;  // 0 or 1

  bool operator==(const Candidate&) const = default;
};

struct Impression {
  std::string impression_id;
  std::string user_id;
  std::int64_t timestamp = 0;         // epoch seconds, UTC
  std::vector<std::string> history;   // clicked article ids, most recent last
  std::vector<Candidate> candidates;

  bool operator==(const Impression&) const = default;
};

class Catalog {
 public:
  void add(NewsArticle article) {
    const std::string id = article.article_id;
    articles_.emplace(id, std::move(article));
    categories_.insert(articles_.at(id).category);
  }

  bool contains(const std::string& id) const { return articles_.count(id) > 0; }

  const NewsArticle& at(const std::string& id) const { return articles_.at(id); }

  const NewsArticle* find(const std::string& id) const {
    auto it = articles_.find(id);
    return it == articles_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return articles_.size(); }
  std::size_t category_count() const { return categories_.size(); }

  const std::unordered_map<std::string, NewsArticle>& articles() const {
    return articles_;
  }

  // Article ids in ascending order; deterministic iteration for model rows
  // and serialized output.
  std::vector<std::string> sorted_ids() const {
    std::vector<std::string> ids;
    ids.reserve(articles_.size());
    for (const auto& [id, art] : articles_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  bool operator==(const Catalog& other) const {
    return articles_ == other.articles_;
  }

 private:
  std::unordered_map<std::string, NewsArticle> articles_;
  std::unordered_set<std::string> categories_;
};

struct BucketSpec {
  std::int64_t bucket_length = 3600;  // seconds
  std::int64_t origin = 0;            // epoch second
};

// Bucket containing `timestamp`. Buckets cover half-open intervals
// [origin + b*L, origin + (b+1)*L); a timestamp on a boundary belongs to the
// bucket it starts.
inline std::int64_t bucket_of(std::int64_t timestamp, const BucketSpec& spec) {
  const std::int64_t offset = timestamp - spec.origin;
  std::int64_t q = offset / spec.bucket_length;
  if (offset % spec.bucket_length != 0 && offset < 0) --q;  // floor
  return q;
}

enum class ParseErrorKind {
  IoError,
  EmptyFile,
  MalformedLine,
  DuplicateArticleId,
  UnknownArticleId,
  BadLabel,
  BadTimestamp,
};

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, std::string message, std::size_t line_no = 0,
             std::string token = {})
      : std::runtime_error(std::move(message)),
        kind(kind),
        line_no(line_no),
        token(std::move(token)) {}

  ParseErrorKind kind;
  std::size_t line_no;  // 1-based, 0 when not line-specific
  std::string token;
};

namespace detail {

inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m,
                            unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

inline bool parse_fixed_uint(std::string_view s, std::size_t pos,
                             std::size_t len, unsigned& out) {
  if (pos + len > s.size()) return false;
  unsigned v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + static_cast<unsigned>(s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

// Accepts epoch-second integers and ISO-8601 datetimes
// ("YYYY-MM-DD[T ]HH:MM:SS" with optional "Z" or "+HH:MM"/"-HH:MM" offset).
// Everything is normalized to epoch seconds UTC; the source logs carry no
// zone metadata, so bare datetimes are read as UTC. Timestamps before the
// epoch are rejected.
inline std::int64_t parse_timestamp(std::string_view s, std::size_t line_no) {
  const auto fail = [&]() -> std::int64_t {
    throw ParseError(ParseErrorKind::BadTimestamp,
                     "bad timestamp '" + std::string(s) + "' at line " +
                         std::to_string(line_no),
                     line_no, std::string(s));
  };
  if (s.empty()) return fail();
  if (s.find_first_not_of("0123456789-") == std::string_view::npos &&
      s.find('-') == std::string_view::npos) {
    const auto v = parse_int(s);
    if (!v || *v < 0) return fail();
    return *v;
  }
  // ISO-8601: 2017-01-17T09:30:00[Z|+HH:MM|-HH:MM]
  unsigned year = 0, month = 0, day = 0, hh = 0, mm = 0, ss = 0;
  if (s.size() < 19) return fail();
  if (!detail::parse_fixed_uint(s, 0, 4, year) || s[4] != '-' ||
      !detail::parse_fixed_uint(s, 5, 2, month) || s[7] != '-' ||
      !detail::parse_fixed_uint(s, 8, 2, day) ||
      (s[10] != 'T' && s[10] != ' ') ||
      !detail::parse_fixed_uint(s, 11, 2, hh) || s[13] != ':' ||
      !detail::parse_fixed_uint(s, 14, 2, mm) || s[16] != ':' ||
      !detail::parse_fixed_uint(s, 17, 2, ss))
    return fail();
  if (month < 1 || month > 12 || day < 1 || day > 31 || hh > 23 || mm > 59 ||
      ss > 60)
    return fail();
  std::int64_t offset = 0;
  if (s.size() > 19) {
    const std::string_view rest = s.substr(19);
    if (rest == "Z") {
      // UTC
    } else if ((rest[0] == '+' || rest[0] == '-') && rest.size() == 6 &&
               rest[3] == ':') {
      unsigned oh = 0, om = 0;
      if (!detail::parse_fixed_uint(rest, 1, 2, oh) ||
          !detail::parse_fixed_uint(rest, 4, 2, om))
        return fail();
      offset = (rest[0] == '+' ? 1 : -1) *
               (static_cast<std::int64_t>(oh) * 3600 + om * 60);
    } else {
      return fail();
    }
  }
  const std::int64_t days = detail::days_from_civil(year, month, day);
  const std::int64_t epoch =
      days * 86400 + hh * 3600 + mm * 60 + ss - offset;
  if (epoch < 0) return fail();
  return epoch;
}

inline std::string format_timestamp(std::int64_t epoch) {
  std::int64_t days = epoch / 86400;
  std::int64_t rem = epoch % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y;
  unsigned m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600),
                static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

// News TSV: article_id \t category \t subcategory \t title \t abstract \t
// entities. The last three columns are optional; title/abstract/entities are
// space-separated tokens.
inline Catalog parse_news(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError(ParseErrorKind::IoError, "cannot open " + path);
  }
  Catalog catalog;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;  // '#' lines are metadata
    const auto fields = split(line, '\t');
    if (fields.size() < 3) {
      throw ParseError(ParseErrorKind::MalformedLine,
                       path + ": expected >= 3 fields at line " +
                           std::to_string(line_no),
                       line_no);
    }
    NewsArticle article;
    article.article_id = std::string(fields[0]);
    article.category = std::string(fields[1]);
    article.subcategory = std::string(fields[2]);
    if (article.article_id.empty() || article.category.empty()) {
      throw ParseError(ParseErrorKind::MalformedLine,
                       path + ": empty article_id or category at line " +
                           std::to_string(line_no),
                       line_no);
    }
    if (fields.size() > 3) article.title = split_tokens(fields[3]);
    if (fields.size() > 4) article.abstract = split_tokens(fields[4]);
    if (fields.size() > 5) article.entities = split_tokens(fields[5]);
    if (catalog.contains(article.article_id)) {
      throw ParseError(ParseErrorKind::DuplicateArticleId,
                       path + ": duplicate article id '" + article.article_id +
                           "' at line " + std::to_string(line_no),
                       line_no, article.article_id);
    }
    catalog.add(std::move(article));
  }
  if (catalog.size() == 0) {
    throw ParseError(ParseErrorKind::EmptyFile, path + ": no articles");
  }
  return catalog;
}

struct BehaviorLog {
  std::vector<Impression> impressions;
  // Unknown article ids in history fields are dropped rather than failing the
  // row (they only feed the user encoder); this counts the drops.
  std::size_t dropped_history_ids = 0;
};

// Behaviors TSV: impression_id \t user_id \t time \t history \t candidates,
// history as space-separated article ids, candidates as space-separated
// "articleid-label" with label 0 or 1.
inline BehaviorLog parse_behaviors(const std::string& path,
                                   const Catalog& catalog) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError(ParseErrorKind::IoError, "cannot open " + path);
  }
  BehaviorLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;  // '#' lines are metadata
    const auto fields = split(line, '\t');
    if (fields.size() != 5) {
      throw ParseError(ParseErrorKind::MalformedLine,
                       path + ": expected 5 fields at line " +
                           std::to_string(line_no),
                       line_no);
    }
    Impression imp;
    imp.impression_id = std::string(fields[0]);
    imp.user_id = std::string(fields[1]);
    imp.timestamp = parse_timestamp(fields[2], line_no);
    for (auto& id : split_tokens(fields[3])) {
      if (!catalog.contains(id)) {
        ++log.dropped_history_ids;
        continue;
      }
      imp.history.push_back(std::move(id));
    }
    const auto tokens = split_tokens(fields[4]);
    if (tokens.empty()) {
      throw ParseError(ParseErrorKind::MalformedLine,
                       path + ": empty candidate list at line " +
                           std::to_string(line_no),
                       line_no);
    }
    for (const auto& token : tokens) {
      const std::size_t dash = token.rfind('-');
      if (dash == std::string::npos || dash == 0 ||
          dash + 2 != token.size() ||
          (token[dash + 1] != '0' && token[dash + 1] != '1')) {
        throw ParseError(ParseErrorKind::BadLabel,
                         path + ": bad candidate token '" + token +
                             "' at line " + std::to_string(line_no),
                         line_no, token);
      }
      Candidate cand;
      cand.article_id = token.substr(0, dash);
      cand.label = token[dash + 1] - '0';
      if (!catalog.contains(cand.article_id)) {
        throw ParseError(ParseErrorKind::UnknownArticleId,
                         path + ": unknown candidate article '" +
                             cand.article_id + "' at line " +
                             std::to_string(line_no),
                         line_no, cand.article_id);
      }
      imp.candidates.push_back(std::move(cand));
    }
    log.impressions.push_back(std::move(imp));
  }
  return log;
}

inline void write_news(std::ostream& out, const Catalog& catalog) {
  for (const auto& id : catalog.sorted_ids()) {
    const NewsArticle& a = catalog.at(id);
    out << a.article_id << '\t' << a.category << '\t' << a.subcategory << '\t'
        << join(a.title, ' ') << '\t' << join(a.abstract, ' ') << '\t'
        << join(a.entities, ' ') << '\n';
  }
}

inline void write_behaviors(std::ostream& out,
                            std::span<const Impression> impressions) {
  for (const Impression& imp : impressions) {
    out << imp.impression_id << '\t' << imp.user_id << '\t' << imp.timestamp
        << '\t' << join(imp.history, ' ') << '\t';
    bool first = true;
    for (const Candidate& c : imp.candidates) {
      if (!first) out << ' ';
      out << c.article_id << '-' << c.label;
      first = false;
    }
    out << '\n';
  }
}

// Keeps the most recent `max_history` entries (history is ordered most recent
// last), preserving order.
inline std::span<const std::string> truncate_history(
    std::span<const std::string> history, std::size_t max_history) {
  if (history.size() <= max_history) return history;
  return history.subspan(history.size() - max_history);
}

}  // namespace popk
