#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "popk/corpus.hpp"
#include "popk/rng.hpp"

using namespace popk;

namespace {

struct TempFile {
  std::filesystem::path path;

  explicit TempFile(const std::string& contents) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("popk_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++) + ".tsv");
    std::ofstream out(path);
    out << contents;
  }
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("parse_news builds a catalog") {
  TempFile f(
      "n1\tsports\tsoccer\tmatch report today\tlong form recap\te1 e2\n"
      "n2\tfinance\tstocks\tmarkets rally\n");
  const Catalog catalog = parse_news(f.path.string());
  REQUIRE(catalog.size() == 2);
  CHECK(catalog.category_count() == 2);
  CHECK(catalog.at("n1").category == "sports");
  CHECK(catalog.at("n1").title ==
        std::vector<std::string>{"match", "report", "today"});
  CHECK(catalog.at("n1").entities == std::vector<std::string>{"e1", "e2"});
  CHECK(catalog.at("n2").abstract.empty());
}

TEST_CASE("parse_news rejects duplicates, short lines and empty files") {
  TempFile dup("n1\tsports\ts\nn1\tsports\ts\n");
  try {
    parse_news(dup.path.string());
    FAIL("expected DuplicateArticleId");
  } catch (const ParseError& e) {
    CHECK(e.kind == ParseErrorKind::DuplicateArticleId);
    CHECK(e.token == "n1");
    CHECK(e.line_no == 2);
  }

  TempFile malformed("n1\tsports\n");
  try {
    parse_news(malformed.path.string());
    FAIL("expected MalformedLine");
  } catch (const ParseError& e) {
    CHECK(e.kind == ParseErrorKind::MalformedLine);
  }

  TempFile empty("");
  try {
    parse_news(empty.path.string());
    FAIL("expected EmptyFile");
  } catch (const ParseError& e) {
    CHECK(e.kind == ParseErrorKind::EmptyFile);
  }

  try {
    parse_news("/nonexistent/popk.tsv");
    FAIL("expected IoError");
  } catch (const ParseError& e) {
    CHECK(e.kind == ParseErrorKind::IoError);
  }
}

TEST_CASE("parse_news matches a line-scan oracle on a random file") {
  SplitMix64 rng(17);
  std::ostringstream file;
  std::set<std::string> oracle_ids;
  std::set<std::string> oracle_categories;
  for (int i = 0; i < 1000; ++i) {
    const std::string id = "n" + std::to_string(i);
    const std::string cat = "cat" + std::to_string(rng.next_below(23));
    file << id << '\t' << cat << "\tsub\ttitle " << rng.next_below(100) << '\n';
    oracle_ids.insert(id);
    oracle_categories.insert(cat);
  }
  TempFile f(file.str());
  const Catalog catalog = parse_news(f.path.string());
  REQUIRE(catalog.size() == oracle_ids.size());
  CHECK(catalog.category_count() == oracle_categories.size());
  for (const auto& id : oracle_ids) CHECK(catalog.contains(id));
}

namespace {

Catalog tiny_catalog() {
  Catalog c;
  for (const char* id : {"n125", "n174", "n200"}) {
    NewsArticle a;
    a.article_id = id;
    a.category = "cat";
    c.add(a);
  }
  return c;
}

}  // namespace

TEST_CASE("parse_behaviors parses labels, history and timestamps") {
  const Catalog catalog = tiny_catalog();
  TempFile f(
      "imp1\tu1\t1484640000\tn200\tn125-0 n174-1\n"
      "imp2\tu2\t2017-01-17T08:00:00Z\t\tn125-1\n");
  const BehaviorLog log = parse_behaviors(f.path.string(), catalog);
  REQUIRE(log.impressions.size() == 2);
  const Impression& first = log.impressions[0];
  CHECK(first.history == std::vector<std::string>{"n200"});
  REQUIRE(first.candidates.size() == 2);
  CHECK(first.candidates[0] == Candidate{"n125", 0});
  CHECK(first.candidates[1] == Candidate{"n174", 1});
  // empty history field
  CHECK(log.impressions[1].history.empty());
  // ISO-8601 normalized to epoch seconds UTC: 2017-01-17 08:00:00 UTC
  CHECK(log.impressions[1].timestamp == 1484640000);
  CHECK(log.impressions[0].timestamp == log.impressions[1].timestamp);
}

TEST_CASE("parse_behaviors error paths") {
  const Catalog catalog = tiny_catalog();

  SECTION("unknown candidate article fails the row") {
    TempFile f("imp1\tu1\t100\t\tn999-0 n174-1\n");
    try {
      parse_behaviors(f.path.string(), catalog);
      FAIL("expected UnknownArticleId");
    } catch (const ParseError& e) {
      CHECK(e.kind == ParseErrorKind::UnknownArticleId);
      CHECK(e.token == "n999");
      CHECK(e.line_no == 1);
    }
  }

  SECTION("unknown history id is dropped with a counter") {
    TempFile f("imp1\tu1\t100\tn999 n200\tn174-1\n");
    const BehaviorLog log = parse_behaviors(f.path.string(), catalog);
    CHECK(log.dropped_history_ids == 1);
    CHECK(log.impressions[0].history == std::vector<std::string>{"n200"});
  }

  SECTION("bad label") {
    TempFile f("imp1\tu1\t100\t\tn174-2\n");
    try {
      parse_behaviors(f.path.string(), catalog);
      FAIL("expected BadLabel");
    } catch (const ParseError& e) {
      CHECK(e.kind == ParseErrorKind::BadLabel);
      CHECK(e.token == "n174-2");
    }
  }

  SECTION("bad timestamp") {
    TempFile f("imp1\tu1\tyesterday\t\tn174-1\n");
    try {
      parse_behaviors(f.path.string(), catalog);
      FAIL("expected BadTimestamp");
    } catch (const ParseError& e) {
      CHECK(e.kind == ParseErrorKind::BadTimestamp);
    }
  }
}

TEST_CASE("timestamp formats normalize to the same epoch second") {
  CHECK(parse_timestamp("1484640000", 1) == 1484640000);
  CHECK(parse_timestamp("2017-01-17T08:00:00Z", 1) == 1484640000);
  CHECK(parse_timestamp("2017-01-17 08:00:00", 1) == 1484640000);
  CHECK(parse_timestamp("2017-01-17T17:00:00+09:00", 1) == 1484640000);
  CHECK(parse_timestamp("2017-01-17T03:00:00-05:00", 1) == 1484640000);
  CHECK(format_timestamp(1484640000) == "2017-01-17T08:00:00Z");
  CHECK_THROWS_AS(parse_timestamp("-5", 1), ParseError);
  CHECK_THROWS_AS(parse_timestamp("1969-12-31T23:59:59Z", 1), ParseError);
}

TEST_CASE("parse_behaviors field counts match a split-and-count oracle") {
  Catalog catalog;
  for (int i = 0; i < 40; ++i) {
    NewsArticle a;
    a.article_id = "n" + std::to_string(i);
    a.category = "c" + std::to_string(i % 4);
    catalog.add(a);
  }
  SplitMix64 rng(99);
  std::ostringstream file;
  std::vector<std::pair<std::size_t, std::size_t>> oracle;  // (history, cands)
  for (int row = 0; row < 500; ++row) {
    const std::size_t n_hist = rng.next_below(6);
    const std::size_t n_cand = 1 + rng.next_below(8);
    file << "imp" << row << "\tu" << rng.next_below(50) << '\t'
         << rng.next_below(1000000);
    file << '\t';
    for (std::size_t h = 0; h < n_hist; ++h) {
      if (h) file << ' ';
      file << 'n' << rng.next_below(40);
    }
    file << '\t';
    for (std::size_t c = 0; c < n_cand; ++c) {
      if (c) file << ' ';
      file << 'n' << rng.next_below(40) << '-' << rng.next_below(2);
    }
    file << '\n';
    oracle.emplace_back(n_hist, n_cand);
  }
  TempFile f(file.str());
  const BehaviorLog log = parse_behaviors(f.path.string(), catalog);
  REQUIRE(log.impressions.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK(log.impressions[i].history.size() == oracle[i].first);
    CHECK(log.impressions[i].candidates.size() == oracle[i].second);
  }
}

TEST_CASE("bucket_of floor semantics") {
  const BucketSpec spec;
  CHECK(bucket_of(7200, spec) == 2);   // boundary starts its bucket
  CHECK(bucket_of(3599, spec) == 0);
  CHECK(bucket_of(3600, spec) == 1);
  CHECK(bucket_of(0, spec) == 0);

  SECTION("1000 random timestamps match integer-division oracle") {
    SplitMix64 rng(7);
    for (int i = 0; i < 1000; ++i) {
      const std::int64_t ts = static_cast<std::int64_t>(rng.next_below(1u << 30));
      const BucketSpec s{1 + static_cast<std::int64_t>(rng.next_below(9999)), 0};
      CHECK(bucket_of(ts, s) == ts / s.bucket_length);
    }
  }

  SECTION("buckets are monotone and cover half-open intervals") {
    SplitMix64 rng(8);
    for (int i = 0; i < 200; ++i) {
      const std::int64_t ts = static_cast<std::int64_t>(rng.next_below(1u << 20));
      const std::int64_t b = bucket_of(ts, spec);
      CHECK(bucket_of(ts + 1, spec) >= b);
      CHECK(ts >= b * spec.bucket_length);
      CHECK(ts < (b + 1) * spec.bucket_length);
    }
  }
}

TEST_CASE("round trip: write then reparse yields equal structures") {
  SplitMix64 rng(21);
  Catalog catalog;
  for (int i = 0; i < 60; ++i) {
    NewsArticle a;
    a.article_id = "n" + std::to_string(i);
    a.category = "c" + std::to_string(rng.next_below(5));
    a.subcategory = rng.next_bool(0.5) ? "s" + std::to_string(i) : "";
    const std::size_t n_title = rng.next_below(4);
    for (std::size_t t = 0; t < n_title; ++t)
      a.title.push_back("w" + std::to_string(rng.next_below(30)));
    if (rng.next_bool(0.3)) a.abstract = {"abs", std::to_string(i)};
    if (rng.next_bool(0.3)) a.entities = {"e" + std::to_string(i)};
    catalog.add(a);
  }
  std::vector<Impression> impressions;
  for (int i = 0; i < 80; ++i) {
    Impression imp;
    imp.impression_id = "imp" + std::to_string(i);
    imp.user_id = "u" + std::to_string(rng.next_below(10));
    imp.timestamp = static_cast<std::int64_t>(rng.next_below(1u << 24));
    const std::size_t n_hist = rng.next_below(5);
    for (std::size_t h = 0; h < n_hist; ++h)
      imp.history.push_back("n" + std::to_string(rng.next_below(60)));
    const std::size_t n_cand = 1 + rng.next_below(6);
    for (std::size_t c = 0; c < n_cand; ++c)
      imp.candidates.push_back({"n" + std::to_string(rng.next_below(60)),
                                static_cast<int>(rng.next_below(2))});
    impressions.push_back(imp);
  }

  std::ostringstream news_out, behaviors_out;
  write_news(news_out, catalog);
  write_behaviors(behaviors_out, impressions);
  TempFile news_f(news_out.str());
  TempFile behaviors_f(behaviors_out.str());

  const Catalog catalog2 = parse_news(news_f.path.string());
  CHECK(catalog2 == catalog);
  const BehaviorLog log2 = parse_behaviors(behaviors_f.path.string(), catalog2);
  REQUIRE(log2.impressions.size() == impressions.size());
  CHECK(log2.impressions == impressions);
  CHECK(log2.dropped_history_ids == 0);
}

TEST_CASE("history truncation keeps the most recent entries in order") {
  std::vector<std::string> history;
  for (int i = 0; i < 80; ++i) history.push_back("n" + std::to_string(i));
  const auto truncated = truncate_history(history, 50);
  REQUIRE(truncated.size() == 50);
  CHECK(truncated.front() == "n30");
  CHECK(truncated.back() == "n79");
  const auto shorter = truncate_history(history, 100);
  CHECK(shorter.size() == 80);
}
