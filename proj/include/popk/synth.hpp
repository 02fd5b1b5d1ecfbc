#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "popk/corpus.hpp"
#include "popk/rng.hpp"

namespace popk {

class InfeasibleConfig : public std::invalid_argument {
 public:
  explicit InfeasibleConfig(const std::string& what)
      : std::invalid_argument(what) {}
};

// Synthetic popularity-biased corpus with known per-user category preferences.
// Article exposure follows a Zipf-like law (weight ~ rank^-exponent over a
// seeded rank permutation); clicks follow the user's preferred category with
// probability preference_strength and popularity otherwise.
struct SynthConfig {
  int n_users = 200;
  int n_articles = 500;
  int n_categories = 10;
  int n_impressions = 20000;
  int candidates_per_impression = 10;
  double popularity_exponent = 0.0;  // 0 = uniform exposure
  double preference_strength = 0.0;  // in [0, 1]
  int horizon = 240;                 // hourly buckets
  std::uint64_t seed = 0;

  void validate() const {
    if (n_users < 1 || n_articles < 1 || n_categories < 1 ||
        n_impressions < 1 || horizon < 1)
      throw InfeasibleConfig("synth: all counts must be >= 1");
    if (n_categories > n_articles)
      throw InfeasibleConfig("synth: n_categories must be <= n_articles");
    if (candidates_per_impression < 2)
      throw InfeasibleConfig("synth: candidates_per_impression must be >= 2");
    if (candidates_per_impression > n_articles)
      throw InfeasibleConfig(
          "synth: candidates_per_impression must be <= n_articles");
    if (popularity_exponent < 0.0)
      throw InfeasibleConfig("synth: popularity_exponent must be >= 0");
    if (preference_strength < 0.0 || preference_strength > 1.0)
      throw InfeasibleConfig("synth: preference_strength must be in [0, 1]");
  }
};

struct GroundTruth {
  std::unordered_map<std::string, std::string> user_pref;  // user -> category
  std::unordered_map<std::string, double> article_weight;  // static popularity
};

struct SynthCorpus {
  Catalog catalog;
  std::vector<Impression> impressions;
  GroundTruth truth;
};

namespace detail {

inline std::string padded_id(char prefix, int i, int width) {
  std::string digits = std::to_string(i);
  std::string out(1, prefix);
  for (int pad = width - static_cast<int>(digits.size()); pad > 0; --pad)
    out.push_back('0');
  out += digits;
  return out;
}

inline int id_width(int n) {
  int w = 1;
  for (int v = n - 1; v >= 10; v /= 10) ++w;
  return w;
}

// Stateful generator so a test split can continue the same world (same
// articles, weights and user histories) after the training horizon.
class SynthGenerator {
 public:
  explicit SynthGenerator(const SynthConfig& config)
      : cfg_(config), rng_(derive_seed(config.seed, "synth")) {
    cfg_.validate();
    const int aw = id_width(cfg_.n_articles);
    article_ids_.reserve(cfg_.n_articles);
    weights_.resize(cfg_.n_articles);
    by_category_.resize(cfg_.n_categories);

    // Categories round-robin; popularity ranks are a seeded permutation so
    // the most-exposed articles are not pinned to a fixed category pattern.
    std::vector<int> ranks(cfg_.n_articles);
    for (int i = 0; i < cfg_.n_articles; ++i) ranks[i] = i;
    SplitMix64 perm_rng(derive_seed(cfg_.seed, "rank-permutation"));
    shuffle(ranks, perm_rng);

    for (int i = 0; i < cfg_.n_articles; ++i) {
      const int cat = i % cfg_.n_categories;
      NewsArticle article;
      article.article_id = padded_id('a', i, aw);
      article.category = "c" + std::to_string(cat);
      article.subcategory = article.category + "s";
      article.title = {"story", std::to_string(i)};
      catalog_.add(article);
      article_ids_.push_back(article.article_id);
      categories_.push_back(cat);
      weights_[i] = std::pow(static_cast<double>(ranks[i] + 1),
                             -cfg_.popularity_exponent);
      by_category_[cat].push_back(i);
      truth_.article_weight[article.article_id] = weights_[i];
    }

    const int uw = id_width(cfg_.n_users);
    user_ids_.reserve(cfg_.n_users);
    for (int u = 0; u < cfg_.n_users; ++u) {
      user_ids_.push_back(padded_id('u', u, uw));
      const int cat = u % cfg_.n_categories;
      user_cat_.push_back(cat);
      truth_.user_pref[user_ids_[u]] = "c" + std::to_string(cat);
    }
    histories_.resize(cfg_.n_users);
  }

  const Catalog& catalog() const { return catalog_; }
  const GroundTruth& truth() const { return truth_; }

  // `count` impressions with timestamps uniform over
  // [bucket_offset, bucket_offset + horizon_buckets) hours, emitted in
  // chronological order. User histories persist across calls.
  std::vector<Impression> generate(int count, std::int64_t bucket_offset,
                                   int horizon_buckets,
                                   const std::string& id_prefix) {
    struct Draft {
      int user;
      std::int64_t ts;
    };
    std::vector<Draft> drafts(static_cast<std::size_t>(count));
    const std::int64_t span = static_cast<std::int64_t>(horizon_buckets) * 3600;
    for (auto& d : drafts) {
      d.user = static_cast<int>(rng_.next_below(cfg_.n_users));
      d.ts = bucket_offset * 3600 + static_cast<std::int64_t>(rng_.next_below(
                 static_cast<std::uint64_t>(span)));
    }
    std::stable_sort(drafts.begin(), drafts.end(),
                     [](const Draft& a, const Draft& b) { return a.ts < b.ts; });

    std::vector<Impression> impressions;
    impressions.reserve(drafts.size());
    const int iw = id_width(count > 1 ? count : 2);
    for (int j = 0; j < count; ++j) {
      const Draft& d = drafts[static_cast<std::size_t>(j)];
      Impression imp;
      imp.impression_id = id_prefix + detail::padded_id('i', j, iw).substr(1);
      imp.user_id = user_ids_[d.user];
      imp.timestamp = d.ts;
      imp.history = histories_[d.user];

      std::vector<int> cands = draw_candidates();
      const int pref = user_cat_[d.user];
      if (rng_.next_bool(0.5)) force_include_category(cands, pref);
      const int clicked = pick_click(cands, pref);

      imp.candidates.reserve(cands.size());
      for (std::size_t c = 0; c < cands.size(); ++c) {
        imp.candidates.push_back(
            {article_ids_[cands[c]], static_cast<int>(c) == clicked ? 1 : 0});
      }
      histories_[d.user].push_back(article_ids_[cands[clicked]]);
      impressions.push_back(std::move(imp));
    }
    return impressions;
  }

 private:
  // Weighted sampling without replacement (Efraimidis-Spirakis keys): take
  // the candidates_per_impression largest log(u)/w keys.
  std::vector<int> draw_candidates() {
    const std::size_t c = static_cast<std::size_t>(cfg_.candidates_per_impression);
    std::vector<std::pair<double, int>> keys(weights_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      double u = rng_.next_double();
      if (u <= 0.0) u = 0x1.0p-53;
      keys[i] = {std::log(u) / weights_[i], static_cast<int>(i)};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(c),
                      keys.end(), [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    std::vector<int> out(c);
    for (std::size_t i = 0; i < c; ++i) out[i] = keys[i].second;
    return out;
  }

  // Puts one uniformly drawn article of the user's preferred category into
  // the list. Uniform rather than weighted, so long-tail preferred articles
  // reach candidate lists and the preference signal stays identifiable under
  // heavy exposure skew.
  void force_include_category(std::vector<int>& cands, int cat) {
    const std::vector<int>& members = by_category_[cat];
    const int chosen = members[rng_.next_below(members.size())];
    for (const int a : cands)
      if (a == chosen) return;
    cands[rng_.next_below(cands.size())] = chosen;
  }

  // Exactly one click per impression.
  int pick_click(const std::vector<int>& cands, int pref_cat) {
    if (cfg_.preference_strength > 0.0 &&
        rng_.next_bool(cfg_.preference_strength)) {
      std::vector<int> preferred;
      for (std::size_t i = 0; i < cands.size(); ++i)
        if (categories_[cands[i]] == pref_cat)
          preferred.push_back(static_cast<int>(i));
      if (!preferred.empty())
        return preferred[rng_.next_below(preferred.size())];
    }
    double total = 0.0;
    for (const int a : cands) total += weights_[a];
    double roll = rng_.next_double() * total;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      roll -= weights_[cands[i]];
      if (roll <= 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(cands.size()) - 1;
  }

  SynthConfig cfg_;
  SplitMix64 rng_;
  Catalog catalog_;
  GroundTruth truth_;
  std::vector<std::string> article_ids_;
  std::vector<int> categories_;
  std::vector<double> weights_;
  std::vector<std::vector<int>> by_category_;
  std::vector<std::string> user_ids_;
  std::vector<int> user_cat_;
  std::vector<std::vector<std::string>> histories_;
};

}  // namespace detail

inline SynthCorpus generate_corpus(const SynthConfig& config) {
  detail::SynthGenerator gen(config);
  SynthCorpus corpus;
  corpus.impressions = gen.generate(config.n_impressions, 0, config.horizon, "tr");
  corpus.catalog = gen.catalog();
  corpus.truth = gen.truth();
  return corpus;
}

struct SynthSplits {
  Catalog catalog;
  std::vector<Impression> train;
  std::vector<Impression> test;
  GroundTruth truth;
};

// Train impressions over the configured horizon plus a held-out test split in
// the window right after it, sharing articles, weights and user histories.
inline SynthSplits generate_splits(const SynthConfig& config,
                                   int test_impressions) {
  detail::SynthGenerator gen(config);
  SynthSplits splits;
  splits.train = gen.generate(config.n_impressions, 0, config.horizon, "tr");
  if (test_impressions > 0) {
    const int test_horizon = std::max(1, config.horizon / 10);
    splits.test = gen.generate(test_impressions, config.horizon, test_horizon, "te");
  }
  splits.catalog = gen.catalog();
  splits.truth = gen.truth();
  return splits;
}

// user_id \t preferred_category, user id ascending.
inline void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  std::vector<std::pair<std::string, std::string>> rows(truth.user_pref.begin(),
                                                        truth.user_pref.end());
  std::sort(rows.begin(), rows.end());
  for (const auto& [user, cat] : rows) out << user << '\t' << cat << '\n';
}

}  // namespace popk
