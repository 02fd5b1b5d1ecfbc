#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "popk/corpus.hpp"

namespace popk {

// Indices sorted by score descending; equal scores keep input order, so every
// metric is deterministic under ties.
inline std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

// Probability that a random positive outranks a random negative; ties count
// one half. Empty when the impression has no positive or no negative.
inline std::optional<double> auc_impression(std::span<const int> labels,
                                            std::span<const double> scores) {
  double pos = 0, neg = 0, credit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    ++pos;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  return credit / (pos * neg);
}

// 1/rank of the highest-ranked positive, ranks starting at 1.
inline std::optional<double> mrr(std::span<const int> labels,
                                 std::span<const double> scores) {
  const auto order = rank_order(scores);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] == 1) return 1.0 / static_cast<double>(r + 1);
  }
  return std::nullopt;
}

// Binary-gain DCG@k with discount 1/log2(rank+1), normalized by the ideal
// ordering.
inline std::optional<double> ndcg_at_k(std::span<const int> labels,
                                       std::span<const double> scores, int k) {
  const std::size_t n_pos = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0) return std::nullopt;
  const auto order = rank_order(scores);
  const std::size_t depth = std::min<std::size_t>(order.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (labels[order[r]] == 1)
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(n_pos, depth); ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

// Normalized entropy of a category histogram: -sum p log p / log n_categories,
// with 0 log 0 = 0. A single-category universe has no spread to measure and
// returns 0 by convention.
inline double normalized_entropy(std::span<const std::int64_t> counts,
                                 std::size_t n_categories) {
  if (n_categories <= 1) return 0.0;
  std::int64_t total = 0;
  for (const std::int64_t c : counts) total += c;
  if (total == 0) return 0.0;
  double entropy = 0.0;
  for (const std::int64_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    entropy -= p * std::log(p);
  }
  return entropy / std::log(static_cast<double>(n_categories));
}

struct ScoredImpression {
  std::vector<std::string> article_ids;
  std::vector<int> labels;
  std::vector<double> scores;
};

struct CategoryCount {
  std::string category;
  std::int64_t count = 0;

  bool operator==(const CategoryCount&) const = default;
};

struct EvalReport {
  double auc = 0.0;
  double mrr = 0.0;
  std::map<int, double> ndcg;                   // k -> mean nDCG@k
  std::map<int, double> dctg_pooled;            // k -> D_ctg@k over pooled slots
  std::map<int, double> dctg_per_impression;    // k -> mean per-impression D_ctg@k
  // k -> counts of category appearances in top-k slots, (count desc, cat asc).
  std::map<int, std::vector<CategoryCount>> category_freq;
  std::size_t n_impressions = 0;  // impressions ranked for the top-k tables
  std::size_t skipped_auc = 0;    // no positive or no negative
  std::size_t skipped_rank = 0;   // no positive (MRR / nDCG)
  std::map<int, std::vector<std::vector<std::string>>> topk_articles;  // when collected
};

struct EvalOptions {
  std::vector<int> ks = {5, 10};
  bool collect_topk = false;
};

// Aggregates accuracy and diversity metrics over scored impressions. Means
// cover only non-skipped impressions; D_ctg is reported both over the pooled
// top-k slots of all impressions and as a per-impression mean.
inline EvalReport evaluate(std::span<const ScoredImpression> impressions,
                           const Catalog& catalog,
                           const EvalOptions& options = {}) {
  EvalReport report;
  double auc_sum = 0.0, mrr_sum = 0.0;
  std::size_t auc_n = 0, rank_n = 0;
  std::map<int, double> ndcg_sum;
  std::map<int, std::map<std::string, std::int64_t>> pooled;
  std::map<int, double> per_impression_sum;
  const std::size_t n_categories = catalog.category_count();

  for (const ScoredImpression& imp : impressions) {
    if (imp.article_ids.empty()) continue;
    ++report.n_impressions;
    if (const auto v = auc_impression(imp.labels, imp.scores)) {
      auc_sum += *v;
      ++auc_n;
    } else {
      ++report.skipped_auc;
    }
    const auto v_mrr = mrr(imp.labels, imp.scores);
    if (v_mrr) {
      mrr_sum += *v_mrr;
      ++rank_n;
      for (const int k : options.ks)
        ndcg_sum[k] += *ndcg_at_k(imp.labels, imp.scores, k);
    } else {
      ++report.skipped_rank;
    }

    const auto order = rank_order(imp.scores);
    for (const int k : options.ks) {
      const std::size_t depth =
          std::min<std::size_t>(order.size(), static_cast<std::size_t>(k));
      std::map<std::string, std::int64_t> local;
      std::vector<std::string> top_ids;
      for (std::size_t r = 0; r < depth; ++r) {
        const std::string& id = imp.article_ids[order[r]];
        const NewsArticle* article = catalog.find(id);
        if (article == nullptr) continue;
        ++pooled[k][article->category];
        ++local[article->category];
        if (options.collect_topk) top_ids.push_back(id);
      }
      std::vector<std::int64_t> local_counts;
      for (const auto& [cat, c] : local) local_counts.push_back(c);
      per_impression_sum[k] += normalized_entropy(local_counts, n_categories);
      if (options.collect_topk)
        report.topk_articles[k].push_back(std::move(top_ids));
    }
  }

  report.auc = auc_n > 0 ? auc_sum / static_cast<double>(auc_n) : 0.0;
  report.mrr = rank_n > 0 ? mrr_sum / static_cast<double>(rank_n) : 0.0;
  for (const int k : options.ks) {
    report.ndcg[k] =
        rank_n > 0 ? ndcg_sum[k] / static_cast<double>(rank_n) : 0.0;
    std::vector<std::int64_t> counts;
    std::vector<CategoryCount> freq;
    for (const auto& [cat, c] : pooled[k]) {
      counts.push_back(c);
      freq.push_back({cat, c});
    }
    std::sort(freq.begin(), freq.end(), [](const auto& a, const auto& b) {
      if (a.count != b.count) return a.count > b.count;
      return a.category < b.category;
    });
    report.dctg_pooled[k] = normalized_entropy(counts, n_categories);
    report.dctg_per_impression[k] =
        report.n_impressions > 0
            ? per_impression_sum[k] / static_cast<double>(report.n_impressions)
            : 0.0;
    report.category_freq[k] = std::move(freq);
  }
  return report;
}

// category \t count \t share, ordered (count desc, category asc).
inline void write_category_tsv(std::ostream& out,
                               std::span<const CategoryCount> freq) {
  std::int64_t total = 0;
  for (const CategoryCount& c : freq) total += c.count;
  char buf[32];
  for (const CategoryCount& c : freq) {
    const double share =
        total > 0 ? static_cast<double>(c.count) / static_cast<double>(total)
                  : 0.0;
    std::snprintf(buf, sizeof(buf), "%.6f", share);
    out << c.category << '\t' << c.count << '\t' << buf << '\n';
  }
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["auc"] = report.auc;
  j["mrr"] = report.mrr;
  for (const auto& [k, v] : report.ndcg) j["ndcg"][std::to_string(k)] = v;
  for (const auto& [k, v] : report.dctg_pooled)
    j["dctg_pooled"][std::to_string(k)] = v;
  for (const auto& [k, v] : report.dctg_per_impression)
    j["dctg_per_impression_mean"][std::to_string(k)] = v;
  for (const auto& [k, freq] : report.category_freq) {
    nlohmann::json arr = nlohmann::json::array();
    for (const CategoryCount& c : freq)
      arr.push_back({{"category", c.category}, {"count", c.count}});
    j["category_freq"][std::to_string(k)] = std::move(arr);
  }
  j["n_impressions"] = report.n_impressions;
  j["skipped"]["auc"] = report.skipped_auc;
  j["skipped"]["rank"] = report.skipped_rank;
  return j;
}

}  // namespace popk
