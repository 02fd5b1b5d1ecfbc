#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "popk/corpus.hpp"

namespace popk {

enum class PopularityLogic { Acc, Ptb };
enum class PopularityMetric { Clicks, ClickRatio, ClickVariation };

inline const char* to_string(PopularityLogic logic) {
  return logic == PopularityLogic::Acc ? "acc" : "ptb";
}

inline const char* to_string(PopularityMetric metric) {
  switch (metric) {
    case PopularityMetric::Clicks: return "clicks";
    case PopularityMetric::ClickRatio: return "click_ratio";
    default: return "click_variation";
  }
}

// Per-bucket, per-article click/view counters with prefix sums. Views are
// candidate-list appearances (impression exposure). Immutable once built;
// queries are read-only and thread-safe.
//
// Leakage boundary: a query at time t reads complete buckets strictly before
// bucket_of(t). The in-progress bucket is excluded, so an event at time >= t
// can never change a query result at t.
class PopularityIndex {
 public:
  PopularityIndex() = default;

  const BucketSpec& spec() const { return spec_; }
  std::int64_t first_bucket() const { return bucket_lo_; }
  std::int64_t last_bucket() const { return bucket_hi_; }
  bool empty() const { return bucket_hi_ < bucket_lo_; }
  std::size_t article_count() const { return ids_.size(); }
  const std::vector<std::string>& article_ids() const { return ids_; }

  std::int64_t clicks_in_bucket(const std::string& id, std::int64_t b) const {
    return cell(clicks_, id, b);
  }
  std::int64_t views_in_bucket(const std::string& id, std::int64_t b) const {
    return cell(views_, id, b);
  }
  // Cumulative counts over buckets <= b.
  std::int64_t clicks_through(const std::string& id, std::int64_t b) const {
    return prefix(cum_clicks_, id, b);
  }
  std::int64_t views_through(const std::string& id, std::int64_t b) const {
    return prefix(cum_views_, id, b);
  }

  // Popularity statistic of one article for a query at time t. Only complete
  // buckets before bucket_of(t) are consulted; unknown articles score 0.
  double stat_value(const std::string& id, std::int64_t t,
                    PopularityLogic logic, PopularityMetric metric) const {
    const auto it = slot_.find(id);
    if (it == slot_.end() || empty()) return 0.0;
    const std::size_t s = it->second;
    const std::int64_t we = bucket_of(t, spec_) - 1;  // last complete bucket
    return stat_for_slot(s, we, logic, metric);
  }

  // The popk articles with the largest stat_value at time t, excluding
  // `exclude`; only articles with stat_value > 0 qualify. Ordered by
  // (stat_value desc, article_id asc); shorter than popk when fewer qualify.
  std::vector<std::string> top_popk(
      std::int64_t t, std::size_t popk, PopularityLogic logic,
      PopularityMetric metric,
      const std::unordered_set<std::string>& exclude = {}) const {
    std::vector<std::string> result;
    if (popk == 0 || empty()) return result;
    const std::int64_t we = bucket_of(t, spec_) - 1;
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(ids_.size());
    for (std::size_t s = 0; s < ids_.size(); ++s) {
      const double v = stat_for_slot(s, we, logic, metric);
      if (v <= 0.0) continue;
      if (exclude.count(ids_[s])) continue;
      scored.emplace_back(v, s);
    }
    const std::size_t take = std::min(popk, scored.size());
    // ids_ is sorted ascending, so comparing slots breaks ties by id.
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    result.reserve(take);
    for (std::size_t i = 0; i < take; ++i) result.push_back(ids_[scored[i].second]);
    return result;
  }

  // Snapshot of the raw counters: bucket \t article_id \t clicks \t views,
  // rows with any exposure, ordered (bucket asc, article asc).
  void write_snapshot(std::ostream& out) const {
    for (std::int64_t b = bucket_lo_; b <= bucket_hi_; ++b) {
      for (std::size_t s = 0; s < ids_.size(); ++s) {
        const std::int64_t v = views_[s][static_cast<std::size_t>(b - bucket_lo_)];
        if (v == 0) continue;
        out << b << '\t' << ids_[s] << '\t'
            << clicks_[s][static_cast<std::size_t>(b - bucket_lo_)] << '\t' << v
            << '\n';
      }
    }
  }

  friend PopularityIndex build_index(std::span<const Impression> impressions,
                                     const BucketSpec& spec);

 private:
  double stat_for_slot(std::size_t s, std::int64_t we, PopularityLogic logic,
                       PopularityMetric metric) const {
    switch (metric) {
      case PopularityMetric::Clicks:
        if (logic == PopularityLogic::Acc)
          return static_cast<double>(prefix_slot(cum_clicks_, s, we));
        return static_cast<double>(cell_slot(clicks_, s, we));
      case PopularityMetric::ClickRatio: {
        if (logic == PopularityLogic::Acc) {
          const std::int64_t v = prefix_slot(cum_views_, s, we);
          if (v == 0) return 0.0;
          return static_cast<double>(prefix_slot(cum_clicks_, s, we)) /
                 static_cast<double>(v);
        }
        const std::int64_t v = cell_slot(views_, s, we);
        if (v == 0) return 0.0;
        return static_cast<double>(cell_slot(clicks_, s, we)) /
               static_cast<double>(v);
      }
      case PopularityMetric::ClickVariation:
      default:
        if (logic == PopularityLogic::Acc) {
          // Total volatility: accumulated |clicks(j) - clicks(j-1)| over all
          // buckets j <= we. Once the window passes the observed range the
          // drop back to zero contributes one final |0 - clicks(hi)| term.
          std::int64_t vol = prefix_slot(cum_absdiff_, s, we);
          if (we > bucket_hi_)
            vol += cell_slot(clicks_, s, bucket_hi_);
          return static_cast<double>(vol);
        }
        // Signed first difference of the last two complete buckets.
        return static_cast<double>(cell_slot(clicks_, s, we) -
                                   cell_slot(clicks_, s, we - 1));
    }
  }

  std::int64_t cell_slot(const std::vector<std::vector<std::int64_t>>& table,
                         std::size_t s, std::int64_t b) const {
    if (b < bucket_lo_ || b > bucket_hi_) return 0;
    return table[s][static_cast<std::size_t>(b - bucket_lo_)];
  }

  std::int64_t prefix_slot(const std::vector<std::vector<std::int64_t>>& table,
                           std::size_t s, std::int64_t b) const {
    if (b < bucket_lo_) return 0;
    const std::int64_t clamped = std::min(b, bucket_hi_);
    return table[s][static_cast<std::size_t>(clamped - bucket_lo_)];
  }

  std::int64_t cell(const std::vector<std::vector<std::int64_t>>& table,
                    const std::string& id, std::int64_t b) const {
    const auto it = slot_.find(id);
    if (it == slot_.end() || empty()) return 0;
    return cell_slot(table, it->second, b);
  }

  std::int64_t prefix(const std::vector<std::vector<std::int64_t>>& table,
                      const std::string& id, std::int64_t b) const {
    const auto it = slot_.find(id);
    if (it == slot_.end() || empty()) return 0;
    return prefix_slot(table, it->second, b);
  }

  BucketSpec spec_;
  std::int64_t bucket_lo_ = 0;
  std::int64_t bucket_hi_ = -1;
  std::vector<std::string> ids_;  // ascending
  std::unordered_map<std::string, std::size_t> slot_;
  // Dense per-article arrays over [bucket_lo_, bucket_hi_].
  std::vector<std::vector<std::int64_t>> clicks_;
  std::vector<std::vector<std::int64_t>> views_;
  std::vector<std::vector<std::int64_t>> cum_clicks_;
  std::vector<std::vector<std::int64_t>> cum_views_;
  std::vector<std::vector<std::int64_t>> cum_absdiff_;
};

// Tallies every candidate appearance: views += 1 and clicks += label in the
// bucket of the impression timestamp, then computes prefix sums.
inline PopularityIndex build_index(std::span<const Impression> impressions,
                                   const BucketSpec& spec) {
  PopularityIndex index;
  index.spec_ = spec;
  if (impressions.empty()) return index;

  std::int64_t lo = bucket_of(impressions.front().timestamp, spec);
  std::int64_t hi = lo;
  std::unordered_set<std::string> seen;
  for (const Impression& imp : impressions) {
    const std::int64_t b = bucket_of(imp.timestamp, spec);
    lo = std::min(lo, b);
    hi = std::max(hi, b);
    for (const Candidate& c : imp.candidates) seen.insert(c.article_id);
  }
  index.bucket_lo_ = lo;
  index.bucket_hi_ = hi;
  index.ids_.assign(seen.begin(), seen.end());
  std::sort(index.ids_.begin(), index.ids_.end());
  index.slot_.reserve(index.ids_.size());
  for (std::size_t s = 0; s < index.ids_.size(); ++s)
    index.slot_.emplace(index.ids_[s], s);

  const std::size_t nb = static_cast<std::size_t>(hi - lo + 1);
  const std::size_t na = index.ids_.size();
  index.clicks_.assign(na, std::vector<std::int64_t>(nb, 0));
  index.views_.assign(na, std::vector<std::int64_t>(nb, 0));
  for (const Impression& imp : impressions) {
    const std::size_t b =
        static_cast<std::size_t>(bucket_of(imp.timestamp, spec) - lo);
    for (const Candidate& c : imp.candidates) {
      const std::size_t s = index.slot_.at(c.article_id);
      index.views_[s][b] += 1;
      index.clicks_[s][b] += c.label;
    }
  }

  index.cum_clicks_.assign(na, std::vector<std::int64_t>(nb, 0));
  index.cum_views_.assign(na, std::vector<std::int64_t>(nb, 0));
  index.cum_absdiff_.assign(na, std::vector<std::int64_t>(nb, 0));
  for (std::size_t s = 0; s < na; ++s) {
    std::int64_t ck = 0, vw = 0, vol = 0, prev = 0;
    for (std::size_t j = 0; j < nb; ++j) {
      ck += index.clicks_[s][j];
      vw += index.views_[s][j];
      vol += std::abs(index.clicks_[s][j] - prev);
      prev = index.clicks_[s][j];
      index.cum_clicks_[s][j] = ck;
      index.cum_views_[s][j] = vw;
      index.cum_absdiff_[s][j] = vol;
    }
  }
  return index;
}

}  // namespace popk
