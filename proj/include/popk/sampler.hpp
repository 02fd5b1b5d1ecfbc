#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "popk/corpus.hpp"
#include "popk/popindex.hpp"
#include "popk/rng.hpp"

namespace popk {

// k negatives per positive, popk of which are replaced by the most popular
// articles at the impression's time; k' = k - popk random negatives remain.
struct SamplerConfig {
  int k = 4;
  int popk = 0;
  PopularityLogic logic = PopularityLogic::Acc;
  PopularityMetric metric = PopularityMetric::Clicks;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw std::invalid_argument("sampler: k must be >= 1");
    if (popk < 0 || popk > k)
      throw std::invalid_argument("sampler: popk must be in [0, k]");
  }
};

enum class NegativeSource : std::uint8_t { FromImpression, FromPopK };

struct TrainingSample {
  std::string impression_id;
  std::int64_t timestamp = 0;
  std::string positive;
  std::vector<std::string> negatives;       // exactly k entries
  std::vector<NegativeSource> provenance;   // parallel to negatives
  // View into the source impression's history; valid while it is alive.
  std::span<const std::string> history;
};

struct SampleCounters {
  std::size_t skipped_no_positive = 0;
  std::size_t skipped_no_negative = 0;
};

// One TrainingSample per positive candidate. Per positive: draw k negatives
// uniformly from the impression's label-0 candidates (without replacement;
// with replacement only when fewer than k exist), query the popk most popular
// articles at the impression time, then overwrite popk uniformly random
// positions with them. A popular article that was already drawn is kept once
// and consumes its substitution slot. On popularity shortfall the remaining
// slots keep their random negatives. No negative may come from the user's
// clicked history, so history members are dropped from the label-0 pool and
// excluded from the popularity query. Popular ids consumed by earlier samples
// of the same impression are excluded for later ones.
inline std::vector<TrainingSample> make_samples(const Impression& impression,
                                                const PopularityIndex& index,
                                                const SamplerConfig& config,
                                                SplitMix64& rng,
                                                SampleCounters* counters = nullptr) {
  config.validate();
  std::vector<TrainingSample> samples;

  std::unordered_set<std::string> history_set(impression.history.begin(),
                                              impression.history.end());
  std::vector<const std::string*> positives;
  std::vector<const std::string*> pool;  // label-0 candidates, history excluded
  for (const Candidate& c : impression.candidates) {
    if (c.label == 1) {
      positives.push_back(&c.article_id);
    } else if (!history_set.count(c.article_id)) {
      pool.push_back(&c.article_id);
    }
  }
  if (positives.empty()) {
    if (counters) ++counters->skipped_no_positive;
    return samples;
  }
  if (pool.empty()) {
    if (counters) ++counters->skipped_no_negative;
    return samples;
  }

  const std::size_t k = static_cast<std::size_t>(config.k);
  std::unordered_set<std::string> consumed_popular;

  samples.reserve(positives.size());
  for (const std::string* positive : positives) {
    TrainingSample sample;
    sample.impression_id = impression.impression_id;
    sample.timestamp = impression.timestamp;
    sample.positive = *positive;
    sample.history = std::span<const std::string>(impression.history);

    sample.negatives.reserve(k);
    if (pool.size() >= k) {
      for (const std::size_t idx : sample_indices(pool.size(), k, rng))
        sample.negatives.push_back(*pool[idx]);
    } else {
      for (std::size_t i = 0; i < k; ++i)
        sample.negatives.push_back(*pool[rng.next_below(pool.size())]);
    }
    sample.provenance.assign(k, NegativeSource::FromImpression);

    if (config.popk > 0) {
      std::unordered_set<std::string> exclude = history_set;
      exclude.insert(sample.positive);
      exclude.insert(consumed_popular.begin(), consumed_popular.end());
      const std::vector<std::string> popular =
          index.top_popk(impression.timestamp,
                         static_cast<std::size_t>(config.popk), config.logic,
                         config.metric, exclude);

      std::vector<std::size_t> free_positions;
      free_positions.reserve(k);
      for (std::size_t i = 0; i < k; ++i) free_positions.push_back(i);

      for (const std::string& pop : popular) {
        std::size_t collision = k;
        for (std::size_t i = 0; i < k; ++i) {
          if (sample.negatives[i] == pop &&
              sample.provenance[i] == NegativeSource::FromImpression) {
            collision = i;
            break;
          }
        }
        std::size_t pos;
        if (collision < k) {
          pos = collision;  // already competing; keep once, mark it
        } else {
          const std::size_t pick = rng.next_below(free_positions.size());
          pos = free_positions[pick];
          sample.negatives[pos] = pop;
        }
        sample.provenance[pos] = NegativeSource::FromPopK;
        free_positions.erase(
            std::find(free_positions.begin(), free_positions.end(), pos));
        consumed_popular.insert(pop);
      }
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

struct SampleBatch {
  std::vector<TrainingSample> samples;
  SampleCounters counters;
};

// Batch construction over an impression log. Each impression gets its own
// RNG stream derived from (seed, impression_id), so shard-parallel and serial
// runs produce identical output.
inline SampleBatch make_all_samples(std::span<const Impression> impressions,
                                    const PopularityIndex& index,
                                    const SamplerConfig& config) {
  SampleBatch batch;
  for (const Impression& imp : impressions) {
    SplitMix64 rng(derive_seed(config.seed, imp.impression_id));
    auto samples = make_samples(imp, index, config, rng, &batch.counters);
    for (auto& s : samples) batch.samples.push_back(std::move(s));
  }
  return batch;
}

// Audit dump: impression_id \t positive \t neg1..negk \t flags, where flags
// holds one character per negative ('i' = from impression, 'p' = popular).
inline void write_samples_tsv(std::ostream& out,
                              std::span<const TrainingSample> samples) {
  for (const TrainingSample& s : samples) {
    out << s.impression_id << '\t' << s.positive;
    for (const std::string& n : s.negatives) out << '\t' << n;
    out << '\t';
    for (const NegativeSource src : s.provenance)
      out << (src == NegativeSource::FromPopK ? 'p' : 'i');
    out << '\n';
  }
}

}  // namespace popk
