#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "popk/corpus.hpp"
#include "popk/eval.hpp"
#include "popk/model.hpp"
#include "popk/popindex.hpp"
#include "popk/rng.hpp"
#include "popk/sampler.hpp"
#include "popk/synth.hpp"

namespace popk {

struct ModelConfig {
  int dim = 32;
  double learning_rate = 0.05;
  int epochs = 3;
  int max_history = 50;
  int batch_size = 64;
};

struct RunConfig {
  std::string news_path;
  std::string behaviors_train;
  std::string behaviors_val;
  std::string behaviors_test;
  std::string out_dir = ".";
  BucketSpec bucket;
  SamplerConfig sampler;
  ModelConfig model;
  SynthConfig synth;
  int synth_test_impressions = 2000;
  std::vector<int> eval_ks = {5, 10};
  std::uint64_t seed = 0;
};

inline PopularityLogic parse_logic(const std::string& s) {
  if (s == "acc") return PopularityLogic::Acc;
  if (s == "ptb") return PopularityLogic::Ptb;
  throw std::invalid_argument("unknown logic '" + s + "' (want acc|ptb)");
}

inline PopularityMetric parse_metric(const std::string& s) {
  if (s == "clicks") return PopularityMetric::Clicks;
  if (s == "click_ratio") return PopularityMetric::ClickRatio;
  if (s == "click_variation") return PopularityMetric::ClickVariation;
  throw std::invalid_argument("unknown metric '" + s +
                              "' (want clicks|click_ratio|click_variation)");
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["paths"] = {{"news", c.news_path},
                {"behaviors_train", c.behaviors_train},
                {"behaviors_val", c.behaviors_val},
                {"behaviors_test", c.behaviors_test},
                {"out_dir", c.out_dir}};
  j["bucket"] = {{"length_seconds", c.bucket.bucket_length},
                 {"origin", c.bucket.origin}};
  j["sampler"] = {{"k", c.sampler.k},
                  {"popk", c.sampler.popk},
                  {"logic", to_string(c.sampler.logic)},
                  {"metric", to_string(c.sampler.metric)}};
  j["model"] = {{"dim", c.model.dim},
                {"learning_rate", c.model.learning_rate},
                {"epochs", c.model.epochs},
                {"max_history", c.model.max_history},
                {"batch_size", c.model.batch_size}};
  j["synth"] = {{"n_users", c.synth.n_users},
                {"n_articles", c.synth.n_articles},
                {"n_categories", c.synth.n_categories},
                {"n_impressions", c.synth.n_impressions},
                {"candidates_per_impression", c.synth.candidates_per_impression},
                {"popularity_exponent", c.synth.popularity_exponent},
                {"preference_strength", c.synth.preference_strength},
                {"horizon", c.synth.horizon},
                {"test_impressions", c.synth_test_impressions}};
  j["eval_ks"] = c.eval_ks;
  j["seed"] = c.seed;
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    c.news_path = p.value("news", c.news_path);
    c.behaviors_train = p.value("behaviors_train", c.behaviors_train);
    c.behaviors_val = p.value("behaviors_val", c.behaviors_val);
    c.behaviors_test = p.value("behaviors_test", c.behaviors_test);
    c.out_dir = p.value("out_dir", c.out_dir);
  }
  if (j.contains("bucket")) {
    c.bucket.bucket_length = j["bucket"].value("length_seconds", c.bucket.bucket_length);
    c.bucket.origin = j["bucket"].value("origin", c.bucket.origin);
    if (c.bucket.bucket_length <= 0)
      throw std::invalid_argument("config: bucket length must be > 0");
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    c.sampler.k = s.value("k", c.sampler.k);
    c.sampler.popk = s.value("popk", c.sampler.popk);
    c.sampler.logic = parse_logic(s.value("logic", std::string("acc")));
    c.sampler.metric = parse_metric(s.value("metric", std::string("clicks")));
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.model.dim = m.value("dim", c.model.dim);
    c.model.learning_rate = m.value("learning_rate", c.model.learning_rate);
    c.model.epochs = m.value("epochs", c.model.epochs);
    c.model.max_history = m.value("max_history", c.model.max_history);
    c.model.batch_size = m.value("batch_size", c.model.batch_size);
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    c.synth.n_users = s.value("n_users", c.synth.n_users);
    c.synth.n_articles = s.value("n_articles", c.synth.n_articles);
    c.synth.n_categories = s.value("n_categories", c.synth.n_categories);
    c.synth.n_impressions = s.value("n_impressions", c.synth.n_impressions);
    c.synth.candidates_per_impression =
        s.value("candidates_per_impression", c.synth.candidates_per_impression);
    c.synth.popularity_exponent =
        s.value("popularity_exponent", c.synth.popularity_exponent);
    c.synth.preference_strength =
        s.value("preference_strength", c.synth.preference_strength);
    c.synth.horizon = s.value("horizon", c.synth.horizon);
    c.synth_test_impressions =
        s.value("test_impressions", c.synth_test_impressions);
  }
  if (j.contains("eval_ks")) {
    c.eval_ks = j["eval_ks"].get<std::vector<int>>();
    if (!std::is_sorted(c.eval_ks.begin(), c.eval_ks.end()))
      throw std::invalid_argument("config: eval_ks must be sorted ascending");
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseErrorKind::IoError, "cannot open " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

// Stable fingerprint of the effective configuration; stamped on every output
// so a result file can be traced back to the exact settings. The output
// directory does not affect results and is left out, so reruns into different
// directories stamp the same fingerprint.
inline std::string config_fingerprint(const RunConfig& c) {
  nlohmann::json j = config_to_json(c);
  j["paths"].erase("out_dir");
  const std::uint64_t h = hash_bytes(j.dump());
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Scores every candidate of every impression with the trained model. Each
// user vector is encoded once per impression from the truncated history.
inline std::vector<ScoredImpression> score_impressions(
    const ModelParams& params, std::span<const Impression> impressions,
    int max_history) {
  std::vector<ScoredImpression> scored;
  scored.reserve(impressions.size());
  for (const Impression& imp : impressions) {
    const Eigen::VectorXd user = encode_user(
        params, truncate_history(imp.history,
                                 static_cast<std::size_t>(max_history)));
    ScoredImpression s;
    s.article_ids.reserve(imp.candidates.size());
    s.labels.reserve(imp.candidates.size());
    s.scores.reserve(imp.candidates.size());
    for (const Candidate& c : imp.candidates) {
      s.article_ids.push_back(c.article_id);
      s.labels.push_back(c.label);
      s.scores.push_back(score(params, user, c.article_id));
    }
    scored.push_back(std::move(s));
  }
  return scored;
}

struct TrainedModel {
  ModelParams params;
  TrainTrace trace;
};

inline TrainedModel run_training(const Catalog& catalog,
                                 std::span<const Impression> train_split,
                                 const PopularityIndex& index,
                                 const SamplerConfig& sampler,
                                 const ModelConfig& model,
                                 std::uint64_t seed, bool log_seeds = false) {
  TrainedModel out{init_params(catalog, model.dim, seed), {}};
  TrainOptions options;
  options.epochs = model.epochs;
  options.learning_rate = model.learning_rate;
  options.batch_size = model.batch_size;
  options.max_history = model.max_history;
  options.seed = seed;
  options.log_seeds = log_seeds;
  out.trace = train(out.params, train_split, index, sampler, options);
  return out;
}

struct SweepCell {
  bool is_original = false;
  SamplerConfig sampler;   // seed filled per cell
  EvalReport report;
};

// One row per configuration: the popk = 0 original first, then every
// (logic, metric, popk) variant, all trained from the same seed. Cells train
// independently, so they can run on parallel threads without changing output.
inline std::vector<SweepCell> run_sweep(
    const Catalog& catalog, std::span<const Impression> train,
    std::span<const Impression> test, const RunConfig& config,
    std::span<const int> popk_values, std::span<const PopularityLogic> logics,
    std::span<const PopularityMetric> metrics, int jobs = 1) {
  std::vector<SweepCell> cells;
  SweepCell original;
  original.is_original = true;
  original.sampler = config.sampler;
  original.sampler.popk = 0;
  cells.push_back(original);
  for (const PopularityLogic logic : logics) {
    for (const PopularityMetric metric : metrics) {
      for (const int popk : popk_values) {
        if (popk == 0) continue;
        SweepCell cell;
        cell.sampler = config.sampler;
        cell.sampler.popk = popk;
        cell.sampler.logic = logic;
        cell.sampler.metric = metric;
        cells.push_back(cell);
      }
    }
  }

  const PopularityIndex index = build_index(train, config.bucket);
  EvalOptions eval_options;
  eval_options.ks = config.eval_ks;

  const auto run_cell = [&](SweepCell& cell) {
    TrainedModel trained = run_training(catalog, train, index, cell.sampler,
                                        config.model, config.seed);
    const auto scored =
        score_impressions(trained.params, test, config.model.max_history);
    cell.report = evaluate(scored, catalog, eval_options);
  };

  if (jobs <= 1) {
    for (SweepCell& cell : cells) run_cell(cell);
  } else {
    std::vector<std::thread> workers;
    std::size_t next = 0;
    std::mutex mu;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&]() {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= cells.size()) return;
            i = next++;
          }
          run_cell(cells[i]);
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  return cells;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.2f%%", v);
  return buf;
}

}  // namespace detail

// Consolidated sweep table. Metric columns AUC/MRR/nDCG@5/nDCG@10/D_ctg@5/
// D_ctg@10 plus a final row with the best variant's percentage change over
// the original per column.
inline void write_sweep_tsv(std::ostream& out,
                            std::span<const SweepCell> cells,
                            const RunConfig& config) {
  out << "# config_fingerprint: " << config_fingerprint(config) << '\n';
  out << "# seed: " << config.seed << '\n';
  const int k_lo = config.eval_ks.size() > 0 ? config.eval_ks.front() : 5;
  const int k_hi = config.eval_ks.size() > 1 ? config.eval_ks.back() : k_lo;
  out << "variant\tlogic\tmetric\tpopk\tAUC\tMRR\tnDCG@" << k_lo << "\tnDCG@"
      << k_hi << "\tD_ctg@" << k_lo << "\tD_ctg@" << k_hi << '\n';

  const auto row_values = [&](const SweepCell& c) {
    return std::vector<double>{c.report.auc,
                               c.report.mrr,
                               c.report.ndcg.at(k_lo),
                               c.report.ndcg.at(k_hi),
                               c.report.dctg_pooled.at(k_lo),
                               c.report.dctg_pooled.at(k_hi)};
  };

  std::vector<double> original;
  std::vector<double> best_variant;  // per-column max over non-original rows
  for (const SweepCell& c : cells) {
    const auto values = row_values(c);
    if (c.is_original) {
      out << "original\t-\t-\t0";
      original = values;
    } else {
      out << "popk=" << c.sampler.popk << '\t' << to_string(c.sampler.logic)
          << '\t' << to_string(c.sampler.metric) << '\t' << c.sampler.popk;
      if (best_variant.empty()) best_variant = values;
      for (std::size_t i = 0; i < values.size(); ++i)
        best_variant[i] = std::max(best_variant[i], values[i]);
    }
    for (const double v : values) out << '\t' << detail::fmt(v);
    out << '\n';
  }
  if (best_variant.empty()) best_variant = original;  // baseline-only sweep
  out << "increase_vs_original\t-\t-\t-";
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double delta = original[i] != 0.0
                             ? (best_variant[i] - original[i]) / original[i] * 100.0
                             : 0.0;
    out << '\t' << detail::fmt_pct(delta);
  }
  out << '\n';
}

}  // namespace popk
