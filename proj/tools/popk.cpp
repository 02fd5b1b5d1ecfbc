// popk - temporal-counterfactual negative sampling toolkit.
//
// Subcommands: ingest, index, synth, train, eval, sweep. A JSON config file
// supplies the run settings; command-line flags override it. Exit codes:
// 0 success, 1 validation or degenerate-evaluation failure, 2 I/O or parse
// failure.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "popk/corpus.hpp"
#include "popk/eval.hpp"
#include "popk/model.hpp"
#include "popk/pipeline.hpp"
#include "popk/popindex.hpp"
#include "popk/rng.hpp"
#include "popk/sampler.hpp"
#include "popk/synth.hpp"

namespace {

using namespace popk;

struct CliOverrides {
  std::string config_path;
  std::string news, train, val, test, out;
  std::string logic, metric, model_path;
  std::uint64_t seed = 0;
  int k = 0, popk = -1, jobs = 1;
  std::vector<int> popk_list;
  std::vector<std::string> logic_list, metric_list;
  std::string dump_samples;
};

void add_common_options(CLI::App* cmd, CliOverrides& o, bool scalar_popk) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "base RNG seed");
  cmd->add_option("--news", o.news, "news catalog TSV");
  cmd->add_option("--train", o.train, "training behaviors TSV");
  cmd->add_option("--val", o.val, "validation behaviors TSV");
  cmd->add_option("--test", o.test, "test behaviors TSV");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--k", o.k, "negatives per positive");
  if (scalar_popk)
    cmd->add_option("--popk", o.popk, "popular substitutions per sample");
  cmd->add_option("--logic", o.logic, "popularity logic (acc|ptb)")
      ->check(CLI::IsMember({"acc", "ptb"}));
  cmd->add_option("--metric", o.metric,
                  "popularity metric (clicks|click_ratio|click_variation)")
      ->check(CLI::IsMember({"clicks", "click_ratio", "click_variation"}));
}

RunConfig effective_config(const CLI::App* cmd, const CliOverrides& o,
                           bool scalar_popk = true) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  if (cmd->count("--seed")) cfg.seed = o.seed;
  if (cmd->count("--news")) cfg.news_path = o.news;
  if (cmd->count("--train")) cfg.behaviors_train = o.train;
  if (cmd->count("--val")) cfg.behaviors_val = o.val;
  if (cmd->count("--test")) cfg.behaviors_test = o.test;
  if (cmd->count("--out")) cfg.out_dir = o.out;
  if (cmd->count("--k")) cfg.sampler.k = o.k;
  if (scalar_popk && cmd->count("--popk")) cfg.sampler.popk = o.popk;
  if (cmd->count("--logic")) cfg.sampler.logic = parse_logic(o.logic);
  if (cmd->count("--metric")) cfg.sampler.metric = parse_metric(o.metric);
  cfg.sampler.validate();
  return cfg;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (!path.parent_path().empty())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw ParseError(ParseErrorKind::IoError, "cannot write " + path.string());
  return out;
}

struct LoadedSplit {
  std::string name;
  BehaviorLog log;
};

std::vector<LoadedSplit> load_splits(const RunConfig& cfg,
                                     const Catalog& catalog) {
  std::vector<LoadedSplit> splits;
  const auto load = [&](const std::string& name, const std::string& path) {
    if (path.empty()) return;
    splits.push_back({name, parse_behaviors(path, catalog)});
  };
  load("train", cfg.behaviors_train);
  load("val", cfg.behaviors_val);
  load("test", cfg.behaviors_test);
  return splits;
}

int cmd_ingest(const RunConfig& cfg) {
  const Catalog catalog = parse_news(cfg.news_path);
  std::cout << "# config_fingerprint: " << config_fingerprint(cfg) << '\n';
  std::cout << "news: " << catalog.size() << " articles, "
            << catalog.category_count() << " categories\n";

  for (const LoadedSplit& split : load_splits(cfg, catalog)) {
    std::set<std::string> users;
    std::int64_t ts_min = 0, ts_max = 0;
    bool first = true;
    for (const Impression& imp : split.log.impressions) {
      users.insert(imp.user_id);
      ts_min = first ? imp.timestamp : std::min(ts_min, imp.timestamp);
      ts_max = first ? imp.timestamp : std::max(ts_max, imp.timestamp);
      first = false;
    }
    std::cout << split.name << ": " << split.log.impressions.size() << " / "
              << users.size() << '\n';
    if (!first)
      std::cout << "  range " << format_timestamp(ts_min) << " .. "
                << format_timestamp(ts_max) << '\n';
    if (split.log.dropped_history_ids > 0)
      std::cout << "  dropped_history_ids " << split.log.dropped_history_ids
                << '\n';
  }

  std::map<std::string, std::size_t> histogram;
  for (const auto& [id, article] : catalog.articles())
    histogram[article.category] += 1;
  std::cout << "category histogram:\n";
  for (const auto& [category, count] : histogram)
    std::cout << "  " << category << ' ' << count << '\n';
  return 0;
}

int cmd_index(const RunConfig& cfg) {
  const Catalog catalog = parse_news(cfg.news_path);
  const BehaviorLog log = parse_behaviors(cfg.behaviors_train, catalog);
  const PopularityIndex index = build_index(log.impressions, cfg.bucket);
  auto out = open_out(std::filesystem::path(cfg.out_dir) / "index.tsv");
  out << "# config_fingerprint: " << config_fingerprint(cfg) << '\n';
  index.write_snapshot(out);
  std::cout << "indexed " << index.article_count() << " articles over buckets "
            << index.first_bucket() << ".." << index.last_bucket() << '\n';
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  SynthConfig synth = cfg.synth;
  synth.seed = cfg.seed;
  std::fprintf(stderr,
               "synth: generator stream %016llx, rank permutation %016llx\n",
               static_cast<unsigned long long>(derive_seed(synth.seed, "synth")),
               static_cast<unsigned long long>(
                   derive_seed(synth.seed, "rank-permutation")));
  const SynthSplits splits = generate_splits(synth, cfg.synth_test_impressions);
  const std::filesystem::path dir(cfg.out_dir);
  const std::string header =
      "# config_fingerprint: " + config_fingerprint(cfg) + "\n";
  {
    auto out = open_out(dir / "news.tsv");
    out << header;
    write_news(out, splits.catalog);
  }
  {
    auto out = open_out(dir / "behaviors_train.tsv");
    out << header;
    write_behaviors(out, splits.train);
  }
  if (!splits.test.empty()) {
    auto out = open_out(dir / "behaviors_test.tsv");
    out << header;
    write_behaviors(out, splits.test);
  }
  {
    auto out = open_out(dir / "ground_truth.tsv");
    out << header;
    write_ground_truth(out, splits.truth);
  }
  std::cout << "wrote " << splits.train.size() << " train / "
            << splits.test.size() << " test impressions, "
            << splits.catalog.size() << " articles to " << cfg.out_dir << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& dump_samples) {
  const Catalog catalog = parse_news(cfg.news_path);
  const BehaviorLog log = parse_behaviors(cfg.behaviors_train, catalog);
  const PopularityIndex index = build_index(log.impressions, cfg.bucket);

  if (!dump_samples.empty()) {
    SamplerConfig audit = cfg.sampler;
    audit.seed = epoch_sampler_seed(cfg.seed, 0);
    const SampleBatch batch = make_all_samples(log.impressions, index, audit);
    auto out = open_out(dump_samples);
    out << "# config_fingerprint: " << config_fingerprint(cfg) << '\n';
    write_samples_tsv(out, batch.samples);
    std::fprintf(stderr, "dumped %zu samples (epoch-1 seed %016llx)\n",
                 batch.samples.size(),
                 static_cast<unsigned long long>(audit.seed));
  }

  const TrainedModel trained =
      run_training(catalog, log.impressions, index, cfg.sampler, cfg.model,
                   cfg.seed, /*log_seeds=*/true);
  for (std::size_t e = 0; e < trained.trace.epoch_mean_loss.size(); ++e)
    std::cout << "epoch " << e + 1 << " mean loss "
              << trained.trace.epoch_mean_loss[e] << '\n';

  const std::filesystem::path path =
      std::filesystem::path(cfg.out_dir) / "model.json";
  std::filesystem::create_directories(path.parent_path());
  save_checkpoint(trained.params, path.string(), config_fingerprint(cfg));
  std::cout << "checkpoint " << path.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_path) {
  const Catalog catalog = parse_news(cfg.news_path);
  const BehaviorLog log = parse_behaviors(cfg.behaviors_test, catalog);
  const std::string checkpoint =
      model_path.empty()
          ? (std::filesystem::path(cfg.out_dir) / "model.json").string()
          : model_path;
  const ModelParams params = load_checkpoint(checkpoint);

  const auto scored =
      score_impressions(params, log.impressions, cfg.model.max_history);
  EvalOptions options;
  options.ks = cfg.eval_ks;
  const EvalReport report = evaluate(scored, catalog, options);
  if (report.n_impressions == 0) {
    std::fprintf(stderr, "eval: no scorable impressions\n");
    return 1;
  }

  nlohmann::json j = report_to_json(report);
  j["config"] = config_to_json(cfg);
  j["config_fingerprint"] = config_fingerprint(cfg);
  const std::filesystem::path dir(cfg.out_dir);
  {
    auto out = open_out(dir / "report.json");
    out << j.dump(2) << '\n';
  }
  for (const int k : cfg.eval_ks) {
    auto out = open_out(dir / ("categories_k" + std::to_string(k) + ".tsv"));
    out << "# config_fingerprint: " << config_fingerprint(cfg) << '\n';
    write_category_tsv(out, report.category_freq.at(k));
  }
  std::cout << "auc " << report.auc << " mrr " << report.mrr;
  for (const int k : cfg.eval_ks)
    std::cout << " ndcg@" << k << ' ' << report.ndcg.at(k) << " dctg@" << k
              << ' ' << report.dctg_pooled.at(k);
  std::cout << '\n';
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::vector<int>& popk_list,
              const std::vector<std::string>& logic_names,
              const std::vector<std::string>& metric_names, int jobs) {
  const Catalog catalog = parse_news(cfg.news_path);
  const BehaviorLog train_log = parse_behaviors(cfg.behaviors_train, catalog);
  const BehaviorLog test_log = parse_behaviors(cfg.behaviors_test, catalog);

  std::vector<PopularityLogic> logics;
  for (const auto& name : logic_names) logics.push_back(parse_logic(name));
  std::vector<PopularityMetric> metrics;
  for (const auto& name : metric_names) metrics.push_back(parse_metric(name));

  std::fprintf(stderr, "sweep: shared seed %016llx, %d jobs\n",
               static_cast<unsigned long long>(cfg.seed), jobs);
  const auto cells =
      run_sweep(catalog, train_log.impressions, test_log.impressions, cfg,
                popk_list, logics, metrics, jobs);
  auto out = open_out(std::filesystem::path(cfg.out_dir) / "sweep.tsv");
  write_sweep_tsv(out, cells, cfg);
  std::cout << "wrote " << cells.size() << " rows to "
            << (std::filesystem::path(cfg.out_dir) / "sweep.tsv").string()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POPK temporal-counterfactual negative sampling toolkit"};
  app.require_subcommand(1);
  CliOverrides o;

  CLI::App* ingest = app.add_subcommand("ingest", "parse and summarize a dataset");
  CLI::App* index = app.add_subcommand("index", "build and dump the popularity index");
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  CLI::App* train = app.add_subcommand("train", "train the click scorer");
  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  CLI::App* sweep = app.add_subcommand("sweep", "run the popk configuration matrix");
  for (CLI::App* cmd : {ingest, index, synth, train, evalc})
    add_common_options(cmd, o, /*scalar_popk=*/true);
  add_common_options(sweep, o, /*scalar_popk=*/false);

  train->add_option("--dump-samples", o.dump_samples,
                    "write an audit TSV of first-epoch training samples");
  evalc->add_option("--model", o.model_path, "checkpoint path");
  sweep->add_option("--popk,--popk-list", o.popk_list, "popk values to sweep")
      ->delimiter(',');
  sweep->add_option("--logics", o.logic_list, "logics to sweep")->delimiter(',');
  sweep->add_option("--metrics", o.metric_list, "metrics to sweep")
      ->delimiter(',');
  sweep->add_option("--jobs", o.jobs, "parallel sweep cells");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (ingest->parsed()) return cmd_ingest(effective_config(ingest, o));
    if (index->parsed()) return cmd_index(effective_config(index, o));
    if (synth->parsed()) return cmd_synth(effective_config(synth, o));
    if (train->parsed())
      return cmd_train(effective_config(train, o), o.dump_samples);
    if (evalc->parsed())
      return cmd_eval(effective_config(evalc, o), o.model_path);
    if (sweep->parsed()) {
      std::vector<int> popk_list = o.popk_list;
      if (popk_list.empty()) popk_list = {1, 2, 3};
      std::vector<std::string> logics = o.logic_list;
      if (logics.empty()) logics = {"acc", "ptb"};
      std::vector<std::string> metrics = o.metric_list;
      if (metrics.empty()) metrics = {"clicks"};
      return cmd_sweep(effective_config(sweep, o, /*scalar_popk=*/false),
                       popk_list, logics, metrics, o.jobs);
    }
  } catch (const popk::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
