#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "popk/corpus.hpp"
#include "popk/popindex.hpp"
#include "popk/rng.hpp"
#include "popk/sampler.hpp"

namespace popk {

// Minimal differentiable click scorer: learned per-article embeddings, an
// additive-attention user encoder and dot-product scoring. Stands in for the
// heavyweight text encoders; the sampling strategy under test is agnostic to
// the scorer.
struct ModelParams {
  int dim = 32;
  std::vector<std::string> ids;                 // row order, ascending
  std::unordered_map<std::string, int> row;     // article_id -> row
  Eigen::MatrixXd embeddings;                   // |ids| x dim
  Eigen::MatrixXd attn_w;                       // dim x dim
  Eigen::VectorXd attn_q;                       // dim
};

inline ModelParams init_params(const Catalog& catalog, int dim,
                               std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("model: dim must be >= 1");
  ModelParams p;
  p.dim = dim;
  p.ids = catalog.sorted_ids();
  p.row.reserve(p.ids.size());
  for (std::size_t i = 0; i < p.ids.size(); ++i)
    p.row.emplace(p.ids[i], static_cast<int>(i));
  SplitMix64 rng(derive_seed(seed, "model-init"));
  const auto uniform = [&rng]() { return rng.next_double(-0.05, 0.05); };
  p.embeddings = Eigen::MatrixXd::NullaryExpr(
      static_cast<Eigen::Index>(p.ids.size()), dim, uniform);
  p.attn_w = Eigen::MatrixXd::NullaryExpr(dim, dim, uniform);
  p.attn_q = Eigen::VectorXd::NullaryExpr(dim, uniform);
  return p;
}

// Additive attention over the history embeddings:
//   a_i = q . tanh(W e_i),  w = softmax(a),  u = sum_i w_i e_i.
// Empty history encodes to the zero vector. Unknown ids are skipped.
inline Eigen::VectorXd encode_user(const ModelParams& params,
                                   std::span<const std::string> history) {
  Eigen::VectorXd user = Eigen::VectorXd::Zero(params.dim);
  std::vector<int> rows;
  rows.reserve(history.size());
  for (const std::string& id : history) {
    const auto it = params.row.find(id);
    if (it != params.row.end()) rows.push_back(it->second);
  }
  if (rows.empty()) return user;

  Eigen::VectorXd logits(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::VectorXd z =
        params.attn_w * params.embeddings.row(rows[i]).transpose();
    logits[static_cast<Eigen::Index>(i)] = params.attn_q.dot(z.array().tanh().matrix());
  }
  const double max_logit = logits.maxCoeff();
  Eigen::VectorXd weights = (logits.array() - max_logit).exp();
  weights /= weights.sum();
  for (std::size_t i = 0; i < rows.size(); ++i)
    user += weights[static_cast<Eigen::Index>(i)] *
            params.embeddings.row(rows[i]).transpose();
  return user;
}

inline double score(const ModelParams& params, const Eigen::VectorXd& user,
                    const std::string& candidate) {
  const auto it = params.row.find(candidate);
  if (it == params.row.end()) return 0.0;
  return user.dot(params.embeddings.row(it->second).transpose());
}

struct ScoredCandidates {
  double y_plus = 0.0;
  std::vector<double> y_minus;
};

// Posterior click probability of the positive item:
//   p = exp(y+) / (exp(y+) + sum_j exp(y-_j)),
// evaluated with max-subtraction for stability.
inline double posterior(const ScoredCandidates& s) {
  double m = s.y_plus;
  for (const double y : s.y_minus) m = std::max(m, y);
  double denom = std::exp(s.y_plus - m);
  for (const double y : s.y_minus) denom += std::exp(y - m);
  return std::exp(s.y_plus - m) / denom;
}

// Negative log-likelihood over all positive samples: L = -sum_i log(p_i).
inline double nll_loss(std::span<const ScoredCandidates> samples) {
  if (samples.empty())
    throw std::invalid_argument("nll_loss: empty sample set");
  double loss = 0.0;
  for (const ScoredCandidates& s : samples) loss += -std::log(posterior(s));
  return loss;
}

struct Gradients {
  Eigen::MatrixXd embeddings;
  Eigen::MatrixXd attn_w;
  Eigen::VectorXd attn_q;

  explicit Gradients(const ModelParams& p)
      : embeddings(Eigen::MatrixXd::Zero(p.embeddings.rows(), p.dim)),
        attn_w(Eigen::MatrixXd::Zero(p.dim, p.dim)),
        attn_q(Eigen::VectorXd::Zero(p.dim)) {}
};

// Exact analytic gradient of nll_loss summed over the batch. Histories are
// truncated to max_history before encoding. Returns the summed loss through
// loss_out when given.
inline Gradients gradients(const ModelParams& params,
                           std::span<const TrainingSample> batch,
                           int max_history = 50, double* loss_out = nullptr) {
  Gradients grad(params);
  double loss = 0.0;
  const int d = params.dim;

  std::vector<int> hist_rows;
  for (const TrainingSample& sample : batch) {
    hist_rows.clear();
    for (const std::string& id :
         truncate_history(sample.history, static_cast<std::size_t>(max_history))) {
      const auto it = params.row.find(id);
      if (it != params.row.end()) hist_rows.push_back(it->second);
    }
    const std::size_t m = hist_rows.size();

    // Forward pass through attention.
    Eigen::MatrixXd tanh_z(d, static_cast<Eigen::Index>(m));
    Eigen::VectorXd logits(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      const Eigen::VectorXd z =
          params.attn_w * params.embeddings.row(hist_rows[i]).transpose();
      tanh_z.col(static_cast<Eigen::Index>(i)) = z.array().tanh();
      logits[static_cast<Eigen::Index>(i)] =
          params.attn_q.dot(tanh_z.col(static_cast<Eigen::Index>(i)));
    }
    Eigen::VectorXd weights;
    Eigen::VectorXd user = Eigen::VectorXd::Zero(d);
    if (m > 0) {
      weights = (logits.array() - logits.maxCoeff()).exp();
      weights /= weights.sum();
      for (std::size_t i = 0; i < m; ++i)
        user += weights[static_cast<Eigen::Index>(i)] *
                params.embeddings.row(hist_rows[i]).transpose();
    }

    // Scores and softmax over {positive, negatives}.
    const std::size_t kn = sample.negatives.size();
    std::vector<int> cand_rows(kn + 1);
    cand_rows[0] = params.row.at(sample.positive);
    for (std::size_t j = 0; j < kn; ++j)
      cand_rows[j + 1] = params.row.at(sample.negatives[j]);
    Eigen::VectorXd scores(static_cast<Eigen::Index>(kn + 1));
    for (std::size_t j = 0; j <= kn; ++j)
      scores[static_cast<Eigen::Index>(j)] =
          user.dot(params.embeddings.row(cand_rows[j]).transpose());
    const double max_score = scores.maxCoeff();
    Eigen::VectorXd probs = (scores.array() - max_score).exp();
    probs /= probs.sum();
    loss += -(scores[0] - max_score) + std::log(((scores.array() - max_score).exp()).sum());

    // dL/ds_j = softmax_j - [j == 0]
    Eigen::VectorXd gscore = probs;
    gscore[0] -= 1.0;

    // Candidate embedding rows and pull-back onto the user vector.
    Eigen::VectorXd guser = Eigen::VectorXd::Zero(d);
    for (std::size_t j = 0; j <= kn; ++j) {
      grad.embeddings.row(cand_rows[j]) +=
          gscore[static_cast<Eigen::Index>(j)] * user.transpose();
      guser += gscore[static_cast<Eigen::Index>(j)] *
               params.embeddings.row(cand_rows[j]).transpose();
    }
    if (m == 0) continue;  // user vector is the constant zero

    // Through u = sum w_i e_i.
    Eigen::VectorXd gw(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      gw[static_cast<Eigen::Index>(i)] =
          guser.dot(params.embeddings.row(hist_rows[i]).transpose());
      grad.embeddings.row(hist_rows[i]) +=
          weights[static_cast<Eigen::Index>(i)] * guser.transpose();
    }
    // Softmax backprop: da_i = w_i (gw_i - sum_m w_m gw_m).
    const double mix = weights.dot(gw);
    for (std::size_t i = 0; i < m; ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const double ga = weights[ii] * (gw[ii] - mix);
      const Eigen::VectorXd t = tanh_z.col(ii);
      grad.attn_q += ga * t;
      const Eigen::VectorXd gz =
          ga * (params.attn_q.array() * (1.0 - t.array().square())).matrix();
      grad.attn_w += gz * params.embeddings.row(hist_rows[i]);
      grad.embeddings.row(hist_rows[i]) +=
          (params.attn_w.transpose() * gz).transpose();
    }
  }
  if (loss_out) *loss_out = loss;
  return grad;
}

class DivergenceDetected : public std::runtime_error {
 public:
  explicit DivergenceDetected(const std::string& what)
      : std::runtime_error(what) {}
};

struct TrainOptions {
  int epochs = 3;
  double learning_rate = 0.05;
  int batch_size = 64;
  int max_history = 50;
  std::uint64_t seed = 0;
  bool log_seeds = false;  // print derived per-epoch sampler seeds to stderr
};

struct TrainTrace {
  std::vector<double> epoch_mean_loss;
};

// Sampler seed used for epoch `epoch` (0-based) of a run seeded with `seed`.
inline std::uint64_t epoch_sampler_seed(std::uint64_t seed, int epoch) {
  return derive_seed(seed, 0x45504F43ULL + static_cast<std::uint64_t>(epoch));
}

// Plain mini-batch gradient descent with a fixed step on the batch-mean
// gradient. Negatives are resampled fresh each epoch from an epoch-derived
// seed; the whole run is deterministic given (impressions, config, seed).
inline TrainTrace train(ModelParams& params,
                        std::span<const Impression> impressions,
                        const PopularityIndex& index,
                        const SamplerConfig& sampler_config,
                        const TrainOptions& options) {
  if (options.learning_rate < 0.0)
    throw std::invalid_argument("train: learning rate must be >= 0");
  if (options.epochs < 1)
    throw std::invalid_argument("train: epochs must be >= 1");

  TrainTrace trace;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    SamplerConfig cfg = sampler_config;
    cfg.seed = epoch_sampler_seed(options.seed, epoch);
    if (options.log_seeds)
      std::fprintf(stderr, "train: epoch %d sampler seed = %016llx\n",
                   epoch + 1, static_cast<unsigned long long>(cfg.seed));
    SampleBatch batch = make_all_samples(impressions, index, cfg);
    if (batch.samples.empty())
      throw std::invalid_argument("train: no usable training samples");

    std::vector<std::size_t> order(batch.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 shuffle_rng(derive_seed(cfg.seed, "batch-order"));
    shuffle(order, shuffle_rng);

    double epoch_loss = 0.0;
    std::vector<TrainingSample> minibatch;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(options.batch_size));
      minibatch.clear();
      for (std::size_t i = start; i < end; ++i)
        minibatch.push_back(batch.samples[order[i]]);
      double batch_loss = 0.0;
      const Gradients grad =
          gradients(params, minibatch, options.max_history, &batch_loss);
      epoch_loss += batch_loss;
      if (!std::isfinite(batch_loss))
        throw DivergenceDetected("train: non-finite loss at epoch " +
                                 std::to_string(epoch + 1));
      const double step =
          options.learning_rate / static_cast<double>(minibatch.size());
      params.embeddings -= step * grad.embeddings;
      params.attn_w -= step * grad.attn_w;
      params.attn_q -= step * grad.attn_q;
    }
    trace.epoch_mean_loss.push_back(epoch_loss /
                                    static_cast<double>(batch.samples.size()));
  }
  return trace;
}

inline void save_checkpoint(const ModelParams& params, const std::string& path,
                            const std::string& fingerprint = {}) {
  nlohmann::json j;
  j["version"] = 1;
  if (!fingerprint.empty()) j["config_fingerprint"] = fingerprint;
  j["dim"] = params.dim;
  j["ids"] = params.ids;
  std::vector<double> emb(params.embeddings.data(),
                          params.embeddings.data() + params.embeddings.size());
  std::vector<double> w(params.attn_w.data(),
                        params.attn_w.data() + params.attn_w.size());
  std::vector<double> q(params.attn_q.data(),
                        params.attn_q.data() + params.attn_q.size());
  j["embeddings"] = emb;
  j["attn_w"] = w;
  j["attn_q"] = q;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << j.dump() << '\n';
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("version", 0) != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  ModelParams p;
  p.dim = j.at("dim").get<int>();
  p.ids = j.at("ids").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < p.ids.size(); ++i)
    p.row.emplace(p.ids[i], static_cast<int>(i));
  const auto emb = j.at("embeddings").get<std::vector<double>>();
  const auto w = j.at("attn_w").get<std::vector<double>>();
  const auto q = j.at("attn_q").get<std::vector<double>>();
  if (emb.size() != p.ids.size() * static_cast<std::size_t>(p.dim) ||
      w.size() != static_cast<std::size_t>(p.dim) * p.dim ||
      q.size() != static_cast<std::size_t>(p.dim))
    throw std::runtime_error("checkpoint shape mismatch in " + path);
  p.embeddings = Eigen::Map<const Eigen::MatrixXd>(
      emb.data(), static_cast<Eigen::Index>(p.ids.size()), p.dim);
  p.attn_w = Eigen::Map<const Eigen::MatrixXd>(w.data(), p.dim, p.dim);
  p.attn_q = Eigen::Map<const Eigen::VectorXd>(q.data(), p.dim);
  return p;
}

}  // namespace popk
