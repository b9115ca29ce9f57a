#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "semlog/embedding.hpp"
#include "semlog/errors.hpp"

namespace semlog {

struct TrainConfig {
  double learning_rate = 0.0005;
  std::size_t batch_size = 2048;
  std::size_t epochs = 50;
  std::size_t pairs_per_dataset = 24000;
  std::size_t similar_parts = 1;
  std::size_t dissimilar_parts = 5;
  std::uint64_t rng_seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  // epochs may be zero (returns the initial weights); everything else must
  // be positive and the ratio must favor dissimilar pairs.
  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning rate must be finite and non-negative");
    }
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (pairs_per_dataset == 0) throw ConfigError("pairs per dataset must be positive");
    if (similar_parts == 0 || dissimilar_parts == 0) {
      throw ConfigError("similar:dissimilar ratio terms must be positive");
    }
    if (dissimilar_parts < similar_parts) {
      throw ConfigError("similar:dissimilar ratio must not favor similar pairs");
    }
  }

  // Parses "a:b".
  void set_ratio(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw ConfigError("ratio must look like 1:5");
    auto parse = [&](std::string_view s) -> std::size_t {
      s = trim(s);
      if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw ConfigError("ratio terms must be positive integers: " + std::string(text));
      }
      return std::stoull(std::string(s));
    };
    similar_parts = parse(text.substr(0, colon));
    dissimilar_parts = parse(text.substr(colon + 1));
  }
};

struct TrainingPair {
  std::vector<double> left;
  std::vector<double> right;
  double label = 0.0;
};

struct IndexedPair {
  std::uint32_t left;
  std::uint32_t right;
  double label;
};

// Pairs referencing rows of a shared feature table (one fused vector per log).
struct PairDataset {
  Eigen::MatrixXd features;  // rows = logs, cols = D + 1
  std::vector<IndexedPair> pairs;

  static PairDataset from_pairs(std::span<const TrainingPair> pairs) {
    PairDataset ds;
    if (pairs.empty()) return ds;
    const auto dim = static_cast<Eigen::Index>(pairs.front().left.size());
    ds.features.resize(static_cast<Eigen::Index>(2 * pairs.size()), dim);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      if (static_cast<Eigen::Index>(p.left.size()) != dim ||
          static_cast<Eigen::Index>(p.right.size()) != dim) {
        throw ContractViolation("training pairs have inconsistent dimensions");
      }
      const auto r = static_cast<Eigen::Index>(2 * i);
      ds.features.row(r) = Eigen::Map<const Eigen::RowVectorXd>(p.left.data(), dim);
      ds.features.row(r + 1) = Eigen::Map<const Eigen::RowVectorXd>(p.right.data(), dim);
      ds.pairs.push_back({static_cast<std::uint32_t>(2 * i), static_cast<std::uint32_t>(2 * i + 1),
                          p.label});
    }
    return ds;
  }

  TrainingPair pair(std::size_t i) const {
    const auto& p = pairs[i];
    auto row = [&](std::uint32_t r) {
      std::vector<double> v(static_cast<std::size_t>(features.cols()));
      for (Eigen::Index c = 0; c < features.cols(); ++c) v[static_cast<std::size_t>(c)] = features(r, c);
      return v;
    };
    return {row(p.left), row(p.right), p.label};
  }

  std::size_t similar_count() const {
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.label == 1.0; }));
  }
};

enum class PairOrder { kConcatenate, kInterleave };

// Merges per-dataset pair sets into one training set.
inline PairDataset combine(std::span<const PairDataset> parts, PairOrder order) {
  PairDataset out;
  Eigen::Index rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (p.pairs.empty()) continue;
    if (cols != 0 && p.features.cols() != cols) throw ContractViolation("feature width mismatch");
    cols = p.features.cols();
    rows += p.features.rows();
  }
  out.features.resize(rows, cols);
  std::vector<std::uint32_t> offset;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offset.push_back(static_cast<std::uint32_t>(at));
    if (p.features.rows() > 0 && !p.pairs.empty()) {
      out.features.middleRows(at, p.features.rows()) = p.features;
      at += p.features.rows();
    }
  }
  auto shifted = [&](std::size_t part, const IndexedPair& q) {
    return IndexedPair{q.left + offset[part], q.right + offset[part], q.label};
  };
  if (order == PairOrder::kConcatenate) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      for (const auto& q : parts[k].pairs) out.pairs.push_back(shifted(k, q));
    }
  } else {
    std::size_t longest = 0;
    for (const auto& p : parts) longest = std::max(longest, p.pairs.size());
    for (std::size_t i = 0; i < longest; ++i) {
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (i < parts[k].pairs.size()) out.pairs.push_back(shifted(k, parts[k].pairs[i]));
      }
    }
  }
  return out;
}

struct PairStats {
  std::size_t requested = 0;
  std::size_t similar = 0;
  std::size_t dissimilar = 0;
  std::uint64_t similar_available = 0;
  std::uint64_t dissimilar_available = 0;
  bool truncated = false;
};

namespace detail {

inline std::uint64_t choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// k distinct canonical (i < j) pairs, drawn uniformly without replacement.
// `draw` yields one uniformly random canonical pair; `enumerate` lists them all.
template <typename Draw, typename Enumerate>
std::vector<std::pair<std::uint32_t, std::uint32_t>> sample_distinct(
    std::size_t k, std::uint64_t available, std::mt19937_64& rng, Draw draw, Enumerate enumerate) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  if (k == 0) return out;
  if (2 * static_cast<std::uint64_t>(k) >= available) {
    auto all = enumerate();
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    all.resize(k);
    return all;
  }
  std::unordered_set<std::uint64_t> seen;
  while (out.size() < k) {
    const auto p = draw();
    if (seen.insert((static_cast<std::uint64_t>(p.first) << 32) | p.second).second) {
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace detail

// Samples labeled pairs over `features` (one row per log), where logs with
// equal `labels` share a ground-truth template.
inline std::pair<PairDataset, PairStats> build_pair_dataset(Eigen::MatrixXd features,
                                                            std::span<const std::string> labels,
                                                            const TrainConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ContractViolation("feature rows and labels differ in count");
  }
  std::unordered_map<std::string_view, std::vector<std::uint32_t>> by_template;
  std::vector<std::string_view> order;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = by_template.try_emplace(labels[i]);
    if (inserted) order.push_back(labels[i]);
    it->second.push_back(static_cast<std::uint32_t>(i));
  }
  if (by_template.size() < 2) throw DataError("pair sampling needs at least two templates");
  std::vector<const std::vector<std::uint32_t>*> groups;
  std::vector<std::uint64_t> cumulative;
  std::uint64_t sim_avail = 0;
  for (auto name : order) {
    const auto& g = by_template.at(name);
    groups.push_back(&g);
    sim_avail += detail::choose2(g.size());
    cumulative.push_back(sim_avail);
  }
  if (sim_avail == 0) throw DataError("pair sampling needs a template with at least two logs");
  const std::uint64_t dis_avail = detail::choose2(labels.size()) - sim_avail;

  PairStats stats;
  stats.requested = cfg.pairs_per_dataset;
  stats.similar_available = sim_avail;
  stats.dissimilar_available = dis_avail;
  const double parts = static_cast<double>(cfg.similar_parts + cfg.dissimilar_parts);
  auto want_sim = static_cast<std::size_t>(
      std::llround(static_cast<double>(cfg.pairs_per_dataset) * cfg.similar_parts / parts));
  auto want_dis = cfg.pairs_per_dataset - want_sim;
  if (want_sim > sim_avail || want_dis > dis_avail) {
    const double scale = std::min(want_sim ? static_cast<double>(sim_avail) / want_sim : 1.0,
                                  want_dis ? static_cast<double>(dis_avail) / want_dis : 1.0);
    want_sim = static_cast<std::size_t>(std::floor(want_sim * scale));
    want_dis = static_cast<std::size_t>(std::floor(want_dis * scale));
    stats.truncated = true;
  }

  std::mt19937_64 rng(cfg.rng_seed);
  const std::vector<std::string_view> label_of(labels.begin(), labels.end());
  auto canonical = [](std::uint32_t a, std::uint32_t b) {
    return a < b ? std::pair{a, b} : std::pair{b, a};
  };
  auto draw_similar = [&] {
    std::uniform_int_distribution<std::uint64_t> u(0, sim_avail - 1);
    const auto r = u(rng);
    const auto t = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    const auto& g = *groups[t];
    std::uniform_int_distribution<std::size_t> a(0, g.size() - 1), b(0, g.size() - 2);
    const auto i = a(rng);
    auto j = b(rng);
    if (j >= i) ++j;
    return canonical(g[i], g[j]);
  };
  auto all_similar = [&] {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> all;
    for (const auto* g : groups) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        for (std::size_t j = i + 1; j < g->size(); ++j) all.push_back(canonical((*g)[i], (*g)[j]));
      }
    }
    return all;
  };
  const auto n = static_cast<std::uint32_t>(labels.size());
  auto draw_dissimilar = [&] {
    std::uniform_int_distribution<std::uint32_t> u(0, n - 1);
    for (;;) {
      const auto i = u(rng), j = u(rng);
      if (label_of[i] != label_of[j]) return canonical(i, j);
    }
  };
  auto all_dissimilar = [&] {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = i + 1; j < n; ++j) {
        if (label_of[i] != label_of[j]) all.emplace_back(i, j);
      }
    }
    return all;
  };

  PairDataset ds;
  ds.features = std::move(features);
  for (const auto& [i, j] : detail::sample_distinct(want_sim, sim_avail, rng, draw_similar, all_similar)) {
    ds.pairs.push_back({i, j, 1.0});
  }
  for (const auto& [i, j] : detail::sample_distinct(want_dis, dis_avail, rng, draw_dissimilar, all_dissimilar)) {
    ds.pairs.push_back({i, j, 0.0});
  }
  std::shuffle(ds.pairs.begin(), ds.pairs.end(), rng);
  stats.similar = want_sim;
  stats.dissimilar = want_dis;
  return {std::move(ds), stats};
}

// Fused (provider embedding + word count) feature row per record.
inline Eigen::MatrixXd fused_features(std::span<const LogRecord> records,
                                      const EmbeddingProvider& provider) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()),
                      static_cast<Eigen::Index>(provider.dimension() + 1));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto fused = fuse_word_count(embed_raw(records[i], provider), records[i].word_count());
    out.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(fused.data(), static_cast<Eigen::Index>(fused.size()));
  }
  return out;
}

inline std::pair<PairDataset, PairStats> build_pair_dataset(
    std::span<const LogRecord> records, std::span<const std::string> template_labels,
    const EmbeddingProvider& provider, const TrainConfig& cfg) {
  return build_pair_dataset(fused_features(records, provider), template_labels, cfg);
}

inline double predict_similarity(const TrainingPair& pair, const EncoderWeights& weights) {
  const double s = encode(pair.left, weights).dot(encode(pair.right, weights));
  return std::clamp(s, -1.0, 1.0);
}

inline double mse_loss(std::span<const TrainingPair> pairs, const EncoderWeights& weights) {
  if (pairs.empty()) throw ContractViolation("mse_loss needs a non-empty batch");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const double e = p.label - predict_similarity(p, weights);
    sum += e * e;
  }
  return sum / static_cast<double>(pairs.size());
}

struct Gradients {
  Eigen::MatrixXd layer1_w;
  Eigen::VectorXd layer1_b;
  Eigen::MatrixXd layer2_w;
  Eigen::VectorXd layer2_b;
  double loss = 0.0;
};

// Batched forward and backward pass of mean((y - cos(f(a), f(b)))^2).
inline Gradients loss_and_gradient(const EncoderWeights& w, const PairDataset& ds,
                                   std::span<const std::uint32_t> batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw ContractViolation("empty batch");
  Eigen::MatrixXd xa(n, ds.features.cols()), xb(n, ds.features.cols());
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& p = ds.pairs[batch[static_cast<std::size_t>(r)]];
    xa.row(r) = ds.features.row(p.left);
    xb.row(r) = ds.features.row(p.right);
    y(r) = p.label;
  }
  const Eigen::MatrixXd ha = (xa * w.layer1_w.transpose()).rowwise() + w.layer1_b.transpose();
  const Eigen::MatrixXd hb = (xb * w.layer1_w.transpose()).rowwise() + w.layer1_b.transpose();
  const Eigen::MatrixXd za = (ha * w.layer2_w.transpose()).rowwise() + w.layer2_b.transpose();
  const Eigen::MatrixXd zb = (hb * w.layer2_w.transpose()).rowwise() + w.layer2_b.transpose();
  const Eigen::VectorXd na = za.rowwise().norm();
  const Eigen::VectorXd nb = zb.rowwise().norm();
  if (na.minCoeff() <= kNormEpsilon || nb.minCoeff() <= kNormEpsilon) {
    throw DegenerateEmbedding("encoder output norm below 1e-12 during training");
  }
  const Eigen::MatrixXd ua = za.array().colwise() / na.array();
  const Eigen::MatrixXd ub = zb.array().colwise() / nb.array();
  const Eigen::VectorXd yhat = (ua.array() * ub.array()).rowwise().sum();
  const Eigen::VectorXd err = y - yhat;

  Gradients g;
  g.loss = err.squaredNorm() / static_cast<double>(n);
  const Eigen::VectorXd dyhat = -2.0 * err / static_cast<double>(n);
  // d cos / d z_a = (u_b - cos * u_a) / |z_a|
  const Eigen::MatrixXd dza =
      ((ub - (ua.array().colwise() * yhat.array()).matrix()).array().colwise() *
       (dyhat.array() / na.array()))
          .matrix();
  const Eigen::MatrixXd dzb =
      ((ua - (ub.array().colwise() * yhat.array()).matrix()).array().colwise() *
       (dyhat.array() / nb.array()))
          .matrix();
  g.layer2_w = dza.transpose() * ha + dzb.transpose() * hb;
  g.layer2_b = (dza.colwise().sum() + dzb.colwise().sum()).transpose();
  const Eigen::MatrixXd dha = dza * w.layer2_w;
  const Eigen::MatrixXd dhb = dzb * w.layer2_w;
  g.layer1_w = dha.transpose() * xa + dhb.transpose() * xb;
  g.layer1_b = (dha.colwise().sum() + dhb.colwise().sum()).transpose();
  return g;
}

struct TrainResult {
  EncoderWeights weights;
  std::vector<double> epoch_losses;  // mean pre-update batch loss per epoch
  std::size_t steps = 0;
};

inline nlohmann::json to_json(const TrainResult& r, const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.rng_seed},
          {"steps", r.steps},
          {"epoch_losses", r.epoch_losses}};
}

class Adam {
 public:
  Adam(const EncoderWeights& shape, const TrainConfig& cfg) : cfg_(cfg) {
    m1_ = zeros_like(shape);
    v1_ = zeros_like(shape);
  }

  void step(EncoderWeights& w, const Gradients& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
      param.array() -= cfg_.learning_rate * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + cfg_.adam_epsilon);
    };
    update(w.layer1_w, g.layer1_w, m1_.layer1_w, v1_.layer1_w);
    update(w.layer1_b, g.layer1_b, m1_.layer1_b, v1_.layer1_b);
    update(w.layer2_w, g.layer2_w, m1_.layer2_w, v1_.layer2_w);
    update(w.layer2_b, g.layer2_b, m1_.layer2_b, v1_.layer2_b);
  }

 private:
  static EncoderWeights zeros_like(const EncoderWeights& w) {
    EncoderWeights z;
    z.layer1_w = Eigen::MatrixXd::Zero(w.layer1_w.rows(), w.layer1_w.cols());
    z.layer1_b = Eigen::VectorXd::Zero(w.layer1_b.size());
    z.layer2_w = Eigen::MatrixXd::Zero(w.layer2_w.rows(), w.layer2_w.cols());
    z.layer2_b = Eigen::VectorXd::Zero(w.layer2_b.size());
    return z;
  }

  TrainConfig cfg_;
  EncoderWeights m1_, v1_;
  std::uint64_t t_ = 0;
};

// Shuffled mini-batch Adam on the pair dataset, starting from `initial`.
inline TrainResult train(const PairDataset& data, const TrainConfig& cfg, EncoderWeights initial) {
  cfg.validate();
  initial.validate();
  if (data.pairs.empty()) throw ContractViolation("training needs at least one pair");
  if (static_cast<std::size_t>(data.features.cols()) != initial.input_dim()) {
    throw ConfigError("feature width does not match encoder input dimension");
  }
  TrainResult result{std::move(initial), {}, 0};
  Adam adam(result.weights, cfg);
  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<std::uint32_t> order(data.pairs.size());
  std::iota(order.begin(), order.end(), 0u);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const auto g = loss_and_gradient(result.weights, data,
                                       std::span<const std::uint32_t>(order).subspan(start, len));
      if (!std::isfinite(g.loss)) {
        throw DataError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                        std::to_string(start));
      }
      weighted += g.loss * static_cast<double>(len);
      adam.step(result.weights, g);
      ++result.steps;
    }
    result.epoch_losses.push_back(weighted / static_cast<double>(order.size()));
  }
  return result;
}

inline TrainResult train(const PairDataset& data, const TrainConfig& cfg) {
  const auto in = static_cast<std::size_t>(data.features.cols());
  if (in < 2) throw ConfigError("features must have at least one provider dimension");
  return train(data, cfg, EncoderWeights::for_provider(in - 1));
}

// Largest relative error between the analytic gradient and a central
// difference of mse_loss over `samples` randomly chosen parameters.
// Relative error is |a - n| / max(|a|, |n|, floor).
inline double gradient_check(const EncoderWeights& weights, std::span<const TrainingPair> batch,
                             double h, std::size_t samples = 64, std::uint64_t seed = 7,
                             double floor = 1e-6) {
  if (batch.empty() || batch.size() > 8) throw ContractViolation("gradient check batch must hold 1..8 pairs");
  if (h < 1e-6 || h > 1e-4) throw ContractViolation("finite-difference step must lie in [1e-6, 1e-4]");
  const auto ds = PairDataset::from_pairs(batch);
  std::vector<std::uint32_t> all(batch.size());
  std::iota(all.begin(), all.end(), 0u);
  const auto g = loss_and_gradient(weights, ds, all);

  struct Slot {
    int block;
    Eigen::Index index;
  };
  std::vector<Slot> slots;
  const Eigen::Index sizes[4] = {weights.layer1_w.size(), weights.layer1_b.size(),
                                 weights.layer2_w.size(), weights.layer2_b.size()};
  std::mt19937_64 rng(seed);
  for (int b = 0; b < 4; ++b) {
    const auto per_block = static_cast<Eigen::Index>(std::max<std::size_t>(samples / 4, 1));
    if (sizes[b] <= per_block) {
      for (Eigen::Index i = 0; i < sizes[b]; ++i) slots.push_back({b, i});
    } else {
      std::uniform_int_distribution<Eigen::Index> u(0, sizes[b] - 1);
      for (Eigen::Index k = 0; k < per_block; ++k) slots.push_back({b, u(rng)});
    }
  }
  auto param = [](EncoderWeights& w, const Slot& s) -> double& {
    switch (s.block) {
      case 0: return w.layer1_w.data()[s.index];
      case 1: return w.layer1_b.data()[s.index];
      case 2: return w.layer2_w.data()[s.index];
      default: return w.layer2_b.data()[s.index];
    }
  };
  auto analytic = [&](const Slot& s) {
    switch (s.block) {
      case 0: return g.layer1_w.data()[s.index];
      case 1: return g.layer1_b.data()[s.index];
      case 2: return g.layer2_w.data()[s.index];
      default: return g.layer2_b.data()[s.index];
    }
  };
  double worst = 0.0;
  EncoderWeights probe = weights;
  for (const auto& s : slots) {
    double& p = param(probe, s);
    const double saved = p;
    p = saved + h;
    const double up = mse_loss(batch, probe);
    p = saved - h;
    const double down = mse_loss(batch, probe);
    p = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic(s);
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace semlog
