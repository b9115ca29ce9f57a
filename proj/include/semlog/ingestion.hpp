#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstddef>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "semlog/embedding.hpp"
#include "semlog/errors.hpp"
#include "semlog/rebalancer.hpp"
#include "semlog/template_parser.hpp"
#include "semlog/vector_index.hpp"

namespace semlog {

struct IngestConfig {
  double similarity_threshold = 0.9;
  std::size_t rebalance_every_n = 1000;
  // Batch mode defers template parsing until after a rebalance.
  bool batch_mode = false;
  // Run maybe_rebalance() after every ingest call.
  bool auto_rebalance = true;
  // Records searched concurrently per wave in ingest_batch; 0 = hardware threads.
  std::size_t batch_wave = 0;

  void validate() const {
    if (!(similarity_threshold > 0.0 && similarity_threshold < 1.0)) {
      throw ConfigError("similarity threshold must lie in (0, 1)");
    }
    if (rebalance_every_n == 0) throw ConfigError("rebalance cadence must be positive");
  }
};

struct ClusterAssignment {
  std::size_t log_index = 0;
  ClusterId cluster_id = 0;
  bool created_new = false;
  // 1.0 for created clusters by convention.
  double similarity = 0.0;
  std::optional<std::string> template_text;
};

inline nlohmann::json to_json(const ClusterAssignment& a) {
  nlohmann::json j{{"log", a.log_index},
                   {"cluster_id", a.cluster_id},
                   {"created_new", a.created_new},
                   {"similarity", a.similarity}};
  if (a.template_text) j["template"] = *a.template_text;
  return j;
}

struct DeadLetter {
  std::size_t log_index = 0;
  std::string content;
  std::string reason;
  bool retryable = false;
};

struct BatchResult {
  std::vector<ClusterAssignment> assignments;
  std::vector<DeadLetter> errors;
};

// The online pipeline: embed, route to the nearest centroid or open a new
// cluster, and rebalance on a cadence. Not itself thread-safe; ingest_batch
// parallelizes internally.
class Pipeline {
 public:
  Pipeline(std::shared_ptr<const EmbeddingProvider> provider, EncoderWeights weights,
           IngestConfig config, IndexParams index_params = {},
           std::shared_ptr<TemplateParser> parser = nullptr)
      : provider_(std::move(provider)),
        weights_(std::move(weights)),
        config_(config),
        index_(weights_.output_dim(), index_params),
        parser_(std::move(parser)) {
    if (!provider_) throw ConfigError("pipeline needs an embedding provider");
    config_.validate();
    weights_.validate();
    if (weights_.input_dim() != provider_->dimension() + 1) {
      throw ConfigError("encoder input dimension " + std::to_string(weights_.input_dim()) +
                        " does not match provider dimension + 1 (" +
                        std::to_string(provider_->dimension() + 1) + ")");
    }
  }

  const IngestConfig& config() const { return config_; }
  const VectorIndex& index() const { return index_; }
  VectorIndex& index() { return index_; }
  const TemplateStore& templates() const { return templates_; }
  const std::vector<DeadLetter>& dead_letters() const { return dead_letters_; }
  const std::vector<MergeReport>& rebalance_reports() const { return reports_; }
  std::size_t ingested() const { return ingested_; }
  std::size_t clusters_created() const { return created_; }
  std::size_t since_rebalance() const { return since_rebalance_; }
  std::size_t parser_queries() const { return parser_ ? parser_->queries() : 0; }
  void set_audit_stream(std::ostream* audit) { audit_ = audit; }

  UnitVector embed(const LogRecord& record) const {
    return embed_log(record, *provider_, weights_);
  }

  ClusterAssignment ingest(const LogRecord& record) {
    const std::size_t log_index = next_log_++;
    std::optional<UnitVector> vec;
    try {
      vec = embed(record);
    } catch (const RecordError& e) {
      dead_letters_.push_back({log_index, record.content(), e.what(), e.retryable()});
      throw;
    }
    auto a = route(log_index, record, *vec, index_.nearest(*vec));
    if (config_.auto_rebalance) maybe_rebalance();
    return a;
  }

  // Records within a wave are embedded and searched concurrently against the
  // same index state, then routed in arrival order. An unseen pattern that
  // appears several times in one wave opens duplicate clusters; the next
  // rebalance merges them.
  BatchResult ingest_batch(std::span<const LogRecord> records,
                           std::optional<std::size_t> wave = std::nullopt) {
    if (!config_.batch_mode) throw ContractViolation("ingest_batch requires batch mode");
    std::size_t width = wave.value_or(config_.batch_wave);
    if (width == 0) width = std::max(1u, std::thread::hardware_concurrency());
    BatchResult out;
    struct Probe {
      std::optional<UnitVector> vec;
      std::optional<SearchHit> hit;
      std::optional<std::string> error;
      bool retryable = false;
    };
    for (std::size_t start = 0; start < records.size(); start += width) {
      const std::size_t n = std::min(width, records.size() - start);
      std::vector<Probe> probes(n);
      auto work = [&](std::size_t k) {
        auto& p = probes[k];
        try {
          p.vec = embed(records[start + k]);
          p.hit = index_.nearest(*p.vec);
        } catch (const RecordError& e) {
          p.error = e.what();
          p.retryable = e.retryable();
        }
      };
      const std::size_t threads =
          std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
      if (threads <= 1) {
        for (std::size_t k = 0; k < n; ++k) work(k);
      } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
          pool.emplace_back([&, t] {
            for (std::size_t k = t; k < n; k += threads) work(k);
          });
        }
      }
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t log_index = next_log_++;
        auto& p = probes[k];
        if (p.error) {
          DeadLetter d{log_index, records[start + k].content(), *p.error, p.retryable};
          dead_letters_.push_back(d);
          out.errors.push_back(std::move(d));
          continue;
        }
        out.assignments.push_back(route(log_index, records[start + k], *p.vec, p.hit));
      }
    }
    if (config_.auto_rebalance) maybe_rebalance();
    return out;
  }

  std::optional<MergeReport> maybe_rebalance() {
    if (since_rebalance_ < config_.rebalance_every_n) return std::nullopt;
    return rebalance_now();
  }

  // Rebalances, then parses every cluster left Unparsed or Failed.
  MergeReport rebalance_now() {
    since_rebalance_ = 0;
    MergeReport report;
    try {
      report = rebalance(index_, config_.similarity_threshold, audit_);
    } catch (const RebalanceError& e) {
      apply_merges(e.partial());
      throw;
    }
    apply_merges(report);
    reports_.push_back(report);
    parse_pending();
    return report;
  }

  // Follows merge aliases to the cluster that currently holds `id`'s logs.
  ClusterId resolve(ClusterId id) const {
    for (auto it = aliases_.find(id); it != aliases_.end(); it = aliases_.find(id)) {
      id = it->second;
    }
    return id;
  }

  std::optional<std::string> template_of(ClusterId id) const {
    id = resolve(id);
    if (!index_.contains(id)) return std::nullopt;
    const auto c = index_.get(id);
    if (!c.template_id) return std::nullopt;
    return templates_.text(*c.template_id);
  }

  const LogRecord* representative(ClusterId id) const {
    auto it = representatives_.find(resolve(id));
    return it == representatives_.end() ? nullptr : &it->second;
  }

  // cluster_id -> {template, parse_state, source log}, plus merge aliases.
  nlohmann::json template_store_json() const {
    nlohmann::json clusters = nlohmann::json::object();
    for (const auto& c : index_.centroids()) {
      nlohmann::json e{{"parse_state", to_string(c.parse_state)}, {"weight", c.weight}};
      if (c.template_id) {
        e["template_id"] = *c.template_id;
        e["template"] = templates_.text(*c.template_id);
      } else {
        e["template"] = nullptr;
      }
      if (const auto* r = representative(c.id)) e["source_log"] = r->content();
      clusters[std::to_string(c.id)] = std::move(e);
    }
    nlohmann::json aliases = nlohmann::json::object();
    for (const auto& [from, to] : aliases_) aliases[std::to_string(from)] = to;
    return {{"templates", templates_.all()}, {"clusters", clusters}, {"aliases", aliases}};
  }

 private:
  ClusterAssignment route(std::size_t log_index, const LogRecord& record, const UnitVector& vec,
                          const std::optional<SearchHit>& hit) {
    ClusterAssignment a;
    a.log_index = log_index;
    if (!hit || hit->similarity < config_.similarity_threshold) {
      a.cluster_id = index_.insert(vec);
      a.created_new = true;
      a.similarity = 1.0;
      ++created_;
      representatives_.emplace(a.cluster_id, record);
      if (!config_.batch_mode) try_parse(a.cluster_id);
    } else {
      const auto c = index_.update_moving_average(hit->cluster_id, vec);
      a.cluster_id = c.id;
      a.similarity = hit->similarity;
    }
    a.template_text = template_of(a.cluster_id);
    ++ingested_;
    ++since_rebalance_;
    return a;
  }

  void try_parse(ClusterId id) {
    if (!parser_) return;
    auto it = representatives_.find(id);
    if (it == representatives_.end()) return;
    try {
      parser_->parse_cluster(index_, id, it->second, templates_);
    } catch (const ProviderError&) {
      // stays Unparsed; retried after the next rebalance
    }
  }

  void apply_merges(const MergeReport& report) {
    for (const auto& m : report.merges) {
      auto rep = representatives_.find(m.inherited_from);
      if (rep != representatives_.end()) {
        representatives_.insert_or_assign(m.survivor, rep->second);
      }
      representatives_.erase(m.first);
      representatives_.erase(m.second);
      aliases_[m.first] = m.survivor;
      aliases_[m.second] = m.survivor;
    }
  }

  void parse_pending() {
    if (!parser_) return;
    for (const auto& c : index_.centroids()) {
      if (c.parse_state != ParseState::kParsed) try_parse(c.id);
    }
  }

  std::shared_ptr<const EmbeddingProvider> provider_;
  EncoderWeights weights_;
  IngestConfig config_;
  VectorIndex index_;
  std::shared_ptr<TemplateParser> parser_;
  TemplateStore templates_;
  std::unordered_map<ClusterId, LogRecord> representatives_;
  std::unordered_map<ClusterId, ClusterId> aliases_;
  std::vector<DeadLetter> dead_letters_;
  std::vector<MergeReport> reports_;
  std::ostream* audit_ = nullptr;
  std::size_t next_log_ = 0;
  std::size_t ingested_ = 0;
  std::size_t created_ = 0;
  std::size_t since_rebalance_ = 0;
};

}  // namespace semlog
