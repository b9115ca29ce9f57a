#include <gtest/gtest.h>

#include <limits>
#include <random>
#include <sstream>

#include "support/pipeline_fixture.hpp"

namespace semlog {
namespace {

using testing::make_stack;
using testing::partition_of;

IngestConfig sequential(std::size_t cadence = 1000) {
  IngestConfig c;
  c.rebalance_every_n = cadence;
  return c;
}

IngestConfig batch(std::size_t cadence = 1u << 30) {
  IngestConfig c;
  c.batch_mode = true;
  c.rebalance_every_n = cadence;
  return c;
}

TEST(IngestConfig, Validation) {
  IngestConfig c;
  c.similarity_threshold = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.similarity_threshold = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.similarity_threshold = 0.5;
  c.rebalance_every_n = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pipeline, RejectsMismatchedWeights) {
  auto provider = std::make_shared<HashingProvider>(8);
  EXPECT_THROW(Pipeline(provider, EncoderWeights::for_provider(9), IngestConfig{}), ConfigError);
}

TEST(Ingest, EmptyIndexCreatesCluster) {
  auto s = make_stack(sequential());
  const auto a = s.pipeline->ingest(LogRecord::make("t", "disk 3 is full"));
  EXPECT_TRUE(a.created_new);
  EXPECT_EQ(a.similarity, 1.0);
  EXPECT_EQ(s.pipeline->index().get(a.cluster_id).weight, 1u);
  ASSERT_TRUE(a.template_text);
  EXPECT_EQ(*a.template_text, "disk <*> is full");
}

TEST(Ingest, IdenticalSecondLogJoins) {
  auto s = make_stack(sequential());
  const auto first = s.pipeline->ingest(LogRecord::make("t", "disk 3 is full"));
  const auto second = s.pipeline->ingest(LogRecord::make("t", "disk 3 is full"));
  EXPECT_FALSE(second.created_new);
  EXPECT_EQ(second.cluster_id, first.cluster_id);
  EXPECT_NEAR(second.similarity, 1.0, 1e-6);
  EXPECT_EQ(s.pipeline->index().get(first.cluster_id).weight, 2u);
  EXPECT_EQ(second.template_text, first.template_text);
}

TEST(Ingest, FixtureSeparation) {
  const auto logs = testing::make_fixture(1, 30);
  HashingProvider p(testing::kFixtureDim);
  const auto w = EncoderWeights::for_provider(testing::kFixtureDim);
  std::vector<UnitVector> v;
  for (const auto& l : logs) v.push_back(embed_log(LogRecord::make("f", l.content), p, w));
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double s = v[i].dot(v[j]);
      if (logs[i].log_template == logs[j].log_template) {
        EXPECT_GT(s, 0.9);
      } else {
        EXPECT_LT(s, 0.9);
      }
    }
  }
}

TEST(Ingest, FixtureYieldsOneClusterPerTemplate) {
  const auto logs = testing::make_fixture(2);
  auto s = make_stack(sequential());
  std::vector<ClusterId> ids;
  for (const auto& r : testing::to_records(logs)) ids.push_back(s.pipeline->ingest(r).cluster_id);
  EXPECT_EQ(s.pipeline->index().size(), testing::fixture_templates().size());
  EXPECT_EQ(s.pipeline->index().total_weight(), logs.size());
  std::vector<std::string> truth;
  for (const auto& l : logs) truth.push_back(l.log_template);
  EXPECT_EQ(partition_of(ids), partition_of(truth));
  EXPECT_EQ(s.client->queries(), s.pipeline->clusters_created());
}

TEST(Ingest, ThresholdSemanticsAndDeterminism) {
  const auto logs = testing::make_fixture(3, 20);
  auto run = [&] {
    auto s = make_stack(sequential());
    std::vector<ClusterAssignment> out;
    for (const auto& r : testing::to_records(logs)) out.push_back(s.pipeline->ingest(r));
    return out;
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].cluster_id, b[i].cluster_id);
    EXPECT_EQ(a[i].similarity, b[i].similarity);
    if (!a[i].created_new) EXPECT_GE(a[i].similarity, 0.9);
  }
}

TEST(Ingest, CadenceBoundary) {
  auto s = make_stack(sequential(1000));
  const auto logs = testing::make_fixture(4, 100);
  const auto records = testing::to_records(logs);
  for (std::size_t i = 0; i < 999; ++i) s.pipeline->ingest(records[i]);
  EXPECT_TRUE(s.pipeline->rebalance_reports().empty());
  EXPECT_EQ(s.pipeline->since_rebalance(), 999u);
  s.pipeline->ingest(records[999]);
  ASSERT_EQ(s.pipeline->rebalance_reports().size(), 1u);
  EXPECT_TRUE(s.pipeline->rebalance_reports()[0].merges.empty());
  EXPECT_EQ(s.pipeline->since_rebalance(), 0u);
}

TEST(Ingest, ManualTriggerBelowCadenceDoesNothing) {
  auto s = make_stack(sequential(5));
  s.pipeline->ingest(LogRecord::make("t", "a 1"));
  EXPECT_FALSE(s.pipeline->maybe_rebalance());
  const auto r = s.pipeline->rebalance_now();
  EXPECT_TRUE(r.merges.empty());
}

class FlakyProvider final : public EmbeddingProvider {
 public:
  std::size_t dimension() const override { return 8; }
  std::vector<double> embed(std::string_view text) const override {
    if (text.find("boom") != std::string_view::npos) throw ProviderError("timeout", true);
    if (text.find("nan") != std::string_view::npos) {
      return std::vector<double>(8, std::numeric_limits<double>::quiet_NaN());
    }
    return HashingProvider(8).embed(text);
  }
};

TEST(Ingest, EmbeddingFailuresGoToDeadLetters) {
  IngestConfig cfg;
  Pipeline p(std::make_shared<FlakyProvider>(), EncoderWeights::for_provider(8), cfg);
  p.ingest(LogRecord::make("t", "fine 1"));
  try {
    p.ingest(LogRecord::make("t", "boom 2"));
    FAIL() << "expected RecordError";
  } catch (const RecordError& e) {
    EXPECT_EQ(e.record().content(), "boom 2");
    EXPECT_TRUE(e.retryable());
  }
  ASSERT_EQ(p.dead_letters().size(), 1u);
  EXPECT_EQ(p.dead_letters()[0].log_index, 1u);
  EXPECT_EQ(p.index().total_weight(), 1u);
  EXPECT_EQ(p.ingested(), 1u);
}

TEST(IngestBatch, RequiresBatchMode) {
  auto s = make_stack(sequential());
  std::vector<LogRecord> none;
  EXPECT_THROW(s.pipeline->ingest_batch(none), ContractViolation);
}

TEST(IngestBatch, EmptyBatch) {
  auto s = make_stack(batch());
  std::vector<LogRecord> none;
  const auto r = s.pipeline->ingest_batch(none);
  EXPECT_TRUE(r.assignments.empty());
  EXPECT_TRUE(r.errors.empty());
}

TEST(IngestBatch, CopiesOfUnseenLogCollapse) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 2 + rng() % 15;
    auto s = make_stack(batch());
    std::vector<LogRecord> recs(k, LogRecord::make("t", "queue 17 drained by worker 0x2f"));
    const auto r = s.pipeline->ingest_batch(recs, 1 + rng() % k);
    std::size_t created = 0;
    for (const auto& a : r.assignments) created += a.created_new;
    EXPECT_GE(created, 1u);
    EXPECT_LE(created, k);
    EXPECT_EQ(s.client->queries(), 0u);
    s.pipeline->rebalance_now();
    ASSERT_EQ(s.pipeline->index().size(), 1u);
    EXPECT_EQ(s.pipeline->index().centroids()[0].weight, k);
    EXPECT_EQ(s.client->queries(), 1u);
  }
}

TEST(IngestBatch, PartialFailuresIsolated) {
  IngestConfig cfg;
  cfg.batch_mode = true;
  Pipeline p(std::make_shared<FlakyProvider>(), EncoderWeights::for_provider(8), cfg);
  std::vector<LogRecord> recs{LogRecord::make("t", "ok 1"), LogRecord::make("t", "boom"),
                              LogRecord::make("t", "nan"), LogRecord::make("t", "ok 2")};
  const auto r = p.ingest_batch(recs, 4);
  EXPECT_EQ(r.assignments.size(), 2u);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors[0].log_index, 1u);
  EXPECT_TRUE(r.errors[0].retryable);
  EXPECT_FALSE(r.errors[1].retryable);
  EXPECT_EQ(p.index().total_weight(), 2u);
}

TEST(IngestBatch, MatchesSequentialPartitionAfterRebalance) {
  const auto logs = testing::make_fixture(6, 40);
  const auto records = testing::to_records(logs);
  std::vector<std::string> truth;
  for (const auto& l : logs) truth.push_back(l.log_template);
  std::mt19937_64 rng(6);
  for (int schedule = 0; schedule < 4; ++schedule) {
    auto s = make_stack(batch());
    std::vector<ClusterId> ids;
    for (std::size_t pos = 0; pos < records.size();) {
      const std::size_t chunk = std::min<std::size_t>(records.size() - pos, 1 + rng() % 64);
      const auto r = s.pipeline->ingest_batch(std::span(records).subspan(pos, chunk), 1 + rng() % 16);
      for (const auto& a : r.assignments) ids.push_back(a.cluster_id);
      pos += chunk;
      EXPECT_EQ(s.pipeline->index().total_weight(), pos);
    }
    s.pipeline->rebalance_now();
    for (auto& id : ids) id = s.pipeline->resolve(id);
    EXPECT_EQ(partition_of(ids), partition_of(truth));
    EXPECT_EQ(s.pipeline->index().size(), testing::fixture_templates().size());
    EXPECT_LE(s.client->queries(), s.pipeline->index().size());
  }
}

TEST(Ingest, IdenticalTemplatesShareIdWithoutMerging) {
  auto s = make_stack(sequential());
  const auto a = s.pipeline->ingest(LogRecord::make("t", "job 1 2 3 4 5 6 7 8 done"));
  const auto b = s.pipeline->ingest(LogRecord::make("t", "job 11 12 13 14 15 16 17 18 done"));
  EXPECT_NE(a.cluster_id, b.cluster_id);
  EXPECT_TRUE(b.created_new);
  EXPECT_EQ(s.pipeline->index().get(a.cluster_id).template_id,
            s.pipeline->index().get(b.cluster_id).template_id);
  EXPECT_EQ(*b.template_text, "job <*> <*> <*> <*> <*> <*> <*> <*> done");
  EXPECT_EQ(s.pipeline->index().size(), 2u);
  EXPECT_EQ(s.pipeline->templates().size(), 1u);
}

TEST(Pipeline, TemplateStoreJson) {
  auto s = make_stack(sequential());
  s.pipeline->ingest(LogRecord::make("t", "disk 3 is full"));
  const auto j = s.pipeline->template_store_json();
  ASSERT_EQ(j["clusters"].size(), 1u);
  const auto& c = j["clusters"].begin().value();
  EXPECT_EQ(c["template"], "disk <*> is full");
  EXPECT_EQ(c["parse_state"], "parsed");
  EXPECT_EQ(c["source_log"], "disk 3 is full");
}

TEST(Pipeline, AssignmentJson) {
  ClusterAssignment a{3, 7, true, 1.0, "x <*>"};
  const auto j = to_json(a);
  EXPECT_EQ(j["cluster_id"], 7);
  EXPECT_EQ(j["template"], "x <*>");
}

}  // namespace
}  // namespace semlog
