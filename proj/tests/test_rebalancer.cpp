#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "semlog/rebalancer.hpp"
#include "support/oracles.hpp"

namespace semlog {
namespace {

UnitVector uv(std::vector<double> v) { return UnitVector::normalize(v); }

TEST(Rebalance, OrthogonalClustersStayApart) {
  VectorIndex idx(2);
  const auto a = idx.insert(uv({1, 0}));
  idx.update_moving_average(a, uv({1, 0}));
  idx.insert(uv({0, 1}));
  const auto r = rebalance(idx, 0.5);
  EXPECT_TRUE(r.merges.empty());
  EXPECT_EQ(r.clusters_before, 2u);
  EXPECT_EQ(r.clusters_after, 2u);
}

TEST(Rebalance, WeightedMergeArithmetic) {
  VectorIndex idx(2);
  const auto a = idx.insert(uv({1, 0}));
  idx.update_moving_average(a, uv({1, 0}));  // weight 2, vector unchanged
  idx.insert(uv({0.8, 0.6}));
  const auto r = rebalance(idx, 0.5);
  ASSERT_EQ(r.merges.size(), 1u);
  EXPECT_NEAR(r.merges[0].similarity, 0.8, 1e-12);
  ASSERT_EQ(idx.size(), 1u);
  const auto c = idx.get(r.merges[0].survivor);
  EXPECT_EQ(c.weight, 3u);
  // normalize((2*(1,0) + (0.8,0.6)) / 3) = normalize(0.9333, 0.2)
  EXPECT_NEAR(c.vector[0], 0.97780, 1e-5);
  EXPECT_NEAR(c.vector[1], 0.20953, 1e-5);
}

TEST(Rebalance, NoMergesBelowThreshold) {
  std::mt19937_64 rng(3);
  VectorIndex idx(10);
  for (int i = 0; i < 20; ++i) idx.insert(UnitVector::from_unit(testing::random_unit(10, rng)));
  const auto before = idx.centroids();
  const auto r = rebalance(idx, 0.95);
  EXPECT_TRUE(r.merges.empty());
  EXPECT_EQ(idx.centroids(), before);
}

TEST(Rebalance, DuplicatesCollapseToOne) {
  VectorIndex idx(3);
  const auto v = uv({0.1, 0.7, -0.3});
  std::uint64_t total = 0;
  for (int k = 1; k <= 6; ++k) {
    const auto id = idx.insert(v);
    for (int extra = 1; extra < k; ++extra) idx.update_moving_average(id, v);
    total += static_cast<std::uint64_t>(k);
  }
  const auto r = rebalance(idx, 0.9);
  EXPECT_EQ(r.merges.size(), 5u);
  ASSERT_EQ(idx.size(), 1u);
  const auto c = idx.centroids().front();
  EXPECT_EQ(c.weight, total);
  EXPECT_EQ(c.vector, v);
}

TEST(Rebalance, ChainedMergesStayAtCurrentPosition) {
  VectorIndex idx(2);
  idx.insert(uv({1, 0}));
  idx.insert(uv({0.99, 0.141}));
  idx.insert(uv({0.96, 0.28}));
  idx.insert(uv({0, 1}));
  const auto r = rebalance(idx, 0.95);
  EXPECT_EQ(r.merges.size(), 2u);
  EXPECT_EQ(r.clusters_after, 2u);
  EXPECT_EQ(r.merges[1].first, r.merges[0].survivor);
  for (const auto& m : r.merges) EXPECT_GE(m.similarity, 0.95);
}

TEST(Rebalance, ConservesWeightAndIsDeterministic) {
  auto build = [] {
    std::mt19937_64 rng(12);
    VectorIndex idx(4);
    const auto base = testing::random_unit(4, rng);
    for (int i = 0; i < 40; ++i) {
      auto v = base;
      std::normal_distribution<double> g(0, 0.3);
      for (auto& x : v) x += g(rng);
      const auto id = idx.insert(UnitVector::normalize(v));
      for (int k = 0; k < i % 3; ++k) idx.update_moving_average(id, UnitVector::normalize(v));
    }
    return idx;
  };
  auto a = build();
  auto b = build();
  const auto before = a.total_weight();
  const auto ra = rebalance(a, 0.8);
  const auto rb = rebalance(b, 0.8);
  EXPECT_EQ(a.total_weight(), before);
  EXPECT_EQ(ra.clusters_after, ra.clusters_before - ra.merges.size());
  ASSERT_EQ(ra.merges.size(), rb.merges.size());
  for (std::size_t i = 0; i < ra.merges.size(); ++i) {
    EXPECT_EQ(ra.merges[i].survivor, rb.merges[i].survivor);
    EXPECT_EQ(ra.merges[i].similarity, rb.merges[i].similarity);
    EXPECT_GE(ra.merges[i].similarity, 0.8);
  }
  EXPECT_EQ(a.centroids(), b.centroids());
}

TEST(MergePair, IdenticalVectors) {
  VectorIndex idx(2);
  const auto u = uv({0.6, 0.8});
  const auto a = idx.insert(u);
  const auto b = idx.insert(u);
  const auto s = merge_pair(idx, a, b);
  EXPECT_EQ(idx.get(s).vector, u);
  EXPECT_EQ(idx.get(s).weight, 2u);
}

TEST(MergePair, OrthogonalWeightedThreeToOne) {
  VectorIndex idx(2);
  const auto a = idx.insert(uv({1, 0}));
  for (int i = 0; i < 2; ++i) idx.update_moving_average(a, uv({1, 0}));
  const auto b = idx.insert(uv({0, 1}));
  const auto s = merge_pair(idx, a, b);
  const auto want = testing::oracle_normalize({0.75, 0.25});
  EXPECT_NEAR(idx.get(s).vector[0], want[0], 1e-12);
  EXPECT_NEAR(idx.get(s).vector[1], want[1], 1e-12);
  EXPECT_EQ(idx.get(s).weight, 4u);
}

TEST(MergePair, MergedVectorCloserToEachConstituent) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    VectorIndex idx(5);
    const auto va = testing::random_unit(5, rng);
    const auto vb = testing::random_unit(5, rng);
    double mutual = 0;
    for (int i = 0; i < 5; ++i) mutual += va[i] * vb[i];
    if (mutual <= 0) continue;
    const auto a = idx.insert(UnitVector::from_unit(va));
    const auto b = idx.insert(UnitVector::from_unit(vb));
    const auto m = idx.get(merge_pair(idx, a, b)).vector;
    EXPECT_GT(m.dot(UnitVector::from_unit(va)), mutual);
    EXPECT_GT(m.dot(UnitVector::from_unit(vb)), mutual);
  }
}

TEST(MergePair, HeavierTemplateWins) {
  VectorIndex idx(2);
  const auto a = idx.insert(uv({1, 0}));
  const auto b = idx.insert(uv({1, 0.1}));
  idx.update_moving_average(b, uv({1, 0.1}));
  idx.set_template(a, 10, ParseState::kParsed);
  idx.set_template(b, 20, ParseState::kParsed);
  const auto s = merge_pair(idx, a, b);
  EXPECT_EQ(idx.get(s).template_id, std::optional<TemplateId>(20));
  EXPECT_EQ(idx.get(s).parse_state, ParseState::kParsed);
}

TEST(MergePair, TieGoesToOlderAndUnparsedPropagates) {
  VectorIndex idx(2);
  const auto a = idx.insert(uv({1, 0}));
  const auto b = idx.insert(uv({1, 0.1}));
  idx.set_template(a, 1, ParseState::kParsed);
  idx.set_template(b, 2, ParseState::kParsed);
  EXPECT_EQ(idx.get(merge_pair(idx, a, b)).template_id, std::optional<TemplateId>(1));

  const auto c = idx.insert(uv({1, 0}));
  const auto d = idx.insert(uv({1, 0.05}));
  idx.set_template(c, 3, ParseState::kParsed);
  const auto s = merge_pair(idx, c, d);
  EXPECT_EQ(idx.get(s).parse_state, ParseState::kUnparsed);
  EXPECT_FALSE(idx.get(s).template_id);
}

TEST(MergePair, ErrorCases) {
  VectorIndex idx(2);
  const auto a = idx.insert(uv({1, 0}));
  EXPECT_THROW(merge_pair(idx, a, a), ContractViolation);
  EXPECT_THROW(merge_pair(idx, a, 77), NotFound);
}

TEST(Rebalance, AuditLogGetsOneLinePerMerge) {
  VectorIndex idx(2);
  idx.insert(uv({1, 0}));
  idx.insert(uv({1, 0.01}));
  std::ostringstream audit;
  const auto r = rebalance(idx, 0.9, &audit);
  ASSERT_EQ(r.merges.size(), 1u);
  const auto line = nlohmann::json::parse(audit.str());
  EXPECT_EQ(line["survivor"], r.merges[0].survivor);
  EXPECT_TRUE(line.contains("ts"));
  EXPECT_EQ(to_json(r)["clusters_after"], 1);
}

}  // namespace
}  // namespace semlog
