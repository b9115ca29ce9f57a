#include <gtest/gtest.h>

#include <random>

#include "semlog/evaluation.hpp"
#include "support/oracles.hpp"

namespace semlog {
namespace {

using Strings = std::vector<std::string>;

MetricsReport eval(const std::vector<int>& pred, const Strings& ptpl, const Strings& truth) {
  return evaluate<int>(pred, ptpl, truth);
}

TEST(Csv, TwoRowsInOrder) {
  const auto ds = parse_dataset("LineId,Content,EventTemplate\n1,a 1,a <*>\n2,b 2,b <*>\n");
  ASSERT_EQ(ds.rows.size(), 2u);
  EXPECT_EQ(ds.rows[0].content, "a 1");
  EXPECT_EQ(ds.rows[1].ground_truth_template, "b <*>");
}

TEST(Csv, QuotedCommaAndQuote) {
  const auto ds = parse_dataset(
      "Content,EventTemplate\r\n\"x, \"\"quoted\"\" y\",\"x, <*> y\"\r\n\"multi\nline\",t\n");
  ASSERT_EQ(ds.rows.size(), 2u);
  EXPECT_EQ(ds.rows[0].content, "x, \"quoted\" y");
  EXPECT_EQ(ds.rows[0].ground_truth_template, "x, <*> y");
  EXPECT_EQ(ds.rows[1].content, "multi\nline");
}

TEST(Csv, SchemaErrors) {
  EXPECT_THROW(parse_dataset("LineId,Content\n1,a\n"), DataError);
  EXPECT_THROW(parse_dataset(""), DataError);
  EXPECT_THROW(parse_dataset("Content,EventTemplate\n\"open,t\n"), DataError);
  EXPECT_THROW(parse_dataset("Content,EventTemplate\na\"b,t\n"), DataError);
  EXPECT_THROW(parse_dataset("Content,EventTemplate\n\"a\"b,t\n"), DataError);
  EXPECT_THROW(parse_dataset("Content,EventTemplate\na,b,c\n"), DataError);
  EXPECT_THROW(parse_dataset("Content,EventTemplate\na, \n"), DataError);
}

TEST(Csv, BomAndBlankLines) {
  const auto ds = parse_dataset("\xEF\xBB\xBF" "Content,EventTemplate\n\na,b\n\n");
  ASSERT_EQ(ds.rows.size(), 1u);
}

TEST(Metrics, Identity) {
  const Strings truth{"a <*>", "a <*>", "b", "c <*>"};
  const auto m = eval({5, 5, 1, 9}, truth, truth);
  EXPECT_EQ(m.ga, 1.0);
  EXPECT_EQ(m.fga, 1.0);
  EXPECT_EQ(m.pa, 1.0);
  EXPECT_EQ(m.fta, 1.0);
  EXPECT_EQ(m.n_c, 3u);
}

TEST(Metrics, WorkedSplitExample) {
  const Strings truth{"A", "A", "B", "B"};
  const auto m = eval({1, 2, 3, 3}, {}, truth);
  EXPECT_DOUBLE_EQ(m.ga, 0.5);
  EXPECT_EQ(m.n_g, 2u);
  EXPECT_EQ(m.n_p, 3u);
  EXPECT_EQ(m.n_c, 1u);
  EXPECT_NEAR(m.fga, 0.4, 1e-12);
}

TEST(Metrics, AllSingletonsAgainstOneGroup) {
  const Strings truth(4, "A");
  const auto m = eval({1, 2, 3, 4}, {}, truth);
  EXPECT_EQ(m.ga, 0.0);
  EXPECT_EQ(m.fga, 0.0);
}

TEST(Metrics, ParsingAccuracy) {
  EXPECT_EQ(parsing_accuracy(Strings{"a <*>", "b c"}, Strings{"a <*>", "b d"}), 0.5);
  EXPECT_EQ(parsing_accuracy(Strings{"<*> "}, Strings{"<*>"}), 1.0);
  EXPECT_THROW(parsing_accuracy(Strings{"a"}, Strings{"a", "b"}), DataError);
}

TEST(Metrics, FtaOneWrongTemplate) {
  const Strings truth{"a <*>", "a <*>", "b <*>", "b <*>"};
  const Strings pred{"a <*>", "a <*>", "b x", "b x"};
  const auto m = eval({1, 1, 2, 2}, pred, truth);
  EXPECT_DOUBLE_EQ(m.pta, 0.5);
  EXPECT_DOUBLE_EQ(m.rta, 0.5);
  EXPECT_DOUBLE_EQ(m.fta, 0.5);
  EXPECT_DOUBLE_EQ(fta(pred, truth), 0.5);
}

TEST(Metrics, FtaNeedsGroupMatch) {
  const Strings truth{"a <*>", "a <*>", "b"};
  const auto m = eval({1, 2, 3}, truth, truth);
  EXPECT_EQ(m.ta_correct, 1u);
  EXPECT_EQ(m.pa, 1.0);
}

TEST(Metrics, LengthMismatch) {
  EXPECT_THROW(eval({1}, {}, Strings{"a", "b"}), DataError);
  EXPECT_THROW(eval({1, 2}, Strings{"a"}, Strings{"a", "b"}), DataError);
}

TEST(Metrics, EmptyInputIsZero) {
  const auto m = eval({}, {}, {});
  EXPECT_EQ(m.ga, 0.0);
  EXPECT_EQ(m.fga, 0.0);
}

struct Random {
  std::vector<int> pred;
  Strings ptpl, truth;
};

Random random_case(std::mt19937_64& rng) {
  static const Strings pool{"a <*>", "b", "c <*> d", "e f", "g <*> <*>"};
  Random r;
  const std::size_t n = 1 + rng() % 12;
  const std::size_t k = 1 + rng() % 5;
  for (std::size_t i = 0; i < n; ++i) {
    r.truth.push_back(pool[rng() % k]);
    r.pred.push_back(static_cast<int>(rng() % (k + 1)));
    r.ptpl.push_back(rng() % 3 ? r.truth.back() : pool[rng() % pool.size()]);
  }
  return r;
}

TEST(Metrics, MatchesOracleOnRandomCases) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 500; ++t) {
    const auto c = random_case(rng);
    const auto m = eval(c.pred, c.ptpl, c.truth);
    const auto o = testing::oracle_metrics(c.pred, c.ptpl, c.truth);
    ASSERT_EQ(m.ga_correct, o.ga_correct);
    ASSERT_EQ(m.n_c, o.n_c);
    ASSERT_EQ(m.n_p, o.n_p);
    ASSERT_EQ(m.n_g, o.n_g);
    ASSERT_EQ(m.ta_correct, o.ta_correct);
    ASSERT_NEAR(m.fga, o.fga, 1e-12);
    ASSERT_NEAR(m.fta, o.fta, 1e-12);
    ASSERT_NEAR(m.pa, o.pa, 1e-12);
    for (double v : {m.ga, m.fga, m.pa, m.fta}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, RenamingAndTemplateTextDoNotMoveGrouping) {
  std::mt19937_64 rng(100);
  for (int t = 0; t < 200; ++t) {
    const auto c = random_case(rng);
    std::vector<int> renamed;
    for (int p : c.pred) renamed.push_back(1000 - 7 * p);
    Strings junk(c.ptpl.size(), "zzz");
    const auto a = eval(c.pred, c.ptpl, c.truth);
    const auto b = eval(renamed, junk, c.truth);
    ASSERT_EQ(a.ga, b.ga);
    ASSERT_EQ(a.fga, b.fga);
  }
}

TEST(Metrics, SelfConcatenationKeepsGaAndPa) {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 200; ++t) {
    const auto c = random_case(rng);
    auto d = c;
    for (std::size_t i = 0; i < c.pred.size(); ++i) {
      d.pred.push_back(c.pred[i] + 100);
      d.ptpl.push_back(c.ptpl[i]);
      d.truth.push_back(c.truth[i] + " #copy");
    }
    // ptpl copies are compared against a "#copy" suffixed truth; give them the same suffix.
    for (std::size_t i = c.pred.size(); i < d.ptpl.size(); ++i) d.ptpl[i] += " #copy";
    const auto a = eval(c.pred, c.ptpl, c.truth);
    const auto b = eval(d.pred, d.ptpl, d.truth);
    ASSERT_DOUBLE_EQ(a.ga, b.ga);
    ASSERT_DOUBLE_EQ(a.pa, b.pa);
  }
}

TEST(Report, JsonAndTable) {
  const auto m = eval({1, 2, 3, 3}, {}, Strings{"A", "A", "B", "B"});
  const auto j = to_json(m);
  EXPECT_EQ(j["N_c"], 1);
  const auto table = to_table(m, "HDFS");
  EXPECT_NE(table.find("FGA"), std::string::npos);
  EXPECT_NE(table.find("0.400"), std::string::npos);
}

}  // namespace
}  // namespace semlog
