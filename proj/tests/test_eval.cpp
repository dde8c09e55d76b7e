#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "knrm/eval.hpp"

using namespace knrm;

namespace {

RankedList ranking(const std::string& q, std::vector<std::string> docs) {
  RankedList r{q, {}};
  double s = 1.0;
  for (auto& d : docs) r.entries.push_back({d, s -= 0.1});
  return r;
}

// Hand-rolled DCG for cross-checking random cases.
double dcg(const std::vector<double>& gains_in_rank_order, int k) {
  double s = 0;
  for (int i = 0; i < k && i < static_cast<int>(gains_in_rank_order.size()); ++i) {
    s += (std::pow(2.0, gains_in_rank_order[i]) - 1.0) / std::log2(i + 2.0);
  }
  return s;
}

}  // namespace

TEST(Ndcg, WorkedExamples) {
  const QueryLabels labels{{"a", 1.0}, {"b", 0.0}};
  EXPECT_NEAR(ndcg_at_k(ranking("q", {"b", "a"}), labels, 2), 1.0 / std::log2(3.0), 1e-12);
  EXPECT_NEAR(ndcg_at_k(ranking("q", {"b", "a"}), labels, 2), 0.63093, 1e-5);
  EXPECT_EQ(ndcg_at_k(ranking("q", {"a", "b"}), labels, 2), 1.0);
  EXPECT_EQ(ndcg_at_k(ranking("q", {"b", "a"}), labels, 1), 0.0);
  EXPECT_EQ(ndcg_at_k(ranking("q", {"x", "y"}), {}, 10), 0.0);  // IDCG 0
  EXPECT_THROW(ndcg_at_k(ranking("q", {"a"}), labels, 0), std::invalid_argument);
}

TEST(Ndcg, GradedLabelsAgainstHandDcg) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    QueryLabels labels;
    std::vector<std::string> docs;
    std::vector<double> gains;
    for (int i = 0; i < 12; ++i) {
      docs.push_back("d" + std::to_string(i));
      const double g = u(gen) < 0.3 ? 0.0 : u(gen);
      labels[docs.back()] = g;
      gains.push_back(g);
    }
    auto ideal = gains;
    std::sort(ideal.rbegin(), ideal.rend());
    for (int k : {1, 3, 10}) {
      EXPECT_NEAR(ndcg_at_k(ranking("q", docs), labels, k), dcg(gains, k) / dcg(ideal, k), 1e-12);
    }
  }
}

TEST(Ndcg, PerfectOrderIsExactlyOne) {
  QueryLabels labels{{"a", 0.9}, {"b", 0.5}, {"c", 0.5}, {"d", 0.0}};
  for (int k : {1, 2, 3, 10}) EXPECT_EQ(ndcg_at_k(ranking("q", {"a", "b", "c", "d"}), labels, k), 1.0);
}

TEST(Mrr, WorkedExamples) {
  LabelIndex raw;
  raw["q1"] = {{"a", 1.0}};
  raw["q2"] = {{"d", 1.0}};
  raw["q3"] = {{"z", 0.0}};
  const std::vector<RankedList> rankings{ranking("q1", {"a", "b"}), ranking("q2", {"a", "b", "c", "d"}),
                                         ranking("q3", {"z"})};
  const auto r = mrr(rankings, raw);
  EXPECT_NEAR(r.value, 0.625, 1e-12);
  EXPECT_EQ(r.evaluated, 2u);
  EXPECT_EQ(r.excluded, 1u);
  EXPECT_EQ(mrr({ranking("q1", {"b", "a"})}, raw).value, 0.5);
}

TEST(Evaluate, ConditionsAndColumns) {
  QueryGroup g{"q", {2}, {{"a", {3}}, {"b", {4}}}};
  EvalLabels labels;
  labels.same = LabelIndex{{"q", {{"a", 1.0}}}};
  labels.raw = LabelIndex{{"q", {{"b", 1.0}}}};
  const ScoreFn prefer_a = [](const TokenSeq&, const TokenSeq& d) { return d[0] == 3 ? 1.0 : 0.0; };
  const auto same = evaluate(prefer_a, {g}, labels, LabelCondition::Same);
  EXPECT_EQ(same.at("NDCG@1"), 1.0);
  EXPECT_EQ(evaluate(prefer_a, {g}, labels, LabelCondition::Raw).at("MRR"), 0.5);
  EXPECT_THROW(evaluate(prefer_a, {g}, labels, LabelCondition::Diff), ConfigError);

  const auto cols = table_columns({LabelCondition::Same, LabelCondition::Diff, LabelCondition::Raw});
  const std::vector<std::string> want{"SAME NDCG@1", "SAME NDCG@3", "SAME NDCG@10", "DIFF NDCG@1",
                                      "DIFF NDCG@3", "DIFF NDCG@10", "RAW MRR"};
  EXPECT_EQ(cols, want);
  const auto table = evaluate_table(prefer_a, {g}, labels, {LabelCondition::Same, LabelCondition::Raw});
  EXPECT_EQ(table.size(), 4u);
  EXPECT_EQ(table.at("RAW MRR"), 0.5);
}

TEST(Evaluate, RawWithoutRelevantDocIsError) {
  QueryGroup g{"q", {2}, {{"a", {3}}}};
  EvalLabels labels;
  labels.raw = LabelIndex{{"q", {{"a", 0.0}}}};
  const ScoreFn any = [](const TokenSeq&, const TokenSeq&) { return 0.0; };
  EXPECT_THROW(evaluate(any, {g}, labels, LabelCondition::Raw), ConfigError);
}

TEST(Summary, PopulationStd) {
  const auto s = summarize({0.2, 0.4});
  EXPECT_DOUBLE_EQ(s.min, 0.2);
  EXPECT_DOUBLE_EQ(s.max, 0.4);
  EXPECT_NEAR(s.mean, 0.3, 1e-15);
  EXPECT_NEAR(s.std, 0.1, 1e-15);
  const auto one = summarize({0.7});
  EXPECT_EQ(one.std, 0.0);
  EXPECT_EQ(one.min, one.max);
  EXPECT_THROW(summarize({}), std::invalid_argument);
  const auto same = summarize({0.1, 0.1, 0.1});
  EXPECT_EQ(same.std, 0.0);
  EXPECT_GE(same.mean, same.min);
  EXPECT_LE(same.mean, same.max);
}

TEST(Summary, StatisticsCsv) {
  const std::vector<MetricMap> per_trial{{{"SAME NDCG@1", 0.2}}, {{"SAME NDCG@1", 0.4}}};
  std::stringstream out;
  write_statistics_csv(out, statistics_from(per_trial, {"SAME NDCG@1"}));
  EXPECT_EQ(out.str(),
            "Statistic,SAME NDCG@1\nMinimum,0.2000\nMean,0.3000\nMaximum,0.4000\n"
            "Standard Deviation,0.1000\n");
}
