#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "knrm/ensemble.hpp"
#include "knrm/training.hpp"

using namespace knrm;

namespace {

std::vector<QueryGroup> corpus() {
  std::vector<QueryGroup> out;
  for (int q = 0; q < 6; ++q) {
    QueryGroup g{"q" + std::to_string(q), {static_cast<TokenId>(2 + q), 3}, {}};
    for (int d = 0; d < 5; ++d) {
      g.candidates.push_back(
          {"d" + std::to_string(d), {static_cast<TokenId>(2 + (q + d) % 10), static_cast<TokenId>(4 + d)}});
    }
    out.push_back(g);
  }
  return out;
}

std::vector<TrainedTrial> pool(std::size_t n) {
  std::vector<TrainedTrial> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(init_trial(12, 3, KernelBank::standard(), 100 + i));
  return out;
}

std::vector<PatternLabel> labels(std::size_t a, std::size_t b) {
  std::vector<PatternLabel> out(a, PatternLabel{Pattern::A, 1.0});
  out.insert(out.end(), b, PatternLabel{Pattern::B, -1.0});
  return out;
}

}  // namespace

TEST(EnsembleScore, MeanOfMembers) {
  const auto trials = pool(3);
  const TokenSeq q{2, 3}, d{4, 5, 2};
  const double want = (score(q, d, trials[0]) + score(q, d, trials[1]) + score(q, d, trials[2])) / 3.0;
  EXPECT_NEAR(ensemble_score(q, d, {&trials[0], &trials[1], &trials[2]}), want, 1e-15);
  EXPECT_NEAR(ensemble_score(q, d, {&trials[2], &trials[0], &trials[1]}), want, 1e-15);
  EXPECT_NEAR(ensemble_score(q, d, {&trials[0], &trials[1], &trials[2], &trials[0], &trials[1], &trials[2]}),
              want, 1e-15);
  EXPECT_EQ(ensemble_score(q, d, {&trials[1]}), score(q, d, trials[1]));
  EXPECT_LT(std::fabs(want), 1.0);
  EXPECT_THROW(ensemble_score(q, d, {}), std::invalid_argument);
}

TEST(EnsembleScore, TableMatchesScorer) {
  const auto trials = pool(4);
  const auto queries = corpus();
  const ScoreTable table(trials, queries, 2);
  const std::vector<std::size_t> members{0, 2, 3};
  const auto fast = table.ensemble_rankings(members);
  const auto scorer = ensemble_scorer({&trials[0], &trials[2], &trials[3]});
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto slow = rank(queries[q], scorer);
    ASSERT_EQ(fast[q].entries.size(), slow.entries.size());
    for (std::size_t i = 0; i < slow.entries.size(); ++i) {
      EXPECT_EQ(fast[q].entries[i].doc_id, slow.entries[i].doc_id);
      EXPECT_EQ(fast[q].entries[i].score, slow.entries[i].score);
    }
  }
  const auto single = table.trial_rankings(1);
  const auto direct = rank(queries[0], trials[1]);
  EXPECT_EQ(single[0].entries.front().doc_id, direct.entries.front().doc_id);
}

TEST(BuildEnsembles, MixedHasFiveOfEach) {
  const auto pool_labels = labels(25, 25);
  const auto specs = build_ensembles(pool_labels, EnsembleMethod::mixed(5, 5), 10, 3);
  ASSERT_EQ(specs.size(), 10u);
  for (const auto& s : specs) {
    std::size_t a = 0;
    for (auto m : s.members) a += pool_labels[m].label == Pattern::A;
    EXPECT_EQ(a, 5u);
    EXPECT_EQ(s.members.size(), 10u);
    EXPECT_TRUE(std::adjacent_find(s.members.begin(), s.members.end()) == s.members.end());
  }
  const auto again = build_ensembles(pool_labels, EnsembleMethod::mixed(5, 5), 10, 3);
  for (std::size_t i = 0; i < specs.size(); ++i) EXPECT_EQ(specs[i].members, again[i].members);
}

TEST(BuildEnsembles, WholePatternPool) {
  const auto specs = build_ensembles(labels(4, 3), EnsembleMethod::all_b(3), 1, 9);
  EXPECT_EQ(specs[0].members, (std::vector<std::size_t>{4, 5, 6}));
}

TEST(BuildEnsembles, ShortfallIsNamed) {
  try {
    build_ensembles(labels(3, 10), EnsembleMethod::all_a(5), 1, 0);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("short by 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("Pattern-A"), std::string::npos);
  }
}

TEST(Grid, SingleCellsAndClones) {
  const auto trials = pool(4);
  const auto queries = corpus();
  const ScoreTable table(trials, queries);
  EvalLabels el;
  el.same = LabelIndex{};
  for (const auto& q : queries) (*el.same)[q.query_id] = {{"d1", 1.0}, {"d3", 0.5}};
  const auto metric = ndcg_metric(el, LabelCondition::Same, 3);
  const auto lab = labels(2, 2);
  const auto grid = pattern_grid(table, lab, 2, 2, metric, 1, 5);
  ASSERT_EQ(grid.size(), 9u);
  EXPECT_FALSE(grid[0].mean.has_value());
  // Cell (1, 0) with one repeat is one Pattern-A trial on its own.
  const auto& c10 = grid[3];
  ASSERT_EQ(c10.m, 1u);
  ASSERT_EQ(c10.n, 0u);
  const double a0 = metric(table.trial_rankings(0)), a1 = metric(table.trial_rankings(1));
  EXPECT_TRUE(*c10.mean == a0 || *c10.mean == a1);

  const std::vector<TrainedTrial> clones(4, trials[0]);
  const ScoreTable clone_table(clones, queries);
  const auto cg = pattern_grid(clone_table, lab, 2, 2, metric, 3, 5);
  for (const auto& c : cg) {
    if (c.mean) EXPECT_DOUBLE_EQ(*c.mean, *cg[1].mean);
  }
  std::stringstream out;
  write_grid_csv(out, cg);
  std::string first, second;
  std::getline(out, first);
  std::getline(out, second);
  EXPECT_EQ(first, "m,n,metric,repeats,std");
  EXPECT_EQ(second, "0,0,,,");
}

TEST(Report, PercentDelta) {
  EXPECT_EQ(percent_delta(0.3547, 0.4035), "+14%");
  EXPECT_EQ(percent_delta(0.5, 0.45), "-10%");
  EXPECT_EQ(percent_delta(0.5, 0.5), "+0%");
  EXPECT_EQ(percent_delta(0.0, 0.5), "n/a");
}

TEST(Report, ComparisonCsv) {
  std::stringstream out;
  write_comparison_csv(out, {"RAW MRR"},
                       {{"K-NRM Mean", {{"RAW MRR", 0.3547}}}, {"Ensemble-A&B", {{"RAW MRR", 0.4035}}}});
  EXPECT_EQ(out.str(), "Model,RAW MRR\nK-NRM Mean,0.3547\nEnsemble-A&B,0.4035 (+14%)\n");
}

TEST(Report, Manifest) {
  EnsembleSpec s{{0, 2}, Selection::Mixed, 1, 1, 7};
  std::stringstream out;
  write_ensemble_manifest(out, {s}, {"t0.knrm", "t1.knrm", "t2.knrm"});
  EXPECT_EQ(out.str(), "ensemble_id,selection,pattern_a,pattern_b,pool_seed,members\n0,MIXED,1,1,7,t0.knrm;t2.knrm\n");
}
