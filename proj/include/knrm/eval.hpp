#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "knrm/data.hpp"
#include "knrm/model.hpp"

namespace knrm {

/// Graded NDCG@k with gain 2^label - 1 and discount log2(rank + 1). Missing
/// labels count as 0; returns 0 when the ideal DCG is 0.
double ndcg_at_k(const RankedList& ranking, const QueryLabels& labels, int k);

struct MrrResult {
  double value = 0.0;
  std::size_t evaluated = 0;
  /// Queries without a relevant document, left out of the mean.
  std::size_t excluded = 0;
};

/// Mean reciprocal rank of the first label-1 document per query.
MrrResult mrr(const std::vector<RankedList>& rankings, const LabelIndex& raw_labels);

enum class LabelCondition { Same, Diff, Raw };

const char* condition_name(LabelCondition c);

/// Label sources for the three testing conditions. Absent sources make the
/// matching condition unavailable.
struct EvalLabels {
  std::optional<LabelIndex> same;
  std::optional<LabelIndex> diff;
  std::optional<LabelIndex> raw;

  const LabelIndex* source(LabelCondition c) const;
};

using MetricMap = std::map<std::string, double>;

/// SAME and DIFF give "NDCG@1", "NDCG@3", "NDCG@10"; RAW gives "MRR".
/// Throws ConfigError when the condition's labels are missing (for RAW: when
/// no query has a relevant document).
MetricMap evaluate_rankings(const std::vector<RankedList>& rankings, const EvalLabels& labels,
                            LabelCondition condition);
MetricMap evaluate(const ScoreFn& scorer, const std::vector<QueryGroup>& queries,
                   const EvalLabels& labels, LabelCondition condition);
MetricMap evaluate_trial(const TrainedTrial& trial, const std::vector<QueryGroup>& queries,
                         const EvalLabels& labels, LabelCondition condition);

/// Metric columns in table order, e.g. "SAME NDCG@1" ... "RAW MRR".
std::vector<std::string> table_columns(const std::vector<LabelCondition>& conditions);

/// All columns of `conditions`, keyed by table column name.
MetricMap evaluate_table(const std::vector<RankedList>& rankings, const EvalLabels& labels,
                         const std::vector<LabelCondition>& conditions);
MetricMap evaluate_table(const ScoreFn& scorer, const std::vector<QueryGroup>& queries,
                         const EvalLabels& labels, const std::vector<LabelCondition>& conditions);

struct SummaryStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  /// Population standard deviation.
  double std = 0.0;
};

SummaryStats summarize(const std::vector<double>& values);

struct TrialStatistics {
  std::vector<std::string> columns;
  std::vector<SummaryStats> stats;  // parallel to columns
};

TrialStatistics trial_statistics(const std::vector<TrainedTrial>& trials,
                                 const std::vector<QueryGroup>& queries, const EvalLabels& labels,
                                 const std::vector<LabelCondition>& conditions);
/// Same statistics from already computed per-trial tables.
TrialStatistics statistics_from(const std::vector<MetricMap>& per_trial,
                                const std::vector<std::string>& columns);

/// Rows Minimum/Mean/Maximum/Standard Deviation, one column per metric.
void write_statistics_csv(std::ostream& out, const TrialStatistics& stats);

}  // namespace knrm
