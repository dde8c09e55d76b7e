#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "knrm/analysis.hpp"
#include "knrm/data.hpp"
#include "knrm/eval.hpp"
#include "knrm/model.hpp"

namespace knrm {

/// Arithmetic mean of the members' scores. Throws std::invalid_argument when
/// `members` is empty.
double ensemble_score(const TokenSeq& query, const TokenSeq& doc,
                      const std::vector<const TrainedTrial*>& members);
ScoreFn ensemble_scorer(std::vector<const TrainedTrial*> members);

enum class Selection { AllA, AllB, Mixed, Any, Explicit };

const char* selection_name(Selection s);

/// How members are drawn from a labeled pool. `pattern_a` and `pattern_b`
/// count members per pattern; `Any` draws `pattern_a` members regardless of
/// pattern.
struct EnsembleMethod {
  Selection selection = Selection::Mixed;
  std::size_t pattern_a = 5;
  std::size_t pattern_b = 5;

  static EnsembleMethod all_a(std::size_t size) { return {Selection::AllA, size, 0}; }
  static EnsembleMethod all_b(std::size_t size) { return {Selection::AllB, 0, size}; }
  static EnsembleMethod mixed(std::size_t m, std::size_t n) { return {Selection::Mixed, m, n}; }
  static EnsembleMethod any(std::size_t size) { return {Selection::Any, size, 0}; }

  std::size_t size() const noexcept { return pattern_a + pattern_b; }
};

struct EnsembleSpec {
  std::vector<std::size_t> members;  // indices into the pool
  Selection selection = Selection::Explicit;
  std::size_t pattern_a = 0;
  std::size_t pattern_b = 0;
  std::uint64_t pool_seed = 0;
};

/// `repeats` random member sets drawn without replacement. Throws
/// std::invalid_argument naming the shortfall when a pattern has too few trials.
std::vector<EnsembleSpec> build_ensembles(const std::vector<PatternLabel>& pool,
                                          const EnsembleMethod& method, std::size_t repeats,
                                          std::uint64_t seed);

/// Per-trial scores of every candidate: scores[trial][query][candidate].
/// Lets many ensembles over one pool be evaluated without rescoring.
class ScoreTable {
 public:
  ScoreTable(const std::vector<TrainedTrial>& trials, const std::vector<QueryGroup>& queries,
             unsigned workers = 1);

  std::size_t num_trials() const noexcept { return scores_.size(); }
  const std::vector<QueryGroup>& queries() const noexcept { return *queries_; }

  std::vector<RankedList> trial_rankings(std::size_t trial) const;
  /// Rankings by mean member score; equal to ranking with ensemble_scorer.
  std::vector<RankedList> ensemble_rankings(const std::vector<std::size_t>& members) const;

 private:
  const std::vector<QueryGroup>* queries_;
  std::vector<std::vector<std::vector<double>>> scores_;
};

/// Reduces a set of rankings (one per test query) to one number.
using RankingMetric = std::function<double(const std::vector<RankedList>&)>;

/// MRR against RAW labels.
RankingMetric mrr_metric(const EvalLabels& labels);
/// Mean NDCG@k against the given condition's labels.
RankingMetric ndcg_metric(const EvalLabels& labels, LabelCondition condition, int k);

struct GridCell {
  std::size_t m = 0;
  std::size_t n = 0;
  std::optional<double> mean;  // empty for (0, 0)
  double std = 0.0;
  std::size_t repeats = 0;
};

/// Cells (m, n) for m in [0, max_m], n in [0, max_n], row-major by m. Each
/// defined cell averages `metric` over `repeats` ensembles of m Pattern-A and
/// n Pattern-B members.
std::vector<GridCell> pattern_grid(const ScoreTable& table, const std::vector<PatternLabel>& labels,
                                   std::size_t max_m, std::size_t max_n,
                                   const RankingMetric& metric, std::size_t repeats,
                                   std::uint64_t seed);

void write_grid_csv(std::ostream& out, const std::vector<GridCell>& grid);

/// "+14%" style whole-percent change of `value` over `base`.
std::string percent_delta(double base, double value);

/// A named row of a method comparison table.
struct ComparisonRow {
  std::string name;
  MetricMap metrics;
};

/// First row is the baseline; later rows print "value (+x%)" against it.
void write_comparison_csv(std::ostream& out, const std::vector<std::string>& columns,
                          const std::vector<ComparisonRow>& rows);

/// One line per ensemble: id, selection, pattern counts, pool seed and
/// ';'-separated member artifact paths.
void write_ensemble_manifest(std::ostream& out, const std::vector<EnsembleSpec>& specs,
                             const std::vector<std::string>& member_paths);

}  // namespace knrm
