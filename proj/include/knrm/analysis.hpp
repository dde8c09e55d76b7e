#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "knrm/data.hpp"
#include "knrm/model.hpp"

namespace knrm {

/// Distribution over queries of the number of distinct documents the trials
/// put in their top k.
struct AgreementHistogram {
  int k = 1;
  std::map<std::size_t, std::size_t> counts;  // distinct-doc count -> queries

  std::size_t total_queries() const;
  /// Fraction of queries whose distinct count is >= `threshold`.
  double fraction_at_least(std::size_t threshold) const;
};

/// Queries with fewer than k candidates use all of them.
AgreementHistogram agreement_histogram(const std::vector<TrainedTrial>& trials,
                                       const std::vector<QueryGroup>& queries, int k);
/// Same, from per-trial rankings already computed (rankings[t][q]).
AgreementHistogram agreement_histogram(const std::vector<std::vector<RankedList>>& rankings, int k);

enum class Pattern { A, B };

struct PatternLabel {
  Pattern label = Pattern::A;
  /// Signed projection onto the separating direction; positive means A.
  double score = 0.0;
};

struct PatternResult {
  std::vector<PatternLabel> labels;  // parallel to the input trials
  bool degenerate = false;
};

/// Splits trials into two weight-shape groups. The soft-kernel weights
/// (kernel 0 excluded, ordered by descending mu) are L2-normalized and split
/// by the sign of their projection onto the leading principal direction. The
/// group whose centroid drops more steeply from the first soft kernel to the
/// second is A.
/// Throws std::invalid_argument for fewer than 2 trials or mismatched banks.
PatternResult classify_patterns(const std::vector<TrainedTrial>& trials);
PatternResult classify_patterns(const std::vector<RankingWeights>& weights,
                                const KernelBank& kernels);

/// Nearest kernel by |cos - mu|, ties to the higher mu.
std::size_t nearest_kernel(double cos, const KernelBank& kernels);

using WordPair = std::pair<TokenId, TokenId>;

struct WordPairSampling {
  std::size_t num_queries = 100;
  std::size_t docs_per_query = 30;
  std::size_t per_bin = 100;
  std::uint64_t seed = 0;
};

/// Distinct (query term, doc term) pairs from sampled queries and documents,
/// binned by nearest kernel under `reference`, with up to `per_bin` drawn
/// uniformly from each bin. Output is grouped by bin in kernel order.
/// Throws std::invalid_argument for an empty corpus.
std::vector<WordPair> sample_word_pairs(const std::vector<QueryGroup>& corpus,
                                        const WordPairSampling& sampling,
                                        const TrainedTrial& reference);

/// K x K counts; cell [x][y] is pairs in kernel x under trial_x and kernel y
/// under trial_y.
struct MovementHeatmap {
  std::vector<double> mus;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t diagonal() const;
  double diagonal_fraction() const;
};

/// Throws std::invalid_argument when the trials differ in vocabulary size,
/// embedding width or kernel bank.
MovementHeatmap movement_heatmap(const std::vector<WordPair>& pairs, const TrainedTrial& trial_x,
                                 const TrainedTrial& trial_y);

/// Columns k,distinct_count,num_queries; every count from 1 to the largest
/// observed is listed, zeros included.
void write_histogram_csv(std::ostream& out, const std::vector<AgreementHistogram>& histograms);
void write_heatmap_csv(std::ostream& out, const MovementHeatmap& h);

}  // namespace knrm
