#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knrm/data.hpp"

namespace knrm {

/// Kernel sums are floored here before the log so soft-TF stays finite.
inline constexpr double kKernelSumFloor = 1e-10;

/// Row-major V x d word-vector matrix. Row id holds the vector of token id.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t dim)
      : rows_(rows), dim_(dim), values_(rows * dim, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Throws std::out_of_range for ids >= rows().
  std::span<double> row(TokenId id);
  std::span<const double> row(TokenId id) const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

/// Gaussian kernels (mu_k, sigma_k). Kernel 0 is the exact-match kernel.
struct KernelBank {
  std::vector<double> mus;
  std::vector<double> sigmas;

  std::size_t size() const noexcept { return mus.size(); }

  /// Throws std::invalid_argument on size mismatch, empty bank or sigma <= 0.
  void validate() const;

  /// One exact-match kernel (mu=1, sigma=1e-3) followed by `count - 1` soft
  /// kernels evenly spaced over [-1, 1] with sigma=0.1. count=11 gives
  /// mu = 1, 0.9, 0.7, ..., -0.9.
  static KernelBank standard(std::size_t count = 11, double exact_sigma = 1e-3,
                             double soft_sigma = 0.1);

  friend bool operator==(const KernelBank&, const KernelBank&) = default;
};

/// Cosine similarities between every query and document term.
struct TranslationMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct RankingWeights {
  std::vector<double> w;
  double b = 0.0;

  friend bool operator==(const RankingWeights&, const RankingWeights&) = default;
};

/// One trained (or freshly initialized) model.
struct TrainedTrial {
  EmbeddingTable embeddings;
  RankingWeights weights;
  KernelBank kernels;
  std::uint64_t seed = 0;
  int epochs_trained = 0;
  std::vector<double> validation_history;
  std::vector<double> train_loss_history;

  std::size_t vocab_size() const noexcept { return embeddings.rows(); }

  friend bool operator==(const TrainedTrial&, const TrainedTrial&) = default;
};

/// Cosine of two vectors; 0 when either has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

/// Throws std::invalid_argument for empty sequences and std::out_of_range for
/// ids past the table.
TranslationMatrix translation_matrix(const TokenSeq& query, const TokenSeq& doc,
                                     const EmbeddingTable& emb);

/// Soft-TF features: entry k = sum_i log(max(sum_j exp(-(M_ij - mu_k)^2 / (2 sigma_k^2)), floor)).
std::vector<double> kernel_pool(const TranslationMatrix& m, const KernelBank& kernels);

/// tanh(w . phi + b)
double score(const TokenSeq& query, const TokenSeq& doc, const TrainedTrial& trial);

struct RankedEntry {
  std::string doc_id;
  double score = 0.0;
};

/// Documents of one query by descending score; equal scores by ascending doc_id.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;
};

using ScoreFn = std::function<double(const TokenSeq& query, const TokenSeq& doc)>;

RankedList rank(const QueryGroup& group, const ScoreFn& scorer);
/// Orders the group's candidates by precomputed scores (parallel to candidates).
RankedList rank_scored(const QueryGroup& group, std::span<const double> scores);
RankedList rank(const QueryGroup& group, const TrainedTrial& trial);

/// Line-structured trial artifact with a versioned header. Reals are written
/// as hexadecimal floats so a save/load cycle is exact.
void write_trial(std::ostream& out, const TrainedTrial& trial);
/// Throws ParseError on malformed input, or when `expected_vocab_size` is
/// given and differs from the stored row count.
TrainedTrial read_trial(std::istream& in, std::optional<std::size_t> expected_vocab_size = {});
void save_trial(const std::filesystem::path& path, const TrainedTrial& trial);
TrainedTrial load_trial(const std::filesystem::path& path,
                        std::optional<std::size_t> expected_vocab_size = {});

/// Reads word2vec-style text vectors ("token x1 ... xd" per line, an optional
/// "count dim" header line) into the rows of known tokens. Returns the number
/// of rows overwritten. Vectors of the wrong dimension are a ParseError.
std::size_t load_pretrained_embeddings(std::istream& in, const Vocabulary& vocab,
                                       EmbeddingTable& table);

}  // namespace knrm
