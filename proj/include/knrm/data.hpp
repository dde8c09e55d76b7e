#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace knrm {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kFirstTermId = 2;

/// Raised for malformed input files. `line()` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised when inputs cannot produce a valid run (no preference pairs,
/// missing label source, bad hyperparameters, bad experiment config).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Token universe. Corpus terms get ids 2..n+1; 0 and 1 are PAD and UNK.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Returns the id of `token`, inserting it if new.
  TokenId add(std::string_view token);
  /// Returns the id of `token`, or UNK if absent.
  TokenId lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  /// Inverse of lookup. Throws std::out_of_range for PAD/UNK or ids past the end.
  const std::string& token(TokenId id) const;

  /// Number of ids including PAD and UNK; this is the embedding row count.
  std::size_t size() const noexcept { return terms_.size() + kFirstTermId; }
  std::size_t num_terms() const noexcept { return terms_.size(); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }

  /// One token per line; line number + 2 = id.
  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, TokenId> index_;
};

struct ClickLogRecord {
  std::string query_id;
  TokenSeq query_terms;
  std::string doc_id;
  TokenSeq doc_terms;
  std::int64_t impressions = 0;
  std::int64_t clicks = 0;
  bool session_single_click = false;

  friend bool operator==(const ClickLogRecord&, const ClickLogRecord&) = default;
};

struct LabeledPair {
  std::string query_id;
  std::string doc_id;
  double label = 0.0;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

struct ClickLog {
  std::vector<ClickLogRecord> records;
  Vocabulary vocab;
};

/// Parses the 7-column click-log TSV. With a fixed vocabulary unknown tokens
/// map to UNK; without one the vocabulary is built in first-seen order.
ClickLog parse_click_log(std::istream& in, std::optional<Vocabulary> vocab = std::nullopt);
ClickLog load_click_log(const std::filesystem::path& path,
                        std::optional<Vocabulary> vocab = std::nullopt);
void write_click_log(std::ostream& out, const std::vector<ClickLogRecord>& records,
                     const Vocabulary& vocab);

/// Clickthrough-rate labels, one per (query_id, doc_id) in first-seen order.
std::vector<LabeledPair> dctr_labels(const std::vector<ClickLogRecord>& records);

/// Binary single-click labels. Only queries with at least one single-clicked
/// document appear in the output.
std::vector<LabeledPair> raw_labels(const std::vector<ClickLogRecord>& records);

/// query_id -> doc_id -> label
using QueryLabels = std::map<std::string, double>;
using LabelIndex = std::map<std::string, QueryLabels>;

LabelIndex index_labels(const std::vector<LabeledPair>& labels);

void write_labels(std::ostream& out, const std::vector<LabeledPair>& labels);
std::vector<LabeledPair> read_labels(std::istream& in);

struct Candidate {
  std::string doc_id;
  TokenSeq terms;
};

/// A query with its candidate documents, the unit of ranking.
struct QueryGroup {
  std::string query_id;
  TokenSeq terms;
  std::vector<Candidate> candidates;
};

/// Groups records by query, both queries and candidates in first-seen order.
/// Repeated (query, doc) records contribute one candidate.
std::vector<QueryGroup> group_by_query(const std::vector<ClickLogRecord>& records);

struct SyntheticCorpusSpec {
  int vocab_size = 2000;
  int embedding_truth_dim = 16;
  int num_topics = 40;
  int num_queries = 200;
  int docs_per_query = 20;
  std::pair<int, int> query_len_range{2, 4};
  std::pair<int, int> doc_len_range{6, 14};
  double relevance_noise = 0.05;
  int impressions = 100;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct SyntheticCorpus {
  std::vector<ClickLogRecord> records;
  Vocabulary vocab;
  /// Planted relevance per pair, the alternative labeler.
  std::vector<LabeledPair> truth;
};

/// Planted-relevance click log. Tokens belong to topics and carry hidden
/// vectors; a pair's relevance grows with how well each query token is
/// matched by some document token in the hidden space. Clicks are binomial
/// draws at that relevance plus Gaussian noise. Each query gets one simulated
/// single-click session whose clicked document is drawn proportionally to
/// clicks.
SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec);

/// Monotone map from hidden affinity in [-1, 1] to relevance in [0, 1].
double relevance_from_affinity(double affinity);

}  // namespace knrm
