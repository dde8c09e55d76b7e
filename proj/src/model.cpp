#include "knrm/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace knrm {

std::span<double> EmbeddingTable::row(TokenId id) {
  if (id >= rows_) throw std::out_of_range("token id " + std::to_string(id) + " >= " +
                                           std::to_string(rows_) + " embedding rows");
  return {values_.data() + static_cast<std::size_t>(id) * dim_, dim_};
}

std::span<const double> EmbeddingTable::row(TokenId id) const {
  if (id >= rows_) throw std::out_of_range("token id " + std::to_string(id) + " >= " +
                                           std::to_string(rows_) + " embedding rows");
  return {values_.data() + static_cast<std::size_t>(id) * dim_, dim_};
}

void KernelBank::validate() const {
  if (mus.empty()) throw std::invalid_argument("kernel bank is empty");
  if (mus.size() != sigmas.size()) throw std::invalid_argument("kernel mus/sigmas size mismatch");
  for (double s : sigmas) {
    if (!(s > 0.0)) throw std::invalid_argument("kernel sigma must be > 0");
  }
}

KernelBank KernelBank::standard(std::size_t count, double exact_sigma, double soft_sigma) {
  if (count < 1) throw std::invalid_argument("kernel count must be >= 1");
  KernelBank bank;
  bank.mus.push_back(1.0);
  bank.sigmas.push_back(exact_sigma);
  const std::size_t soft = count - 1;
  const double step = soft ? 2.0 / static_cast<double>(soft) : 0.0;
  for (std::size_t k = 0; k < soft; ++k) {
    bank.mus.push_back(1.0 - step / 2.0 - step * static_cast<double>(k));
    bank.sigmas.push_back(soft_sigma);
  }
  return bank;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

TranslationMatrix translation_matrix(const TokenSeq& query, const TokenSeq& doc,
                                     const EmbeddingTable& emb) {
  if (query.empty() || doc.empty()) {
    throw std::invalid_argument("translation_matrix: empty query or document");
  }
  TranslationMatrix m{query.size(), doc.size(), std::vector<double>(query.size() * doc.size())};
  for (std::size_t i = 0; i < query.size(); ++i) {
    const auto qv = emb.row(query[i]);
    for (std::size_t j = 0; j < doc.size(); ++j) {
      m.values[i * m.cols + j] = cosine(qv, emb.row(doc[j]));
    }
  }
  return m;
}

std::vector<double> kernel_pool(const TranslationMatrix& m, const KernelBank& kernels) {
  std::vector<double> phi(kernels.size(), 0.0);
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    const double mu = kernels.mus[k];
    const double inv = 1.0 / (2.0 * kernels.sigmas[k] * kernels.sigmas[k]);
    for (std::size_t i = 0; i < m.rows; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < m.cols; ++j) {
        const double diff = m(i, j) - mu;
        sum += std::exp(-diff * diff * inv);
      }
      phi[k] += std::log(std::max(sum, kKernelSumFloor));
    }
  }
  return phi;
}

double score(const TokenSeq& query, const TokenSeq& doc, const TrainedTrial& trial) {
  const auto phi = kernel_pool(translation_matrix(query, doc, trial.embeddings), trial.kernels);
  double z = trial.weights.b;
  for (std::size_t k = 0; k < phi.size(); ++k) z += trial.weights.w[k] * phi[k];
  return std::tanh(z);
}

RankedList rank(const QueryGroup& group, const ScoreFn& scorer) {
  std::vector<double> scores;
  scores.reserve(group.candidates.size());
  for (const auto& c : group.candidates) scores.push_back(scorer(group.terms, c.terms));
  return rank_scored(group, scores);
}

RankedList rank_scored(const QueryGroup& group, std::span<const double> scores) {
  if (scores.size() != group.candidates.size()) {
    throw std::invalid_argument("rank_scored: one score per candidate required");
  }
  RankedList list{group.query_id, {}};
  list.entries.reserve(group.candidates.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    list.entries.push_back({group.candidates[i].doc_id, scores[i]});
  }
  std::sort(list.entries.begin(), list.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.doc_id < b.doc_id;
            });
  return list;
}

RankedList rank(const QueryGroup& group, const TrainedTrial& trial) {
  return rank(group, [&trial](const TokenSeq& q, const TokenSeq& d) { return score(q, d, trial); });
}

namespace {

constexpr const char* kTrialMagic = "knrm-trial";
constexpr int kTrialVersion = 1;

std::string hex(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::hex);
  return std::string(buf, ptr);
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::istringstream next(const std::string& expected_key) {
    std::string line;
    if (!std::getline(in_, line)) throw ParseError("unexpected end of trial file", lineno_ + 1);
    ++lineno_;
    std::istringstream fields(line);
    if (!expected_key.empty()) {
      std::string key;
      fields >> key;
      if (key != expected_key) {
        throw ParseError("expected '" + expected_key + "', found '" + key + "'", lineno_);
      }
    }
    return fields;
  }

  double real(std::istringstream& fields) {
    std::string tok;
    if (!(fields >> tok)) throw ParseError("missing real value", lineno_);
    double x = 0.0;
    auto [ptr, ec] =
        std::from_chars(tok.data(), tok.data() + tok.size(), x, std::chars_format::hex);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError("bad real value '" + tok + "'", lineno_);
    }
    if (!std::isfinite(x)) throw ParseError("non-finite value", lineno_);
    return x;
  }

  template <class Int>
  Int integer(std::istringstream& fields) {
    std::string tok;
    if (!(fields >> tok)) throw ParseError("missing integer value", lineno_);
    Int x{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError("bad integer value '" + tok + "'", lineno_);
    }
    return x;
  }

  std::size_t line() const { return lineno_; }

 private:
  std::istream& in_;
  std::size_t lineno_ = 0;
};

void write_reals(std::ostream& out, const std::vector<double>& xs) {
  out << ' ' << xs.size();
  for (double x : xs) out << ' ' << hex(x);
  out << '\n';
}

}  // namespace

void write_trial(std::ostream& out, const TrainedTrial& t) {
  out << kTrialMagic << " v" << kTrialVersion << '\n';
  out << "vocab_size " << t.embeddings.rows() << '\n';
  out << "dim " << t.embeddings.dim() << '\n';
  out << "kernels " << t.kernels.size() << '\n';
  for (std::size_t k = 0; k < t.kernels.size(); ++k) {
    out << hex(t.kernels.mus[k]) << ' ' << hex(t.kernels.sigmas[k]) << '\n';
  }
  out << "weights";
  for (double w : t.weights.w) out << ' ' << hex(w);
  out << '\n';
  out << "bias " << hex(t.weights.b) << '\n';
  out << "seed " << t.seed << '\n';
  out << "epochs_trained " << t.epochs_trained << '\n';
  out << "validation_history";
  write_reals(out, t.validation_history);
  out << "train_loss_history";
  write_reals(out, t.train_loss_history);
  out << "embeddings\n";
  for (std::size_t r = 0; r < t.embeddings.rows(); ++r) {
    const auto row = t.embeddings.row(static_cast<TokenId>(r));
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ' ';
      out << hex(row[j]);
    }
    out << '\n';
  }
  out << "end\n";
}

TrainedTrial read_trial(std::istream& in, std::optional<std::size_t> expected_vocab_size) {
  LineReader reader(in);
  {
    auto header = reader.next(kTrialMagic);
    std::string version;
    header >> version;
    if (version != "v" + std::to_string(kTrialVersion)) {
      throw ParseError("unsupported trial version '" + version + "'", reader.line());
    }
  }
  TrainedTrial t;
  auto f = reader.next("vocab_size");
  const auto rows = reader.integer<std::size_t>(f);
  if (expected_vocab_size && *expected_vocab_size != rows) {
    throw ParseError("trial has " + std::to_string(rows) + " embedding rows but vocabulary has " +
                         std::to_string(*expected_vocab_size) + " ids",
                     reader.line());
  }
  f = reader.next("dim");
  const auto dim = reader.integer<std::size_t>(f);
  f = reader.next("kernels");
  const auto count = reader.integer<std::size_t>(f);
  for (std::size_t k = 0; k < count; ++k) {
    f = reader.next("");
    t.kernels.mus.push_back(reader.real(f));
    t.kernels.sigmas.push_back(reader.real(f));
  }
  try {
    t.kernels.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), reader.line());
  }
  f = reader.next("weights");
  for (std::size_t k = 0; k < count; ++k) t.weights.w.push_back(reader.real(f));
  f = reader.next("bias");
  t.weights.b = reader.real(f);
  f = reader.next("seed");
  t.seed = reader.integer<std::uint64_t>(f);
  f = reader.next("epochs_trained");
  t.epochs_trained = reader.integer<int>(f);
  for (auto* hist : {&t.validation_history, &t.train_loss_history}) {
    f = reader.next(hist == &t.validation_history ? "validation_history" : "train_loss_history");
    const auto n = reader.integer<std::size_t>(f);
    for (std::size_t i = 0; i < n; ++i) hist->push_back(reader.real(f));
  }
  reader.next("embeddings");
  t.embeddings = EmbeddingTable(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    f = reader.next("");
    auto row = t.embeddings.row(static_cast<TokenId>(r));
    for (std::size_t j = 0; j < dim; ++j) row[j] = reader.real(f);
  }
  reader.next("end");
  return t;
}

void save_trial(const std::filesystem::path& path, const TrainedTrial& trial) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_trial(out, trial);
}

TrainedTrial load_trial(const std::filesystem::path& path,
                        std::optional<std::size_t> expected_vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return read_trial(in, expected_vocab_size);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

std::size_t load_pretrained_embeddings(std::istream& in, const Vocabulary& vocab,
                                       EmbeddingTable& table) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    for (double x; fields >> x;) values.push_back(x);
    if (!fields.eof()) throw ParseError("non-numeric vector component", lineno);
    const bool numeric_token = token.find_first_not_of("0123456789") == std::string::npos;
    if (lineno == 1 && values.size() == 1 && numeric_token) continue;  // "count dim" header
    if (values.size() != table.dim()) {
      throw ParseError("vector has " + std::to_string(values.size()) + " components, expected " +
                           std::to_string(table.dim()),
                       lineno);
    }
    if (!vocab.contains(token)) continue;
    auto row = table.row(vocab.lookup(token));
    std::copy(values.begin(), values.end(), row.begin());
    ++loaded;
  }
  return loaded;
}

}  // namespace knrm
