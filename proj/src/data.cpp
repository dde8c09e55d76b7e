#include "knrm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "knrm/random.hpp"

namespace knrm {

TokenId Vocabulary::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(terms_.size() + kFirstTermId);
  terms_.emplace_back(token);
  index_.emplace(terms_.back(), id);
  return id;
}

TokenId Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < kFirstTermId || id >= size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " has no term");
  }
  return terms_[id - kFirstTermId];
}

void Vocabulary::write(std::ostream& out) const {
  for (const auto& t : terms_) out << t << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError("empty token", lineno);
    if (v.contains(line)) throw ParseError("duplicate token '" + line + "'", lineno);
    v.add(line);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read(in);
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::int64_t parse_count(std::string_view field, const char* name, std::size_t lineno) {
  std::int64_t value = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw ParseError(std::string(name) + " is not an integer: '" + std::string(field) + "'",
                     lineno);
  }
  if (value < 0) throw ParseError(std::string(name) + " is negative", lineno);
  return value;
}

TokenSeq parse_terms(std::string_view field, Vocabulary& vocab, bool build, const char* name,
                     std::size_t lineno) {
  TokenSeq seq;
  for (auto tok : split(field, ' ')) {
    if (tok.empty()) continue;
    seq.push_back(build ? vocab.add(tok) : vocab.lookup(tok));
  }
  if (seq.empty()) throw ParseError(std::string(name) + " is empty", lineno);
  return seq;
}

void write_terms(std::ostream& out, const TokenSeq& seq, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out << ' ';
    out << (seq[i] >= kFirstTermId ? vocab.token(seq[i]) : std::string("[UNK]"));
  }
}

std::string format_real(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

}  // namespace

ClickLog parse_click_log(std::istream& in, std::optional<Vocabulary> vocab) {
  ClickLog log;
  const bool build = !vocab.has_value();
  if (vocab) log.vocab = std::move(*vocab);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 7) {
      throw ParseError("expected 7 tab-separated columns, got " + std::to_string(cols.size()),
                       lineno);
    }
    ClickLogRecord r;
    r.query_id = std::string(cols[0]);
    if (r.query_id.empty()) throw ParseError("empty query_id", lineno);
    r.query_terms = parse_terms(cols[1], log.vocab, build, "query_terms", lineno);
    r.doc_id = std::string(cols[2]);
    if (r.doc_id.empty()) throw ParseError("empty doc_id", lineno);
    r.doc_terms = parse_terms(cols[3], log.vocab, build, "doc_terms", lineno);
    r.impressions = parse_count(cols[4], "impressions", lineno);
    r.clicks = parse_count(cols[5], "clicks", lineno);
    if (r.clicks > r.impressions) {
      throw ParseError("clicks (" + std::to_string(r.clicks) + ") exceed impressions (" +
                           std::to_string(r.impressions) + ")",
                       lineno);
    }
    if (cols[6] == "1") {
      r.session_single_click = true;
    } else if (cols[6] != "0") {
      throw ParseError("single_click_flag must be 0 or 1", lineno);
    }
    log.records.push_back(std::move(r));
  }
  return log;
}

ClickLog load_click_log(const std::filesystem::path& path, std::optional<Vocabulary> vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return parse_click_log(in, std::move(vocab));
}

void write_click_log(std::ostream& out, const std::vector<ClickLogRecord>& records,
                     const Vocabulary& vocab) {
  for (const auto& r : records) {
    out << r.query_id << '\t';
    write_terms(out, r.query_terms, vocab);
    out << '\t' << r.doc_id << '\t';
    write_terms(out, r.doc_terms, vocab);
    out << '\t' << r.impressions << '\t' << r.clicks << '\t' << (r.session_single_click ? 1 : 0)
        << '\n';
  }
}

std::vector<LabeledPair> dctr_labels(const std::vector<ClickLogRecord>& records) {
  if (records.empty()) throw std::invalid_argument("dctr_labels: no records");
  struct Totals {
    std::int64_t clicks = 0;
    std::int64_t impressions = 0;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, Totals> totals;
  for (const auto& r : records) {
    auto key = std::make_pair(r.query_id, r.doc_id);
    auto [it, inserted] = totals.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.clicks += r.clicks;
    it->second.impressions += r.impressions;
  }
  std::vector<LabeledPair> out;
  out.reserve(order.size());
  for (const auto& key : order) {
    const auto& t = totals.at(key);
    const double label =
        t.impressions == 0 ? 0.0
                           : static_cast<double>(t.clicks) / static_cast<double>(t.impressions);
    out.push_back({key.first, key.second, label});
  }
  return out;
}

std::vector<LabeledPair> raw_labels(const std::vector<ClickLogRecord>& records) {
  std::map<std::string, std::map<std::string, bool>> relevant;
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::string, bool> qualifies;
  for (const auto& r : records) {
    auto& docs = relevant[r.query_id];
    auto [it, inserted] = docs.try_emplace(r.doc_id, false);
    if (inserted) order.emplace_back(r.query_id, r.doc_id);
    if (r.session_single_click && r.clicks >= 1) {
      it->second = true;
      qualifies[r.query_id] = true;
    }
  }
  std::vector<LabeledPair> out;
  for (const auto& [q, d] : order) {
    if (!qualifies.count(q)) continue;
    out.push_back({q, d, relevant.at(q).at(d) ? 1.0 : 0.0});
  }
  return out;
}

LabelIndex index_labels(const std::vector<LabeledPair>& labels) {
  LabelIndex idx;
  for (const auto& l : labels) idx[l.query_id][l.doc_id] = l.label;
  return idx;
}

void write_labels(std::ostream& out, const std::vector<LabeledPair>& labels) {
  for (const auto& l : labels) {
    out << l.query_id << '\t' << l.doc_id << '\t' << format_real(l.label) << '\n';
  }
}

std::vector<LabeledPair> read_labels(std::istream& in) {
  std::vector<LabeledPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 3) throw ParseError("expected 3 tab-separated columns", lineno);
    double label = 0.0;
    const auto* end = cols[2].data() + cols[2].size();
    auto [ptr, ec] = std::from_chars(cols[2].data(), end, label);
    if (ec != std::errc() || ptr != end) throw ParseError("label is not a number", lineno);
    if (!(label >= 0.0 && label <= 1.0)) throw ParseError("label outside [0,1]", lineno);
    out.push_back({std::string(cols[0]), std::string(cols[1]), label});
  }
  return out;
}

std::vector<QueryGroup> group_by_query(const std::vector<ClickLogRecord>& records) {
  std::vector<QueryGroup> groups;
  std::unordered_map<std::string, std::size_t> query_pos;
  std::unordered_map<std::string, std::unordered_map<std::string, bool>> seen;
  for (const auto& r : records) {
    auto [it, inserted] = query_pos.try_emplace(r.query_id, groups.size());
    if (inserted) groups.push_back({r.query_id, r.query_terms, {}});
    auto& g = groups[it->second];
    if (seen[r.query_id].try_emplace(r.doc_id, true).second) {
      g.candidates.push_back({r.doc_id, r.doc_terms});
    }
  }
  return groups;
}

void SyntheticCorpusSpec::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("synthetic corpus: ") + what);
  };
  require(vocab_size >= 1, "vocab_size must be >= 1");
  require(embedding_truth_dim >= 1, "embedding_truth_dim must be >= 1");
  require(num_topics >= 1 && num_topics <= vocab_size, "num_topics must be in [1, vocab_size]");
  require(num_queries >= 1, "num_queries must be >= 1");
  require(docs_per_query >= 1, "docs_per_query must be >= 1");
  require(query_len_range.first >= 1 && query_len_range.first <= query_len_range.second,
          "query_len_range must be a nonempty interval of positive lengths");
  require(doc_len_range.first >= 1 && doc_len_range.first <= doc_len_range.second,
          "doc_len_range must be a nonempty interval of positive lengths");
  require(relevance_noise >= 0.0, "relevance_noise must be >= 0");
  require(impressions >= 1, "impressions must be >= 1");
}

double relevance_from_affinity(double affinity) {
  return std::clamp((affinity - 0.4) / 0.6, 0.0, 1.0);
}

namespace {

using Vec = std::vector<double>;

Vec random_unit(Rng& rng, int dim) {
  Vec v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string padded(char prefix, int n, int width) {
  std::string digits = std::to_string(n);
  if (static_cast<int>(digits.size()) < width) {
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  }
  return prefix + digits;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int dim = spec.embedding_truth_dim;

  std::vector<Vec> centers;
  for (int t = 0; t < spec.num_topics; ++t) centers.push_back(random_unit(rng, dim));

  // Token v belongs to topic v % num_topics; its hidden vector is the topic
  // center plus isotropic jitter, renormalized.
  std::vector<Vec> truth(static_cast<std::size_t>(spec.vocab_size));
  std::vector<std::vector<TokenId>> topic_tokens(static_cast<std::size_t>(spec.num_topics));
  SyntheticCorpus corpus;
  const int width = std::max<int>(4, static_cast<int>(std::to_string(spec.vocab_size).size()));
  for (int v = 0; v < spec.vocab_size; ++v) {
    const TokenId id = corpus.vocab.add(padded('w', v, width));
    const auto& c = centers[static_cast<std::size_t>(v % spec.num_topics)];
    Vec x = random_unit(rng, dim);
    double norm = 0.0;
    for (int i = 0; i < dim; ++i) {
      x[i] = c[i] + 0.6 * x[i];
      norm += x[i] * x[i];
    }
    norm = std::sqrt(norm);
    for (auto& e : x) e /= norm;
    truth[static_cast<std::size_t>(v)] = std::move(x);
    topic_tokens[static_cast<std::size_t>(v % spec.num_topics)].push_back(id);
  }
  auto hidden = [&](TokenId id) -> const Vec& { return truth[id - kFirstTermId]; };

  const int qwidth = std::max<int>(4, static_cast<int>(std::to_string(spec.num_queries).size()));
  const int dwidth = std::max<int>(
      5, static_cast<int>(std::to_string(spec.num_queries * spec.docs_per_query).size()));
  int doc_counter = 0;
  for (int q = 0; q < spec.num_queries; ++q) {
    const auto& topic = topic_tokens[rng.index(topic_tokens.size())];
    const int qlen = rng.between(spec.query_len_range.first, spec.query_len_range.second);
    TokenSeq query;
    for (auto i : rng.sample_without_replacement(topic.size(), static_cast<std::size_t>(qlen))) {
      query.push_back(topic[i]);
    }
    // Topics smaller than the requested length fill the rest uniformly.
    while (static_cast<int>(query.size()) < qlen) {
      query.push_back(static_cast<TokenId>(kFirstTermId + rng.index(truth.size())));
    }

    const std::string qid = padded('q', q, qwidth);
    const std::size_t first_record = corpus.records.size();
    std::int64_t total_clicks = 0;
    for (int j = 0; j < spec.docs_per_query; ++j) {
      const double relatedness = rng.uniform();
      const int dlen = rng.between(spec.doc_len_range.first, spec.doc_len_range.second);
      TokenSeq doc;
      for (int k = 0; k < dlen; ++k) {
        if (rng.bernoulli(relatedness)) {
          doc.push_back(rng.bernoulli(0.35) ? query[rng.index(query.size())]
                                            : topic[rng.index(topic.size())]);
        } else {
          doc.push_back(static_cast<TokenId>(kFirstTermId + rng.index(truth.size())));
        }
      }

      double affinity = 0.0;
      for (auto qt : query) {
        double best = -1.0;
        for (auto dt : doc) best = std::max(best, dot(hidden(qt), hidden(dt)));
        affinity += best;
      }
      affinity /= static_cast<double>(query.size());
      const double relevance = relevance_from_affinity(affinity);
      const double p = std::clamp(relevance + spec.relevance_noise * rng.normal(), 0.0, 1.0);
      const int clicks = rng.binomial(spec.impressions, p);
      total_clicks += clicks;

      const std::string did = padded('d', doc_counter++, dwidth);
      corpus.records.push_back({qid, query, did, std::move(doc), spec.impressions, clicks, false});
      corpus.truth.push_back({qid, did, relevance});
    }

    if (total_clicks > 0) {
      auto pick = static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(total_clicks)));
      for (std::size_t r = first_record; r < corpus.records.size(); ++r) {
        pick -= corpus.records[r].clicks;
        if (pick < 0) {
          corpus.records[r].session_single_click = true;
          break;
        }
      }
    }
  }
  return corpus;
}

}  // namespace knrm
