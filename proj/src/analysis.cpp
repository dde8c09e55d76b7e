#include "knrm/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "knrm/random.hpp"

namespace knrm {

std::size_t AgreementHistogram::total_queries() const {
  std::size_t n = 0;
  for (const auto& [distinct, queries] : counts) n += queries;
  return n;
}

double AgreementHistogram::fraction_at_least(std::size_t threshold) const {
  const std::size_t total = total_queries();
  if (total == 0) return 0.0;
  std::size_t n = 0;
  for (const auto& [distinct, queries] : counts) {
    if (distinct >= threshold) n += queries;
  }
  return static_cast<double>(n) / static_cast<double>(total);
}

AgreementHistogram agreement_histogram(const std::vector<std::vector<RankedList>>& rankings,
                                       int k) {
  if (rankings.size() < 2) throw std::invalid_argument("agreement_histogram: need >= 2 trials");
  if (k < 1) throw std::invalid_argument("agreement_histogram: k must be >= 1");
  const std::size_t num_queries = rankings.front().size();
  for (const auto& r : rankings) {
    if (r.size() != num_queries) {
      throw std::invalid_argument("agreement_histogram: trials ranked different query sets");
    }
  }
  AgreementHistogram h;
  h.k = k;
  for (std::size_t q = 0; q < num_queries; ++q) {
    std::set<std::string> distinct;
    for (const auto& trial : rankings) {
      const auto& entries = trial[q].entries;
      const std::size_t top = std::min(entries.size(), static_cast<std::size_t>(k));
      for (std::size_t r = 0; r < top; ++r) distinct.insert(entries[r].doc_id);
    }
    ++h.counts[distinct.size()];
  }
  return h;
}

AgreementHistogram agreement_histogram(const std::vector<TrainedTrial>& trials,
                                       const std::vector<QueryGroup>& queries, int k) {
  std::vector<std::vector<RankedList>> rankings;
  rankings.reserve(trials.size());
  for (const auto& t : trials) {
    auto& per_query = rankings.emplace_back();
    per_query.reserve(queries.size());
    for (const auto& q : queries) per_query.push_back(rank(q, t));
  }
  return agreement_histogram(rankings, k);
}

PatternResult classify_patterns(const std::vector<RankingWeights>& weights,
                                const KernelBank& kernels) {
  if (weights.size() < 2) throw std::invalid_argument("classify_patterns: need >= 2 trials");
  kernels.validate();
  for (const auto& w : weights) {
    if (w.w.size() != kernels.size()) {
      throw std::invalid_argument("classify_patterns: weight vector does not match kernel bank");
    }
  }

  // Soft kernels in descending mu order.
  std::vector<std::size_t> soft(kernels.size() > 0 ? kernels.size() - 1 : 0);
  std::iota(soft.begin(), soft.end(), std::size_t{1});
  std::stable_sort(soft.begin(), soft.end(),
                   [&](std::size_t a, std::size_t b) { return kernels.mus[a] > kernels.mus[b]; });

  const auto n = static_cast<Eigen::Index>(weights.size());
  const auto dim = static_cast<Eigen::Index>(soft.size());
  PatternResult result;
  result.labels.assign(weights.size(), PatternLabel{Pattern::A, 0.0});
  if (dim == 0) {
    result.degenerate = true;
    return result;
  }

  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      x(t, c) = weights[static_cast<std::size_t>(t)].w[soft[static_cast<std::size_t>(c)]];
    }
    const double norm = x.row(t).norm();
    if (norm > 0.0) x.row(t) /= norm;
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  if (centered.cwiseAbs().maxCoeff() < 1e-12) {
    result.degenerate = true;
    return result;
  }

  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd direction = eig.eigenvectors().col(dim - 1);
  const Eigen::VectorXd proj = centered * direction;

  Eigen::RowVectorXd sum_pos = Eigen::RowVectorXd::Zero(dim);
  Eigen::RowVectorXd sum_neg = Eigen::RowVectorXd::Zero(dim);
  std::size_t count_pos = 0, count_neg = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (proj(t) >= 0.0) {
      sum_pos += x.row(t);
      ++count_pos;
    } else {
      sum_neg += x.row(t);
      ++count_neg;
    }
  }
  if (count_pos == 0 || count_neg == 0) {
    result.degenerate = true;
    return result;
  }

  // "Downward slope first": the change from the highest-mu soft kernel to the
  // next. With a single soft kernel there is no slope and the positive side
  // is A.
  bool positive_is_a = true;
  if (dim >= 2) {
    const Eigen::RowVectorXd c_pos = sum_pos / static_cast<double>(count_pos);
    const Eigen::RowVectorXd c_neg = sum_neg / static_cast<double>(count_neg);
    const double slope_pos = c_pos(1) - c_pos(0);
    const double slope_neg = c_neg(1) - c_neg(0);
    positive_is_a = slope_pos <= slope_neg;
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    const double s = positive_is_a ? proj(t) : -proj(t);
    const bool is_a = positive_is_a ? proj(t) >= 0.0 : proj(t) < 0.0;
    result.labels[static_cast<std::size_t>(t)] = {is_a ? Pattern::A : Pattern::B, s};
  }
  return result;
}

PatternResult classify_patterns(const std::vector<TrainedTrial>& trials) {
  if (trials.size() < 2) throw std::invalid_argument("classify_patterns: need >= 2 trials");
  std::vector<RankingWeights> weights;
  weights.reserve(trials.size());
  for (const auto& t : trials) {
    if (t.kernels != trials.front().kernels) {
      throw std::invalid_argument("classify_patterns: trials use different kernel banks");
    }
    weights.push_back(t.weights);
  }
  return classify_patterns(weights, trials.front().kernels);
}

std::size_t nearest_kernel(double cos, const KernelBank& kernels) {
  std::size_t best = 0;
  double best_dist = std::abs(cos - kernels.mus[0]);
  for (std::size_t k = 1; k < kernels.size(); ++k) {
    const double d = std::abs(cos - kernels.mus[k]);
    if (d < best_dist || (d == best_dist && kernels.mus[k] > kernels.mus[best])) {
      best = k;
      best_dist = d;
    }
  }
  return best;
}

std::vector<WordPair> sample_word_pairs(const std::vector<QueryGroup>& corpus,
                                        const WordPairSampling& sampling,
                                        const TrainedTrial& reference) {
  if (corpus.empty()) throw std::invalid_argument("sample_word_pairs: empty corpus");
  Rng rng(mix_seed(sampling.seed));

  std::set<WordPair> pairs;
  for (auto qi : rng.sample_without_replacement(corpus.size(), sampling.num_queries)) {
    const auto& q = corpus[qi];
    for (auto di : rng.sample_without_replacement(q.candidates.size(), sampling.docs_per_query)) {
      for (auto qt : q.terms) {
        if (qt == kPadId) continue;
        for (auto dt : q.candidates[di].terms) {
          if (dt != kPadId) pairs.emplace(qt, dt);
        }
      }
    }
  }

  const auto& emb = reference.embeddings;
  std::vector<std::vector<WordPair>> bins(reference.kernels.size());
  for (const auto& p : pairs) {
    bins[nearest_kernel(cosine(emb.row(p.first), emb.row(p.second)), reference.kernels)]
        .push_back(p);
  }
  std::vector<WordPair> out;
  for (const auto& bin : bins) {
    for (auto i : rng.sample_without_replacement(bin.size(), sampling.per_bin)) {
      out.push_back(bin[i]);
    }
  }
  return out;
}

std::size_t MovementHeatmap::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) n = std::accumulate(row.begin(), row.end(), n);
  return n;
}

std::size_t MovementHeatmap::diagonal() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
  return n;
}

double MovementHeatmap::diagonal_fraction() const {
  const auto t = total();
  return t ? static_cast<double>(diagonal()) / static_cast<double>(t) : 0.0;
}

MovementHeatmap movement_heatmap(const std::vector<WordPair>& pairs, const TrainedTrial& trial_x,
                                 const TrainedTrial& trial_y) {
  if (trial_x.vocab_size() != trial_y.vocab_size()) {
    throw std::invalid_argument("movement_heatmap: trials have different vocabularies");
  }
  if (trial_x.kernels != trial_y.kernels) {
    throw std::invalid_argument("movement_heatmap: trials use different kernel banks");
  }
  const auto& kernels = trial_x.kernels;
  MovementHeatmap h;
  h.mus = kernels.mus;
  h.counts.assign(kernels.size(), std::vector<std::size_t>(kernels.size(), 0));
  for (const auto& [a, b] : pairs) {
    const auto kx = nearest_kernel(
        cosine(trial_x.embeddings.row(a), trial_x.embeddings.row(b)), kernels);
    const auto ky = nearest_kernel(
        cosine(trial_y.embeddings.row(a), trial_y.embeddings.row(b)), kernels);
    ++h.counts[kx][ky];
  }
  return h;
}

namespace {

std::string format_mu(double mu) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", mu);
  return buf;
}

}  // namespace

void write_histogram_csv(std::ostream& out, const std::vector<AgreementHistogram>& histograms) {
  out << "k,distinct_count,num_queries\n";
  for (const auto& h : histograms) {
    const std::size_t largest = h.counts.empty() ? 0 : h.counts.rbegin()->first;
    for (std::size_t c = 1; c <= largest; ++c) {
      const auto it = h.counts.find(c);
      out << h.k << ',' << c << ',' << (it == h.counts.end() ? 0 : it->second) << '\n';
    }
  }
}

void write_heatmap_csv(std::ostream& out, const MovementHeatmap& h) {
  out << "mu_x\\mu_y";
  for (double mu : h.mus) out << ',' << format_mu(mu);
  out << '\n';
  for (std::size_t x = 0; x < h.counts.size(); ++x) {
    out << format_mu(h.mus[x]);
    for (auto c : h.counts[x]) out << ',' << c;
    out << '\n';
  }
}

}  // namespace knrm
