#include "knrm/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "knrm/eval.hpp"
#include "knrm/random.hpp"
#include "parallel.hpp"

namespace knrm {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("train config: ") + what);
  };
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(adam_eps > 0.0, "adam_eps must be > 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0,1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0,1)");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_epochs >= 0, "max_epochs must be >= 0");
  require(early_stop_patience >= 1, "early_stop_patience must be >= 1");
  require(init_scale >= 0.0, "init_scale must be >= 0");
}

TrainedTrial init_trial(std::size_t vocab_size, std::size_t dim, const KernelBank& kernels,
                        std::uint64_t seed, double init_scale) {
  if (vocab_size < 2) throw std::invalid_argument("init_trial: vocab_size must be >= 2");
  if (dim < 1) throw std::invalid_argument("init_trial: dim must be >= 1");
  kernels.validate();
  Rng rng(mix_seed(seed));
  TrainedTrial t;
  t.embeddings = EmbeddingTable(vocab_size, dim);
  auto values = t.embeddings.values();
  for (std::size_t i = dim; i < values.size(); ++i) values[i] = rng.uniform(-init_scale, init_scale);
  t.weights.w.resize(kernels.size());
  for (auto& w : t.weights.w) w = rng.uniform(-init_scale, init_scale);
  t.weights.b = 0.0;
  t.kernels = kernels;
  t.seed = seed;
  return t;
}

double pairwise_loss(const PreferencePair& pair, const TrainedTrial& trial, double margin) {
  return std::max(0.0, margin - score(pair.query, pair.doc_pos, trial) +
                           score(pair.query, pair.doc_neg, trial));
}

double batch_loss(const std::vector<PreferencePair>& batch, const TrainedTrial& trial,
                  double margin) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : batch) total += pairwise_loss(p, trial, margin);
  return total / static_cast<double>(batch.size());
}

namespace {

/// Forward pass of one (query, doc) pair, retaining what the backward pass needs.
struct PairForward {
  std::size_t n = 0, m = 0, kernels = 0;
  std::vector<double> qnorm, dnorm;
  std::vector<double> cos;     // n x m
  std::vector<double> expo;    // K x n x m
  std::vector<double> sums;    // K x n
  std::vector<double> phi;     // K
  double score = 0.0;

  void run(const TokenSeq& q, const TokenSeq& d, const TrainedTrial& t) {
    const auto& emb = t.embeddings;
    const auto& kb = t.kernels;
    n = q.size();
    m = d.size();
    kernels = kb.size();
    qnorm.assign(n, 0.0);
    dnorm.assign(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = emb.row(q[i]);
      double s = 0.0;
      for (double x : a) s += x * x;
      qnorm[i] = std::sqrt(s);
    }
    for (std::size_t j = 0; j < m; ++j) {
      const auto b = emb.row(d[j]);
      double s = 0.0;
      for (double x : b) s += x * x;
      dnorm[j] = std::sqrt(s);
    }
    cos.assign(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (qnorm[i] == 0.0) continue;
      const auto a = emb.row(q[i]);
      for (std::size_t j = 0; j < m; ++j) {
        if (dnorm[j] == 0.0) continue;
        const auto b = emb.row(d[j]);
        double ab = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) ab += a[c] * b[c];
        cos[i * m + j] = ab / (qnorm[i] * dnorm[j]);
      }
    }
    expo.assign(kernels * n * m, 0.0);
    sums.assign(kernels * n, 0.0);
    phi.assign(kernels, 0.0);
    double z = t.weights.b;
    for (std::size_t k = 0; k < kernels; ++k) {
      const double mu = kb.mus[k];
      const double inv = 1.0 / (2.0 * kb.sigmas[k] * kb.sigmas[k]);
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          const double diff = cos[i * m + j] - mu;
          const double e = std::exp(-diff * diff * inv);
          expo[(k * n + i) * m + j] = e;
          s += e;
        }
        sums[k * n + i] = s;
        phi[k] += std::log(std::max(s, kKernelSumFloor));
      }
      z += t.weights.w[k] * phi[k];
    }
    score = std::tanh(z);
  }
};

/// Adds `upstream * d score / d params` for one (query, doc) pair.
void backward(const PairForward& f, const TokenSeq& q, const TokenSeq& d, const TrainedTrial& t,
              double upstream, GradientBundle& g, std::vector<double*>& qgrad,
              std::vector<double*>& dgrad) {
  const double gz = upstream * (1.0 - f.score * f.score);
  for (std::size_t k = 0; k < f.kernels; ++k) g.d_w[k] += gz * f.phi[k];
  g.d_b += gz;

  const auto& kb = t.kernels;
  const auto& emb = t.embeddings;
  const std::size_t dim = emb.dim();
  for (std::size_t i = 0; i < f.n; ++i) {
    if (f.qnorm[i] == 0.0) continue;
    const auto a = emb.row(q[i]);
    for (std::size_t j = 0; j < f.m; ++j) {
      if (f.dnorm[j] == 0.0) continue;
      const double c = f.cos[i * f.m + j];
      double dcos = 0.0;
      for (std::size_t k = 0; k < f.kernels; ++k) {
        const double s = f.sums[k * f.n + i];
        if (!(s > kKernelSumFloor)) continue;  // floored branch is constant
        const double sig2 = kb.sigmas[k] * kb.sigmas[k];
        const double e = f.expo[(k * f.n + i) * f.m + j];
        dcos += t.weights.w[k] * e * (-(c - kb.mus[k]) / sig2) / s;
      }
      dcos *= gz;
      if (dcos == 0.0) continue;
      const auto b = emb.row(d[j]);
      const double inv_ab = 1.0 / (f.qnorm[i] * f.dnorm[j]);
      const double inv_aa = 1.0 / (f.qnorm[i] * f.qnorm[i]);
      const double inv_bb = 1.0 / (f.dnorm[j] * f.dnorm[j]);
      double* ga = qgrad[i];
      double* gb = dgrad[j];
      for (std::size_t x = 0; x < dim; ++x) {
        if (ga) ga[x] += dcos * (b[x] * inv_ab - c * a[x] * inv_aa);
        if (gb) gb[x] += dcos * (a[x] * inv_ab - c * b[x] * inv_bb);
      }
    }
  }
}

std::vector<double*> row_slots(const TokenSeq& seq, GradientBundle& g, std::size_t dim) {
  std::vector<double*> slots(seq.size(), nullptr);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] == kPadId) continue;
    auto& row = g.d_embeddings[seq[i]];
    if (row.empty()) row.assign(dim, 0.0);
    slots[i] = row.data();
  }
  return slots;
}

/// Accumulates the gradient of sum-of-losses into `g` and returns the summed loss.
double accumulate(const std::vector<PreferencePair>& batch, const TrainedTrial& trial,
                  double margin, GradientBundle& g) {
  PairForward pos, neg;
  double total = 0.0;
  const std::size_t dim = trial.embeddings.dim();
  for (const auto& p : batch) {
    pos.run(p.query, p.doc_pos, trial);
    neg.run(p.query, p.doc_neg, trial);
    const double loss = margin - pos.score + neg.score;
    if (!(loss > 0.0)) continue;
    total += loss;
    // std::map nodes never move, so row pointers survive later inserts.
    auto qslots = row_slots(p.query, g, dim);
    auto pslots = row_slots(p.doc_pos, g, dim);
    auto nslots = row_slots(p.doc_neg, g, dim);
    backward(pos, p.query, p.doc_pos, trial, -1.0, g, qslots, pslots);
    backward(neg, p.query, p.doc_neg, trial, 1.0, g, qslots, nslots);
  }
  return total;
}

void scale_bundle(GradientBundle& g, double s) {
  for (auto& x : g.d_w) x *= s;
  g.d_b *= s;
  for (auto& [id, row] : g.d_embeddings) {
    for (auto& x : row) x *= s;
  }
}

}  // namespace

GradientBundle gradients(const std::vector<PreferencePair>& batch, const TrainedTrial& trial,
                         double margin) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  GradientBundle g;
  g.d_w.assign(trial.kernels.size(), 0.0);
  accumulate(batch, trial, margin, g);
  scale_bundle(g, 1.0 / static_cast<double>(batch.size()));
  return g;
}

std::vector<PreferencePair> preference_pairs(const Dataset& data) {
  std::vector<PreferencePair> pairs;
  for (const auto& q : data.queries) {
    const auto it = data.labels.find(q.query_id);
    std::vector<double> labels(q.candidates.size(), 0.0);
    if (it != data.labels.end()) {
      for (std::size_t c = 0; c < q.candidates.size(); ++c) {
        const auto l = it->second.find(q.candidates[c].doc_id);
        if (l != it->second.end()) labels[c] = l->second;
      }
    }
    for (std::size_t a = 0; a < q.candidates.size(); ++a) {
      for (std::size_t b = 0; b < q.candidates.size(); ++b) {
        if (labels[a] > labels[b]) {
          pairs.push_back({q.terms, q.candidates[a].terms, q.candidates[b].terms});
        }
      }
    }
  }
  return pairs;
}

AdamOptimizer::AdamOptimizer(const TrainedTrial& trial, const TrainConfig& config)
    : lr_(config.learning_rate),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      eps_(config.adam_eps),
      m_w_(trial.weights.w.size(), 0.0),
      v_w_(trial.weights.w.size(), 0.0),
      m_e_(trial.embeddings.values().size(), 0.0),
      v_e_(trial.embeddings.values().size(), 0.0),
      dense_(trial.embeddings.values().size(), 0.0) {}

void AdamOptimizer::step(TrainedTrial& trial, const GradientBundle& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](double& param, double& m, double& v, double g) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g * g;
    param -= lr_ * (m / c1) / (std::sqrt(v / c2) + eps_);
  };

  for (std::size_t k = 0; k < m_w_.size(); ++k) update(trial.weights.w[k], m_w_[k], v_w_[k], grad.d_w[k]);
  update(trial.weights.b, m_b_, v_b_, grad.d_b);

  const std::size_t dim = trial.embeddings.dim();
  for (const auto& [id, row] : grad.d_embeddings) {
    std::copy(row.begin(), row.end(), dense_.begin() + static_cast<std::ptrdiff_t>(id * dim));
  }
  // Row 0 is PAD. Entries with g == m == v == 0 come out unchanged, so the
  // loop runs branch-free over the whole table.
  auto values = trial.embeddings.values();
  double* p = values.data();
  double* m = m_e_.data();
  double* v = v_e_.data();
  const double* g = dense_.data();
  const double b1 = beta1_, b2 = beta2_, eps = eps_;
  const double step = lr_ / c1, root_c2 = 1.0 / std::sqrt(c2);
  for (std::size_t i = dim; i < values.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    p[i] -= step * m[i] / (std::sqrt(v[i]) * root_c2 + eps);
  }
  for (const auto& [id, row] : grad.d_embeddings) {
    std::fill_n(dense_.begin() + static_cast<std::ptrdiff_t>(id * dim), dim, 0.0);
  }
}

double validation_ndcg10(const TrainedTrial& trial, const Dataset& validation) {
  if (validation.queries.empty()) return 0.0;
  double total = 0.0;
  for (const auto& q : validation.queries) {
    const auto ranking = rank(q, trial);
    const auto it = validation.labels.find(q.query_id);
    static const QueryLabels kNone;
    total += ndcg_at_k(ranking, it == validation.labels.end() ? kNone : it->second, 10);
  }
  return total / static_cast<double>(validation.queries.size());
}

TrainedTrial train(const Dataset& train_data, const Dataset& validation, const ModelShape& shape,
                   const TrainConfig& config) {
  config.validate();
  auto pairs = preference_pairs(train_data);
  if (pairs.empty()) {
    throw ConfigError("no preference pairs: every training query has a single label value");
  }
  TrainedTrial trial =
      init_trial(shape.vocab_size, shape.dim, shape.kernels, config.seed, config.init_scale);
  if (config.max_epochs == 0) return trial;

  Rng order(mix_seed(config.seed ^ 0x5bd1e995u));
  order.shuffle(pairs);

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  AdamOptimizer adam(trial, config);
  TrainedTrial best = trial;
  double best_score = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<PreferencePair> batch;
  batch.reserve(batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
      const std::size_t end = std::min(pairs.size(), start + batch_size);
      batch.assign(pairs.begin() + static_cast<std::ptrdiff_t>(start),
                   pairs.begin() + static_cast<std::ptrdiff_t>(end));
      GradientBundle g;
      g.d_w.assign(trial.kernels.size(), 0.0);
      loss_sum += accumulate(batch, trial, config.hinge_margin, g);
      scale_bundle(g, 1.0 / static_cast<double>(batch.size()));
      adam.step(trial, g);
    }
    trial.epochs_trained = epoch;
    trial.train_loss_history.push_back(loss_sum / static_cast<double>(pairs.size()));
    const double val = validation_ndcg10(trial, validation);
    trial.validation_history.push_back(val);
    if (val > best_score) {
      best_score = val;
      best = trial;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  // The snapshot keeps the full history of the run it came from.
  best.validation_history = trial.validation_history;
  best.train_loss_history = trial.train_loss_history;
  return best;
}

std::vector<std::uint64_t> derive_seeds(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> seeds;
  seeds.reserve(count);
  std::uint64_t state = base;
  while (seeds.size() < count) {
    state = mix_seed(state);
    if (std::find(seeds.begin(), seeds.end(), state) == seeds.end()) seeds.push_back(state);
  }
  return seeds;
}

std::vector<TrainedTrial> run_trials(const Dataset& train_data, const Dataset& validation,
                                     const ModelShape& shape, const TrainConfig& config_base,
                                     const std::vector<std::uint64_t>& seeds, unsigned workers) {
  if (seeds.empty()) throw std::invalid_argument("run_trials: need at least one seed");
  std::vector<TrainedTrial> trials(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  detail::parallel_for(seeds.size(), workers, [&](std::size_t i) {
    TrainConfig config = config_base;
    config.seed = seeds[i];
    try {
      trials[i] = train(train_data, validation, shape, config);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return trials;
}

}  // namespace knrm
