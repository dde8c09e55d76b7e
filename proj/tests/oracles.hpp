#pragma once
// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "knrm/model.hpp"
#include "knrm/training.hpp"

namespace oracle {

/// Direct transcription of the pooling sum: rows i, kernels k, columns j.
inline std::vector<double> naive_kernel_pool(const std::vector<std::vector<double>>& m,
                                             const std::vector<double>& mus,
                                             const std::vector<double>& sigmas) {
  std::vector<double> phi(mus.size(), 0.0);
  for (std::size_t k = 0; k < mus.size(); ++k) {
    for (const auto& row : m) {
      double s = 0.0;
      for (double x : row) {
        const double d = x - mus[k];
        s += std::exp(-(d * d) / (2.0 * sigmas[k] * sigmas[k]));
      }
      phi[k] += std::log(std::max(s, 1e-10));
    }
  }
  return phi;
}

inline knrm::TranslationMatrix to_matrix(const std::vector<std::vector<double>>& m) {
  knrm::TranslationMatrix out;
  out.rows = m.size();
  out.cols = m.empty() ? 0 : m.front().size();
  for (const auto& row : m) out.values.insert(out.values.end(), row.begin(), row.end());
  return out;
}

inline double rel_err(double a, double b, double floor = 1e-7) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

/// Kernel sums for every (query row, kernel) of every document in the batch,
/// computed from scratch.
inline std::vector<double> kernel_sums(const std::vector<knrm::PreferencePair>& batch,
                                       const knrm::TrainedTrial& t) {
  std::vector<double> out;
  auto cos = [&](knrm::TokenId a, knrm::TokenId b) {
    const auto x = t.embeddings.row(a), y = t.embeddings.row(b);
    double dot = 0, nx = 0, ny = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      dot += x[i] * y[i];
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    return nx == 0 || ny == 0 ? 0.0 : dot / std::sqrt(nx * ny);
  };
  for (const auto& p : batch) {
    for (const auto* doc : {&p.doc_pos, &p.doc_neg}) {
      for (auto q : p.query) {
        for (std::size_t k = 0; k < t.kernels.size(); ++k) {
          double s = 0;
          for (auto d : *doc) {
            const double diff = cos(q, d) - t.kernels.mus[k];
            s += std::exp(-diff * diff / (2 * t.kernels.sigmas[k] * t.kernels.sigmas[k]));
          }
          out.push_back(s);
        }
      }
    }
  }
  return out;
}

/// Central differences of the mean batch loss, in the layout of
/// GradientBundle: d_w, d_b, then one row per token in `tokens`.
struct NumericGradient {
  std::vector<double> d_w;
  double d_b = 0;
  std::vector<std::vector<double>> d_rows;
};

/// The model's parameters widened to long double. The loss below is a direct
/// transcription of cosine, kernel pooling, tanh and the hinge, evaluated in
/// extended precision so that differencing with a small step does not lose
/// the smallest gradient components to rounding.
struct WideModel {
  std::size_t dim = 0;
  std::vector<long double> emb, w, mus, sigmas;
  long double b = 0;

  explicit WideModel(const knrm::TrainedTrial& t) : dim(t.embeddings.dim()) {
    for (std::size_t r = 0; r < t.embeddings.rows(); ++r) {
      for (double x : t.embeddings.row(static_cast<knrm::TokenId>(r))) emb.push_back(x);
    }
    w.assign(t.weights.w.begin(), t.weights.w.end());
    b = t.weights.b;
    mus.assign(t.kernels.mus.begin(), t.kernels.mus.end());
    sigmas.assign(t.kernels.sigmas.begin(), t.kernels.sigmas.end());
  }

  long double score(const knrm::TokenSeq& q, const knrm::TokenSeq& d) const {
    auto cos = [&](knrm::TokenId a, knrm::TokenId c) {
      long double dot = 0, na = 0, nc = 0;
      for (std::size_t i = 0; i < dim; ++i) {
        const long double x = emb[a * dim + i], y = emb[c * dim + i];
        dot += x * y;
        na += x * x;
        nc += y * y;
      }
      return na == 0 || nc == 0 ? 0.0L : dot / std::sqrt(na * nc);
    };
    long double z = b;
    for (std::size_t k = 0; k < mus.size(); ++k) {
      long double phi = 0;
      for (auto qi : q) {
        long double s = 0;
        for (auto dj : d) {
          const long double diff = cos(qi, dj) - mus[k];
          s += std::exp(-diff * diff / (2 * sigmas[k] * sigmas[k]));
        }
        phi += std::log(std::max(s, 1e-10L));
      }
      z += w[k] * phi;
    }
    return std::tanh(z);
  }

  long double loss(const std::vector<knrm::PreferencePair>& batch, long double margin) const {
    long double total = 0;
    for (const auto& p : batch) {
      total += std::max(0.0L, margin - score(p.query, p.doc_pos) + score(p.query, p.doc_neg));
    }
    return total / static_cast<long double>(batch.size());
  }
};

inline NumericGradient central_difference(const std::vector<knrm::PreferencePair>& batch,
                                          const knrm::TrainedTrial& t, double margin,
                                          const std::vector<knrm::TokenId>& tokens,
                                          double h = 1e-5) {
  WideModel m(t);
  auto probe = [&](long double& param) {
    const long double saved = param;
    param = saved + h;
    const long double up = m.loss(batch, margin);
    param = saved - h;
    const long double down = m.loss(batch, margin);
    param = saved;
    return static_cast<double>((up - down) / (2 * static_cast<long double>(h)));
  };
  NumericGradient g;
  for (auto& w : m.w) g.d_w.push_back(probe(w));
  g.d_b = probe(m.b);
  for (auto id : tokens) {
    std::vector<double> row;
    for (std::size_t i = 0; i < m.dim; ++i) row.push_back(probe(m.emb[id * m.dim + i]));
    g.d_rows.push_back(row);
  }
  return g;
}

/// Random small instance for gradient checks.
struct Instance {
  knrm::TrainedTrial trial;
  std::vector<knrm::PreferencePair> batch;
};

inline Instance random_instance(std::mt19937_64& gen) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); };
  const int vocab = pick(3, 8);
  const int dim = pick(2, 4);
  const int kernels = pick(1, 3);
  knrm::KernelBank bank;
  for (int k = 0; k < kernels; ++k) {
    bank.mus.push_back(uni(-1.0, 1.0));
    bank.sigmas.push_back(uni(0.1, 0.6));
  }
  Instance inst;
  inst.trial = knrm::init_trial(vocab, dim, bank, gen(), 1.0);
  for (auto& w : inst.trial.weights.w) w = uni(-0.6, 0.6);
  inst.trial.weights.b = uni(-0.3, 0.3);
  auto seq = [&] {
    knrm::TokenSeq s(pick(1, 3));
    for (auto& x : s) x = static_cast<knrm::TokenId>(pick(1, vocab - 1));
    return s;
  };
  const int pairs = pick(1, 3);
  for (int p = 0; p < pairs; ++p) inst.batch.push_back({seq(), seq(), seq()});
  return inst;
}

}  // namespace oracle
