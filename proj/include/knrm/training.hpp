#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "knrm/data.hpp"
#include "knrm/model.hpp"

namespace knrm {

struct TrainConfig {
  double learning_rate = 0.001;
  double adam_eps = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int batch_size = 16;
  int max_epochs = 50;
  int early_stop_patience = 2;
  double hinge_margin = 1.0;
  std::uint64_t seed = 0;
  double init_scale = 0.1;

  void validate() const;
};

/// Embedding rows, embedding width and the fixed kernel bank.
struct ModelShape {
  std::size_t vocab_size = 0;
  std::size_t dim = 50;
  KernelBank kernels = KernelBank::standard();
};

struct PreferencePair {
  TokenSeq query;
  TokenSeq doc_pos;
  TokenSeq doc_neg;
};

struct GradientBundle {
  std::vector<double> d_w;
  double d_b = 0.0;
  /// Only rows of non-PAD tokens from pairs with positive loss.
  std::map<TokenId, std::vector<double>> d_embeddings;
};

/// Queries plus the labels used to order or evaluate them.
struct Dataset {
  std::vector<QueryGroup> queries;
  LabelIndex labels;
};

/// Uniform(-init_scale, init_scale) embeddings and weights from `seed`, PAD row
/// zero, bias zero.
TrainedTrial init_trial(std::size_t vocab_size, std::size_t dim, const KernelBank& kernels,
                        std::uint64_t seed, double init_scale = 0.1);

double pairwise_loss(const PreferencePair& pair, const TrainedTrial& trial, double margin);

/// Mean hinge loss over the batch.
double batch_loss(const std::vector<PreferencePair>& batch, const TrainedTrial& trial,
                  double margin);

/// Exact gradient of the mean batch hinge loss.
GradientBundle gradients(const std::vector<PreferencePair>& batch, const TrainedTrial& trial,
                         double margin);

/// Every within-query (higher label, lower label) pair; equal labels skipped.
/// Missing labels count as 0.
std::vector<PreferencePair> preference_pairs(const Dataset& data);

/// Adam state over all trainable parameters of one trial.
class AdamOptimizer {
 public:
  AdamOptimizer(const TrainedTrial& trial, const TrainConfig& config);
  /// One bias-corrected Adam step. The PAD row is never updated.
  void step(TrainedTrial& trial, const GradientBundle& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<double> m_w_, v_w_;
  double m_b_ = 0.0, v_b_ = 0.0;
  std::vector<double> m_e_, v_e_;
  std::vector<double> dense_;
};

/// Mean NDCG@10 of the trial over the dataset's queries.
double validation_ndcg10(const TrainedTrial& trial, const Dataset& validation);

/// One complete training run. Returns the snapshot with the best validation
/// NDCG@10; stops after `early_stop_patience` epochs without improvement or at
/// `max_epochs`. Throws ConfigError when no preference pair can be formed.
TrainedTrial train(const Dataset& train_data, const Dataset& validation, const ModelShape& shape,
                   const TrainConfig& config);

/// `seeds.size()` independent runs differing only in seed, in seed order.
/// Runs execute on up to `workers` threads (0 = hardware concurrency).
std::vector<TrainedTrial> run_trials(const Dataset& train_data, const Dataset& validation,
                                     const ModelShape& shape, const TrainConfig& config_base,
                                     const std::vector<std::uint64_t>& seeds,
                                     unsigned workers = 0);

/// `count` distinct seeds derived from `base`.
std::vector<std::uint64_t> derive_seeds(std::uint64_t base, std::size_t count);

}  // namespace knrm
