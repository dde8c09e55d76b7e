#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "knrm/analysis.hpp"
#include "knrm/data.hpp"
#include "knrm/ensemble.hpp"
#include "knrm/eval.hpp"
#include "knrm/model.hpp"
#include "knrm/training.hpp"

namespace knrm {

/// Everything one experiment needs, read from a sectioned key=value file.
/// Defaults follow the standard K-NRM setup (11 kernels, Adam with batch 16,
/// lr 0.001, eps 1e-5, patience 2).
struct ExperimentConfig {
  // [corpus]
  bool synthetic = true;
  std::filesystem::path click_log;     // when not synthetic
  std::filesystem::path vocab_file;    // optional fixed vocabulary
  std::filesystem::path truth_file;    // optional alternative labels
  SyntheticCorpusSpec corpus;
  bool corpus_seed_set = false;

  // [split]
  double validation_fraction = 0.1;
  double test_fraction = 0.2;

  // [model]
  std::size_t dim = 50;
  std::size_t kernel_count = 11;
  double exact_sigma = 1e-3;
  double soft_sigma = 0.1;

  // [train]
  TrainConfig train;

  // [trials]
  std::size_t trials = 20;
  std::optional<std::uint64_t> seed_base;

  // [analysis]
  std::vector<int> agreement_k{1, 3, 10};
  WordPairSampling pairs;
  std::string pairs_from = "all";  // train | test | all
  std::size_t heatmaps_per_pattern = 2;

  // [ensemble]
  std::size_t ensemble_size = 10;
  std::size_t ensemble_repeats = 10;
  std::uint64_t ensemble_seed = 0;
  std::size_t grid_max_m = 10;
  std::size_t grid_max_n = 10;
  std::size_t grid_repeats = 10;
  std::string grid_metric = "mrr";  // mrr | ndcg10_same | ndcg10_diff

  // [output]
  std::filesystem::path out_dir = "out";
  unsigned workers = 0;

  /// Throws ConfigError for missing seeds, unreadable inputs or bad values.
  void validate() const;
  KernelBank kernels() const { return KernelBank::standard(kernel_count, exact_sigma, soft_sigma); }
};

/// Throws ConfigError on unknown sections/keys or malformed values.
ExperimentConfig parse_experiment_config(std::istream& in);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Output locations under the experiment's output directory.
struct ExperimentPaths {
  std::filesystem::path root;

  std::filesystem::path corpus_dir() const { return root / "corpus"; }
  std::filesystem::path click_log() const { return corpus_dir() / "clicks.tsv"; }
  std::filesystem::path vocab() const { return corpus_dir() / "vocab.txt"; }
  std::filesystem::path truth() const { return corpus_dir() / "truth.tsv"; }
  std::filesystem::path trials_dir() const { return root / "trials"; }
  std::filesystem::path manifest() const { return trials_dir() / "manifest.csv"; }
  std::filesystem::path report_dir() const { return root / "report"; }
};

/// Corpus split into train/validation/test by query, in file order.
struct ExperimentData {
  Vocabulary vocab;
  Dataset train;
  Dataset validation;
  std::vector<QueryGroup> test;
  EvalLabels test_labels;
  std::vector<LabelCondition> conditions;  // those with labels available
};

/// Contiguous split: the first queries train, the next validate, the rest test.
ExperimentData prepare_data(const std::vector<ClickLogRecord>& records, Vocabulary vocab,
                            const std::optional<std::vector<LabeledPair>>& truth,
                            double validation_fraction, double test_fraction);
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct TrialRecord {
  std::string trial_id;
  std::uint64_t seed = 0;
  int epochs_trained = 0;
  double best_validation = 0.0;
  std::filesystem::path artifact;  // relative to the trials directory
  std::string status = "ok";
};

void write_trial_manifest(std::ostream& out, const std::vector<TrialRecord>& rows);
std::vector<TrialRecord> read_trial_manifest(std::istream& in);

/// Loads every successfully trained trial listed in the manifest.
std::vector<std::pair<TrialRecord, TrainedTrial>> load_trials(const ExperimentConfig& config,
                                                              std::size_t vocab_size);

/// Per-epoch log: epoch,train_loss,val_ndcg10.
void write_epoch_log(std::ostream& out, const TrainedTrial& trial);

/// Writes the synthetic corpus, vocabulary and hidden-truth labels.
void cmd_gen(const ExperimentConfig& config);
/// Trains `config.trials` trials; returns the number that failed.
std::size_t cmd_train(const ExperimentConfig& config);
/// Per-trial metrics and the min/mean/max/std table.
void cmd_eval(const ExperimentConfig& config);
/// Pattern-selected ensembles, their manifest and the comparison table.
void cmd_ensemble(const ExperimentConfig& config);
/// Every table and figure counterpart. Returns the notes written to
/// report/summary.txt (skips and warnings).
std::vector<std::string> cmd_report(const ExperimentConfig& config);

}  // namespace knrm
