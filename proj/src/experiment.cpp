#include "knrm/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "knrm/random.hpp"
#include "parallel.hpp"

namespace knrm {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"corpus",
     {"source", "vocab", "truth", "vocab_size", "truth_dim", "topics", "queries",
      "docs_per_query", "query_len_min", "query_len_max", "doc_len_min", "doc_len_max",
      "relevance_noise", "impressions", "seed"}},
    {"split", {"validation_fraction", "test_fraction"}},
    {"model", {"dim", "kernels", "exact_sigma", "soft_sigma"}},
    {"train",
     {"learning_rate", "adam_eps", "adam_beta1", "adam_beta2", "batch_size", "max_epochs",
      "patience", "margin", "init_scale"}},
    {"trials", {"count", "seed_base"}},
    {"analysis",
     {"agreement_k", "pair_queries", "pair_docs", "pair_per_bin", "pair_seed", "pairs_from",
      "heatmaps_per_pattern"}},
    {"ensemble",
     {"size", "repeats", "seed", "grid_max_m", "grid_max_n", "grid_repeats", "grid_metric"}},
    {"output", {"dir", "workers"}},
};

template <class T>
void read_value(const pt::ptree& tree, const std::string& key, T& out) {
  const auto node = tree.get_child_optional(pt::ptree::path_type(key, '.'));
  if (!node) return;
  const std::string text = node->data();
  if constexpr (std::is_same_v<T, std::string>) {
    out = text;
  } else if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not a number: '" + text + "'");
    }
  } else {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ConfigError("config key " + key + ": not an integer: '" + text + "'");
    }
    out = value;
  }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    int v = 0;
    auto b = item.find_first_not_of(' ');
    auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) continue;
    const std::string trimmed = item.substr(b, e - b + 1);
    auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), v);
    if (ec != std::errc() || ptr != trimmed.data() + trimmed.size()) {
      throw ConfigError("config key " + key + ": bad list item '" + trimmed + "'");
    }
    out.push_back(v);
  }
  return out;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto known = kKnownKeys.find(section);
    if (known == kKnownKeys.end()) throw ConfigError("config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) {
      if (!known->second.count(key)) {
        throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

  ExperimentConfig c;
  std::string source = "synthetic";
  read_value(tree, "corpus.source", source);
  c.synthetic = source == "synthetic";
  if (!c.synthetic) c.click_log = source;
  std::string path;
  if (read_value(tree, "corpus.vocab", path); !path.empty()) c.vocab_file = path;
  path.clear();
  if (read_value(tree, "corpus.truth", path); !path.empty()) c.truth_file = path;
  auto& s = c.corpus;
  read_value(tree, "corpus.vocab_size", s.vocab_size);
  read_value(tree, "corpus.truth_dim", s.embedding_truth_dim);
  read_value(tree, "corpus.topics", s.num_topics);
  read_value(tree, "corpus.queries", s.num_queries);
  read_value(tree, "corpus.docs_per_query", s.docs_per_query);
  read_value(tree, "corpus.query_len_min", s.query_len_range.first);
  read_value(tree, "corpus.query_len_max", s.query_len_range.second);
  read_value(tree, "corpus.doc_len_min", s.doc_len_range.first);
  read_value(tree, "corpus.doc_len_max", s.doc_len_range.second);
  read_value(tree, "corpus.relevance_noise", s.relevance_noise);
  read_value(tree, "corpus.impressions", s.impressions);
  if (tree.get_child_optional(pt::ptree::path_type("corpus.seed", '.'))) {
    read_value(tree, "corpus.seed", s.seed);
    c.corpus_seed_set = true;
  }

  read_value(tree, "split.validation_fraction", c.validation_fraction);
  read_value(tree, "split.test_fraction", c.test_fraction);

  read_value(tree, "model.dim", c.dim);
  read_value(tree, "model.kernels", c.kernel_count);
  read_value(tree, "model.exact_sigma", c.exact_sigma);
  read_value(tree, "model.soft_sigma", c.soft_sigma);

  auto& t = c.train;
  read_value(tree, "train.learning_rate", t.learning_rate);
  read_value(tree, "train.adam_eps", t.adam_eps);
  read_value(tree, "train.adam_beta1", t.adam_beta1);
  read_value(tree, "train.adam_beta2", t.adam_beta2);
  read_value(tree, "train.batch_size", t.batch_size);
  read_value(tree, "train.max_epochs", t.max_epochs);
  read_value(tree, "train.patience", t.early_stop_patience);
  read_value(tree, "train.margin", t.hinge_margin);
  read_value(tree, "train.init_scale", t.init_scale);

  read_value(tree, "trials.count", c.trials);
  if (tree.get_child_optional(pt::ptree::path_type("trials.seed_base", '.'))) {
    std::uint64_t seed = 0;
    read_value(tree, "trials.seed_base", seed);
    c.seed_base = seed;
  }

  std::string ks;
  if (read_value(tree, "analysis.agreement_k", ks); !ks.empty()) {
    c.agreement_k = parse_int_list("analysis.agreement_k", ks);
  }
  read_value(tree, "analysis.pair_queries", c.pairs.num_queries);
  read_value(tree, "analysis.pair_docs", c.pairs.docs_per_query);
  read_value(tree, "analysis.pair_per_bin", c.pairs.per_bin);
  read_value(tree, "analysis.pair_seed", c.pairs.seed);
  read_value(tree, "analysis.pairs_from", c.pairs_from);
  read_value(tree, "analysis.heatmaps_per_pattern", c.heatmaps_per_pattern);

  read_value(tree, "ensemble.size", c.ensemble_size);
  read_value(tree, "ensemble.repeats", c.ensemble_repeats);
  read_value(tree, "ensemble.seed", c.ensemble_seed);
  read_value(tree, "ensemble.grid_max_m", c.grid_max_m);
  read_value(tree, "ensemble.grid_max_n", c.grid_max_n);
  read_value(tree, "ensemble.grid_repeats", c.grid_repeats);
  read_value(tree, "ensemble.grid_metric", c.grid_metric);

  std::string out;
  if (read_value(tree, "output.dir", out); !out.empty()) c.out_dir = out;
  read_value(tree, "output.workers", c.workers);
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  auto c = parse_experiment_config(in);
  const fs::path base = path.parent_path();
  c.click_log = resolve(base, c.click_log);
  c.vocab_file = resolve(base, c.vocab_file);
  c.truth_file = resolve(base, c.truth_file);
  c.out_dir = resolve(base, c.out_dir);
  return c;
}

void ExperimentConfig::validate() const {
  if (!seed_base) throw ConfigError("config: [trials] seed_base is required");
  if (synthetic) {
    if (!corpus_seed_set) throw ConfigError("config: [corpus] seed is required for synthetic corpora");
    try {
      corpus.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (!fs::exists(click_log)) {
    throw ConfigError("config: click log " + click_log.string() + " does not exist");
  }
  if (!vocab_file.empty() && !fs::exists(vocab_file)) {
    throw ConfigError("config: vocabulary " + vocab_file.string() + " does not exist");
  }
  if (!truth_file.empty() && !fs::exists(truth_file)) {
    throw ConfigError("config: truth labels " + truth_file.string() + " does not exist");
  }
  if (!(validation_fraction >= 0.0 && test_fraction > 0.0 &&
        validation_fraction + test_fraction < 1.0)) {
    throw ConfigError("config: split fractions must leave training queries");
  }
  if (dim < 1) throw ConfigError("config: [model] dim must be >= 1");
  if (kernel_count < 1) throw ConfigError("config: [model] kernels must be >= 1");
  if (!(exact_sigma > 0.0 && soft_sigma > 0.0)) throw ConfigError("config: sigmas must be > 0");
  train.validate();
  if (trials < 1) throw ConfigError("config: [trials] count must be >= 1");
  for (int k : agreement_k) {
    if (k < 1) throw ConfigError("config: agreement_k values must be >= 1");
  }
  if (pairs_from != "train" && pairs_from != "test" && pairs_from != "all") {
    throw ConfigError("config: pairs_from must be train, test or all");
  }
  if (ensemble_size < 1 || ensemble_repeats < 1 || grid_repeats < 1) {
    throw ConfigError("config: ensemble size and repeats must be >= 1");
  }
  if (grid_metric != "mrr" && grid_metric != "ndcg10_same" && grid_metric != "ndcg10_diff") {
    throw ConfigError("config: grid_metric must be mrr, ndcg10_same or ndcg10_diff");
  }
}

ExperimentData prepare_data(const std::vector<ClickLogRecord>& records, Vocabulary vocab,
                            const std::optional<std::vector<LabeledPair>>& truth,
                            double validation_fraction, double test_fraction) {
  if (records.empty()) throw ConfigError("corpus has no records");
  auto groups = group_by_query(records);
  const std::size_t nq = groups.size();
  const auto n_test =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(nq * test_fraction)));
  const auto n_val = static_cast<std::size_t>(std::lround(nq * validation_fraction));
  if (n_test + n_val >= nq) throw ConfigError("corpus has too few queries for the split");
  const std::size_t n_train = nq - n_test - n_val;

  ExperimentData d;
  d.vocab = std::move(vocab);
  const LabelIndex dctr = index_labels(dctr_labels(records));
  auto begin = std::make_move_iterator(groups.begin());
  d.train.queries.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  d.validation.queries.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                              begin + static_cast<std::ptrdiff_t>(n_train + n_val));
  d.test.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val),
                std::make_move_iterator(groups.end()));
  d.train.labels = dctr;
  d.validation.labels = dctr;

  d.test_labels.same = dctr;
  d.conditions.push_back(LabelCondition::Same);
  if (truth) {
    d.test_labels.diff = index_labels(*truth);
    d.conditions.push_back(LabelCondition::Diff);
  }
  const LabelIndex raw = index_labels(raw_labels(records));
  bool raw_usable = false;
  for (const auto& q : d.test) raw_usable = raw_usable || raw.count(q.query_id);
  if (raw_usable) {
    d.test_labels.raw = raw;
    d.conditions.push_back(LabelCondition::Raw);
  }
  return d;
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  const ExperimentPaths paths{config.out_dir};
  fs::path log_path = config.click_log;
  fs::path vocab_path = config.vocab_file;
  fs::path truth_path = config.truth_file;
  if (config.synthetic) {
    log_path = paths.click_log();
    vocab_path = paths.vocab();
    truth_path = paths.truth();
    if (!fs::exists(log_path)) {
      throw ConfigError("no corpus at " + log_path.string() + "; run the gen command first");
    }
  }
  std::optional<Vocabulary> vocab;
  if (!vocab_path.empty()) vocab = Vocabulary::load(vocab_path);
  auto log = load_click_log(log_path, std::move(vocab));
  std::optional<std::vector<LabeledPair>> truth;
  if (!truth_path.empty()) {
    std::ifstream in(truth_path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + truth_path.string());
    truth = read_labels(in);
  }
  return prepare_data(log.records, std::move(log.vocab), truth, config.validation_fraction,
                      config.test_fraction);
}

void write_trial_manifest(std::ostream& out, const std::vector<TrialRecord>& rows) {
  out << "trial_id,seed,epochs_trained,best_val_ndcg10,artifact,status\n";
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.best_validation);
    out << r.trial_id << ',' << r.seed << ',' << r.epochs_trained << ',' << buf << ','
        << r.artifact.generic_string() << ',' << r.status << '\n';
  }
}

std::vector<TrialRecord> read_trial_manifest(std::istream& in) {
  std::vector<TrialRecord> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1 || line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(col);
    if (cols.size() < 6) throw ParseError("manifest row needs 6 columns", lineno);
    TrialRecord r;
    r.trial_id = cols[0];
    try {
      r.seed = std::stoull(cols[1]);
      r.epochs_trained = std::stoi(cols[2]);
      r.best_validation = std::stod(cols[3]);
    } catch (const std::exception&) {
      throw ParseError("bad numeric field in manifest", lineno);
    }
    r.artifact = cols[4];
    r.status = cols[5];
    for (std::size_t i = 6; i < cols.size(); ++i) r.status += "," + cols[i];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::pair<TrialRecord, TrainedTrial>> load_trials(const ExperimentConfig& config,
                                                              std::size_t vocab_size) {
  const ExperimentPaths paths{config.out_dir};
  std::ifstream in(paths.manifest());
  if (!in) throw ConfigError("no trial manifest at " + paths.manifest().string() + "; run train");
  std::vector<std::pair<TrialRecord, TrainedTrial>> out;
  for (auto& r : read_trial_manifest(in)) {
    if (r.status != "ok") continue;
    auto trial = load_trial(paths.trials_dir() / r.artifact, vocab_size);
    out.emplace_back(std::move(r), std::move(trial));
  }
  return out;
}

void write_epoch_log(std::ostream& out, const TrainedTrial& trial) {
  out << "epoch,train_loss,val_ndcg10\n";
  char buf[64];
  for (std::size_t e = 0; e < trial.validation_history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.8f,%.6f\n", e + 1, trial.train_loss_history.at(e),
                  trial.validation_history[e]);
    out << buf;
  }
}

namespace {

std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string trial_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial_%03zu", i);
  return buf;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Data, trials and per-trial test scores, loaded once per command.
struct Loaded {
  ExperimentData data;
  std::vector<TrialRecord> records;
  std::vector<TrainedTrial> trials;
  std::unique_ptr<ScoreTable> table;

  explicit Loaded(const ExperimentConfig& config) : data(load_experiment_data(config)) {
    for (auto& [record, trial] : load_trials(config, data.vocab.size())) {
      records.push_back(std::move(record));
      trials.push_back(std::move(trial));
    }
    if (trials.empty()) throw ConfigError("no successfully trained trials in the manifest");
    table = std::make_unique<ScoreTable>(trials, data.test, config.workers);
  }
};

std::vector<MetricMap> per_trial_metrics(const Loaded& l) {
  std::vector<MetricMap> out;
  for (std::size_t t = 0; t < l.trials.size(); ++t) {
    out.push_back(evaluate_table(l.table->trial_rankings(t), l.data.test_labels, l.data.conditions));
  }
  return out;
}

void write_eval_tables(const ExperimentConfig& config, const Loaded& l,
                       const std::vector<MetricMap>& metrics) {
  const ExperimentPaths paths{config.out_dir};
  const auto columns = table_columns(l.data.conditions);
  {
    auto out = open_output(paths.report_dir() / "eval.csv");
    out << "trial_id,seed";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    for (std::size_t t = 0; t < l.trials.size(); ++t) {
      out << l.records[t].trial_id << ',' << l.records[t].seed;
      for (const auto& c : columns) out << ',' << fixed(metrics[t].at(c));
      out << '\n';
    }
  }
  auto out = open_output(paths.report_dir() / "stats.csv");
  write_statistics_csv(out, statistics_from(metrics, columns));
}

/// Ensemble comparison rows; shrinks per-pattern counts to what the pool
/// offers and notes it.
std::vector<ComparisonRow> ensemble_comparison(const ExperimentConfig& config, const Loaded& l,
                                               const std::vector<MetricMap>& base,
                                               const PatternResult& patterns,
                                               std::vector<EnsembleSpec>& all_specs,
                                               std::vector<std::string>& notes) {
  const auto columns = table_columns(l.data.conditions);
  std::size_t count_a = 0, count_b = 0;
  for (const auto& p : patterns.labels) ++(p.label == Pattern::A ? count_a : count_b);

  std::vector<ComparisonRow> rows;
  MetricMap mean;
  for (const auto& c : columns) {
    double s = 0.0;
    for (const auto& m : base) s += m.at(c);
    mean[c] = s / static_cast<double>(base.size());
  }
  rows.push_back({"K-NRM Mean", mean});

  const std::size_t size = config.ensemble_size;
  struct Planned {
    std::string name;
    EnsembleMethod method;
  };
  std::vector<Planned> planned;
  auto plan = [&](const std::string& name, EnsembleMethod method, std::size_t wanted) {
    if (method.size() == 0) {
      notes.push_back(name + " skipped: no trials of the required pattern");
      return;
    }
    std::string label = name;
    if (method.size() < wanted) {
      label += " (" + std::to_string(method.size()) + " members)";
      notes.push_back(name + " shrunk to " + std::to_string(method.size()) +
                      " members: pool has " + std::to_string(count_a) + " A and " +
                      std::to_string(count_b) + " B trials");
    }
    planned.push_back({label, method});
  };
  plan("Ensemble-A", EnsembleMethod::all_a(std::min(size, count_a)), size);
  plan("Ensemble-B", EnsembleMethod::all_b(std::min(size, count_b)), size);
  const std::size_t half = size / 2;
  if (count_a == 0 || count_b == 0) {
    notes.push_back("Ensemble-A&B skipped: only one pattern present");
  } else {
    plan("Ensemble-A&B",
         EnsembleMethod::mixed(std::min(half, count_a), std::min(size - half, count_b)), size);
  }
  plan("Ensemble-Any", EnsembleMethod::any(std::min(size, l.trials.size())), size);

  for (std::size_t p = 0; p < planned.size(); ++p) {
    const auto specs = build_ensembles(patterns.labels, planned[p].method, config.ensemble_repeats,
                                       mix_seed(config.ensemble_seed + p));
    std::vector<MetricMap> results;
    for (const auto& s : specs) {
      results.push_back(
          evaluate_table(l.table->ensemble_rankings(s.members), l.data.test_labels,
                         l.data.conditions));
      all_specs.push_back(s);
    }
    MetricMap avg;
    for (const auto& c : columns) {
      double s = 0.0;
      for (const auto& m : results) s += m.at(c);
      avg[c] = s / static_cast<double>(results.size());
    }
    rows.push_back({planned[p].name, avg});
  }
  return rows;
}

std::vector<std::string> member_paths(const Loaded& l) {
  std::vector<std::string> paths;
  for (const auto& r : l.records) paths.push_back(("trials" / r.artifact).generic_string());
  return paths;
}

}  // namespace

void cmd_gen(const ExperimentConfig& config) {
  config.validate();
  if (!config.synthetic) throw ConfigError("gen needs [corpus] source = synthetic");
  const auto corpus = generate_synthetic_corpus(config.corpus);
  const ExperimentPaths paths{config.out_dir};
  {
    auto out = open_output(paths.click_log());
    write_click_log(out, corpus.records, corpus.vocab);
  }
  {
    auto out = open_output(paths.vocab());
    corpus.vocab.write(out);
  }
  auto out = open_output(paths.truth());
  write_labels(out, corpus.truth);
}

std::size_t cmd_train(const ExperimentConfig& config) {
  config.validate();
  const auto data = load_experiment_data(config);
  const ModelShape shape{data.vocab.size(), config.dim, config.kernels()};
  const auto seeds = derive_seeds(*config.seed_base, config.trials);
  const ExperimentPaths paths{config.out_dir};
  fs::create_directories(paths.trials_dir());

  std::vector<TrialRecord> rows(seeds.size());
  detail::parallel_for(seeds.size(), config.workers, [&](std::size_t i) {
    auto& row = rows[i];
    row.trial_id = trial_id(i);
    row.seed = seeds[i];
    row.artifact = row.trial_id + ".knrm";
    try {
      TrainConfig tc = config.train;
      tc.seed = seeds[i];
      const auto trial = train(data.train, data.validation, shape, tc);
      row.epochs_trained = trial.epochs_trained;
      if (trial.epochs_trained > 0) {
        row.best_validation = trial.validation_history.at(trial.epochs_trained - 1);
      }
      save_trial(paths.trials_dir() / row.artifact, trial);
      auto log = open_output(paths.trials_dir() / (row.trial_id + ".log.csv"));
      write_epoch_log(log, trial);
    } catch (const std::exception& e) {
      std::string msg = e.what();
      for (auto& ch : msg) {
        if (ch == ',' || ch == '\n') ch = ' ';
      }
      row.status = "error: " + msg;
    }
  });
  auto out = open_output(paths.manifest());
  write_trial_manifest(out, rows);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status != "ok";
  return failed;
}

void cmd_eval(const ExperimentConfig& config) {
  config.validate();
  const Loaded l(config);
  write_eval_tables(config, l, per_trial_metrics(l));
}

void cmd_ensemble(const ExperimentConfig& config) {
  config.validate();
  const Loaded l(config);
  if (l.trials.size() < 2) throw ConfigError("ensembles need at least 2 trials");
  const auto metrics = per_trial_metrics(l);
  const auto patterns = classify_patterns(l.trials);
  std::vector<EnsembleSpec> specs;
  std::vector<std::string> notes;
  const auto rows = ensemble_comparison(config, l, metrics, patterns, specs, notes);
  const ExperimentPaths paths{config.out_dir};
  {
    auto out = open_output(paths.report_dir() / "ensembles.csv");
    write_ensemble_manifest(out, specs, member_paths(l));
  }
  auto out = open_output(paths.report_dir() / "ensemble_table.csv");
  write_comparison_csv(out, table_columns(l.data.conditions), rows);
  for (const auto& n : notes) std::cerr << "note: " << n << '\n';
}

std::vector<std::string> cmd_report(const ExperimentConfig& config) {
  config.validate();
  const Loaded l(config);
  const ExperimentPaths paths{config.out_dir};
  std::vector<std::string> notes;

  const auto metrics = per_trial_metrics(l);
  write_eval_tables(config, l, metrics);

  if (l.trials.size() < 2) {
    notes.push_back("agreement, patterns, heat maps, ensembles and grid skipped: fewer than 2 trials");
  } else {
    std::vector<AgreementHistogram> histograms;
    std::vector<std::vector<RankedList>> rankings;
    for (std::size_t t = 0; t < l.trials.size(); ++t) rankings.push_back(l.table->trial_rankings(t));
    for (int k : config.agreement_k) histograms.push_back(agreement_histogram(rankings, k));
    {
      auto out = open_output(paths.report_dir() / "agreement.csv");
      write_histogram_csv(out, histograms);
    }

    const auto patterns = classify_patterns(l.trials);
    if (patterns.degenerate) notes.push_back("pattern split degenerate: all trials labeled A");
    std::vector<std::size_t> group_a, group_b;
    {
      auto out = open_output(paths.report_dir() / "patterns.csv");
      out << "trial_id,seed,label,projection_score\n";
      for (std::size_t t = 0; t < l.trials.size(); ++t) {
        const auto& p = patterns.labels[t];
        (p.label == Pattern::A ? group_a : group_b).push_back(t);
        out << l.records[t].trial_id << ',' << l.records[t].seed << ','
            << (p.label == Pattern::A ? 'A' : 'B') << ',' << fixed(p.score, 8) << '\n';
      }
    }
    {
      auto out = open_output(paths.report_dir() / "weights.csv");
      out << "trial_id,label";
      for (double mu : l.trials.front().kernels.mus) out << ",mu=" << fixed(mu, 2);
      out << '\n';
      for (std::size_t t = 0; t < l.trials.size(); ++t) {
        out << l.records[t].trial_id << ','
            << (patterns.labels[t].label == Pattern::A ? 'A' : 'B');
        for (double w : l.trials[t].weights.w) out << ',' << fixed(w, 8);
        out << '\n';
      }
    }

    // Heat maps: the first Pattern-A trial against up to N other A trials and
    // N B trials.
    const std::size_t ref = group_a.empty() ? 0 : group_a.front();
    std::vector<QueryGroup> slice;
    if (config.pairs_from != "test") {
      slice.insert(slice.end(), l.data.train.queries.begin(), l.data.train.queries.end());
    }
    if (config.pairs_from != "train") slice.insert(slice.end(), l.data.test.begin(), l.data.test.end());
    const auto pairs = sample_word_pairs(slice, config.pairs, l.trials[ref]);
    std::vector<std::size_t> others;
    for (std::size_t i = 1; i < group_a.size() && i <= config.heatmaps_per_pattern; ++i) {
      others.push_back(group_a[i]);
    }
    for (std::size_t i = 0; i < group_b.size() && i < config.heatmaps_per_pattern; ++i) {
      others.push_back(group_b[i]);
    }
    for (auto o : others) {
      const auto h = movement_heatmap(pairs, l.trials[o], l.trials[ref]);
      auto out = open_output(paths.report_dir() /
                             ("heatmap_" + l.records[ref].trial_id + "_vs_" + l.records[o].trial_id + ".csv"));
      write_heatmap_csv(out, h);
    }

    std::vector<EnsembleSpec> specs;
    const auto rows = ensemble_comparison(config, l, metrics, patterns, specs, notes);
    {
      auto out = open_output(paths.report_dir() / "ensembles.csv");
      write_ensemble_manifest(out, specs, member_paths(l));
    }
    {
      auto out = open_output(paths.report_dir() / "ensemble_table.csv");
      write_comparison_csv(out, table_columns(l.data.conditions), rows);
    }

    const std::size_t max_m = std::min(config.grid_max_m, group_a.size());
    const std::size_t max_n = std::min(config.grid_max_n, group_b.size());
    RankingMetric metric;
    bool metric_ok = true;
    if (config.grid_metric == "mrr") {
      metric_ok = l.data.test_labels.raw.has_value();
      if (metric_ok) metric = mrr_metric(l.data.test_labels);
    } else {
      const auto cond = config.grid_metric == "ndcg10_diff" ? LabelCondition::Diff : LabelCondition::Same;
      metric_ok = l.data.test_labels.source(cond) != nullptr;
      if (metric_ok) metric = ndcg_metric(l.data.test_labels, cond, 10);
    }
    if (!metric_ok) {
      notes.push_back("grid skipped: no labels for metric " + config.grid_metric);
    } else {
      if (max_m < config.grid_max_m || max_n < config.grid_max_n) {
        notes.push_back("grid limited to m <= " + std::to_string(max_m) + ", n <= " +
                        std::to_string(max_n) + " by the pattern pool");
      }
      const auto grid = pattern_grid(*l.table, patterns.labels, max_m, max_n, metric,
                                     config.grid_repeats, config.ensemble_seed);
      auto out = open_output(paths.report_dir() / "grid.csv");
      write_grid_csv(out, grid);
    }
  }

  auto out = open_output(paths.report_dir() / "summary.txt");
  out << "trials: " << l.trials.size() << '\n';
  out << "test queries: " << l.data.test.size() << '\n';
  out << "conditions:";
  for (auto c : l.data.conditions) out << ' ' << condition_name(c);
  out << '\n';
  for (const auto& n : notes) out << "note: " << n << '\n';
  return notes;
}

}  // namespace knrm
