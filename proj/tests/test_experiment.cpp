#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "knrm/experiment.hpp"

using namespace knrm;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"([corpus]
source = synthetic
seed = 3
vocab_size = 300
topics = 10
queries = 30
docs_per_query = 6

[model]
dim = 8

[train]
max_epochs = 2

[trials]
count = 3
seed_base = 11

[analysis]
pair_queries = 10
pair_docs = 6
pair_per_bin = 5

[ensemble]
size = 2
repeats = 2
grid_max_m = 2
grid_max_n = 2
grid_repeats = 2
grid_metric = ndcg10_diff

[output]
dir = out
workers = 2
)";

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("knrm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto p = dir / "exp.ini";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KNRM_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  std::stringstream in(kTinyConfig);
  const auto c = parse_experiment_config(in);
  EXPECT_TRUE(c.synthetic);
  EXPECT_EQ(c.corpus.num_queries, 30);
  EXPECT_EQ(c.dim, 8u);
  EXPECT_EQ(c.train.max_epochs, 2);
  EXPECT_EQ(c.train.batch_size, 16);
  EXPECT_EQ(c.train.learning_rate, 0.001);
  EXPECT_EQ(*c.seed_base, 11u);
  EXPECT_EQ(c.kernel_count, 11u);
  EXPECT_EQ(c.agreement_k, (std::vector<int>{1, 3, 10}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, Errors) {
  auto parse = [](const std::string& text) {
    std::stringstream in(text);
    return parse_experiment_config(in);
  };
  EXPECT_THROW(parse("[corpus]\nsede = 1\n"), ConfigError);
  EXPECT_THROW(parse("[nope]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse("[model]\ndim = fifty\n"), ConfigError);
  EXPECT_THROW(parse("[corpus]\nseed = 1\n").validate(), ConfigError);        // no seed_base
  EXPECT_THROW(parse("[trials]\nseed_base = 1\n").validate(), ConfigError);   // no corpus seed
  EXPECT_THROW(parse("[corpus]\nsource = /no/such/file.tsv\n[trials]\nseed_base = 1\n").validate(),
               ConfigError);
  EXPECT_THROW(parse("[corpus]\nseed = 1\n[trials]\nseed_base = 1\n[train]\nlearning_rate = -1\n").validate(),
               ConfigError);
  EXPECT_NO_THROW(parse("[corpus]\nseed = 1\n[trials]\nseed_base = 1\n").validate());
}

TEST(Manifest, RoundTrip) {
  std::vector<TrialRecord> rows{{"trial_000", 5, 3, 0.75, "trial_000.knrm", "ok"},
                                {"trial_001", 6, 0, 0.0, "trial_001.knrm", "error: boom"}};
  std::stringstream ss;
  write_trial_manifest(ss, rows);
  const auto back = read_trial_manifest(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].status, "error: boom");
  EXPECT_EQ(back[0].seed, 5u);
  EXPECT_EQ(back[0].artifact, "trial_000.knrm");
}

TEST(PrepareData, SplitAndConditions) {
  SyntheticCorpusSpec spec;
  spec.num_queries = 20;
  spec.docs_per_query = 5;
  spec.seed = 1;
  const auto c = generate_synthetic_corpus(spec);
  const auto d = prepare_data(c.records, c.vocab, c.truth, 0.1, 0.2);
  EXPECT_EQ(d.train.queries.size(), 14u);
  EXPECT_EQ(d.validation.queries.size(), 2u);
  EXPECT_EQ(d.test.size(), 4u);
  EXPECT_EQ(d.test.front().query_id, "q0016");
  EXPECT_EQ(d.conditions.size(), 3u);
  const auto no_truth = prepare_data(c.records, c.vocab, std::nullopt, 0.1, 0.2);
  EXPECT_FALSE(no_truth.test_labels.diff.has_value());
}

TEST(Pipeline, GenIsIdempotentAndTrainDeterministic) {
  const auto dir = scratch("pipeline");
  const auto cfg_path = write_config(dir, kTinyConfig);
  auto config = load_experiment_config(cfg_path);
  EXPECT_EQ(config.out_dir, dir / "out");
  cmd_gen(config);
  const ExperimentPaths paths{config.out_dir};
  const auto clicks = slurp(paths.click_log());
  std::size_t lines = 0;
  for (char ch : clicks) lines += ch == '\n';
  EXPECT_EQ(lines, 180u);
  cmd_gen(config);
  EXPECT_EQ(slurp(paths.click_log()), clicks);

  EXPECT_EQ(cmd_train(config), 0u);
  const auto manifest = slurp(paths.manifest());
  const auto artifact = slurp(paths.trials_dir() / "trial_000.knrm");
  std::stringstream ms(manifest);
  const auto rows = read_trial_manifest(ms);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NE(rows[0].seed, rows[1].seed);
  EXPECT_TRUE(fs::exists(paths.trials_dir() / "trial_002.log.csv"));

  config.workers = 1;
  EXPECT_EQ(cmd_train(config), 0u);
  EXPECT_EQ(slurp(paths.manifest()), manifest);
  EXPECT_EQ(slurp(paths.trials_dir() / "trial_000.knrm"), artifact);

  const auto notes = cmd_report(config);
  for (const char* f : {"stats.csv", "eval.csv", "agreement.csv", "patterns.csv", "ensemble_table.csv",
                        "summary.txt"}) {
    EXPECT_TRUE(fs::exists(paths.report_dir() / f)) << f;
  }
  EXPECT_EQ(slurp(paths.trials_dir() / "trial_000.knrm"), artifact);  // report is read-only
  const auto stats = slurp(paths.report_dir() / "stats.csv");
  EXPECT_EQ(stats.substr(0, stats.find('\n')),
            "Statistic,SAME NDCG@1,SAME NDCG@3,SAME NDCG@10,DIFF NDCG@1,DIFF NDCG@3,DIFF NDCG@10,RAW MRR");
}

TEST(Pipeline, SingleTrialReportSkipsPoolAnalyses) {
  const auto dir = scratch("single");
  auto config = load_experiment_config(write_config(dir, kTinyConfig));
  config.trials = 1;
  cmd_gen(config);
  EXPECT_EQ(cmd_train(config), 0u);
  EXPECT_TRUE(fs::exists(ExperimentPaths{config.out_dir}.trials_dir() / "trial_000.knrm"));
  EXPECT_FALSE(fs::exists(ExperimentPaths{config.out_dir}.trials_dir() / "trial_001.knrm"));
  const auto notes = cmd_report(config);
  ASSERT_FALSE(notes.empty());
  EXPECT_NE(notes[0].find("fewer than 2 trials"), std::string::npos);
  EXPECT_TRUE(fs::exists(ExperimentPaths{config.out_dir}.report_dir() / "stats.csv"));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const auto cfg = write_config(dir, kTinyConfig);
  EXPECT_EQ(run_cli("gen --config " + cfg.string()), 0);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --trials 2 --out " + (dir / "o2").string()), 2)
      << "train without a corpus in the chosen output directory";
  EXPECT_EQ(run_cli("gen --config " + cfg.string() + " --out " + (dir / "o2").string()), 0);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --trials 2 --workers 1 --out " + (dir / "o2").string()), 0);
  std::ifstream manifest(dir / "o2" / "trials" / "manifest.csv");
  EXPECT_EQ(read_trial_manifest(manifest).size(), 2u);
  EXPECT_EQ(run_cli("eval --config " + cfg.string() + " --out " + (dir / "o2").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "o2" / "report" / "eval.csv"));
  EXPECT_NE(run_cli("train"), 0);
  EXPECT_NE(run_cli("frobnicate --config " + cfg.string()), 0);
  write_config(dir, "[corpus]\nseed = 1\n");
  EXPECT_EQ(run_cli("gen --config " + cfg.string()), 2);
}
