// knrm: generate corpora, train trial sets and produce the consistency report.

#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "knrm/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  unsigned workers = 0;
  std::size_t trials = 0;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory (overrides [output] dir)");
  cmd->add_option("--workers", o.workers, "worker threads, 0 = all cores");
  cmd->add_option("--trials", o.trials, "number of trials (overrides [trials] count)");
  cmd->add_option("--seed", o.seed, "corpus seed for gen, trial seed base otherwise");
}

knrm::ExperimentConfig resolve(const Overrides& o, bool seed_is_corpus) {
  auto config = knrm::load_experiment_config(o.config);
  if (!o.out.empty()) config.out_dir = o.out;
  if (o.workers) config.workers = o.workers;
  if (o.trials) config.trials = o.trials;
  if (o.seed) {
    if (seed_is_corpus) {
      config.corpus.seed = *o.seed;
      config.corpus_seed_set = true;
    } else {
      config.seed_base = *o.seed;
    }
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"K-NRM kernel-pooling ranker and multi-trial consistency study"};
  app.require_subcommand(1);
  Overrides o;
  auto* gen = app.add_subcommand("gen", "write a synthetic click log, vocabulary and truth labels");
  auto* train = app.add_subcommand("train", "train every trial and write the manifest");
  auto* eval = app.add_subcommand("eval", "per-trial metrics and summary statistics");
  auto* ensemble = app.add_subcommand("ensemble", "pattern-selected ensembles");
  auto* report = app.add_subcommand("report", "all tables, histograms, heat maps and the grid");
  for (auto* cmd : {gen, train, eval, ensemble, report}) add_common(cmd, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto config = resolve(o, true);
      knrm::cmd_gen(config);
      std::cout << "corpus written to " << knrm::ExperimentPaths{config.out_dir}.corpus_dir().string()
                << '\n';
    } else if (train->parsed()) {
      const auto config = resolve(o, false);
      const auto failed = knrm::cmd_train(config);
      std::cout << config.trials - failed << " of " << config.trials << " trials trained\n";
      if (failed) {
        std::cerr << "error: " << failed << " trial(s) failed; see "
                  << knrm::ExperimentPaths{config.out_dir}.manifest().string() << '\n';
        return 3;
      }
    } else if (eval->parsed()) {
      knrm::cmd_eval(resolve(o, false));
    } else if (ensemble->parsed()) {
      knrm::cmd_ensemble(resolve(o, false));
    } else if (report->parsed()) {
      for (const auto& note : knrm::cmd_report(resolve(o, false))) {
        std::cerr << "note: " << note << '\n';
      }
    }
  } catch (const knrm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
