#include "knrm/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "knrm/random.hpp"
#include "parallel.hpp"

namespace knrm {

double ensemble_score(const TokenSeq& query, const TokenSeq& doc,
                      const std::vector<const TrainedTrial*>& members) {
  if (members.empty()) throw std::invalid_argument("ensemble_score: no members");
  double sum = 0.0;
  for (const auto* m : members) sum += score(query, doc, *m);
  return sum / static_cast<double>(members.size());
}

ScoreFn ensemble_scorer(std::vector<const TrainedTrial*> members) {
  if (members.empty()) throw std::invalid_argument("ensemble_scorer: no members");
  return [members = std::move(members)](const TokenSeq& q, const TokenSeq& d) {
    return ensemble_score(q, d, members);
  };
}

const char* selection_name(Selection s) {
  switch (s) {
    case Selection::AllA:
      return "ALL_A";
    case Selection::AllB:
      return "ALL_B";
    case Selection::Mixed:
      return "MIXED";
    case Selection::Any:
      return "ANY";
    case Selection::Explicit:
      return "EXPLICIT";
  }
  return "?";
}

std::vector<EnsembleSpec> build_ensembles(const std::vector<PatternLabel>& pool,
                                          const EnsembleMethod& method, std::size_t repeats,
                                          std::uint64_t seed) {
  if (method.size() == 0) throw std::invalid_argument("build_ensembles: empty ensemble");
  if (method.selection == Selection::Explicit) {
    throw std::invalid_argument("build_ensembles: explicit ensembles are not drawn");
  }
  std::vector<std::size_t> a, b, all;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (pool[i].label == Pattern::A ? a : b).push_back(i);
    all.push_back(i);
  }
  const bool any = method.selection == Selection::Any;
  auto require = [](std::size_t have, std::size_t need, const char* what) {
    if (have < need) {
      throw std::invalid_argument("build_ensembles: need " + std::to_string(need) + " " + what +
                                  " trials, pool has " + std::to_string(have) + " (short by " +
                                  std::to_string(need - have) + ")");
    }
  };
  if (any) {
    require(all.size(), method.size(), "pool");
  } else {
    require(a.size(), method.pattern_a, "Pattern-A");
    require(b.size(), method.pattern_b, "Pattern-B");
  }

  Rng rng(mix_seed(seed));
  std::vector<EnsembleSpec> specs;
  specs.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    EnsembleSpec spec;
    spec.selection = method.selection;
    spec.pool_seed = seed;
    auto draw = [&](const std::vector<std::size_t>& from, std::size_t count) {
      for (auto i : rng.sample_without_replacement(from.size(), count)) {
        spec.members.push_back(from[i]);
      }
    };
    if (any) {
      draw(all, method.size());
      for (auto i : spec.members) ++(pool[i].label == Pattern::A ? spec.pattern_a : spec.pattern_b);
    } else {
      draw(a, method.pattern_a);
      draw(b, method.pattern_b);
      spec.pattern_a = method.pattern_a;
      spec.pattern_b = method.pattern_b;
    }
    std::sort(spec.members.begin(), spec.members.end());
    specs.push_back(std::move(spec));
  }
  return specs;
}

ScoreTable::ScoreTable(const std::vector<TrainedTrial>& trials,
                       const std::vector<QueryGroup>& queries, unsigned workers)
    : queries_(&queries), scores_(trials.size()) {
  detail::parallel_for(trials.size(), workers, [&](std::size_t t) {
    auto& per_query = scores_[t];
    per_query.resize(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
      for (const auto& c : queries[q].candidates) {
        per_query[q].push_back(score(queries[q].terms, c.terms, trials[t]));
      }
    }
  });
}

std::vector<RankedList> ScoreTable::trial_rankings(std::size_t trial) const {
  std::vector<RankedList> out;
  out.reserve(queries_->size());
  for (std::size_t q = 0; q < queries_->size(); ++q) {
    out.push_back(rank_scored((*queries_)[q], scores_.at(trial)[q]));
  }
  return out;
}

std::vector<RankedList> ScoreTable::ensemble_rankings(
    const std::vector<std::size_t>& members) const {
  if (members.empty()) throw std::invalid_argument("ensemble_rankings: no members");
  std::vector<RankedList> out;
  out.reserve(queries_->size());
  std::vector<double> mean;
  for (std::size_t q = 0; q < queries_->size(); ++q) {
    const std::size_t n = (*queries_)[q].candidates.size();
    mean.assign(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      double sum = 0.0;
      for (auto t : members) sum += scores_.at(t)[q][c];
      mean[c] = sum / static_cast<double>(members.size());
    }
    out.push_back(rank_scored((*queries_)[q], mean));
  }
  return out;
}

RankingMetric mrr_metric(const EvalLabels& labels) {
  return [labels](const std::vector<RankedList>& rankings) {
    return evaluate_rankings(rankings, labels, LabelCondition::Raw).at("MRR");
  };
}

RankingMetric ndcg_metric(const EvalLabels& labels, LabelCondition condition, int k) {
  if (condition == LabelCondition::Raw) {
    throw std::invalid_argument("ndcg_metric: RAW labels are scored with MRR");
  }
  const LabelIndex* source = labels.source(condition);
  if (!source) {
    throw ConfigError(std::string("no labels for condition ") + condition_name(condition));
  }
  return [index = *source, k](const std::vector<RankedList>& rankings) {
    static const QueryLabels kNone;
    double total = 0.0;
    for (const auto& r : rankings) {
      const auto it = index.find(r.query_id);
      total += ndcg_at_k(r, it == index.end() ? kNone : it->second, k);
    }
    return rankings.empty() ? 0.0 : total / static_cast<double>(rankings.size());
  };
}

std::vector<GridCell> pattern_grid(const ScoreTable& table, const std::vector<PatternLabel>& labels,
                                   std::size_t max_m, std::size_t max_n,
                                   const RankingMetric& metric, std::size_t repeats,
                                   std::uint64_t seed) {
  if (labels.size() != table.num_trials()) {
    throw std::invalid_argument("pattern_grid: one label per pooled trial required");
  }
  if (repeats == 0) throw std::invalid_argument("pattern_grid: repeats must be >= 1");
  std::vector<GridCell> grid;
  for (std::size_t m = 0; m <= max_m; ++m) {
    for (std::size_t n = 0; n <= max_n; ++n) {
      GridCell cell{m, n, std::nullopt, 0.0, 0};
      if (m + n > 0) {
        const auto specs = build_ensembles(labels, EnsembleMethod::mixed(m, n), repeats,
                                           mix_seed(seed ^ (m << 32) ^ n));
        std::vector<double> values;
        for (const auto& s : specs) values.push_back(metric(table.ensemble_rankings(s.members)));
        const auto stats = summarize(values);
        cell.mean = stats.mean;
        cell.std = stats.std;
        cell.repeats = repeats;
      }
      grid.push_back(cell);
    }
  }
  return grid;
}

void write_grid_csv(std::ostream& out, const std::vector<GridCell>& grid) {
  out << "m,n,metric,repeats,std\n";
  char buf[32];
  for (const auto& c : grid) {
    out << c.m << ',' << c.n << ',';
    if (c.mean) {
      std::snprintf(buf, sizeof buf, "%.6f", *c.mean);
      out << buf << ',' << c.repeats << ',';
      std::snprintf(buf, sizeof buf, "%.6f", c.std);
      out << buf;
    } else {
      out << ",,";
    }
    out << '\n';
  }
}

std::string percent_delta(double base, double value) {
  if (base == 0.0) return "n/a";
  const long pct = std::lround((value / base - 1.0) * 100.0);
  return (pct >= 0 ? "+" : "") + std::to_string(pct) + "%";
}

void write_comparison_csv(std::ostream& out, const std::vector<std::string>& columns,
                          const std::vector<ComparisonRow>& rows) {
  out << "Model";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r].name;
    for (const auto& c : columns) {
      const double v = rows[r].metrics.at(c);
      std::snprintf(buf, sizeof buf, "%.4f", v);
      out << ',' << buf;
      if (r > 0) out << " (" << percent_delta(rows.front().metrics.at(c), v) << ')';
    }
    out << '\n';
  }
}

void write_ensemble_manifest(std::ostream& out, const std::vector<EnsembleSpec>& specs,
                             const std::vector<std::string>& member_paths) {
  out << "ensemble_id,selection,pattern_a,pattern_b,pool_seed,members\n";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    out << i << ',' << selection_name(s.selection) << ',' << s.pattern_a << ',' << s.pattern_b
        << ',' << s.pool_seed << ',';
    for (std::size_t j = 0; j < s.members.size(); ++j) {
      if (j) out << ';';
      out << member_paths.at(s.members[j]);
    }
    out << '\n';
  }
}

}  // namespace knrm
