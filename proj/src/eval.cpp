#include "knrm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace knrm {

namespace {

double gain(double label) { return std::exp2(label) - 1.0; }
double discount(std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); }

double label_of(const QueryLabels& labels, const std::string& doc_id) {
  const auto it = labels.find(doc_id);
  return it == labels.end() ? 0.0 : it->second;
}

}  // namespace

double ndcg_at_k(const RankedList& ranking, const QueryLabels& labels, int k) {
  if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  const auto cutoff = static_cast<std::size_t>(k);

  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(cutoff, ranking.entries.size()); ++r) {
    dcg += gain(label_of(labels, ranking.entries[r].doc_id)) * discount(r + 1);
  }
  // The ideal ordering is over the ranked documents' labels.
  std::vector<double> ideal;
  ideal.reserve(ranking.entries.size());
  for (const auto& e : ranking.entries) ideal.push_back(label_of(labels, e.doc_id));
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(cutoff, ideal.size()); ++r) {
    idcg += gain(ideal[r]) * discount(r + 1);
  }
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

MrrResult mrr(const std::vector<RankedList>& rankings, const LabelIndex& raw_labels) {
  MrrResult result;
  double total = 0.0;
  for (const auto& ranking : rankings) {
    const auto it = raw_labels.find(ranking.query_id);
    std::size_t hit = 0;
    if (it != raw_labels.end()) {
      for (std::size_t r = 0; r < ranking.entries.size(); ++r) {
        if (label_of(it->second, ranking.entries[r].doc_id) >= 1.0) {
          hit = r + 1;
          break;
        }
      }
    }
    if (hit == 0) {
      ++result.excluded;
      continue;
    }
    total += 1.0 / static_cast<double>(hit);
    ++result.evaluated;
  }
  result.value = result.evaluated ? total / static_cast<double>(result.evaluated) : 0.0;
  return result;
}

const char* condition_name(LabelCondition c) {
  switch (c) {
    case LabelCondition::Same:
      return "SAME";
    case LabelCondition::Diff:
      return "DIFF";
    case LabelCondition::Raw:
      return "RAW";
  }
  return "?";
}

const LabelIndex* EvalLabels::source(LabelCondition c) const {
  const std::optional<LabelIndex>* src = nullptr;
  switch (c) {
    case LabelCondition::Same:
      src = &same;
      break;
    case LabelCondition::Diff:
      src = &diff;
      break;
    case LabelCondition::Raw:
      src = &raw;
      break;
  }
  return src && src->has_value() ? &**src : nullptr;
}

namespace {

const std::vector<int> kCutoffs = {1, 3, 10};

std::vector<std::string> condition_metrics(LabelCondition c) {
  if (c == LabelCondition::Raw) return {"MRR"};
  std::vector<std::string> names;
  for (int k : kCutoffs) names.push_back("NDCG@" + std::to_string(k));
  return names;
}

}  // namespace

MetricMap evaluate(const ScoreFn& scorer, const std::vector<QueryGroup>& queries,
                   const EvalLabels& labels, LabelCondition condition) {
  std::vector<RankedList> rankings;
  rankings.reserve(queries.size());
  for (const auto& q : queries) rankings.push_back(rank(q, scorer));
  return evaluate_rankings(rankings, labels, condition);
}

MetricMap evaluate_rankings(const std::vector<RankedList>& rankings, const EvalLabels& labels,
                            LabelCondition condition) {
  const LabelIndex* source = labels.source(condition);
  if (!source) {
    throw ConfigError(std::string("no labels for condition ") + condition_name(condition));
  }

  MetricMap out;
  if (condition == LabelCondition::Raw) {
    const auto result = mrr(rankings, *source);
    if (result.evaluated == 0) {
      throw ConfigError("RAW condition: no query has a single-clicked document");
    }
    out["MRR"] = result.value;
    return out;
  }
  static const QueryLabels kNone;
  for (int k : kCutoffs) {
    double total = 0.0;
    for (const auto& r : rankings) {
      const auto it = source->find(r.query_id);
      total += ndcg_at_k(r, it == source->end() ? kNone : it->second, k);
    }
    out["NDCG@" + std::to_string(k)] =
        rankings.empty() ? 0.0 : total / static_cast<double>(rankings.size());
  }
  return out;
}

MetricMap evaluate_trial(const TrainedTrial& trial, const std::vector<QueryGroup>& queries,
                         const EvalLabels& labels, LabelCondition condition) {
  return evaluate([&trial](const TokenSeq& q, const TokenSeq& d) { return score(q, d, trial); },
                  queries, labels, condition);
}

std::vector<std::string> table_columns(const std::vector<LabelCondition>& conditions) {
  std::vector<std::string> cols;
  for (auto c : conditions) {
    for (const auto& m : condition_metrics(c)) cols.push_back(std::string(condition_name(c)) + " " + m);
  }
  return cols;
}

MetricMap evaluate_table(const ScoreFn& scorer, const std::vector<QueryGroup>& queries,
                         const EvalLabels& labels, const std::vector<LabelCondition>& conditions) {
  std::vector<RankedList> rankings;
  rankings.reserve(queries.size());
  for (const auto& q : queries) rankings.push_back(rank(q, scorer));
  return evaluate_table(rankings, labels, conditions);
}

MetricMap evaluate_table(const std::vector<RankedList>& rankings, const EvalLabels& labels,
                         const std::vector<LabelCondition>& conditions) {
  MetricMap out;
  for (auto c : conditions) {
    for (const auto& [name, value] : evaluate_rankings(rankings, labels, c)) {
      out[std::string(condition_name(c)) + " " + name] = value;
    }
  }
  return out;
}

SummaryStats summarize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  SummaryStats s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  if (s.min == s.max) {
    s.mean = s.min;
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

TrialStatistics statistics_from(const std::vector<MetricMap>& per_trial,
                                const std::vector<std::string>& columns) {
  if (per_trial.empty()) throw std::invalid_argument("trial statistics: no trials");
  TrialStatistics out;
  out.columns = columns;
  for (const auto& col : columns) {
    std::vector<double> values;
    values.reserve(per_trial.size());
    for (const auto& m : per_trial) values.push_back(m.at(col));
    out.stats.push_back(summarize(values));
  }
  return out;
}

TrialStatistics trial_statistics(const std::vector<TrainedTrial>& trials,
                                 const std::vector<QueryGroup>& queries, const EvalLabels& labels,
                                 const std::vector<LabelCondition>& conditions) {
  if (trials.empty()) throw std::invalid_argument("trial_statistics: no trials");
  std::vector<MetricMap> per_trial;
  per_trial.reserve(trials.size());
  for (const auto& t : trials) {
    per_trial.push_back(evaluate_table(
        [&t](const TokenSeq& q, const TokenSeq& d) { return score(q, d, t); }, queries, labels,
        conditions));
  }
  return statistics_from(per_trial, table_columns(conditions));
}

void write_statistics_csv(std::ostream& out, const TrialStatistics& stats) {
  out << "Statistic";
  for (const auto& c : stats.columns) out << ',' << c;
  out << '\n';
  const std::pair<const char*, double SummaryStats::*> rows[] = {
      {"Minimum", &SummaryStats::min},
      {"Mean", &SummaryStats::mean},
      {"Maximum", &SummaryStats::max},
      {"Standard Deviation", &SummaryStats::std},
  };
  char buf[32];
  for (const auto& [name, field] : rows) {
    out << name;
    for (const auto& s : stats.stats) {
      std::snprintf(buf, sizeof buf, "%.4f", s.*field);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace knrm
