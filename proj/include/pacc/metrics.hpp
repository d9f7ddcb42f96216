#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pacc/csv.hpp"
#include "pacc/errors.hpp"
#include "pacc/models.hpp"
#include "pacc/simlog.hpp"

namespace pacc {

enum class Task { kCtr, kCvr };

inline std::string to_string(Task t) { return t == Task::kCtr ? "ctr" : "cvr"; }

/// One impression scored by a model for one task.
struct ScoredExample {
  std::int64_t query_id = 0;
  std::int64_t item_id = 0;
  int position = 1;
  double score = 0.0;
  int label = 0;
  double weight = 1.0;
};

namespace detail {

struct PairCount {
  double correct = 0.0;  // ties count one half
  double pairs = 0.0;
};

/// Mann-Whitney count over tie groups in ascending score order.
inline PairCount count_pairs(std::span<const ScoredExample> ex, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ex[a].score < ex[b].score; });
  PairCount pc;
  double neg_below = 0.0;
  double pos_total = 0.0;
  double neg_total = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double pos = 0.0;
    double neg = 0.0;
    while (j < idx.size() && ex[idx[j]].score == ex[idx[i]].score) {
      (ex[idx[j]].label ? pos : neg) += 1.0;
      ++j;
    }
    pc.correct += pos * neg_below + 0.5 * pos * neg;
    neg_below += neg;
    pos_total += pos;
    neg_total += neg;
    i = j;
  }
  pc.pairs = pos_total * neg_total;
  return pc;
}

/// Indices of each query's examples in model ranking order (score desc, item_id asc).
inline std::vector<std::vector<std::size_t>> rank_within_queries(std::span<const ScoredExample> ex) {
  std::map<std::int64_t, std::vector<std::size_t>> by_query;
  for (std::size_t i = 0; i < ex.size(); ++i) by_query[ex[i].query_id].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(by_query.size());
  for (auto& [q, idx] : by_query) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (ex[a].score != ex[b].score) return ex[a].score > ex[b].score;
      return ex[a].item_id < ex[b].item_id;
    });
    out.push_back(std::move(idx));
  }
  return out;
}

}  // namespace detail

/// Probability that a random positive outranks a random negative (ties = 1/2).
inline double auc(std::span<const ScoredExample> ex) {
  std::vector<std::size_t> idx(ex.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto pc = detail::count_pairs(ex, std::move(idx));
  if (pc.pairs == 0.0) throw UndefinedMetricError("auc: needs at least one positive and one negative");
  return pc.correct / pc.pairs;
}

/// AUC within logged-position buckets, aggregated with weight = positive-negative
/// pairs per bucket. Buckets lacking either class are skipped.
inline double pauc(std::span<const ScoredExample> ex) {
  std::map<int, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < ex.size(); ++i) buckets[ex[i].position].push_back(i);
  double correct = 0.0;
  double pairs = 0.0;
  for (auto& [pos, idx] : buckets) {
    const auto pc = detail::count_pairs(ex, std::move(idx));
    correct += pc.correct;
    pairs += pc.pairs;
  }
  if (pairs == 0.0) throw UndefinedMetricError("pauc: no position bucket has both classes");
  return correct / pairs;
}

/// Mean over queries with a positive of 1/rank of the top-ranked positive.
/// Returns 0 when no query has a positive.
inline double mrr(std::span<const ScoredExample> ex) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& order : detail::rank_within_queries(ex)) {
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (ex[order[r]].label) {
        sum += 1.0 / static_cast<double>(r + 1);
        ++n;
        break;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

/// Where a positive's rank comes from in weighted MRR.
enum class RankSource {
  kModel,           // rank under the model's per-query ordering
  kLoggedPosition,  // the logged display position
};

/// Sum_i w_i / rank_i over positives, normalized by Sum_i w_i.
inline double weighted_mrr(std::span<const ScoredExample> ex, RankSource source = RankSource::kModel) {
  double num = 0.0;
  double den = 0.0;
  if (source == RankSource::kLoggedPosition) {
    for (const auto& e : ex) {
      if (!e.label) continue;
      num += e.weight / static_cast<double>(e.position);
      den += e.weight;
    }
  } else {
    for (const auto& order : detail::rank_within_queries(ex)) {
      for (std::size_t r = 0; r < order.size(); ++r) {
        const auto& e = ex[order[r]];
        if (!e.label) continue;
        num += e.weight / static_cast<double>(r + 1);
        den += e.weight;
      }
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

// ---- propensity weights -------------------------------------------------------

/// w_i = P(seen|1) / P(seen|p_i) from the learned position head.
inline std::vector<double> pacc_weights(std::span<const LogRecord> records, const PaccModel& model) {
  const auto table = model.propensities();
  std::vector<double> w(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) w[i] = table.at(1) / table.at(records[i].position);
  return w;
}

struct CounterfactualWeights {
  std::vector<double> weights;
  std::vector<std::size_t> clamped;  // records whose denominator fell below the floor
};

inline constexpr double kWeightDenominatorFloor = 1e-9;

/// w_i proportional to P(y^m=1 | f_i, p=r) / P(y^m=1 | f_i, p_i), from two
/// counterfactual forwards. Works for any model; position-blind models get 1.
template <ClickConversionModel M>
CounterfactualWeights pacc_pe_weights(std::span<const LogRecord> records, const M& model, Task task,
                                      int reference = 1) {
  CounterfactualWeights out;
  out.weights.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto [logged, swapped] = counterfactual_forward(model, records[i].features, records[i].position, reference);
    const double num = task == Task::kCtr ? swapped.p_ctr : swapped.p_cvr;
    double den = task == Task::kCtr ? logged.p_ctr : logged.p_cvr;
    if (den < kWeightDenominatorFloor) {
      den = kWeightDenominatorFloor;
      out.clamped.push_back(i);
    }
    out.weights[i] = num / den;
  }
  return out;
}

// ---- report --------------------------------------------------------------------

struct TaskMetrics {
  double auc = 0.0;
  double pauc = 0.0;
  double mrr = 0.0;
  double weighted_mrr = 0.0;
  std::size_t positives = 0;
};

struct MetricsReport {
  std::string model;
  TaskMetrics ctr;
  TaskMetrics cvr;
  std::size_t queries = 0;
  std::size_t clamped_weights = 0;

  const TaskMetrics& task(Task t) const { return t == Task::kCtr ? ctr : cvr; }
};

struct EvalOptions {
  RankSource rank_source = RankSource::kModel;
  int reference_position = 1;
};

inline TaskMetrics compute_task_metrics(std::span<const ScoredExample> ex, RankSource source) {
  TaskMetrics m;
  for (const auto& e : ex) m.positives += e.label ? 1 : 0;
  m.auc = auc(ex);
  m.pauc = pauc(ex);
  m.mrr = mrr(ex);
  m.weighted_mrr = weighted_mrr(ex, source);
  return m;
}

/// All four metrics for both tasks. Scores are the model's probabilities at the
/// logged position; weights come from the learned propensities (PACC) or the
/// counterfactual ratio against the reference position (every other model).
template <ClickConversionModel M>
MetricsReport evaluate(const M& model, std::span<const LogRecord> records, const EvalOptions& opt = {}) {
  MetricsReport rep;
  rep.model = to_string(model.config().kind);
  std::vector<ScoredExample> ctr(records.size());
  std::vector<ScoredExample> cvr(records.size());
  std::map<std::int64_t, int> queries;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto pred = model.forward(r.features, r.position);
    ctr[i] = {r.query_id, r.item_id, r.position, pred.p_ctr, r.click, 1.0};
    cvr[i] = {r.query_id, r.item_id, r.position, pred.p_cvr, r.conversion, 1.0};
    queries[r.query_id] = 1;
  }
  rep.queries = queries.size();
  if constexpr (std::is_same_v<M, PaccModel>) {
    const auto w = pacc_weights(records, model);
    for (std::size_t i = 0; i < records.size(); ++i) ctr[i].weight = cvr[i].weight = w[i];
  } else {
    const auto wc = pacc_pe_weights(records, model, Task::kCtr, opt.reference_position);
    const auto wv = pacc_pe_weights(records, model, Task::kCvr, opt.reference_position);
    for (std::size_t i = 0; i < records.size(); ++i) {
      ctr[i].weight = wc.weights[i];
      cvr[i].weight = wv.weights[i];
    }
    rep.clamped_weights = wc.clamped.size() + wv.clamped.size();
  }
  rep.ctr = compute_task_metrics(ctr, opt.rank_source);
  rep.cvr = compute_task_metrics(cvr, opt.rank_source);
  return rep;
}

inline MetricsReport evaluate(const AnyModel& model, std::span<const LogRecord> records, const EvalOptions& opt = {}) {
  return std::visit([&](const auto& m) { return evaluate(m, records, opt); }, model);
}

/// Long form: one row per (model, task, metric).
inline void write_metrics_csv(std::ostream& os, std::span<const MetricsReport> reports, bool header = true) {
  if (header) os << "model,task,metric,value\n";
  for (const auto& r : reports) {
    for (Task t : {Task::kCtr, Task::kCvr}) {
      const auto& m = r.task(t);
      const std::pair<const char*, double> rows[] = {
          {"weighted_mrr", m.weighted_mrr}, {"mrr", m.mrr}, {"pauc", m.pauc}, {"auc", m.auc}};
      for (const auto& [name, v] : rows) os << r.model << ',' << to_string(t) << ',' << name << ',' << csv::format(v, "%.10g") << '\n';
    }
  }
}

/// Table layout: one row per model, CTR block then CVR block.
inline void write_comparison_csv(std::ostream& os, std::span<const MetricsReport> reports) {
  os << "model,ctr_weighted_mrr,ctr_mrr,ctr_pauc,ctr_auc,cvr_weighted_mrr,cvr_mrr,cvr_pauc,cvr_auc\n";
  for (const auto& r : reports) {
    os << r.model;
    for (const auto* m : {&r.ctr, &r.cvr}) {
      for (double v : {m->weighted_mrr, m->mrr, m->pauc, m->auc}) os << ',' << csv::format(v, "%.10g");
    }
    os << '\n';
  }
}

inline void print_metrics_table(std::ostream& os, std::span<const MetricsReport> reports) {
  char line[256];
  std::snprintf(line, sizeof line, "%-10s | %8s %8s %8s %8s | %8s %8s %8s %8s\n", "model", "wMRR", "MRR", "PAUC",
                "AUC", "wMRR", "MRR", "PAUC", "AUC");
  os << std::string(10, ' ') << " | " << "CTR" << std::string(33, ' ') << "| CVR\n" << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-10s | %8.2f %8.2f %8.2f %8.2f | %8.2f %8.2f %8.2f %8.2f\n", r.model.c_str(),
                  100 * r.ctr.weighted_mrr, 100 * r.ctr.mrr, 100 * r.ctr.pauc, 100 * r.ctr.auc,
                  100 * r.cvr.weighted_mrr, 100 * r.cvr.mrr, 100 * r.cvr.pauc, 100 * r.cvr.auc);
    os << line;
  }
}

}  // namespace pacc
