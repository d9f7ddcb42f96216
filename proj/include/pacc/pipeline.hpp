#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "pacc/analysis.hpp"
#include "pacc/checkpoint.hpp"
#include "pacc/config.hpp"
#include "pacc/metrics.hpp"
#include "pacc/models.hpp"
#include "pacc/simlog.hpp"
#include "pacc/training.hpp"

namespace pacc::pipeline {

namespace fs = std::filesystem;

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

/// A file path, or a directory holding `default_name`.
inline fs::path resolve_data(const fs::path& p, const std::string& default_name) {
  return fs::is_directory(p) ? p / default_name : p;
}

/// Writes logs.csv, propensity.csv and the train/valid/test split.
inline DatasetSplit cmd_simulate(const RunConfig& cfg, const fs::path& out_dir) {
  ensure_dir(out_dir);
  const auto logs = generate_logs(cfg.gen);
  write_logs((out_dir / "logs.csv").string(), logs.records);
  write_propensities((out_dir / "propensity.csv").string(), logs.propensities);
  auto split = split_dataset(logs.records, cfg.split, cfg.seed);
  write_logs((out_dir / "train.csv").string(), split.train);
  write_logs((out_dir / "valid.csv").string(), split.validation);
  write_logs((out_dir / "test.csv").string(), split.test);
  return split;
}

inline ModelConfig model_config_for(const RunConfig& cfg, ModelKind kind, std::size_t feature_dim) {
  ModelConfig m = cfg.model;
  m.kind = kind;
  m.feature_dim = feature_dim;
  m.max_position = cfg.gen.max_position;
  return m;
}

/// Trains one model from `data_dir`/train.csv with validation on valid.csv.
/// Writes <model>.ckpt and <model>_train_report.csv into `out_dir`.
inline TrainResult cmd_train(const RunConfig& cfg, const fs::path& data_dir, ModelKind kind, const fs::path& out_dir) {
  const auto train_set = read_logs(resolve_data(data_dir, "train.csv").string());
  const auto valid_set = read_logs(fs::is_directory(data_dir) ? (data_dir / "valid.csv").string()
                                                              : (data_dir.parent_path() / "valid.csv").string());
  if (train_set.empty()) throw ConfigError("training data is empty");
  ensure_dir(out_dir);
  auto result = train_model(model_config_for(cfg, kind, train_set.front().features.size()), train_set, valid_set, cfg.train);
  const auto ckpt = out_dir / (to_string(kind) + ".ckpt");
  save_checkpoint(ckpt.string(), result.model);
  result.report.checkpoint_path = ckpt.string();
  auto os = open_output(out_dir / (to_string(kind) + "_train_report.csv"));
  write_train_report_csv(os, result.report);
  return result;
}

/// Evaluates a checkpoint on test data; writes metrics.csv and prints a table.
inline MetricsReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
                              const fs::path& out_dir, std::ostream* table = &std::cout) {
  const auto model = load_checkpoint(checkpoint.string());
  const auto records = read_logs(resolve_data(data, "test.csv").string());
  const auto report = evaluate(model, records, cfg.eval);
  ensure_dir(out_dir);
  auto os = open_output(out_dir / "metrics.csv");
  write_metrics_csv(os, std::span(&report, 1));
  if (table) print_metrics_table(*table, std::span(&report, 1));
  return report;
}

struct SwapOutputs {
  std::vector<SwapPoint> points;
  SwapImpactCurve curve;
};

inline SwapOutputs run_swap(const RunConfig& cfg, const AnyModel& model, std::span<const LogRecord> records) {
  SwapOutputs out;
  out.points = swap_study(model, records, std::min(cfg.swap_sample, records.size()), cfg.seed);
  const auto idx = sample_indices(records.size(), std::min(cfg.impact_sample, records.size()), cfg.seed + 1);
  std::vector<LogRecord> impact_records;
  for (std::size_t i : idx) impact_records.push_back(records[i]);
  out.curve = swap_impact_curve(model, impact_records);
  return out;
}

/// Position-swap study for a checkpoint; writes scatter/impact CSVs and SVG figures.
inline SwapOutputs cmd_swap(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
                            const fs::path& out_dir) {
  const auto model = load_checkpoint(checkpoint.string());
  const auto records = read_logs(resolve_data(data, "test.csv").string());
  auto out = run_swap(cfg, model, records);
  emit_figures(out.points, out.curve, out_dir.string(), to_string(kind_of(model)));
  return out;
}

struct BenchRow {
  std::uint64_t seed = 0;
  MetricsReport metrics;
  double bias_ctr = 0.0;
  double bias_cvr = 0.0;
};

/// simulate -> train every configured model -> evaluate + swap bias, for each seed.
/// Writes comparison.csv (seed means, one row per model), comparison_by_seed.csv,
/// metrics.csv and bias_scores.csv.
inline std::vector<BenchRow> cmd_bench(const RunConfig& base, const fs::path& out_dir, std::ostream* log = nullptr) {
  ensure_dir(out_dir);
  std::vector<BenchRow> rows;
  for (std::uint64_t seed : base.bench_seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    cfg.sync_seeds();
    const auto logs = generate_logs(cfg.gen);
    const auto split = split_dataset(logs.records, cfg.split, cfg.seed);
    for (ModelKind kind : cfg.bench_models) {
      if (log) *log << "seed " << seed << ": training " << to_string(kind) << '\n';
      auto result = train_model(model_config_for(cfg, kind, cfg.gen.feature_dim), split.train, split.validation, cfg.train);
      BenchRow row;
      row.seed = seed;
      row.metrics = evaluate(result.model, split.test, cfg.eval);
      const auto points = swap_study(result.model, split.test, std::min(cfg.swap_sample, split.test.size()), seed);
      row.bias_ctr = bias_score(points, Task::kCtr);
      row.bias_cvr = bias_score(points, Task::kCvr);
      rows.push_back(std::move(row));
    }
  }

  // Seed means in model order.
  std::vector<MetricsReport> means;
  for (ModelKind kind : base.bench_models) {
    MetricsReport m;
    m.model = to_string(kind);
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.metrics.model != m.model) continue;
      ++n;
      for (auto [dst, src] : {std::pair{&m.ctr, &r.metrics.ctr}, std::pair{&m.cvr, &r.metrics.cvr}}) {
        dst->auc += src->auc;
        dst->pauc += src->pauc;
        dst->mrr += src->mrr;
        dst->weighted_mrr += src->weighted_mrr;
      }
    }
    const double count = static_cast<double>(n);
    for (auto* t : {&m.ctr, &m.cvr}) {
      t->auc /= count;
      t->pauc /= count;
      t->mrr /= count;
      t->weighted_mrr /= count;
    }
    means.push_back(m);
  }
  {
    auto os = open_output(out_dir / "comparison.csv");
    write_comparison_csv(os, means);
  }
  {
    auto os = open_output(out_dir / "comparison_by_seed.csv");
    os << "seed,";
    std::vector<MetricsReport> single(1);
    std::ostringstream header;
    write_comparison_csv(header, {});
    os << header.str();
    for (const auto& r : rows) {
      std::ostringstream line;
      single[0] = r.metrics;
      write_comparison_csv(line, single);
      const std::string body = line.str();
      os << r.seed << ',' << body.substr(body.find('\n') + 1);
    }
  }
  {
    auto os = open_output(out_dir / "metrics.csv");
    os << "seed,model,task,metric,value\n";
    for (const auto& r : rows) {
      std::ostringstream body;
      write_metrics_csv(body, std::span(&r.metrics, 1), false);
      std::istringstream lines(body.str());
      for (std::string l; std::getline(lines, l);) os << r.seed << ',' << l << '\n';
    }
  }
  {
    auto os = open_output(out_dir / "bias_scores.csv");
    os << "seed,model,bias_ctr,bias_cvr\n";
    for (const auto& r : rows) {
      os << r.seed << ',' << r.metrics.model << ',' << csv::format(r.bias_ctr, "%.10g") << ','
         << csv::format(r.bias_cvr, "%.10g") << '\n';
    }
  }
  if (log) print_metrics_table(*log, means);
  return rows;
}

}  // namespace pacc::pipeline
