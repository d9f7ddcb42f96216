#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pacc/csv.hpp"
#include "pacc/errors.hpp"
#include "pacc/metrics.hpp"
#include "pacc/models.hpp"
#include "pacc/simlog.hpp"
#include "pacc/training.hpp"

namespace pacc {

/// Every knob of a pipeline run. Defaults are usable as-is.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  GenConfig gen{};
  std::array<double, 3> split{0.7, 0.1, 0.2};

  ModelConfig model{};
  TrainConfig train{};
  EvalOptions eval{};

  std::size_t swap_sample = 500;
  std::size_t impact_sample = 300;

  std::vector<std::uint64_t> bench_seeds{1};
  std::vector<ModelKind> bench_models{ModelKind::kPacc, ModelKind::kPaccPe, ModelKind::kNaive, ModelKind::kPosFeat};

  /// Propagates the top-level seed into every component that draws randomness.
  void sync_seeds() {
    gen.seed = seed;
    train.seed = seed;
    model.feature_dim = gen.feature_dim;
    model.max_position = gen.max_position;
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto part : csv::split(v)) {
    part = csv::trim(part);
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

template <class T>
T parse_value(const std::string& v) {
  if constexpr (std::is_same_v<T, double>) {
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  }
  const auto x = csv::parse_number<T>(v);
  if (!x) throw ConfigError("'" + v + "' is not a valid number");
  return *x;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["run.seed"] = [](RunConfig& c, const std::string& v) { c.seed = parse_value<std::uint64_t>(v); };
    t["run.out_dir"] = [](RunConfig& c, const std::string& v) { c.out_dir = v; };

    t["simulate.num_queries"] = [](RunConfig& c, const std::string& v) { c.gen.num_queries = parse_value<std::size_t>(v); };
    t["simulate.items_per_query"] = [](RunConfig& c, const std::string& v) { c.gen.items_per_query = parse_value<std::size_t>(v); };
    t["simulate.max_position"] = [](RunConfig& c, const std::string& v) { c.gen.max_position = parse_value<std::size_t>(v); };
    t["simulate.feature_dim"] = [](RunConfig& c, const std::string& v) { c.gen.feature_dim = parse_value<std::size_t>(v); };
    t["simulate.exam_exponent"] = [](RunConfig& c, const std::string& v) { c.gen.exam_exponent = parse_value<double>(v); };
    t["simulate.policy_noise"] = [](RunConfig& c, const std::string& v) { c.gen.policy_noise = parse_value<double>(v); };
    auto weights = [](std::vector<double>& dst, const std::string& v) {
      dst.clear();
      for (const auto& s : split_list(v)) dst.push_back(parse_value<double>(s));
    };
    t["simulate.ctr_weights"] = [weights](RunConfig& c, const std::string& v) { weights(c.gen.ctr_weights, v); };
    t["simulate.cvr_weights"] = [weights](RunConfig& c, const std::string& v) { weights(c.gen.cvr_weights, v); };
    t["simulate.split"] = [](RunConfig& c, const std::string& v) {
      const auto parts = split_list(v);
      if (parts.size() != 3) throw ConfigError("split needs three fractions");
      for (std::size_t i = 0; i < 3; ++i) c.split[i] = parse_value<double>(parts[i]);
    };

    t["model.embed_dim"] = [](RunConfig& c, const std::string& v) { c.model.embed_dim = parse_value<std::size_t>(v); };
    t["model.tower_dim"] = [](RunConfig& c, const std::string& v) { c.model.tower_dim = parse_value<std::size_t>(v); };
    t["model.attention_dim"] = [](RunConfig& c, const std::string& v) { c.model.attention_dim = parse_value<std::size_t>(v); };
    t["model.dropout"] = [](RunConfig& c, const std::string& v) { c.model.dropout = parse_value<double>(v); };
    t["model.attention"] = [](RunConfig& c, const std::string& v) {
      if (v == "dot") c.model.attention_mode = nn::AttentionMode::kDotProduct;
      else if (v == "gate") c.model.attention_mode = nn::AttentionMode::kScalarGate;
      else throw ConfigError("attention must be dot or gate");
    };
    t["model.kind"] = [](RunConfig& c, const std::string& v) { c.model.kind = parse_model_kind(v); };

    t["train.epochs"] = [](RunConfig& c, const std::string& v) { c.train.epochs = parse_value<std::size_t>(v); };
    t["train.batch_size"] = [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_value<std::size_t>(v); };
    t["train.learning_rate"] = [](RunConfig& c, const std::string& v) { c.train.optimizer.learning_rate = parse_value<double>(v); };
    t["train.optimizer"] = [](RunConfig& c, const std::string& v) {
      if (v == "adam") c.train.optimizer.kind = nn::OptimizerKind::kAdam;
      else if (v == "sgd") c.train.optimizer.kind = nn::OptimizerKind::kSgd;
      else throw ConfigError("optimizer must be adam or sgd");
    };
    t["train.restriction"] = [](RunConfig& c, const std::string& v) { c.train.restriction = parse_restriction_mode(v); };
    t["train.restriction_weight"] = [](RunConfig& c, const std::string& v) { c.train.restriction_weight = parse_value<double>(v); };
    t["train.patience"] = [](RunConfig& c, const std::string& v) { c.train.patience = parse_value<std::size_t>(v); };

    t["eval.rank_source"] = [](RunConfig& c, const std::string& v) {
      if (v == "model") c.eval.rank_source = RankSource::kModel;
      else if (v == "logged") c.eval.rank_source = RankSource::kLoggedPosition;
      else throw ConfigError("rank_source must be model or logged");
    };
    t["eval.reference_position"] = [](RunConfig& c, const std::string& v) { c.eval.reference_position = parse_value<int>(v); };

    t["swap.sample_n"] = [](RunConfig& c, const std::string& v) { c.swap_sample = parse_value<std::size_t>(v); };
    t["swap.impact_sample_n"] = [](RunConfig& c, const std::string& v) { c.impact_sample = parse_value<std::size_t>(v); };

    t["bench.seeds"] = [](RunConfig& c, const std::string& v) {
      c.bench_seeds.clear();
      for (const auto& s : split_list(v)) c.bench_seeds.push_back(parse_value<std::uint64_t>(s));
      if (c.bench_seeds.empty()) throw ConfigError("seeds list is empty");
    };
    t["bench.models"] = [](RunConfig& c, const std::string& v) {
      c.bench_models.clear();
      for (const auto& s : split_list(v)) c.bench_models.push_back(parse_model_kind(s));
      if (c.bench_models.empty()) throw ConfigError("models list is empty");
    };
    return t;
  }();
  return table;
}

}  // namespace detail

/// Names accepted in config files, as "section.key".
inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::setters()) out.push_back(k);
  return out;
}

/// Applies `key = value` overrides to `cfg`; every bad entry is collected and
/// reported together in one ConfigError.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& entries,
                            std::vector<std::string>* errors_out = nullptr) {
  std::vector<std::string> errors;
  for (const auto& [key, value] : entries) {
    const auto it = detail::setters().find(key);
    if (it == detail::setters().end()) {
      errors.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->second(cfg, value);
    } catch (const Error& e) {
      errors.push_back(key + ": " + e.what());
    }
  }
  if (errors_out) {
    errors_out->insert(errors_out->end(), errors.begin(), errors.end());
  } else if (!errors.empty()) {
    std::string msg = "config errors:";
    for (const auto& e : errors) msg += " [" + e + "]";
    throw ConfigError(msg);
  }
}

/// Cross-field checks run after all values are in.
inline std::vector<std::string> validate_run_config(RunConfig cfg) {
  std::vector<std::string> errors;
  cfg.sync_seeds();
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  };
  check([&] { validate(cfg.gen); });
  check([&] { validate(cfg.model); });
  check([&] { validate(cfg.train); });
  const double s = cfg.split[0] + cfg.split[1] + cfg.split[2];
  if (std::abs(s - 1.0) > 1e-9) errors.push_back("simulate.split must sum to 1");
  if (cfg.eval.reference_position < 1 || static_cast<std::size_t>(cfg.eval.reference_position) > cfg.gen.max_position) {
    errors.push_back("eval.reference_position out of range");
  }
  return errors;
}

/// Parses `[section]` headers and `key = value` lines ('#' starts a comment).
inline std::vector<std::pair<std::string, std::string>> parse_config_entries(std::istream& is,
                                                                               std::vector<std::string>& errors) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string s(csv::trim(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        errors.push_back("line " + std::to_string(line_no) + ": malformed section header");
        continue;
      }
      section = std::string(csv::trim(std::string_view(s).substr(1, s.size() - 2)));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    std::string key(csv::trim(std::string_view(s).substr(0, eq)));
    std::string value(csv::trim(std::string_view(s).substr(eq + 1)));
    if (section.empty()) {
      errors.push_back("line " + std::to_string(line_no) + ": key '" + key + "' outside any section");
      continue;
    }
    out.emplace_back(section + "." + key, value);
  }
  return out;
}

/// Loads a config file (empty path = defaults), applies overrides and validates.
inline RunConfig load_run_config(std::istream* is,
                                 const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  RunConfig cfg;
  std::vector<std::string> errors;
  if (is) apply_overrides(cfg, parse_config_entries(*is, errors), &errors);
  apply_overrides(cfg, overrides, &errors);
  if (errors.empty()) {
    const auto more = validate_run_config(cfg);
    errors.insert(errors.end(), more.begin(), more.end());
  }
  if (!errors.empty()) {
    std::string msg = "config errors:";
    for (const auto& e : errors) msg += " [" + e + "]";
    throw ConfigError(msg);
  }
  cfg.sync_seeds();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  if (path.empty()) return load_run_config(static_cast<std::istream*>(nullptr), overrides);
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  return load_run_config(&is, overrides);
}

}  // namespace pacc
