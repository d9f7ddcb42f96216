#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pacc/csv.hpp"
#include "pacc/errors.hpp"
#include "pacc/nn/layers.hpp"
#include "pacc/nn/rng.hpp"

namespace pacc {

/// One logged impression.
struct LogRecord {
  std::int64_t query_id = 0;
  std::int64_t item_id = 0;
  int position = 1;  // 1-based
  int click = 0;
  int conversion = 0;
  std::vector<double> features;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

/// Examination probability per position; entry p-1 holds P(seen | position p).
struct PropensityTable {
  std::vector<double> probabilities;

  std::size_t max_position() const noexcept { return probabilities.size(); }
  double at(int position) const { return probabilities.at(static_cast<std::size_t>(position - 1)); }

  /// P(seen|p) / P(seen|1) for every position.
  std::vector<double> relative_to_top() const {
    std::vector<double> out(probabilities.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = probabilities[i] / probabilities[0];
    return out;
  }

  friend bool operator==(const PropensityTable&, const PropensityTable&) = default;
};

/// Parameters of the synthetic position-biased logging process.
struct GenConfig {
  std::size_t num_queries = 2000;
  std::size_t items_per_query = 10;
  std::size_t max_position = 10;
  std::size_t feature_dim = 8;
  double exam_exponent = 1.0;  // theta_p = (1/p)^exam_exponent
  // Click / conversion-given-click logits are w . [f; 1]; last entry is the bias.
  std::vector<double> ctr_weights;
  std::vector<double> cvr_weights;
  double policy_noise = 1.0;  // infinity = uniformly random ranking
  std::uint64_t seed = 1;
};

/// Default true weights for `dim` features. The first eight coefficients are
/// fixed; longer vectors continue with a deterministic decaying pattern.
inline std::vector<double> default_ctr_weights(std::size_t dim) {
  static constexpr std::array<double, 8> kBase{0.9, -0.7, 0.6, 0.5, -0.4, 0.3, 0.0, 0.0};
  std::vector<double> w(dim + 1, 0.0);
  for (std::size_t i = 0; i < dim; ++i) w[i] = i < kBase.size() ? kBase[i] : 0.2 * ((i % 2) ? -1.0 : 1.0) / (1.0 + 0.1 * i);
  w[dim] = -2.95;
  return w;
}

inline std::vector<double> default_cvr_weights(std::size_t dim) {
  static constexpr std::array<double, 8> kBase{0.0, 0.4, -0.8, 0.0, 0.7, -0.5, 0.6, 0.4};
  std::vector<double> w(dim + 1, 0.0);
  for (std::size_t i = 0; i < dim; ++i) w[i] = i < kBase.size() ? kBase[i] : 0.3 * ((i % 3) ? 1.0 : -1.0) / (1.0 + 0.1 * i);
  w[dim] = -1.6;
  return w;
}

inline void validate(const GenConfig& cfg) {
  std::vector<std::string> problems;
  if (cfg.num_queries == 0) problems.push_back("num_queries must be positive");
  if (cfg.items_per_query == 0) problems.push_back("items_per_query must be positive");
  if (cfg.items_per_query > cfg.max_position) problems.push_back("items_per_query exceeds max_position");
  if (cfg.feature_dim == 0) problems.push_back("feature_dim must be positive");
  if (!(cfg.exam_exponent >= 0.0) || std::isinf(cfg.exam_exponent)) problems.push_back("exam_exponent must be finite and >= 0");
  if (!(cfg.policy_noise >= 0.0)) problems.push_back("policy_noise must be >= 0");
  if (!cfg.ctr_weights.empty() && cfg.ctr_weights.size() != cfg.feature_dim + 1)
    problems.push_back("ctr_weights must have feature_dim + 1 entries");
  if (!cfg.cvr_weights.empty() && cfg.cvr_weights.size() != cfg.feature_dim + 1)
    problems.push_back("cvr_weights must have feature_dim + 1 entries");
  if (!problems.empty()) {
    std::string msg = "invalid generator config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
}

/// theta_p = (1/p)^gamma for p = 1..max_position.
inline PropensityTable examination_curve(std::size_t max_position, double gamma) {
  PropensityTable t;
  t.probabilities.resize(max_position);
  for (std::size_t p = 1; p <= max_position; ++p) t.probabilities[p - 1] = std::pow(1.0 / static_cast<double>(p), gamma);
  return t;
}

/// Rounds to the 9-significant-digit grid used by the log file format.
inline double quantize_feature(double v) {
  const std::string s = csv::format(v, "%.9g");
  return *csv::parse_number<double>(s);
}

inline double logistic_logit(std::span<const double> w, std::span<const double> f) {
  double z = w.back();
  for (std::size_t i = 0; i < f.size(); ++i) z += w[i] * f[i];
  return z;
}

struct GeneratedLogs {
  std::vector<LogRecord> records;
  PropensityTable propensities;
};

/// Synthetic position-biased click/conversion logs.
///
/// Each query draws K standard-normal feature vectors, ranks them by the true
/// click logit plus N(0, policy_noise^2) noise, then samples examination
/// Bernoulli(theta_p), click = seen * Bernoulli(sigmoid(w_ctr . [f;1])) and
/// conversion = click * Bernoulli(sigmoid(w_cvr . [f;1])). Every query uses its
/// own substream, so output is independent of generation order.
inline GeneratedLogs generate_logs(const GenConfig& cfg) {
  validate(cfg);
  const auto w_ctr = cfg.ctr_weights.empty() ? default_ctr_weights(cfg.feature_dim) : cfg.ctr_weights;
  const auto w_cvr = cfg.cvr_weights.empty() ? default_cvr_weights(cfg.feature_dim) : cfg.cvr_weights;
  GeneratedLogs out;
  out.propensities = examination_curve(cfg.max_position, cfg.exam_exponent);
  const std::size_t k = cfg.items_per_query;
  out.records.reserve(cfg.num_queries * k);
  const nn::Rng root = nn::Rng(cfg.seed).substream("generation");
  const bool random_policy = std::isinf(cfg.policy_noise);

  std::vector<std::vector<double>> feats(k);
  std::vector<double> score(k);
  std::vector<std::size_t> order(k);
  for (std::size_t q = 0; q < cfg.num_queries; ++q) {
    nn::Rng rng = root.substream("query", q);
    for (std::size_t j = 0; j < k; ++j) {
      feats[j].resize(cfg.feature_dim);
      for (double& x : feats[j]) x = quantize_feature(rng.normal());
      score[j] = random_policy ? rng.uniform() : logistic_logit(w_ctr, feats[j]) + cfg.policy_noise * rng.normal();
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    for (std::size_t rank = 0; rank < k; ++rank) {
      const std::size_t j = order[rank];
      LogRecord r;
      r.query_id = static_cast<std::int64_t>(q);
      r.item_id = static_cast<std::int64_t>(q * k + j);
      r.position = static_cast<int>(rank + 1);
      const bool seen = rng.bernoulli(out.propensities.at(r.position));
      const bool clicked_if_seen = rng.bernoulli(nn::sigmoid(logistic_logit(w_ctr, feats[j])));
      const bool converts_if_clicked = rng.bernoulli(nn::sigmoid(logistic_logit(w_cvr, feats[j])));
      r.click = seen && clicked_if_seen ? 1 : 0;
      r.conversion = r.click && converts_if_clicked ? 1 : 0;
      r.features = feats[j];
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

/// Binary indicator of a 1-based position.
inline std::vector<double> one_hot_position(int position, std::size_t max_position) {
  if (position < 1 || static_cast<std::size_t>(position) > max_position) {
    throw DomainError("one_hot_position: position " + std::to_string(position) + " outside [1, " +
                      std::to_string(max_position) + "]");
  }
  std::vector<double> v(max_position, 0.0);
  v[static_cast<std::size_t>(position - 1)] = 1.0;
  return v;
}

// ---- log file IO ----------------------------------------------------------

inline constexpr std::string_view kLogHeaderPrefix = "query_id,item_id,position,click,conversion";

inline void write_logs(std::ostream& os, std::span<const LogRecord> records) {
  const std::size_t d = records.empty() ? 0 : records.front().features.size();
  os << kLogHeaderPrefix;
  for (std::size_t i = 0; i < d; ++i) os << ",f" << i;
  os << '\n';
  std::string line;
  for (const auto& r : records) {
    if (r.features.size() != d) throw ShapeError("write_logs: records have inconsistent feature lengths");
    line.clear();
    line += std::to_string(r.query_id) + ',' + std::to_string(r.item_id) + ',' + std::to_string(r.position) +
            ',' + std::to_string(r.click) + ',' + std::to_string(r.conversion);
    for (double f : r.features) {
      line += ',';
      line += csv::format(f, "%.9g");
    }
    line += '\n';
    os << line;
  }
}

inline void write_logs(const std::string& path, std::span<const LogRecord> records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_logs(os, records);
  if (!os) throw IoError("failed writing " + path);
}

inline std::vector<LogRecord> read_logs(std::istream& is) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line)) throw ParseError("missing header", line_no);
  const auto header = csv::split(csv::trim(line));
  if (csv::trim(line).substr(0, kLogHeaderPrefix.size()) != kLogHeaderPrefix) {
    throw ParseError("header must start with " + std::string(kLogHeaderPrefix), line_no);
  }
  const std::size_t d = header.size() - 5;
  for (std::size_t i = 0; i < d; ++i) {
    if (header[5 + i] != "f" + std::to_string(i)) throw ParseError("unexpected header column " + std::string(header[5 + i]), line_no);
  }

  std::vector<LogRecord> out;
  while (std::getline(is, line)) {
    ++line_no;
    const auto trimmed = csv::trim(line);
    if (trimmed.empty()) continue;
    const auto cols = csv::split(trimmed);
    if (cols.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " columns, got " + std::to_string(cols.size()), line_no);
    }
    auto need_int = [&](std::string_view s, const char* name) {
      auto v = csv::parse_number<std::int64_t>(s);
      if (!v) throw ParseError(std::string("non-numeric ") + name + " '" + std::string(s) + "'", line_no);
      return *v;
    };
    LogRecord r;
    r.query_id = need_int(cols[0], "query_id");
    r.item_id = need_int(cols[1], "item_id");
    const auto pos = need_int(cols[2], "position");
    const auto click = need_int(cols[3], "click");
    const auto conv = need_int(cols[4], "conversion");
    if (pos < 1 || pos > std::numeric_limits<int>::max()) throw ParseError("position must be >= 1", line_no);
    if (click != 0 && click != 1) throw ParseError("click must be 0 or 1", line_no);
    if (conv != 0 && conv != 1) throw ParseError("conversion must be 0 or 1", line_no);
    if (conv == 1 && click == 0) throw ParseError("conversion=1 with click=0", line_no);
    r.position = static_cast<int>(pos);
    r.click = static_cast<int>(click);
    r.conversion = static_cast<int>(conv);
    r.features.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      auto v = csv::parse_number<double>(cols[5 + i]);
      if (!v || !std::isfinite(*v)) throw ParseError("non-numeric feature f" + std::to_string(i), line_no);
      r.features[i] = *v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<LogRecord> read_logs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_logs(is);
}

inline void write_propensities(const std::string& path, const PropensityTable& table) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "position,theta\n";
  for (std::size_t i = 0; i < table.probabilities.size(); ++i) {
    os << (i + 1) << ',' << csv::exact(table.probabilities[i]) << '\n';
  }
}

inline PropensityTable read_propensities(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line) || csv::trim(line) != "position,theta") throw ParseError("expected header position,theta", line_no);
  PropensityTable t;
  while (std::getline(is, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cols = csv::split(csv::trim(line));
    if (cols.size() != 2) throw ParseError("expected 2 columns", line_no);
    const auto p = csv::parse_number<std::int64_t>(cols[0]);
    const auto theta = csv::parse_number<double>(cols[1]);
    if (!p || !theta) throw ParseError("non-numeric field", line_no);
    if (*p != static_cast<std::int64_t>(t.probabilities.size()) + 1) throw ParseError("positions must be 1..P in order", line_no);
    t.probabilities.push_back(*theta);
  }
  return t;
}

// ---- splitting --------------------------------------------------------------

struct DatasetSplit {
  std::vector<LogRecord> train;
  std::vector<LogRecord> validation;
  std::vector<LogRecord> test;
};

/// Query-level split; every record of a query lands in the same part.
inline DatasetSplit split_dataset(std::span<const LogRecord> records, std::array<double, 3> fractions,
                                  std::uint64_t seed) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
    throw ConfigError("split_dataset: fractions must be nonnegative and sum to 1");
  }
  std::vector<std::int64_t> queries;
  std::unordered_set<std::int64_t> seen;
  for (const auto& r : records) {
    if (seen.insert(r.query_id).second) queries.push_back(r.query_id);
  }
  nn::Rng rng = nn::Rng(seed).substream("split");
  std::shuffle(queries.begin(), queries.end(), rng);
  const auto n = static_cast<double>(queries.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * fractions[0]));
  const auto n_val = std::min(queries.size() - std::min(n_train, queries.size()),
                              static_cast<std::size_t>(std::llround(n * fractions[1])));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= queries.size()) {
    throw ConfigError("split_dataset: a split would be empty (" + std::to_string(queries.size()) + " queries)");
  }
  std::unordered_map<std::int64_t, int> part;
  for (std::size_t i = 0; i < queries.size(); ++i) part[queries[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  DatasetSplit out;
  for (const auto& r : records) {
    switch (part[r.query_id]) {
      case 0: out.train.push_back(r); break;
      case 1: out.validation.push_back(r); break;
      default: out.test.push_back(r); break;
    }
  }
  return out;
}

}  // namespace pacc
