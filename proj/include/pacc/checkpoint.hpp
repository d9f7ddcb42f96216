#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "pacc/csv.hpp"
#include "pacc/errors.hpp"
#include "pacc/models.hpp"

namespace pacc {

inline constexpr int kCheckpointVersion = 1;

/// Text checkpoint:
///
///   pacc-checkpoint 1
///   kind <pacc|pacc-pe|naive|posfeat>
///   feature_dim, max_position, embed_dim, tower_dim, attention_dim   (one "key value" line each)
///   dropout <real>
///   attention <dot|gate>
///   params <count>
///   then per parameter tensor, in the model's params() order:
///   tensor <name> <length>
///   <values, one per line, %.17g>
///
/// %.17g round-trips every double, so a loaded model predicts bit-identically.
inline void save_checkpoint(std::ostream& os, const AnyModel& model) {
  const ModelConfig& c = config_of(model);
  os << "pacc-checkpoint " << kCheckpointVersion << '\n';
  os << "kind " << to_string(c.kind) << '\n';
  os << "feature_dim " << c.feature_dim << '\n';
  os << "max_position " << c.max_position << '\n';
  os << "embed_dim " << c.embed_dim << '\n';
  os << "tower_dim " << c.tower_dim << '\n';
  os << "attention_dim " << c.attention_dim << '\n';
  os << "dropout " << csv::exact(c.dropout) << '\n';
  os << "attention " << (c.attention_mode == nn::AttentionMode::kDotProduct ? "dot" : "gate") << '\n';
  AnyModel copy = model;
  const auto params = params_of(copy);
  os << "params " << params.size() << '\n';
  for (const auto& p : params) {
    os << "tensor " << p.name << ' ' << p.value.size() << '\n';
    for (double v : p.value) os << csv::exact(v) << '\n';
  }
}

inline void save_checkpoint(const std::string& path, const AnyModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  save_checkpoint(os, model);
  if (!os) throw IoError("failed writing " + path);
}

namespace detail {

inline std::string expect_key(std::istream& is, const std::string& key) {
  std::string k, v;
  if (!(is >> k >> v) || k != key) throw CheckpointError("checkpoint: expected '" + key + "'");
  return v;
}

inline std::size_t expect_count(std::istream& is, const std::string& key) {
  const auto v = csv::parse_number<std::size_t>(expect_key(is, key));
  if (!v) throw CheckpointError("checkpoint: bad value for '" + key + "'");
  return *v;
}

}  // namespace detail

/// Reads a checkpoint; when `expected` is given its architecture must match.
inline AnyModel load_checkpoint(std::istream& is, const std::optional<ModelConfig>& expected = std::nullopt) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "pacc-checkpoint") throw CheckpointError("checkpoint: bad magic");
  if (version != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  ModelConfig c;
  try {
    c.kind = parse_model_kind(detail::expect_key(is, "kind"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  c.feature_dim = detail::expect_count(is, "feature_dim");
  c.max_position = detail::expect_count(is, "max_position");
  c.embed_dim = detail::expect_count(is, "embed_dim");
  c.tower_dim = detail::expect_count(is, "tower_dim");
  c.attention_dim = detail::expect_count(is, "attention_dim");
  const auto dropout = csv::parse_number<double>(detail::expect_key(is, "dropout"));
  if (!dropout) throw CheckpointError("checkpoint: bad dropout");
  c.dropout = *dropout;
  const auto att = detail::expect_key(is, "attention");
  if (att != "dot" && att != "gate") throw CheckpointError("checkpoint: bad attention mode");
  c.attention_mode = att == "dot" ? nn::AttentionMode::kDotProduct : nn::AttentionMode::kScalarGate;

  if (expected) {
    ModelConfig e = *expected;
    if (e.kind != c.kind || e.feature_dim != c.feature_dim || e.max_position != c.max_position ||
        e.embed_dim != c.embed_dim || e.tower_dim != c.tower_dim || e.attention_dim != c.attention_dim ||
        e.attention_mode != c.attention_mode) {
      throw CheckpointError("checkpoint: architecture does not match the configured model");
    }
  }

  AnyModel model = [&]() -> AnyModel {
    try {
      switch (c.kind) {
        case ModelKind::kPacc: return PaccModel(c);
        case ModelKind::kPaccPe: return PaccPeModel(c);
        default: return BaselineModel(c);
      }
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
  }();
  const auto params = params_of(model);
  if (detail::expect_count(is, "params") != params.size()) throw CheckpointError("checkpoint: parameter count mismatch");
  for (const auto& p : params) {
    std::string tag, name;
    std::size_t len = 0;
    if (!(is >> tag >> name >> len) || tag != "tensor") throw CheckpointError("checkpoint: expected tensor header");
    if (name != p.name || len != p.value.size()) {
      throw CheckpointError("checkpoint: tensor " + name + " does not match expected " + p.name + " of length " +
                            std::to_string(p.value.size()));
    }
    std::string tok;
    for (double& v : p.value) {
      if (!(is >> tok)) throw CheckpointError("checkpoint: truncated tensor " + name);
      const auto x = csv::parse_number<double>(tok);
      if (!x) throw CheckpointError("checkpoint: bad value in tensor " + name);
      v = *x;
    }
  }
  return model;
}

inline AnyModel load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return load_checkpoint(is, expected);
}

}  // namespace pacc
