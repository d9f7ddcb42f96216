#pragma once

#include <array>
#include <concepts>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>

#include "pacc/errors.hpp"
#include "pacc/nn/attention.hpp"
#include "pacc/nn/layers.hpp"
#include "pacc/nn/params.hpp"
#include "pacc/nn/rng.hpp"
#include "pacc/simlog.hpp"

namespace pacc {

using Vector = nn::Vector;

enum class ModelKind { kPacc, kPaccPe, kNaive, kPosFeat };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kPacc: return "pacc";
    case ModelKind::kPaccPe: return "pacc-pe";
    case ModelKind::kNaive: return "naive";
    case ModelKind::kPosFeat: return "posfeat";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "pacc") return ModelKind::kPacc;
  if (s == "pacc-pe") return ModelKind::kPaccPe;
  if (s == "naive") return ModelKind::kNaive;
  if (s == "posfeat") return ModelKind::kPosFeat;
  throw ConfigError("unknown model kind '" + std::string(s) + "' (expected pacc, pacc-pe, naive, posfeat)");
}

/// Architecture hyperparameters. The information vectors passed into attention
/// (INFO_ctr, INFO_pos) share the tower width so both attention tokens have the
/// same dimension.
struct ModelConfig {
  ModelKind kind = ModelKind::kPacc;
  std::size_t feature_dim = 8;
  std::size_t max_position = 10;
  std::size_t embed_dim = 32;
  std::size_t tower_dim = 32;
  std::size_t attention_dim = 16;
  double dropout = 0.2;
  nn::AttentionMode attention_mode = nn::AttentionMode::kDotProduct;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void validate(const ModelConfig& c) {
  if (c.feature_dim == 0 || c.max_position == 0 || c.embed_dim == 0 || c.tower_dim == 0 || c.attention_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

/// Per-impression output bundle. The three factor fields are set by PACC only.
template <class T>
struct BasicPrediction {
  T p_ctr = T(0);
  T p_cvr = T(0);
  std::optional<T> p_seen;
  std::optional<T> p_ctr_given_seen;
  std::optional<T> p_cvr_given_click_seen;

  friend bool operator==(const BasicPrediction&, const BasicPrediction&) = default;
};

using Prediction = BasicPrediction<double>;

namespace detail {

inline nn::ForwardMode make_mode(const ModelConfig& cfg, bool training, nn::Rng* rng) {
  return nn::ForwardMode{training, cfg.dropout, rng};
}

template <class T>
void check_features(std::span<const T> f, const ModelConfig& cfg) {
  if (f.size() != cfg.feature_dim) {
    throw ShapeError("model forward: expected " + std::to_string(cfg.feature_dim) + " features, got " +
                     std::to_string(f.size()));
  }
}

template <class T>
nn::BasicVector<T> one_hot(int position, std::size_t max_position) {
  const Vector h = one_hot_position(position, max_position);
  return nn::BasicVector<T>(h.begin(), h.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PACC: p_ctr = P(seen|p) * P(click|f, seen); p_cvr = p_ctr * P(buy|f, click, seen).
// ---------------------------------------------------------------------------
template <class T = double>
class BasicPaccModel {
 public:
  using Vec = nn::BasicVector<T>;

  static constexpr ModelKind kKind = ModelKind::kPacc;

  struct Cache {
    bool valid = false;
    Vec features;
    typename nn::BasicTower<T>::Cache ctr_tower, cvr_tower;
    typename nn::BasicReluBlock<T>::Cache info_ctr;
    typename nn::BasicAttentionUnit<T>::Cache cvr_attention;
    typename nn::BasicProbabilityHead<T>::Cache ctr_head, cvr_head, position_head;
    T p_seen = T(0), p_ctr_given_seen = T(0), p_cvr_given_click_seen = T(0);
  };

  explicit BasicPaccModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    cfg_.kind = kKind;
    shared_embed = nn::BasicDenseLayer<T>(cfg_.feature_dim, cfg_.embed_dim);
    ctr_tower = nn::BasicTower<T>(cfg_.embed_dim, cfg_.tower_dim);
    cvr_tower = nn::BasicTower<T>(cfg_.embed_dim, cfg_.tower_dim);
    info_ctr = nn::BasicReluBlock<T>(cfg_.tower_dim, cfg_.tower_dim);
    cvr_attention = nn::BasicAttentionUnit<T>(cfg_.tower_dim, cfg_.attention_dim, cfg_.attention_mode);
    ctr_head = nn::BasicProbabilityHead<T>(cfg_.tower_dim);
    cvr_head = nn::BasicProbabilityHead<T>(cfg_.attention_dim);
    position_head = nn::BasicProbabilityHead<T>(cfg_.max_position);
  }

  const ModelConfig& config() const noexcept { return cfg_; }

  void init(nn::Rng& rng) {
    shared_embed.init(rng);
    ctr_tower.init(rng);
    cvr_tower.init(rng);
    info_ctr.dense.init(rng);
    cvr_attention.init(rng);
    ctr_head.dense.init(rng);
    cvr_head.dense.init(rng);
    position_head.dense.init(rng);
  }

  BasicPrediction<T> forward(std::span<const T> features, int position, bool training = false,
                     nn::Rng* rng = nullptr, Cache* cache = nullptr) const {
    detail::check_features(features, cfg_);
    const auto mode = detail::make_mode(cfg_, training, rng);
    const Vec one_hot = detail::one_hot<T>(position, cfg_.max_position);
    const Vec v = shared_embed.forward(features);
    const Vec t_ctr = ctr_tower.forward(v, mode, cache ? &cache->ctr_tower : nullptr);
    const Vec t_cvr = cvr_tower.forward(v, mode, cache ? &cache->cvr_tower : nullptr);
    const T ctr_given_seen = ctr_head.forward(t_ctr, cache ? &cache->ctr_head : nullptr);
    const Vec info = info_ctr.forward(t_ctr, mode, cache ? &cache->info_ctr : nullptr);
    const Vec a_cvr = cvr_attention.forward(t_cvr, info, cache ? &cache->cvr_attention : nullptr);
    const T cvr_given_click = cvr_head.forward(a_cvr, cache ? &cache->cvr_head : nullptr);
    const T seen = position_head.forward(one_hot, cache ? &cache->position_head : nullptr);

    BasicPrediction<T> out;
    out.p_seen = seen;
    out.p_ctr_given_seen = ctr_given_seen;
    out.p_cvr_given_click_seen = cvr_given_click;
    out.p_ctr = seen * ctr_given_seen;
    out.p_cvr = out.p_ctr * cvr_given_click;
    if (cache) {
      cache->valid = true;
      cache->features.assign(features.begin(), features.end());
      cache->p_seen = seen;
      cache->p_ctr_given_seen = ctr_given_seen;
      cache->p_cvr_given_click_seen = cvr_given_click;
    }
    return out;
  }

  /// Accumulates dL/dθ given dL/dp_ctr and dL/dp_cvr for the cached forward.
  void backward(const Cache& c, T d_ctr, T d_cvr) {
    if (!c.valid) throw StateError("backward called without a cached forward pass");
    const T p_ctr = c.p_seen * c.p_ctr_given_seen;
    const T d_ctr_total = d_ctr + d_cvr * c.p_cvr_given_click_seen;
    const T d_cvr_factor = d_cvr * p_ctr;
    const T d_seen = d_ctr_total * c.p_ctr_given_seen;
    const T d_ctr_factor = d_ctr_total * c.p_seen;

    position_head.backward(c.position_head, d_seen);
    Vec d_t_ctr = ctr_head.backward(c.ctr_head, d_ctr_factor);
    const Vec d_a_cvr = cvr_head.backward(c.cvr_head, d_cvr_factor);
    const auto d_tokens = cvr_attention.backward(c.cvr_attention, d_a_cvr);
    nn::add_into(d_t_ctr, info_ctr.backward(c.info_ctr, d_tokens[1]));
    Vec d_v = ctr_tower.backward(c.ctr_tower, d_t_ctr);
    nn::add_into(d_v, cvr_tower.backward(c.cvr_tower, d_tokens[0]));
    shared_embed.backward(c.features, d_v);
  }

  /// Parameter order (also the checkpoint order).
  nn::BasicParamList<T> params() {
    nn::BasicParamList<T> out;
    shared_embed.collect(out, "shared_embed");
    ctr_tower.collect(out, "ctr_tower");
    cvr_tower.collect(out, "cvr_tower");
    info_ctr.dense.collect(out, "info_ctr");
    cvr_attention.collect(out, "cvr_attention");
    ctr_head.dense.collect(out, "ctr_head");
    cvr_head.dense.collect(out, "cvr_head");
    position_head.dense.collect(out, "position_head");
    return out;
  }

  /// Learned P(seen | p) for every position.
  PropensityTable propensities() const {
    PropensityTable t;
    for (std::size_t p = 1; p <= cfg_.max_position; ++p) {
      const Vec h = detail::one_hot<T>(static_cast<int>(p), cfg_.max_position);
      t.probabilities.push_back(static_cast<double>(position_head.forward(h, nullptr)));
    }
    return t;
  }

  nn::BasicDenseLayer<T> shared_embed;
  nn::BasicTower<T> ctr_tower, cvr_tower;
  nn::BasicReluBlock<T> info_ctr;
  nn::BasicAttentionUnit<T> cvr_attention;
  nn::BasicProbabilityHead<T> ctr_head, cvr_head, position_head;

 private:
  ModelConfig cfg_;
};

using PaccModel = BasicPaccModel<double>;

// ---------------------------------------------------------------------------
// PACC-PE: position enters as an embedding mixed into the click path by attention.
// ---------------------------------------------------------------------------
template <class T = double>
class BasicPaccPeModel {
 public:
  using Vec = nn::BasicVector<T>;

  static constexpr ModelKind kKind = ModelKind::kPaccPe;

  struct Cache {
    bool valid = false;
    Vec features;
    Vec one_hot;
    typename nn::BasicTower<T>::Cache pos_tower, ctr_tower, cvr_tower;
    typename nn::BasicReluBlock<T>::Cache info_pos, info_ctr;
    typename nn::BasicAttentionUnit<T>::Cache ctr_attention, cvr_attention;
    typename nn::BasicProbabilityHead<T>::Cache ctr_head, cvr_head;
  };

  explicit BasicPaccPeModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    cfg_.kind = kKind;
    shared_embed = nn::BasicDenseLayer<T>(cfg_.feature_dim, cfg_.embed_dim);
    pos_tower = nn::BasicTower<T>(cfg_.max_position, cfg_.tower_dim);
    info_pos = nn::BasicReluBlock<T>(cfg_.tower_dim, cfg_.tower_dim);
    ctr_tower = nn::BasicTower<T>(cfg_.embed_dim, cfg_.tower_dim);
    cvr_tower = nn::BasicTower<T>(cfg_.embed_dim, cfg_.tower_dim);
    ctr_attention = nn::BasicAttentionUnit<T>(cfg_.tower_dim, cfg_.attention_dim, cfg_.attention_mode);
    info_ctr = nn::BasicReluBlock<T>(cfg_.attention_dim, cfg_.tower_dim);
    cvr_attention = nn::BasicAttentionUnit<T>(cfg_.tower_dim, cfg_.attention_dim, cfg_.attention_mode);
    ctr_head = nn::BasicProbabilityHead<T>(cfg_.attention_dim);
    cvr_head = nn::BasicProbabilityHead<T>(cfg_.attention_dim);
  }

  const ModelConfig& config() const noexcept { return cfg_; }

  void init(nn::Rng& rng) {
    shared_embed.init(rng);
    pos_tower.init(rng);
    info_pos.dense.init(rng);
    ctr_tower.init(rng);
    cvr_tower.init(rng);
    ctr_attention.init(rng);
    info_ctr.dense.init(rng);
    cvr_attention.init(rng);
    ctr_head.dense.init(rng);
    cvr_head.dense.init(rng);
  }

  // INFO_ctr is taken from the position-aware click representation A_ctr, so
  // the conversion path sees position only through the click path.
  BasicPrediction<T> forward(std::span<const T> features, int position, bool training = false,
                     nn::Rng* rng = nullptr, Cache* cache = nullptr) const {
    detail::check_features(features, cfg_);
    const auto mode = detail::make_mode(cfg_, training, rng);
    const Vec one_hot = detail::one_hot<T>(position, cfg_.max_position);
    const Vec v = shared_embed.forward(features);
    const Vec t_pos = pos_tower.forward(one_hot, mode, cache ? &cache->pos_tower : nullptr);
    const Vec info_p = info_pos.forward(t_pos, mode, cache ? &cache->info_pos : nullptr);
    const Vec t_ctr = ctr_tower.forward(v, mode, cache ? &cache->ctr_tower : nullptr);
    const Vec t_cvr = cvr_tower.forward(v, mode, cache ? &cache->cvr_tower : nullptr);
    const Vec a_ctr = ctr_attention.forward(t_ctr, info_p, cache ? &cache->ctr_attention : nullptr);
    const Vec info_c = info_ctr.forward(a_ctr, mode, cache ? &cache->info_ctr : nullptr);
    const Vec a_cvr = cvr_attention.forward(t_cvr, info_c, cache ? &cache->cvr_attention : nullptr);

    BasicPrediction<T> out;
    out.p_ctr = ctr_head.forward(a_ctr, cache ? &cache->ctr_head : nullptr);
    out.p_cvr = cvr_head.forward(a_cvr, cache ? &cache->cvr_head : nullptr);
    if (cache) {
      cache->valid = true;
      cache->features.assign(features.begin(), features.end());
      cache->one_hot = one_hot;
    }
    return out;
  }

  void backward(const Cache& c, T d_ctr, T d_cvr) {
    if (!c.valid) throw StateError("backward called without a cached forward pass");
    Vec d_a_ctr = ctr_head.backward(c.ctr_head, d_ctr);
    const Vec d_a_cvr = cvr_head.backward(c.cvr_head, d_cvr);
    const auto d_cvr_tokens = cvr_attention.backward(c.cvr_attention, d_a_cvr);
    nn::add_into(d_a_ctr, info_ctr.backward(c.info_ctr, d_cvr_tokens[1]));
    const auto d_ctr_tokens = ctr_attention.backward(c.ctr_attention, d_a_ctr);
    pos_tower.backward(c.pos_tower, info_pos.backward(c.info_pos, d_ctr_tokens[1]));
    Vec d_v = ctr_tower.backward(c.ctr_tower, d_ctr_tokens[0]);
    nn::add_into(d_v, cvr_tower.backward(c.cvr_tower, d_cvr_tokens[0]));
    shared_embed.backward(c.features, d_v);
  }

  nn::BasicParamList<T> params() {
    nn::BasicParamList<T> out;
    shared_embed.collect(out, "shared_embed");
    pos_tower.collect(out, "pos_tower");
    info_pos.dense.collect(out, "info_pos");
    ctr_tower.collect(out, "ctr_tower");
    cvr_tower.collect(out, "cvr_tower");
    ctr_attention.collect(out, "ctr_attention");
    info_ctr.dense.collect(out, "info_ctr");
    cvr_attention.collect(out, "cvr_attention");
    ctr_head.dense.collect(out, "ctr_head");
    cvr_head.dense.collect(out, "cvr_head");
    return out;
  }

  nn::BasicDenseLayer<T> shared_embed;
  nn::BasicTower<T> pos_tower;
  nn::BasicReluBlock<T> info_pos;
  nn::BasicTower<T> ctr_tower, cvr_tower;
  nn::BasicAttentionUnit<T> ctr_attention;
  nn::BasicReluBlock<T> info_ctr;
  nn::BasicAttentionUnit<T> cvr_attention;
  nn::BasicProbabilityHead<T> ctr_head, cvr_head;

 private:
  ModelConfig cfg_;
};

using PaccPeModel = BasicPaccPeModel<double>;

// ---------------------------------------------------------------------------
// Baselines: a plain click/conversion multi-task model that either ignores
// position (naive) or appends the one-hot position to the features (posfeat).
// ---------------------------------------------------------------------------
template <class T = double>
class BasicBaselineModel {
 public:
  using Vec = nn::BasicVector<T>;

  struct Cache {
    bool valid = false;
    Vec input;
    typename nn::BasicTower<T>::Cache ctr_tower, cvr_tower;
    typename nn::BasicReluBlock<T>::Cache info_ctr;
    typename nn::BasicAttentionUnit<T>::Cache cvr_attention;
    typename nn::BasicProbabilityHead<T>::Cache ctr_head, cvr_head;
  };

  explicit BasicBaselineModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    if (cfg_.kind != ModelKind::kNaive && cfg_.kind != ModelKind::kPosFeat) {
      throw ConfigError("BaselineModel requires kind naive or posfeat");
    }
    shared_embed = nn::BasicDenseLayer<T>(input_dim(), cfg_.embed_dim);
    ctr_tower = nn::BasicTower<T>(cfg_.embed_dim, cfg_.tower_dim);
    cvr_tower = nn::BasicTower<T>(cfg_.embed_dim, cfg_.tower_dim);
    info_ctr = nn::BasicReluBlock<T>(cfg_.tower_dim, cfg_.tower_dim);
    cvr_attention = nn::BasicAttentionUnit<T>(cfg_.tower_dim, cfg_.attention_dim, cfg_.attention_mode);
    ctr_head = nn::BasicProbabilityHead<T>(cfg_.tower_dim);
    cvr_head = nn::BasicProbabilityHead<T>(cfg_.attention_dim);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  ModelKind kind() const noexcept { return cfg_.kind; }

  std::size_t input_dim() const noexcept {
    return cfg_.feature_dim + (cfg_.kind == ModelKind::kPosFeat ? cfg_.max_position : 0);
  }

  void init(nn::Rng& rng) {
    shared_embed.init(rng);
    ctr_tower.init(rng);
    cvr_tower.init(rng);
    info_ctr.dense.init(rng);
    cvr_attention.init(rng);
    ctr_head.dense.init(rng);
    cvr_head.dense.init(rng);
  }

  BasicPrediction<T> forward(std::span<const T> features, int position, bool training = false,
                     nn::Rng* rng = nullptr, Cache* cache = nullptr) const {
    detail::check_features(features, cfg_);
    const auto mode = detail::make_mode(cfg_, training, rng);
    // Range-check the position for both variants; only posfeat consumes it.
    Vec one_hot = detail::one_hot<T>(position, cfg_.max_position);
    Vec input(features.begin(), features.end());
    if (cfg_.kind == ModelKind::kPosFeat) input.insert(input.end(), one_hot.begin(), one_hot.end());

    const Vec v = shared_embed.forward(input);
    const Vec t_ctr = ctr_tower.forward(v, mode, cache ? &cache->ctr_tower : nullptr);
    const Vec t_cvr = cvr_tower.forward(v, mode, cache ? &cache->cvr_tower : nullptr);
    const Vec info = info_ctr.forward(t_ctr, mode, cache ? &cache->info_ctr : nullptr);
    const Vec a_cvr = cvr_attention.forward(t_cvr, info, cache ? &cache->cvr_attention : nullptr);
    BasicPrediction<T> out;
    out.p_ctr = ctr_head.forward(t_ctr, cache ? &cache->ctr_head : nullptr);
    out.p_cvr = cvr_head.forward(a_cvr, cache ? &cache->cvr_head : nullptr);
    if (cache) {
      cache->valid = true;
      cache->input = std::move(input);
    }
    return out;
  }

  void backward(const Cache& c, T d_ctr, T d_cvr) {
    if (!c.valid) throw StateError("backward called without a cached forward pass");
    Vec d_t_ctr = ctr_head.backward(c.ctr_head, d_ctr);
    const Vec d_a_cvr = cvr_head.backward(c.cvr_head, d_cvr);
    const auto d_tokens = cvr_attention.backward(c.cvr_attention, d_a_cvr);
    nn::add_into(d_t_ctr, info_ctr.backward(c.info_ctr, d_tokens[1]));
    Vec d_v = ctr_tower.backward(c.ctr_tower, d_t_ctr);
    nn::add_into(d_v, cvr_tower.backward(c.cvr_tower, d_tokens[0]));
    shared_embed.backward(c.input, d_v);
  }

  nn::BasicParamList<T> params() {
    nn::BasicParamList<T> out;
    shared_embed.collect(out, "shared_embed");
    ctr_tower.collect(out, "ctr_tower");
    cvr_tower.collect(out, "cvr_tower");
    info_ctr.dense.collect(out, "info_ctr");
    cvr_attention.collect(out, "cvr_attention");
    ctr_head.dense.collect(out, "ctr_head");
    cvr_head.dense.collect(out, "cvr_head");
    return out;
  }

  nn::BasicDenseLayer<T> shared_embed;
  nn::BasicTower<T> ctr_tower, cvr_tower;
  nn::BasicReluBlock<T> info_ctr;
  nn::BasicAttentionUnit<T> cvr_attention;
  nn::BasicProbabilityHead<T> ctr_head, cvr_head;

 private:
  ModelConfig cfg_;
};

using BaselineModel = BasicBaselineModel<double>;

/// Anything trainable and evaluable by the rest of the toolkit.
template <class M>
concept ClickConversionModel = requires(M m, const M cm, const typename M::Cache& c, std::span<const double> f,
                                        nn::Rng& rng) {
  typename M::Cache;
  { cm.config() } -> std::convertible_to<const ModelConfig&>;
  { cm.forward(f, 1, false, &rng, nullptr) } -> std::same_as<Prediction>;
  { m.backward(c, 0.0, 0.0) };
  { m.params() } -> std::same_as<nn::ParamList>;
  { m.init(rng) };
};

static_assert(ClickConversionModel<PaccModel>);
static_assert(ClickConversionModel<PaccPeModel>);
static_assert(ClickConversionModel<BaselineModel>);

/// Copy of `model` with parameters converted to scalar type U.
template <class U, template <class> class M, class T>
M<U> with_scalar(const M<T>& model) {
  M<U> out(model.config());
  M<T> source = model;
  nn::copy_values(out.params(), source.params());
  return out;
}

template <ClickConversionModel M>
void zero_grad(M& model) {
  nn::zero_grads(model.params());
}

/// Two inference-mode forwards that differ only in the position input.
template <ClickConversionModel M>
std::pair<Prediction, Prediction> counterfactual_forward(const M& model, std::span<const double> features,
                                                         int logged_position, int swap_position) {
  return {model.forward(features, logged_position), model.forward(features, swap_position)};
}

using AnyModel = std::variant<PaccModel, PaccPeModel, BaselineModel>;

/// Builds and initializes a model of `cfg.kind` from the "init" substream of `seed`.
inline AnyModel make_model(const ModelConfig& cfg, std::uint64_t seed) {
  nn::Rng rng = nn::Rng(seed).substream("init");
  auto build = [&]() -> AnyModel {
    switch (cfg.kind) {
      case ModelKind::kPacc: return PaccModel(cfg);
      case ModelKind::kPaccPe: return PaccPeModel(cfg);
      default: return BaselineModel(cfg);
    }
  };
  AnyModel m = build();
  std::visit([&](auto& model) { model.init(rng); }, m);
  return m;
}

inline ModelKind kind_of(const AnyModel& m) {
  return std::visit([](const auto& model) { return model.config().kind; }, m);
}

inline const ModelConfig& config_of(const AnyModel& m) {
  return std::visit([](const auto& model) -> const ModelConfig& { return model.config(); }, m);
}

inline Prediction predict(const AnyModel& m, std::span<const double> features, int position) {
  return std::visit([&](const auto& model) { return model.forward(features, position); }, m);
}

inline std::pair<Prediction, Prediction> counterfactual_forward(const AnyModel& m, std::span<const double> features,
                                                                int logged_position, int swap_position) {
  return std::visit(
      [&](const auto& model) { return counterfactual_forward(model, features, logged_position, swap_position); }, m);
}

inline nn::ParamList params_of(AnyModel& m) {
  return std::visit([](auto& model) { return model.params(); }, m);
}

}  // namespace pacc
