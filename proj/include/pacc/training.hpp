#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "pacc/csv.hpp"
#include "pacc/errors.hpp"
#include "pacc/metrics.hpp"
#include "pacc/models.hpp"
#include "pacc/nn/gradcheck.hpp"
#include "pacc/nn/loss.hpp"
#include "pacc/nn/optim.hpp"
#include "pacc/simlog.hpp"

namespace pacc {

/// How the click-before-purchase penalty is applied.
enum class RestrictionMode {
  kCorrected,     // mean max(p_cvr - p_ctr, 0)
  kPaperLiteral,  // mean max(p_ctr - p_cvr, 0)
  kOff,
};

inline std::string to_string(RestrictionMode m) {
  switch (m) {
    case RestrictionMode::kCorrected: return "corrected";
    case RestrictionMode::kPaperLiteral: return "paper-literal";
    case RestrictionMode::kOff: return "off";
  }
  return "?";
}

inline RestrictionMode parse_restriction_mode(std::string_view s) {
  if (s == "corrected") return RestrictionMode::kCorrected;
  if (s == "paper-literal") return RestrictionMode::kPaperLiteral;
  if (s == "off") return RestrictionMode::kOff;
  throw ConfigError("unknown restriction mode '" + std::string(s) + "'");
}

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  nn::OptimizerConfig optimizer{};
  RestrictionMode restriction = RestrictionMode::kCorrected;
  double restriction_weight = 1.0;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
};

inline void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(c.optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(c.restriction_weight >= 0.0)) throw ConfigError("restriction_weight must be >= 0");
}

struct LossComponents {
  double total = 0.0;
  double ctr = 0.0;
  double cvr = 0.0;
  double res = 0.0;
};

/// Per-item penalty max(p_cvr - p_ctr, 0) (corrected) or max(p_ctr - p_cvr, 0) (literal).
template <class T>
T restriction_term(T p_ctr, T p_cvr, RestrictionMode mode) {
  switch (mode) {
    case RestrictionMode::kCorrected: return std::max(p_cvr - p_ctr, T(0));
    case RestrictionMode::kPaperLiteral: return std::max(p_ctr - p_cvr, T(0));
    case RestrictionMode::kOff: return T(0);
  }
  return T(0);
}

/// Batch-mean restriction penalty.
inline double restriction_loss(std::span<const double> p_ctr, std::span<const double> p_cvr, RestrictionMode mode) {
  nn::require_size(p_cvr.size(), p_ctr.size(), "restriction_loss");
  if (p_ctr.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < p_ctr.size(); ++i) sum += restriction_term(p_ctr[i], p_cvr[i], mode);
  return sum / static_cast<double>(p_ctr.size());
}

/// L = mean BCE(p_ctr, click) + mean BCE(p_cvr, conversion) + weight * restriction.
inline LossComponents total_loss(std::span<const Prediction> preds, std::span<const LogRecord> labels,
                                 RestrictionMode mode, double restriction_weight = 1.0) {
  if (preds.size() != labels.size()) throw ShapeError("total_loss: prediction and label batches differ in length");
  LossComponents out;
  if (preds.empty()) return out;
  std::vector<double> ctr(preds.size());
  std::vector<double> cvr(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out.ctr += nn::bce_loss(preds[i].p_ctr, labels[i].click);
    out.cvr += nn::bce_loss(preds[i].p_cvr, labels[i].conversion);
    ctr[i] = preds[i].p_ctr;
    cvr[i] = preds[i].p_cvr;
  }
  const auto n = static_cast<double>(preds.size());
  out.ctr /= n;
  out.cvr /= n;
  out.res = restriction_weight * restriction_loss(ctr, cvr, mode);
  out.total = out.ctr + out.cvr + out.res;
  return out;
}

/// dL/dp_ctr and dL/dp_cvr contributed by one item of a batch of `batch_size`.
inline std::pair<double, double> loss_gradient(const Prediction& p, const LogRecord& r, RestrictionMode mode,
                                               double restriction_weight, std::size_t batch_size) {
  const double scale = 1.0 / static_cast<double>(batch_size);
  double d_ctr = nn::bce_grad(p.p_ctr, r.click) * scale;
  double d_cvr = nn::bce_grad(p.p_cvr, r.conversion) * scale;
  const double rw = restriction_weight * scale;
  if (mode == RestrictionMode::kCorrected && p.p_cvr > p.p_ctr) {
    d_cvr += rw;
    d_ctr -= rw;
  } else if (mode == RestrictionMode::kPaperLiteral && p.p_ctr > p.p_cvr) {
    d_ctr += rw;
    d_cvr -= rw;
  }
  return {d_ctr, d_cvr};
}

/// Inference-mode total loss of `model` on `batch`, evaluated in the model's scalar type.
template <template <class> class M, class T>
T batch_loss(const M<T>& model, std::span<const LogRecord> batch, RestrictionMode mode,
             double restriction_weight = 1.0) {
  if (batch.empty()) return T(0);
  T ctr = 0, cvr = 0, res = 0;
  for (const auto& r : batch) {
    const nn::BasicVector<T> f(r.features.begin(), r.features.end());
    const auto p = model.forward(std::span<const T>(f), r.position);
    ctr += nn::bce_loss(p.p_ctr, r.click);
    cvr += nn::bce_loss(p.p_cvr, r.conversion);
    res += restriction_term(p.p_ctr, p.p_cvr, mode);
  }
  const auto n = static_cast<T>(batch.size());
  return ctr / n + cvr / n + static_cast<T>(restriction_weight) * (res / n);
}

/// Gradient check of the whole model on `batch` with dropout off.
///
/// Analytic gradients come from the model's own backward pass in double; the
/// finite differences are taken on a long double copy so that rounding in the
/// loss does not swamp small gradients.
template <ClickConversionModel Model>
double model_grad_check(Model& model, std::span<const LogRecord> batch, RestrictionMode mode,
                        double restriction_weight, double eps) {
  const auto params = model.params();
  auto analytic = [&] {
    for (const auto& r : batch) {
      typename Model::Cache cache;
      const Prediction p = model.forward(r.features, r.position, false, nullptr, &cache);
      const auto [d_ctr, d_cvr] = loss_gradient(p, r, mode, restriction_weight, batch.size());
      model.backward(cache, d_ctr, d_cvr);
    }
  };
  auto wide = with_scalar<long double>(model);
  const auto wide_params = wide.params();
  auto shifted = [&](std::size_t i, std::size_t j, double delta) {
    long double& v = wide_params[i].value[j];
    const long double saved = v;
    v = saved + static_cast<long double>(delta);
    const long double loss = batch_loss(wide, batch, mode, restriction_weight);
    v = saved;
    return loss;
  };
  return nn::grad_check(params, analytic, shifted, eps);
}

struct EpochStats {
  std::size_t epoch = 0;
  LossComponents train;
  LossComponents validation;
  double val_auc_ctr = 0.5;
  double val_auc_cvr = 0.5;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  std::string checkpoint_path;
};

inline void write_train_report_csv(std::ostream& os, const TrainReport& rep) {
  os << "epoch,loss_total,loss_ctr,loss_cvr,loss_res,val_auc_ctr,val_auc_cvr\n";
  for (const auto& e : rep.epochs) {
    os << e.epoch;
    for (double v : {e.train.total, e.train.ctr, e.train.cvr, e.train.res, e.val_auc_ctr, e.val_auc_cvr}) {
      os << ',' << csv::format(v, "%.10g");
    }
    os << '\n';
  }
}

namespace detail {

inline double auc_or_half(std::span<const ScoredExample> ex) {
  try {
    return auc(ex);
  } catch (const UndefinedMetricError&) {
    return 0.5;
  }
}

template <ClickConversionModel M>
void validation_pass(const M& model, std::span<const LogRecord> records, const TrainConfig& cfg, EpochStats& stats) {
  std::vector<Prediction> preds(records.size());
  std::vector<ScoredExample> ctr(records.size());
  std::vector<ScoredExample> cvr(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    preds[i] = model.forward(r.features, r.position);
    ctr[i] = {r.query_id, r.item_id, r.position, preds[i].p_ctr, r.click, 1.0};
    cvr[i] = {r.query_id, r.item_id, r.position, preds[i].p_cvr, r.conversion, 1.0};
  }
  stats.validation = total_loss(preds, records, cfg.restriction, cfg.restriction_weight);
  stats.val_auc_ctr = auc_or_half(ctr);
  stats.val_auc_cvr = auc_or_half(cvr);
}

}  // namespace detail

/// Mini-batch training of the composite loss with early stopping on validation
/// CTR-AUC + CVR-AUC. On return `model` holds the best parameters seen.
template <ClickConversionModel M>
TrainReport train(M& model, std::span<const LogRecord> train_set, std::span<const LogRecord> validation_set,
                  const TrainConfig& cfg) {
  validate(cfg);
  if (train_set.empty() || validation_set.empty()) throw ConfigError("train: datasets must be nonempty");
  TrainReport report;
  if (cfg.epochs == 0) return report;

  const nn::Rng root(cfg.seed);
  nn::Optimizer optimizer(cfg.optimizer);
  const nn::ParamList params = model.params();
  typename M::Cache cache;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::optional<M> best;
  double best_score = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    nn::Rng shuffle_rng = root.substream("shuffle", epoch);
    nn::Rng dropout_rng = root.substream("dropout", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochStats stats;
    stats.epoch = epoch;
    double sum_ctr = 0.0, sum_cvr = 0.0, sum_res = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t n = end - start;
      nn::zero_grads(params);
      auto diverged = [&] {
        return TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      };
      double batch_total = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = train_set[order[k]];
        const Prediction p = model.forward(r.features, r.position, true, &dropout_rng, &cache);
        if (!std::isfinite(p.p_ctr) || !std::isfinite(p.p_cvr)) throw diverged();
        const double l_ctr = nn::bce_loss(p.p_ctr, r.click);
        const double l_cvr = nn::bce_loss(p.p_cvr, r.conversion);
        const double l_res = cfg.restriction_weight * restriction_term(p.p_ctr, p.p_cvr, cfg.restriction);
        if constexpr (std::is_same_v<M, PaccModel>) {
          if (restriction_term(p.p_ctr, p.p_cvr, RestrictionMode::kCorrected) != 0.0) {
            throw TrainingError("PACC produced p_cvr > p_ctr at epoch " + std::to_string(epoch));
          }
        }
        sum_ctr += l_ctr;
        sum_cvr += l_cvr;
        sum_res += l_res;
        batch_total += l_ctr + l_cvr + l_res;
        const auto [d_ctr, d_cvr] = loss_gradient(p, r, cfg.restriction, cfg.restriction_weight, n);
        model.backward(cache, d_ctr, d_cvr);
      }
      if (!std::isfinite(batch_total)) throw diverged();
      optimizer.step(params);
    }
    const auto n = static_cast<double>(train_set.size());
    stats.train = {(sum_ctr + sum_cvr + sum_res) / n, sum_ctr / n, sum_cvr / n, sum_res / n};
    detail::validation_pass(model, validation_set, cfg, stats);
    report.epochs.push_back(stats);

    const double score = stats.val_auc_ctr + stats.val_auc_cvr;
    if (score > best_score) {
      best_score = score;
      best = model;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience && cfg.patience > 0) {
      break;
    }
  }
  if (best) model = *best;
  return report;
}

struct TrainResult {
  AnyModel model;
  TrainReport report;
};

/// Initializes a model of `model_cfg.kind` from `cfg.seed` and trains it.
inline TrainResult train_model(const ModelConfig& model_cfg, std::span<const LogRecord> train_set,
                               std::span<const LogRecord> validation_set, const TrainConfig& cfg) {
  AnyModel model = make_model(model_cfg, cfg.seed);
  TrainReport rep = std::visit([&](auto& m) { return train(m, train_set, validation_set, cfg); }, model);
  return {std::move(model), std::move(rep)};
}

}  // namespace pacc
