#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pacc/errors.hpp"
#include "pacc/nn/params.hpp"

namespace pacc::nn {

enum class OptimizerKind { kAdam, kSgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer (plain SGD when configured so). Moments are
/// allocated lazily on the first step and pinned to the parameter shapes.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
  }

  void step(const ParamList& params) {
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.value.size(), 0.0);
        second_.emplace_back(p.value.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) throw ShapeError("optimizer: parameter count changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].value.size() != first_[i].size() || params[i].grad.size() != first_[i].size()) {
        throw ShapeError("optimizer: shape mismatch for " + params[i].name);
      }
    }
    ++step_;
    if (cfg_.kind == OptimizerKind::kSgd) {
      for (const auto& p : params) {
        for (std::size_t j = 0; j < p.value.size(); ++j) p.value[j] -= cfg_.learning_rate * p.grad[j];
      }
      return;
    }
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& m = first_[i];
      auto& v = second_[i];
      const auto& p = params[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j];
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
        p.value[j] -= cfg_.learning_rate * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.epsilon);
      }
    }
  }

  std::uint64_t steps() const noexcept { return step_; }
  const OptimizerConfig& config() const noexcept { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t step_ = 0;
};

}  // namespace pacc::nn
