#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pacc/errors.hpp"
#include "pacc/nn/params.hpp"

namespace pacc::nn {

/// |a - n| / max(1e-8, |a| + |n|).
inline double gradient_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares analytic gradients against central finite differences.
///
/// `analytic()` must leave dL/dθ in every ParamRef::grad of `params` (they are
/// zeroed beforehand). `shifted_loss(i, j, delta)` must return the loss with
/// scalar j of tensor i moved by delta and every other parameter unchanged; it
/// may evaluate in a wider floating type than double. Dropout must be off.
/// Returns the max relative error over all scalars.
template <class AnalyticFn, class ShiftedLossFn>
double grad_check(const ParamList& params, AnalyticFn&& analytic, ShiftedLossFn&& shifted_loss,
                  double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw DomainError("grad_check: eps must lie in [1e-7, 1e-3]");
  zero_grads(params);
  analytic();

  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].value.size(); ++j) {
      const auto up = shifted_loss(i, j, eps);
      const auto down = shifted_loss(i, j, -eps);
      const double numeric = static_cast<double>((up - down) / (2 * static_cast<decltype(up)>(eps)));
      worst = std::max(worst, gradient_relative_error(params[i].grad[j], numeric));
    }
  }
  return worst;
}

/// Single-callable form: `loss(with_grad)` evaluates at the current values and,
/// when `with_grad` is true, also fills the gradients.
template <class LossFn>
double grad_check(const ParamList& params, LossFn&& loss, double eps) {
  return grad_check(
      params, [&] { loss(true); },
      [&](std::size_t i, std::size_t j, double delta) {
        double& v = params[i].value[j];
        const double saved = v;
        v = saved + delta;
        const double out = loss(false);
        v = saved;
        return out;
      },
      eps);
}

}  // namespace pacc::nn
