#pragma once

#include <cmath>

#include "pacc/errors.hpp"

namespace pacc::nn {

/// Binary cross entropy -(y ln p + (1-y) ln(1-p)).
template <class T>
T bce_loss(T p, int y) {
  if (!(p >= T(0) && p <= T(1))) throw DomainError("bce_loss: probability outside [0, 1]");
  if (y != 0 && y != 1) throw DomainError("bce_loss: label must be 0 or 1");
  return y == 1 ? -std::log(p) : -std::log1p(-p);
}

/// d bce / d p.
template <class T>
T bce_grad(T p, int y) noexcept {
  return y == 1 ? T(-1) / p : T(1) / (T(1) - p);
}

}  // namespace pacc::nn
