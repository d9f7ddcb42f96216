#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "pacc/errors.hpp"

namespace pacc::nn {

/// A view of one learnable tensor and its gradient accumulator.
template <class T>
struct BasicParamRef {
  std::string name;
  std::span<T> value;
  std::span<T> grad;
};

template <class T>
using BasicParamList = std::vector<BasicParamRef<T>>;

using ParamRef = BasicParamRef<double>;
using ParamList = BasicParamList<double>;

template <class T>
void zero_grads(const BasicParamList<T>& params) {
  for (const auto& p : params) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <class T>
std::size_t param_count(const BasicParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

/// Copies parameter values between two lists with identical layout.
template <class To, class From>
void copy_values(const BasicParamList<To>& dst, const BasicParamList<From>& src) {
  auto mismatch = [] { return ShapeError("copy_values: parameter layouts differ"); };
  if (dst.size() != src.size()) throw mismatch();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].value.size() != src[i].value.size()) throw mismatch();
    std::transform(src[i].value.begin(), src[i].value.end(), dst[i].value.begin(),
                   [](From v) { return static_cast<To>(v); });
  }
}

}  // namespace pacc::nn
