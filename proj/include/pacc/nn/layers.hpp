#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>

#include "pacc/errors.hpp"
#include "pacc/nn/matrix.hpp"
#include "pacc/nn/params.hpp"
#include "pacc/nn/rng.hpp"

namespace pacc::nn {

/// Probabilities emitted by sigmoid are clamped to [kProbEps, 1 - kProbEps].
inline constexpr double kProbEps = 1e-7;

/// Fully connected layer: y = W x + b.
template <class T>
struct BasicDenseLayer {
  BasicMatrix<T> weight;
  BasicVector<T> bias;
  BasicMatrix<T> weight_grad;
  BasicVector<T> bias_grad;

  BasicDenseLayer() = default;
  BasicDenseLayer(std::size_t in, std::size_t out)
      : weight(out, in), bias(out, T(0)), weight_grad(out, in), bias_grad(out, T(0)) {}

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  /// Glorot-uniform weights, zero bias.
  void init(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
    for (T& w : weight.values()) w = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
    std::fill(bias.begin(), bias.end(), T(0));
  }

  BasicVector<T> forward(std::span<const T> x) const {
    if (x.size() != in_dim()) {
      throw ShapeError("dense_forward: input length " + std::to_string(x.size()) +
                       " does not match layer input dimension " + std::to_string(in_dim()));
    }
    BasicVector<T> y = weight.multiply(x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i];
    return y;
  }

  /// Accumulates parameter gradients for the cached input `x` and returns dL/dx.
  BasicVector<T> backward(std::span<const T> x, std::span<const T> dy) {
    require_size(dy.size(), out_dim(), "dense_backward");
    weight_grad.add_outer(dy, x);
    add_into(bias_grad, dy);
    return weight.multiply_transposed(dy);
  }

  void zero_grad() {
    weight_grad.fill(T(0));
    std::fill(bias_grad.begin(), bias_grad.end(), T(0));
  }

  void collect(BasicParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight.values(), weight_grad.values()});
    out.push_back({prefix + ".bias", bias, bias_grad});
  }
};

using DenseLayer = BasicDenseLayer<double>;

template <class T>
T relu(T x) noexcept {
  return x > T(0) ? x : T(0);
}

template <class T>
BasicVector<T> relu(std::span<const T> x) {
  BasicVector<T> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](T v) { return relu(v); });
  return y;
}

template <class T>
BasicVector<T> relu(const BasicVector<T>& x) {
  return relu(std::span<const T>(x));
}

template <class T>
BasicVector<T> relu_backward(std::span<const T> pre, std::span<const T> dy) {
  BasicVector<T> dx(dy.size());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = pre[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <class T>
T sigmoid(T x) noexcept {
  const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  return std::clamp(s, T(kProbEps), T(1) - T(kProbEps));
}

template <class T>
BasicVector<T> sigmoid(std::span<const T> x) {
  BasicVector<T> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](T v) { return sigmoid(v); });
  return y;
}

/// d sigmoid / d x expressed through the (clamped) output; zero where the clamp is active.
template <class T>
T sigmoid_slope(T out) noexcept {
  if (out <= T(kProbEps) || out >= T(1) - T(kProbEps)) return T(0);
  return out * (T(1) - out);
}

/// Per-entry scale applied by dropout: 0 for dropped entries, 1/(1-rate) for survivors.
template <class T>
using BasicDropoutMask = BasicVector<T>;
using DropoutMask = BasicDropoutMask<double>;

/// Inverted dropout. Inference mode and rate 0 are exact identities.
template <class T>
BasicVector<T> dropout(std::span<const T> x, double rate, Rng* rng, bool training,
                       BasicDropoutMask<T>* mask = nullptr) {
  if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout: rate must lie in [0, 1)");
  BasicVector<T> y(x.begin(), x.end());
  if (!training || rate == 0.0) {
    if (mask) mask->clear();
    return y;
  }
  if (rng == nullptr) throw StateError("dropout: training mode requires a random stream");
  const T keep_scale = T(1) / (T(1) - static_cast<T>(rate));
  BasicDropoutMask<T> local(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    local[i] = rng->uniform() < rate ? T(0) : keep_scale;
    y[i] *= local[i];
  }
  if (mask) *mask = std::move(local);
  return y;
}

template <class T>
BasicVector<T> dropout(const BasicVector<T>& x, double rate, Rng* rng, bool training,
                       BasicDropoutMask<T>* mask = nullptr) {
  return dropout(std::span<const T>(x), rate, rng, training, mask);
}

template <class T>
BasicVector<T> dropout_backward(const BasicDropoutMask<T>& mask, std::span<const T> dy) {
  BasicVector<T> dx(dy.begin(), dy.end());
  if (mask.empty()) return dx;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  return dx;
}

/// Options shared by every forward pass.
struct ForwardMode {
  bool training = false;
  double dropout_rate = 0.0;
  Rng* rng = nullptr;
};

/// Dense -> ReLU -> dropout.
template <class T>
struct BasicReluBlock {
  BasicDenseLayer<T> dense;

  struct Cache {
    BasicVector<T> input;
    BasicVector<T> pre;
    BasicDropoutMask<T> mask;
  };

  BasicReluBlock() = default;
  BasicReluBlock(std::size_t in, std::size_t out) : dense(in, out) {}

  BasicVector<T> forward(std::span<const T> x, const ForwardMode& mode, Cache* cache) const {
    BasicVector<T> pre = dense.forward(x);
    BasicVector<T> y = dropout(relu(pre), mode.dropout_rate, mode.rng, mode.training,
                               cache ? &cache->mask : nullptr);
    if (cache) {
      cache->input.assign(x.begin(), x.end());
      cache->pre = std::move(pre);
    }
    return y;
  }

  BasicVector<T> backward(const Cache& cache, std::span<const T> dy) {
    const BasicVector<T> d_act = dropout_backward(cache.mask, dy);
    return dense.backward(cache.input, relu_backward<T>(cache.pre, d_act));
  }
};

using ReluBlock = BasicReluBlock<double>;

/// Three stacked ReLU blocks: one task tower.
template <class T>
struct BasicTower {
  std::array<BasicReluBlock<T>, 3> blocks;

  struct Cache {
    std::array<typename BasicReluBlock<T>::Cache, 3> blocks;
  };

  BasicTower() = default;
  BasicTower(std::size_t in, std::size_t width)
      : blocks{BasicReluBlock<T>(in, width), BasicReluBlock<T>(width, width),
               BasicReluBlock<T>(width, width)} {}

  std::size_t out_dim() const noexcept { return blocks.back().dense.out_dim(); }

  BasicVector<T> forward(std::span<const T> x, const ForwardMode& mode, Cache* cache) const {
    BasicVector<T> h(x.begin(), x.end());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      h = blocks[i].forward(h, mode, cache ? &cache->blocks[i] : nullptr);
    }
    return h;
  }

  BasicVector<T> backward(const Cache& cache, std::span<const T> dy) {
    BasicVector<T> d(dy.begin(), dy.end());
    for (std::size_t i = blocks.size(); i-- > 0;) d = blocks[i].backward(cache.blocks[i], d);
    return d;
  }

  void init(Rng& rng) {
    for (auto& b : blocks) b.dense.init(rng);
  }

  void collect(BasicParamList<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].dense.collect(out, prefix + "." + std::to_string(i));
    }
  }
};

using Tower = BasicTower<double>;

/// Dense(-> 1) followed by a clamped sigmoid.
template <class T>
struct BasicProbabilityHead {
  BasicDenseLayer<T> dense;

  struct Cache {
    BasicVector<T> input;
    T out = T(0);
  };

  BasicProbabilityHead() = default;
  explicit BasicProbabilityHead(std::size_t in) : dense(in, 1) {}

  T forward(std::span<const T> x, Cache* cache) const {
    const T p = sigmoid(dense.forward(x)[0]);
    if (cache) {
      cache->input.assign(x.begin(), x.end());
      cache->out = p;
    }
    return p;
  }

  BasicVector<T> backward(const Cache& cache, T d_out) {
    const T d_logit = d_out * sigmoid_slope(cache.out);
    return dense.backward(cache.input, std::span<const T>(&d_logit, 1));
  }
};

using ProbabilityHead = BasicProbabilityHead<double>;

}  // namespace pacc::nn
