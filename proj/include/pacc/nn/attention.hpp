#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>

#include "pacc/nn/layers.hpp"

namespace pacc::nn {

enum class AttentionMode { kDotProduct, kScalarGate };

/// Attention over exactly two tokens.
///
/// Dot-product mode projects both tokens to query/key/value, scores each key
/// against the mean of the two queries scaled by 1/sqrt(d_att), and returns the
/// softmax-weighted sum of the values. Scalar-gate mode replaces the scores with
/// a single learned logit (weight on token a is sigmoid(gate)) and uses only the
/// value projection.
template <class T>
struct BasicAttentionUnit {
  BasicDenseLayer<T> query_proj;
  BasicDenseLayer<T> key_proj;
  BasicDenseLayer<T> value_proj;
  BasicVector<T> gate{T(0)};
  BasicVector<T> gate_grad{T(0)};
  AttentionMode mode = AttentionMode::kDotProduct;

  struct Cache {
    std::array<BasicVector<T>, 2> tokens;
    std::array<BasicVector<T>, 2> queries;
    std::array<BasicVector<T>, 2> keys;
    std::array<BasicVector<T>, 2> values;
    BasicVector<T> query_mean;
    std::array<T, 2> weights{};
  };

  BasicAttentionUnit() = default;
  BasicAttentionUnit(std::size_t token_dim, std::size_t att_dim, AttentionMode m = AttentionMode::kDotProduct)
      : query_proj(token_dim, att_dim),
        key_proj(token_dim, att_dim),
        value_proj(token_dim, att_dim),
        mode(m) {}

  std::size_t token_dim() const noexcept { return value_proj.in_dim(); }
  std::size_t out_dim() const noexcept { return value_proj.out_dim(); }

  void init(Rng& rng) {
    query_proj.init(rng);
    key_proj.init(rng);
    value_proj.init(rng);
    gate[0] = T(0);
  }

  /// Returns sum_t w_t v_t; `weights_out` receives (w_a, w_b) when given.
  BasicVector<T> forward(std::span<const T> token_a, std::span<const T> token_b, Cache* cache,
                 std::array<T, 2>* weights_out = nullptr) const {
    if (token_a.size() != token_dim() || token_b.size() != token_dim()) {
      throw ShapeError("attention_forward: tokens must both have dimension " +
                       std::to_string(token_dim()));
    }
    const std::array<std::span<const T>, 2> tokens{token_a, token_b};
    std::array<BasicVector<T>, 2> values{value_proj.forward(token_a), value_proj.forward(token_b)};
    std::array<T, 2> w{};
    std::array<BasicVector<T>, 2> queries;
    std::array<BasicVector<T>, 2> keys;
    BasicVector<T> q_mean;

    if (mode == AttentionMode::kDotProduct) {
      queries = {query_proj.forward(token_a), query_proj.forward(token_b)};
      keys = {key_proj.forward(token_a), key_proj.forward(token_b)};
      q_mean.resize(out_dim());
      for (std::size_t i = 0; i < q_mean.size(); ++i) q_mean[i] = T(0.5) * (queries[0][i] + queries[1][i]);
      const T scale = T(1) / std::sqrt(static_cast<T>(out_dim()));
      const T s0 = dot(q_mean, keys[0]) * scale;
      const T s1 = dot(q_mean, keys[1]) * scale;
      const T m = std::max(s0, s1);
      const T e0 = std::exp(s0 - m);
      const T e1 = std::exp(s1 - m);
      w = {e0 / (e0 + e1), e1 / (e0 + e1)};
    } else {
      const T g = gate[0];
      const T wa = g >= T(0) ? T(1) / (T(1) + std::exp(-g)) : std::exp(g) / (T(1) + std::exp(g));
      w = {wa, T(1) - wa};
    }

    BasicVector<T> out(out_dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[0] * values[0][i] + w[1] * values[1][i];

    if (weights_out) *weights_out = w;
    if (cache) {
      for (std::size_t t = 0; t < 2; ++t) cache->tokens[t].assign(tokens[t].begin(), tokens[t].end());
      cache->queries = std::move(queries);
      cache->keys = std::move(keys);
      cache->values = std::move(values);
      cache->query_mean = std::move(q_mean);
      cache->weights = w;
    }
    return out;
  }

  /// Accumulates gradients; returns (dL/d token_a, dL/d token_b).
  std::array<BasicVector<T>, 2> backward(const Cache& c, std::span<const T> d_out) {
    require_size(d_out.size(), out_dim(), "attention_backward");
    const auto& w = c.weights;
    std::array<T, 2> d_w{dot(d_out, c.values[0]), dot(d_out, c.values[1])};
    std::array<BasicVector<T>, 2> d_tokens;
    for (std::size_t t = 0; t < 2; ++t) {
      BasicVector<T> d_v(out_dim());
      for (std::size_t i = 0; i < d_v.size(); ++i) d_v[i] = w[t] * d_out[i];
      d_tokens[t] = value_proj.backward(c.tokens[t], d_v);
    }

    if (mode == AttentionMode::kDotProduct) {
      const T mean_dw = w[0] * d_w[0] + w[1] * d_w[1];
      const T scale = T(1) / std::sqrt(static_cast<T>(out_dim()));
      const std::array<T, 2> d_s{w[0] * (d_w[0] - mean_dw), w[1] * (d_w[1] - mean_dw)};
      BasicVector<T> d_qmean(out_dim(), T(0));
      for (std::size_t t = 0; t < 2; ++t) {
        BasicVector<T> d_k(out_dim());
        for (std::size_t i = 0; i < d_k.size(); ++i) {
          d_k[i] = d_s[t] * scale * c.query_mean[i];
          d_qmean[i] += d_s[t] * scale * c.keys[t][i];
        }
        add_into(d_tokens[t], key_proj.backward(c.tokens[t], d_k));
      }
      BasicVector<T> d_q(out_dim());
      for (std::size_t i = 0; i < d_q.size(); ++i) d_q[i] = T(0.5) * d_qmean[i];
      for (std::size_t t = 0; t < 2; ++t) add_into(d_tokens[t], query_proj.backward(c.tokens[t], d_q));
    } else {
      // w_a = sigmoid(g), w_b = 1 - w_a
      gate_grad[0] += (d_w[0] - d_w[1]) * w[0] * w[1];
    }
    return d_tokens;
  }

  void zero_grad() {
    query_proj.zero_grad();
    key_proj.zero_grad();
    value_proj.zero_grad();
    gate_grad[0] = T(0);
  }

  void collect(BasicParamList<T>& out, const std::string& prefix) {
    if (mode == AttentionMode::kDotProduct) {
      query_proj.collect(out, prefix + ".query");
      key_proj.collect(out, prefix + ".key");
    } else {
      out.push_back({prefix + ".gate", gate, gate_grad});
    }
    value_proj.collect(out, prefix + ".value");
  }
};

using AttentionUnit = BasicAttentionUnit<double>;

}  // namespace pacc::nn
