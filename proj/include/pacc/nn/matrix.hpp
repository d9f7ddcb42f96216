#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <ranges>
#include <span>
#include <string>
#include <vector>

#include "pacc/errors.hpp"

namespace pacc::nn {

template <class T>
using BasicVector = std::vector<T>;
using Vector = BasicVector<double>;

inline void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                     std::to_string(got));
  }
}

/// Dense row-major matrix.
template <class T>
class BasicMatrix {
 public:
  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    require_size(values_.size(), rows_ * cols_, "Matrix");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  /// this * x
  BasicVector<T> multiply(std::span<const T> x) const {
    require_size(x.size(), cols_, "Matrix::multiply");
    BasicVector<T> y(rows_, T(0));
    for (std::size_t r = 0; r < rows_; ++r) {
      const T* row = values_.data() + r * cols_;
      T acc = 0;
      for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
    return y;
  }

  /// transpose(this) * y
  BasicVector<T> multiply_transposed(std::span<const T> y) const {
    require_size(y.size(), rows_, "Matrix::multiply_transposed");
    BasicVector<T> x(cols_, T(0));
    for (std::size_t r = 0; r < rows_; ++r) {
      const T* row = values_.data() + r * cols_;
      const T yr = y[r];
      if (yr == T(0)) continue;
      for (std::size_t c = 0; c < cols_; ++c) x[c] += row[c] * yr;
    }
    return x;
  }

  /// this += outer(y, x)
  void add_outer(std::span<const T> y, std::span<const T> x) {
    require_size(y.size(), rows_, "Matrix::add_outer");
    require_size(x.size(), cols_, "Matrix::add_outer");
    for (std::size_t r = 0; r < rows_; ++r) {
      const T yr = y[r];
      if (yr == T(0)) continue;
      T* row = values_.data() + r * cols_;
      for (std::size_t c = 0; c < cols_; ++c) row[c] += yr * x[c];
    }
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

using Matrix = BasicMatrix<double>;

template <class A, class B>
auto dot(const A& a, const B& b) {
  require_size(std::size(b), std::size(a), "dot");
  std::ranges::range_value_t<A> acc = 0;
  for (std::size_t i = 0; i < std::size(a); ++i) acc += a[i] * b[i];
  return acc;
}

template <class A, class B>
void add_into(A&& acc, const B& x) {
  require_size(std::size(x), std::size(acc), "add_into");
  for (std::size_t i = 0; i < std::size(acc); ++i) acc[i] += x[i];
}

template <class A, class B>
auto concat(const A& a, const B& b) {
  BasicVector<std::ranges::range_value_t<A>> out(std::begin(a), std::end(a));
  out.insert(out.end(), std::begin(b), std::end(b));
  return out;
}

}  // namespace pacc::nn
