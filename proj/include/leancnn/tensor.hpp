#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "leancnn/error.hpp"
#include "leancnn/rng.hpp"

namespace leancnn {

// Dimensions of a dense row-major tensor. Images use NCHW.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  // Product of dims (1 for rank 0).
  std::size_t elements() const noexcept { return elements_; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string to_string() const {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) out << (i ? "," : "") << dims_[i];
    out << ']';
    return out.str();
  }

 private:
  void validate() {
    std::size_t count = 1;
    for (std::size_t d : dims_) {
      if (d == 0) throw ShapeError("shape " + to_string() + " has a zero dimension");
      if (count > std::numeric_limits<std::size_t>::max() / d)
        throw SizeError("size error: element count of shape " + to_string() + " overflows");
      count *= d;
    }
    elements_ = count;
  }

  std::vector<std::size_t> dims_;
  std::size_t elements_ = 1;
};

/// Dense tensor owning a contiguous row-major buffer.
///
/// A default-constructed tensor is empty (no shape, no data) and only serves
/// as a placeholder for caches; every engine operation rejects it.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_.elements(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.elements())
      throw ShapeError("buffer of " + std::to_string(data_.size()) + " values does not fit shape " +
                       shape_.to_string());
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Multi-index access, bounds checked.
  T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  // Same buffer, new dims; element count must match.
  Tensor& reshape(Shape shape) {
    if (shape.elements() != data_.size())
      throw ShapeError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
    shape_ = std::move(shape);
    return *this;
  }
  Tensor reshaped(Shape shape) const& {
    Tensor copy = *this;
    copy.reshape(std::move(shape));
    return copy;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.rank()) throw ShapeError("index rank does not match tensor rank");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape_[axis]) throw ShapeError("index out of range on axis " + std::to_string(axis));
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return flat;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename T>
Tensor<T> zeros(Shape shape) {
  return Tensor<T>(std::move(shape), T{0});
}

template <typename T>
Tensor<T> ones(Shape shape) {
  return Tensor<T>(std::move(shape), T{1});
}

// Values drawn as lo + (hi - lo) * u with u from rng.uniform(), in buffer order.
template <typename T>
Tensor<T> uniform(Shape shape, Rng& rng, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("uniform requires lo < hi");
  Tensor<T> out(std::move(shape));
  for (auto& v : out.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return out;
}

template <typename T>
bool all_finite(const Tensor<T>& x) noexcept {
  return std::all_of(x.values().begin(), x.values().end(), [](T v) { return std::isfinite(v); });
}

// ---- elementwise -----------------------------------------------------------

namespace detail {
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
}

template <typename T, typename Fn>
Tensor<T> map(Tensor<T> x, Fn fn) {
  for (auto& v : x.values()) v = fn(v);
  return x;
}

template <typename T, typename Fn>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, const char* op, Fn fn) {
  require_same_shape(a, b, op);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
  return out;
}
}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "add", [](T x, T y) { return x + y; });
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "sub", [](T x, T y) { return x - y; });
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "mul", [](T x, T y) { return x * y; });
}
template <typename T>
Tensor<T> scale(Tensor<T> x, T factor) {
  return detail::map(std::move(x), [factor](T v) { return v * factor; });
}
template <typename T>
Tensor<T> relu(Tensor<T> x) {
  return detail::map(std::move(x), [](T v) { return v > T{0} ? v : T{0}; });
}

// Branches on sign so exp never sees a large positive argument.
template <typename T>
T stable_sigmoid(T z) noexcept {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
  return detail::map(std::move(x), [](T v) { return stable_sigmoid(v); });
}
template <typename T>
Tensor<T> exp(Tensor<T> x) {
  return detail::map(std::move(x), [](T v) { return std::exp(v); });
}
template <typename T>
Tensor<T> log(Tensor<T> x) {
  return detail::map(std::move(x), [](T v) { return std::log(v); });
}

// ---- reductions ------------------------------------------------------------

enum class Reduce { Sum, Mean, Max };

/// Reduces over `axes` (any order, no duplicates), dropping them from the shape.
/// Reducing every axis yields shape [1]. Sums accumulate in double, visiting
/// elements in row-major order.
template <typename T>
Tensor<T> reduce(const Tensor<T>& x, std::span<const std::size_t> axes, Reduce mode) {
  if (x.empty()) throw ShapeError("reduce on empty tensor");
  const std::size_t rank = x.rank();
  std::vector<bool> reduced(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank) throw ShapeError("reduce: axis " + std::to_string(a) + " out of range");
    if (reduced[a]) throw ShapeError("reduce: duplicate axis " + std::to_string(a));
    reduced[a] = true;
  }
  std::vector<std::size_t> kept;
  for (std::size_t a = 0; a < rank; ++a)
    if (!reduced[a]) kept.push_back(x.dim(a));
  Shape out_shape = kept.empty() ? Shape{1} : Shape(kept);

  const std::size_t out_n = out_shape.elements();
  std::vector<double> acc(out_n, mode == Reduce::Max ? -std::numeric_limits<double>::infinity() : 0.0);
  std::vector<std::size_t> counts(out_n, 0);

  std::vector<std::size_t> index(rank, 0);
  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    std::size_t out_flat = 0;
    for (std::size_t a = 0; a < rank; ++a)
      if (!reduced[a]) out_flat = out_flat * x.dim(a) + index[a];
    const double v = static_cast<double>(x[flat]);
    if (mode == Reduce::Max)
      acc[out_flat] = std::max(acc[out_flat], v);
    else
      acc[out_flat] += v;
    ++counts[out_flat];
    for (std::size_t a = rank; a-- > 0;) {
      if (++index[a] < x.dim(a)) break;
      index[a] = 0;
    }
  }
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < out_n; ++i) {
    const double v = mode == Reduce::Mean ? acc[i] / static_cast<double>(counts[i]) : acc[i];
    out[i] = static_cast<T>(v);
  }
  return out;
}

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, std::initializer_list<std::size_t> axes, Reduce mode) {
  return reduce(x, std::span<const std::size_t>(axes.begin(), axes.size()), mode);
}

template <typename T>
double sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  return acc;
}

template <typename T>
double mean(const Tensor<T>& x) {
  if (x.empty()) throw ShapeError("mean of empty tensor");
  return sum(x) / static_cast<double>(x.size());
}

template <typename T>
T max(const Tensor<T>& x) {
  if (x.empty()) throw ShapeError("max of empty tensor");
  return *std::max_element(x.values().begin(), x.values().end());
}

// Inner product accumulated in double, used by adjoint tests and loss code.
template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

}  // namespace leancnn
