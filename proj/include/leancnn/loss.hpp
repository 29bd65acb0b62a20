#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "leancnn/error.hpp"
#include "leancnn/tensor.hpp"

namespace leancnn {

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // dLoss/dlogits, same shape as the logits
};

/// Mean binary cross-entropy on logits z[N,1] against targets t in {0,1}:
///   max(z,0) - z*t + log(1 + exp(-|z|))
/// Gradient is (sigmoid(z) - t) / N.
template <typename T>
LossResult<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.rank() != 2 || logits.dim(1) != 1)
    throw ShapeError("bce_with_logits expects [N,1] logits, got " + logits.shape().to_string());
  if (targets.shape() != logits.shape())
    throw ShapeError("bce_with_logits: targets " + targets.shape().to_string() + " do not match logits");
  const std::size_t n = logits.dim(0);
  LossResult<T> out{0.0, Tensor<T>(logits.shape())};
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(targets[i]);
    if (t != 0.0 && t != 1.0) throw ValidationError("bce_with_logits: target " + std::to_string(t) + " is not binary");
    const double z = static_cast<double>(logits[i]);
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    out.grad[i] = static_cast<T>((stable_sigmoid(z) - t) / static_cast<double>(n));
  }
  out.loss = acc / static_cast<double>(n);
  return out;
}

/// Mean softmax cross-entropy on logits[N,C] with integer labels, via
/// log-sum-exp after subtracting each row's max. Gradient is (softmax - onehot)/N.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects [N,C] logits, got " + logits.shape().to_string());
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  LossResult<T> out{0.0, Tensor<T>(logits.shape())};
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= c)
      throw ValidationError("cross_entropy: label " + std::to_string(label) + " outside [0," + std::to_string(c) + ")");
    const T* row = logits.data() + i * c;
    double mx = static_cast<double>(row[0]);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    const double log_denom = std::log(denom);
    acc += log_denom - (static_cast<double>(row[label]) - mx);
    T* g = out.grad.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - mx - log_denom);
      g[j] = static_cast<T>((p - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  out.loss = acc / static_cast<double>(n);
  return out;
}

}  // namespace leancnn
