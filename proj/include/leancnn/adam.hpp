#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "leancnn/error.hpp"
#include "leancnn/layers.hpp"
#include "leancnn/tensor.hpp"

namespace leancnn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are created lazily on the first step
/// and must keep matching the parameter list afterwards.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {
    if (!(options.lr > 0.0)) throw ConfigError("adam: lr must be positive");
    if (!(options.beta1 >= 0.0 && options.beta1 < 1.0 && options.beta2 >= 0.0 && options.beta2 < 1.0))
      throw ConfigError("adam: betas must lie in [0,1)");
    if (options.eps < 0.0) throw ConfigError("adam: eps must be non-negative");
  }

  void step(std::span<const Param<T>> params) {
    if (first_moment_.empty()) {
      for (const auto& p : params) {
        first_moment_.emplace_back(p.value->shape());
        second_moment_.emplace_back(p.value->shape());
      }
    }
    if (params.size() != first_moment_.size())
      throw ShapeError("adam: parameter count changed from " + std::to_string(first_moment_.size()) + " to " +
                       std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].value->shape() != first_moment_[i].shape() || params[i].grad->shape() != first_moment_[i].shape())
        throw ShapeError("adam: shape mismatch for parameter '" + params[i].name + "'");
    }

    ++steps_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    const T c_b1 = static_cast<T>(b1), c_1mb1 = static_cast<T>(1.0 - b1);
    const T c_b2 = static_cast<T>(b2), c_1mb2 = static_cast<T>(1.0 - b2);
    const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
    const T lr = static_cast<T>(options_.lr), eps = static_cast<T>(options_.eps);

    for (std::size_t i = 0; i < params.size(); ++i) {
      T* p = params[i].value->data();
      const T* g = params[i].grad->data();
      T* m = first_moment_[i].data();
      T* v = second_moment_[i].data();
      const std::size_t n = params[i].value->size();
      for (std::size_t k = 0; k < n; ++k) {
        m[k] = c_b1 * m[k] + c_1mb1 * g[k];
        v[k] = c_b2 * v[k] + c_1mb2 * g[k] * g[k];
        const T m_hat = m[k] * inv_bc1;
        const T v_hat = v[k] * inv_bc2;
        p[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
  }

  std::uint64_t steps() const noexcept { return steps_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return first_moment_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return second_moment_; }

 private:
  AdamOptions options_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor<T>> first_moment_;
  std::vector<Tensor<T>> second_moment_;
};

}  // namespace leancnn
