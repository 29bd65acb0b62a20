#pragma once

// Test-side reference implementations. Deliberately naive and independent of
// the library kernels they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "leancnn/leancnn.hpp"

namespace oracle {

using leancnn::Tensor;

// C[M,N] = A[M,K] * B[K,N], plain triple loop in double.
template <typename T>
std::vector<double> matmul(const std::vector<T>& a, const std::vector<T>& b, std::size_t m, std::size_t n,
                           std::size_t k) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
      c[i * n + j] = s;
    }
  return c;
}

// Direct convolution: x[N,C,H,W], w[O,C,K,K], b[O].
template <typename T>
Tensor<double> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t pad,
                      std::size_t stride) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> y(leancnn::Shape{n, o, oh, ow});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = b[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                s += static_cast<double>(w.at({oc, ic, ky, kx})) *
                     static_cast<double>(x.at({in, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)}));
              }
          y.at({in, oc, oy, ox}) = s;
        }
  return y;
}

// Per-layer closed form for the two architectures: 3x3 convs with bias, BN
// scale+shift, two dense layers with bias.
inline std::size_t param_count(bool multiclass, std::size_t in_channels, std::size_t classes, std::size_t size) {
  std::vector<std::size_t> convs = multiclass ? std::vector<std::size_t>{32, 64, 128} : std::vector<std::size_t>{32, 64};
  std::size_t total = 0, in = in_channels, side = size;
  for (std::size_t out : convs) {
    total += in * out * 3 * 3 + out;
    total += out + out;
    in = out;
    side /= 2;
  }
  const std::size_t flat = in * side * side;
  const std::size_t outputs = multiclass ? classes : 1;
  total += flat * 512 + 512;
  total += 512 * outputs + outputs;
  return total;
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double scale = norm(a) + norm(b);
  return scale == 0.0 ? 0.0 : norm(d) / scale;
}

// Central difference of f at every element of `x` (modified in place and
// restored).
inline std::vector<double> numeric_gradient(std::vector<double>& x, const std::function<double()>& f,
                                            double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct GradReport {
  double input = 0.0;   // relative error of dL/dx
  double params = 0.0;  // worst relative error over parameter tensors
  double worst() const { return std::max(input, params); }
};

// Checks a layer's backward against central differences of
// L(x, theta) = sum(r * layer(x)) for a random projection r.
inline GradReport check_layer(leancnn::Layer<double>& layer, Tensor<double> x, leancnn::Rng& rng,
                              const std::function<void()>& after_first_forward = {}) {
  layer.set_mode(leancnn::Mode::Train);
  const Tensor<double> y = layer.forward(x);
  if (after_first_forward) after_first_forward();
  const Tensor<double> r = leancnn::uniform<double>(y.shape(), rng, -1.0, 1.0);
  const Tensor<double> dx = layer.backward(r);
  std::vector<std::vector<double>> analytic_params;
  for (const auto& p : layer.params()) analytic_params.push_back(p.grad->values());

  auto loss = [&]() {
    const Tensor<double> out = layer.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
  };
  GradReport rep;
  std::vector<double> xs = x.values();
  auto fx = [&]() {
    std::copy(xs.begin(), xs.end(), x.data());
    return loss();
  };
  const auto gx = numeric_gradient(xs, fx);
  std::copy(xs.begin(), xs.end(), x.data());
  rep.input = relative_error(dx.values(), gx);

  auto params = layer.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& value = *params[p].value;
    std::vector<double> vs = value.values();
    auto fp = [&]() {
      std::copy(vs.begin(), vs.end(), value.data());
      return loss();
    };
    const auto gp = numeric_gradient(vs, fp);
    std::copy(vs.begin(), vs.end(), value.data());
    rep.params = std::max(rep.params, relative_error(analytic_params[p], gp));
  }
  return rep;
}

// Metrics recomputed from a raw (truth, prediction) stream, no matrix.
struct StreamMetrics {
  double accuracy = 0.0;
  std::vector<double> precision, recall, f1;
};

inline StreamMetrics stream_metrics(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes) {
  StreamMetrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  for (std::size_t c = 0; c < classes; ++c) {
    std::uint64_t tp = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == static_cast<int>(c), p = pred[i] == static_cast<int>(c);
      tp += t && p;
      predicted += p;
      actual += t;
    }
    const double prec = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double rec = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    m.precision.push_back(prec);
    m.recall.push_back(rec);
    m.f1.push_back(prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0);
  }
  return m;
}

// Two-class synthetic images: dark vs bright constant planes plus small
// uniform noise. Linearly separable by mean brightness.
inline leancnn::SampleSet brightness_set(std::size_t per_class, std::size_t size, std::uint64_t seed) {
  leancnn::SampleSet set(leancnn::Shape{1, size, size}, {"dark", "bright"});
  leancnn::Rng rng(seed);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    const float base = label == 1 ? 0.8f : 0.2f;
    Tensor<float> img(leancnn::Shape{1, size, size});
    for (std::size_t j = 0; j < img.size(); ++j) img[j] = base + static_cast<float>(rng.uniform(-0.05, 0.05));
    set.add(img, label);
  }
  return set;
}

}  // namespace oracle
