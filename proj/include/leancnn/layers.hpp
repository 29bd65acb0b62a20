#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "leancnn/error.hpp"
#include "leancnn/kernels.hpp"
#include "leancnn/parallel.hpp"
#include "leancnn/rng.hpp"
#include "leancnn/tensor.hpp"

namespace leancnn {

enum class Mode { Train, Eval };

// A learnable tensor and the gradient slot backward() writes into.
template <typename T>
struct Param {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// One stage of a feed-forward network with a hand-derived backward pass.
///
/// forward() consumes its input so elementwise stages can work in place. In
/// Train mode a layer caches what backward() needs; backward() overwrites
/// (never accumulates) parameter gradients and returns dL/dx. Shapes passed to
/// output_shape() exclude the batch axis.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor<T> forward(Tensor<T> x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;

  virtual std::vector<Param<T>> params() { return {}; }
  // Non-learnable persistent state (batch-norm running statistics).
  virtual std::vector<Tensor<T>*> buffers() { return {}; }

  virtual void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const noexcept { return mode_; }
  bool training() const noexcept { return mode_ == Mode::Train; }

 protected:
  Mode mode_ = Mode::Train;
};

namespace detail {
inline void require_cached(bool ok, std::string_view layer) {
  if (!ok) throw ConfigError(std::string(layer) + ": backward called without a train-mode forward");
}

inline Shape with_batch(std::size_t n, const Shape& sample) {
  std::vector<std::size_t> dims{n};
  dims.insert(dims.end(), sample.dims().begin(), sample.dims().end());
  return Shape(std::move(dims));
}

inline Shape drop_batch(const Shape& s) {
  return Shape(std::vector<std::size_t>(s.dims().begin() + 1, s.dims().end()));
}
}  // namespace detail

// ---- convolution -----------------------------------------------------------

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel = 3, std::size_t pad = 1,
         std::size_t stride = 1)
      : in_(in_channels),
        out_(out_channels),
        kernel_(kernel),
        pad_(pad),
        stride_(stride),
        weight_(Shape{out_channels, in_channels, kernel, kernel}),
        bias_(Shape{out_channels}),
        dweight_(weight_.shape()),
        dbias_(bias_.shape()) {}

  std::string_view kind() const override { return "conv"; }

  // Kaiming-uniform on fan-in, zero bias.
  void init(Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_ * kernel_ * kernel_));
    weight_ = uniform<T>(weight_.shape(), rng, -bound, bound);
    bias_.fill(T{0});
  }

  Shape output_shape(const Shape& input) const override {
    const ConvGeometry g = geometry(input, "conv");
    return Shape{out_, g.out_height(), g.out_width()};
  }

  Tensor<T> forward(Tensor<T> x) override {
    if (x.rank() != 4) throw ShapeError("conv expects NCHW input, got " + x.shape().to_string());
    const ConvGeometry g = geometry(detail::drop_batch(x.shape()), "conv");
    const std::size_t n = x.dim(0), positions = g.positions();
    Tensor<T> y(Shape{n, out_, g.out_height(), g.out_width()});
    parallel_for(n, [&](std::size_t i) {
      std::vector<T> cols(g.patch_size() * positions);
      im2col_image(x.data() + i * g.image_size(), g, cols.data());
      T* out = y.data() + i * out_ * positions;
      gemm(Trans::No, Trans::No, out_, positions, g.patch_size(), weight_.data(), cols.data(), out);
      for (std::size_t c = 0; c < out_; ++c)
        for (std::size_t p = 0; p < positions; ++p) out[c * positions + p] += bias_[c];
    });
    if (this->training())
      input_ = std::move(x);
    else
      input_ = Tensor<T>();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    detail::require_cached(!input_.empty(), "conv");
    const ConvGeometry g = geometry(detail::drop_batch(input_.shape()), "conv");
    const std::size_t n = input_.dim(0), positions = g.positions();
    if (dy.shape() != Shape{n, out_, g.out_height(), g.out_width()})
      throw ShapeError("conv backward: gradient shape " + dy.shape().to_string() + " does not match output");
    dweight_.fill(T{0});
    dbias_.fill(T{0});
    // Parameter gradients accumulate sample by sample in index order.
    std::vector<T> cols(g.patch_size() * positions);
    for (std::size_t i = 0; i < n; ++i) {
      im2col_image(input_.data() + i * g.image_size(), g, cols.data());
      const T* d = dy.data() + i * out_ * positions;
      gemm(Trans::No, Trans::Yes, out_, g.patch_size(), positions, d, cols.data(), dweight_.data(), true);
      for (std::size_t c = 0; c < out_; ++c) {
        double acc = 0.0;
        for (std::size_t p = 0; p < positions; ++p) acc += static_cast<double>(d[c * positions + p]);
        dbias_[c] += static_cast<T>(acc);
      }
    }
    Tensor<T> dx(input_.shape());
    parallel_for(n, [&](std::size_t i) {
      std::vector<T> dcols(g.patch_size() * positions);
      gemm(Trans::Yes, Trans::No, g.patch_size(), positions, out_, weight_.data(),
           dy.data() + i * out_ * positions, dcols.data());
      col2im_image(dcols.data(), g, dx.data() + i * g.image_size());
    });
    return dx;
  }

  std::vector<Param<T>> params() override {
    return {{"weight", &weight_, &dweight_}, {"bias", &bias_, &dbias_}};
  }

  Tensor<T>& weight() noexcept { return weight_; }
  Tensor<T>& bias() noexcept { return bias_; }
  const Tensor<T>& weight_grad() const noexcept { return dweight_; }
  const Tensor<T>& bias_grad() const noexcept { return dbias_; }
  std::size_t in_channels() const noexcept { return in_; }
  std::size_t out_channels() const noexcept { return out_; }

 private:
  ConvGeometry geometry(const Shape& sample, const char* who) const {
    if (sample.rank() != 3) throw ShapeError(std::string(who) + " expects C,H,W samples, got " + sample.to_string());
    if (sample[0] != in_)
      throw ShapeError(std::string(who) + ": expected " + std::to_string(in_) + " input channels, got " +
                       std::to_string(sample[0]));
    ConvGeometry g{in_, sample[1], sample[2], kernel_, pad_, stride_};
    g.validate();
    return g;
  }

  std::size_t in_, out_, kernel_, pad_, stride_;
  Tensor<T> weight_, bias_, dweight_, dbias_;
  Tensor<T> input_;
};

// ---- batch normalization ---------------------------------------------------

/// Per-channel batch normalization over (N, H, W).
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate; eval mode uses the running
/// estimates only.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  static constexpr double kDefaultEps = 1e-5;
  static constexpr double kDefaultMomentum = 0.1;

  explicit BatchNorm2d(std::size_t channels, double eps = kDefaultEps, double momentum = kDefaultMomentum)
      : channels_(channels),
        eps_(eps),
        momentum_(momentum),
        gamma_(Shape{channels}, T{1}),
        beta_(Shape{channels}, T{0}),
        running_mean_(Shape{channels}, T{0}),
        running_var_(Shape{channels}, T{1}),
        dgamma_(Shape{channels}),
        dbeta_(Shape{channels}) {
    if (!(eps > 0.0)) throw ConfigError("batchnorm eps must be positive");
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("batchnorm momentum must lie in [0,1]");
  }

  std::string_view kind() const override { return "batchnorm"; }

  Shape output_shape(const Shape& input) const override {
    check(input);
    return input;
  }

  Tensor<T> forward(Tensor<T> x) override {
    if (x.rank() != 4) throw ShapeError("batchnorm expects NCHW input, got " + x.shape().to_string());
    check(detail::drop_batch(x.shape()));
    const std::size_t n = x.dim(0), plane = x.dim(2) * x.dim(3);
    const std::size_t count = n * plane;
    invstd_.assign(channels_, 0.0);

    if (!this->training()) {
      for (std::size_t c = 0; c < channels_; ++c) {
        invstd_[c] = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
        const double m = running_mean_[c], s = invstd_[c], gm = gamma_[c], bt = beta_[c];
        for (std::size_t i = 0; i < n; ++i) {
          T* p = x.data() + (i * channels_ + c) * plane;
          for (std::size_t k = 0; k < plane; ++k) p[k] = static_cast<T>(gm * ((p[k] - m) * s) + bt);
        }
      }
      xhat_ = Tensor<T>();
      return x;
    }

    if (count < 2)
      throw ConfigError("batchnorm: train mode needs at least 2 values per channel (batch*H*W = " +
                        std::to_string(count) + ")");
    xhat_ = Tensor<T>(x.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.data() + (i * channels_ + c) * plane;
        for (std::size_t k = 0; k < plane; ++k) acc += static_cast<double>(p[k]);
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = x.data() + (i * channels_ + c) * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = static_cast<double>(p[k]) - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      const double s = 1.0 / std::sqrt(var + eps_);
      invstd_[c] = s;
      const double gm = gamma_[c], bt = beta_[c];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = (i * channels_ + c) * plane;
        T* p = x.data() + off;
        T* h = xhat_.data() + off;
        for (std::size_t k = 0; k < plane; ++k) {
          const double xh = (static_cast<double>(p[k]) - mu) * s;
          h[k] = static_cast<T>(xh);
          p[k] = static_cast<T>(gm * xh + bt);
        }
      }
      const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
      running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mu);
      running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
    }
    return x;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    detail::require_cached(!xhat_.empty(), "batchnorm");
    if (dy.shape() != xhat_.shape()) throw ShapeError("batchnorm backward: gradient shape mismatch");
    const std::size_t n = dy.dim(0), plane = dy.dim(2) * dy.dim(3);
    const double count = static_cast<double>(n * plane);
    Tensor<T> dx(dy.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = (i * channels_ + c) * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          sum_dy += static_cast<double>(dy[off + k]);
          sum_dy_xhat += static_cast<double>(dy[off + k]) * static_cast<double>(xhat_[off + k]);
        }
      }
      dgamma_[c] = static_cast<T>(sum_dy_xhat);
      dbeta_[c] = static_cast<T>(sum_dy);
      const double k_scale = static_cast<double>(gamma_[c]) * invstd_[c] / count;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = (i * channels_ + c) * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          const double g = static_cast<double>(dy[off + k]);
          dx[off + k] = static_cast<T>(k_scale * (count * g - sum_dy - static_cast<double>(xhat_[off + k]) * sum_dy_xhat));
        }
      }
    }
    return dx;
  }

  std::vector<Param<T>> params() override { return {{"gamma", &gamma_, &dgamma_}, {"beta", &beta_, &dbeta_}}; }
  std::vector<Tensor<T>*> buffers() override { return {&running_mean_, &running_var_}; }

  Tensor<T>& gamma() noexcept { return gamma_; }
  Tensor<T>& beta() noexcept { return beta_; }
  Tensor<T>& running_mean() noexcept { return running_mean_; }
  Tensor<T>& running_var() noexcept { return running_var_; }
  const Tensor<T>& gamma_grad() const noexcept { return dgamma_; }
  const Tensor<T>& beta_grad() const noexcept { return dbeta_; }
  double eps() const noexcept { return eps_; }
  double momentum() const noexcept { return momentum_; }

 private:
  void check(const Shape& sample) const {
    if (sample.rank() != 3 || sample[0] != channels_)
      throw ShapeError("batchnorm: expected " + std::to_string(channels_) + " channels, got sample shape " +
                       sample.to_string());
  }

  std::size_t channels_;
  double eps_, momentum_;
  Tensor<T> gamma_, beta_, running_mean_, running_var_, dgamma_, dbeta_;
  Tensor<T> xhat_;
  std::vector<double> invstd_;
};

// ---- activations and reshaping ---------------------------------------------

template <typename T>
class ReLU final : public Layer<T> {
 public:
  std::string_view kind() const override { return "relu"; }
  Shape output_shape(const Shape& input) const override { return input; }

  Tensor<T> forward(Tensor<T> x) override {
    if (this->training()) active_.assign(x.size(), 0);
    // NaN passes through so divergence upstream stays visible.
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > T{0}) {
        if (this->training()) active_[i] = 1;
      } else if (!std::isnan(x[i])) {
        x[i] = T{0};
      }
    }
    shape_ = x.shape();
    cached_ = this->training();
    return x;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    detail::require_cached(cached_, "relu");
    if (dy.shape() != shape_) throw ShapeError("relu backward: gradient shape mismatch");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = active_[i] ? dy[i] : T{0};
    return dx;
  }

 private:
  std::vector<std::uint8_t> active_;
  Shape shape_;
  bool cached_ = false;
};

/// 2x2 max pooling with stride 2. The argmax of each window is the first
/// maximal element in row-major window order; backward routes the whole
/// gradient there.
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  std::string_view kind() const override { return "maxpool"; }

  Shape output_shape(const Shape& input) const override {
    check(input);
    return Shape{input[0], input[1] / 2, input[2] / 2};
  }

  Tensor<T> forward(Tensor<T> x) override {
    if (x.rank() != 4) throw ShapeError("maxpool expects NCHW input, got " + x.shape().to_string());
    check(detail::drop_batch(x.shape()));
    const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t oh = H / 2, ow = W / 2;
    Tensor<T> y(Shape{x.dim(0), x.dim(1), oh, ow});
    const bool keep = this->training();
    if (keep) argmax_.assign(y.size(), 0);
    for (std::size_t p = 0; p < planes; ++p) {
      const T* in = x.data() + p * H * W;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = (2 * oy) * W + 2 * ox;
          const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
          for (std::size_t c : cand)
            if (in[c] > in[best] || (std::isnan(in[c]) && !std::isnan(in[best]))) best = c;
          const std::size_t o = (p * oh + oy) * ow + ox;
          y[o] = in[best];
          if (keep) argmax_[o] = p * H * W + best;
        }
      }
    }
    input_shape_ = x.shape();
    cached_ = keep;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    detail::require_cached(cached_, "maxpool");
    if (dy.size() != argmax_.size()) throw ShapeError("maxpool backward: gradient shape mismatch");
    Tensor<T> dx(input_shape_);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
    return dx;
  }

 private:
  static void check(const Shape& sample) {
    if (sample.rank() != 3) throw ShapeError("maxpool expects C,H,W samples, got " + sample.to_string());
    if (sample[1] % 2 != 0 || sample[2] % 2 != 0)
      throw ShapeError("maxpool requires even spatial dims, got " + sample.to_string());
  }

  std::vector<std::size_t> argmax_;
  Shape input_shape_;
  bool cached_ = false;
};

// [N, ...] -> [N, prod(...)]
template <typename T>
class Flatten final : public Layer<T> {
 public:
  std::string_view kind() const override { return "flatten"; }
  Shape output_shape(const Shape& input) const override { return Shape{input.elements()}; }

  Tensor<T> forward(Tensor<T> x) override {
    if (x.rank() < 2) throw ShapeError("flatten expects a batch axis plus features");
    input_shape_ = x.shape();
    const std::size_t n = x.dim(0), features = x.size() / n;
    return std::move(x).reshaped(Shape{n, features});
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    detail::require_cached(input_shape_.rank() > 0, "flatten");
    return dy.reshaped(input_shape_);
  }

 private:
  Shape input_shape_;
};

// ---- dense -----------------------------------------------------------------

// y = x W^T + b with W stored [out, in].
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in_features, std::size_t out_features)
      : in_(in_features),
        out_(out_features),
        weight_(Shape{out_features, in_features}),
        bias_(Shape{out_features}),
        dweight_(weight_.shape()),
        dbias_(bias_.shape()) {}

  std::string_view kind() const override { return "dense"; }

  void init(Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_));
    weight_ = uniform<T>(weight_.shape(), rng, -bound, bound);
    bias_.fill(T{0});
  }

  Shape output_shape(const Shape& input) const override {
    if (input.rank() != 1 || input[0] != in_)
      throw ShapeError("dense: expected " + std::to_string(in_) + " features, got " + input.to_string());
    return Shape{out_};
  }

  Tensor<T> forward(Tensor<T> x) override {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw ShapeError("dense: expected [N," + std::to_string(in_) + "] input, got " + x.shape().to_string());
    const std::size_t n = x.dim(0);
    Tensor<T> y(Shape{n, out_});
    gemm(Trans::No, Trans::Yes, n, out_, in_, x.data(), weight_.data(), y.data());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_; ++j) y[i * out_ + j] += bias_[j];
    if (this->training())
      input_ = std::move(x);
    else
      input_ = Tensor<T>();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    detail::require_cached(!input_.empty(), "dense");
    const std::size_t n = input_.dim(0);
    if (dy.shape() != Shape{n, out_}) throw ShapeError("dense backward: gradient shape mismatch");
    gemm(Trans::Yes, Trans::No, out_, in_, n, dy.data(), input_.data(), dweight_.data());
    for (std::size_t j = 0; j < out_; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(dy[i * out_ + j]);
      dbias_[j] = static_cast<T>(acc);
    }
    Tensor<T> dx(Shape{n, in_});
    gemm(Trans::No, Trans::No, n, in_, out_, dy.data(), weight_.data(), dx.data());
    return dx;
  }

  std::vector<Param<T>> params() override {
    return {{"weight", &weight_, &dweight_}, {"bias", &bias_, &dbias_}};
  }

  Tensor<T>& weight() noexcept { return weight_; }
  Tensor<T>& bias() noexcept { return bias_; }
  const Tensor<T>& weight_grad() const noexcept { return dweight_; }
  const Tensor<T>& bias_grad() const noexcept { return dbias_; }
  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }

 private:
  std::size_t in_, out_;
  Tensor<T> weight_, bias_, dweight_, dbias_;
  Tensor<T> input_;
};

// ---- dropout ---------------------------------------------------------------

/// Inverted dropout: in train mode each unit is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
/// freeze_mask(true) reuses the last mask, which gradient checks rely on.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
  }

  std::string_view kind() const override { return "dropout"; }
  Shape output_shape(const Shape& input) const override { return input; }

  Tensor<T> forward(Tensor<T> x) override {
    if (!this->training()) return x;
    if (!frozen_ || mask_.size() != x.size()) {
      const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
      mask_.resize(x.size());
      for (auto& m : mask_) m = rng_.uniform() < rate_ ? T{0} : keep_scale;
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask_[i];
    shape_ = x.shape();
    return x;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (!this->training()) return dy;
    detail::require_cached(dy.size() == mask_.size() && dy.shape() == shape_, "dropout");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
    return dx;
  }

  void freeze_mask(bool frozen) noexcept { frozen_ = frozen; }
  double rate() const noexcept { return rate_; }
  const std::vector<T>& mask() const noexcept { return mask_; }

 private:
  double rate_;
  Rng rng_;
  std::vector<T> mask_;
  Shape shape_;
  bool frozen_ = false;
};

}  // namespace leancnn
