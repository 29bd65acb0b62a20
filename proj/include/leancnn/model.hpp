#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leancnn/error.hpp"
#include "leancnn/layers.hpp"
#include "leancnn/rng.hpp"
#include "leancnn/tensor.hpp"

namespace leancnn {

// BTBCNN: two conv blocks and a single output logit (binary).
// BTMCNN: three conv blocks and one logit per class.
enum class ModelKind : std::uint8_t { BTBCNN = 0, BTMCNN = 1 };

inline std::string_view to_string(ModelKind kind) { return kind == ModelKind::BTBCNN ? "btbcnn" : "btmcnn"; }

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "btbcnn" || name == "BTBCNN") return ModelKind::BTBCNN;
  if (name == "btmcnn" || name == "BTMCNN") return ModelKind::BTMCNN;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected btbcnn or btmcnn)");
}

struct ModelSpec {
  static constexpr std::size_t kHiddenUnits = 512;

  ModelKind kind = ModelKind::BTBCNN;
  std::size_t in_channels = 1;
  // Classes in the task. BTBCNN is always a 2-class task with one output logit.
  std::size_t num_classes = 2;
  std::size_t input_size = 224;
  double dropout = 0.5;

  static ModelSpec btbcnn(std::size_t in_channels = 1, std::size_t input_size = 224) {
    return {ModelKind::BTBCNN, in_channels, 2, input_size, 0.5};
  }
  static ModelSpec btmcnn(std::size_t num_classes = 4, std::size_t in_channels = 1, std::size_t input_size = 224) {
    return {ModelKind::BTMCNN, in_channels, num_classes, input_size, 0.5};
  }

  std::vector<std::size_t> conv_channels() const {
    if (kind == ModelKind::BTBCNN) return {32, 64};
    return {32, 64, 128};
  }

  std::size_t output_width() const { return kind == ModelKind::BTBCNN ? 1 : num_classes; }

  std::size_t flatten_size() const {
    const auto channels = conv_channels();
    const std::size_t side = input_size >> channels.size();
    return channels.back() * side * side;
  }

  void validate() const {
    if (in_channels == 0) throw ConfigError("model spec: in_channels must be at least 1");
    if (kind == ModelKind::BTBCNN && num_classes != 2)
      throw ConfigError("model spec: btbcnn is a binary model (num_classes must be 2)");
    if (kind == ModelKind::BTMCNN && num_classes < 2)
      throw ConfigError("model spec: btmcnn needs at least 2 classes");
    const std::size_t pools = conv_channels().size();
    if (input_size < 8 || input_size % (std::size_t{1} << pools) != 0)
      throw ConfigError("model spec: input_size " + std::to_string(input_size) + " is unsupported for " +
                        std::string(to_string(kind)) + " (must be >= 8 and divisible by " +
                        std::to_string(std::size_t{1} << pools) + ")");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model spec: dropout must lie in [0,1)");
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct LayerSummary {
  std::string kind;
  Shape output;  // per-sample
  std::size_t params = 0;
};

/// An ordered chain of layers over a fixed per-sample input shape.
///
/// Construction propagates the input shape through every layer, so a chain
/// whose flatten size disagrees with the dense layer that follows is rejected
/// before any data flows.
template <typename T>
class Model {
 public:
  Model(Shape sample_shape, std::vector<std::unique_ptr<Layer<T>>> layers, std::optional<ModelSpec> spec = {})
      : sample_shape_(std::move(sample_shape)), layers_(std::move(layers)), spec_(spec) {
    Shape s = sample_shape_;
    for (auto& layer : layers_) {
      s = layer->output_shape(s);
      summary_.push_back({std::string(layer->kind()), s, 0});
      for (const auto& p : layer->params()) summary_.back().params += p.value->size();
    }
    output_shape_ = s;
  }

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const Shape& sample_shape() const noexcept { return sample_shape_; }
  const Shape& output_shape() const noexcept { return output_shape_; }
  const std::optional<ModelSpec>& spec() const noexcept { return spec_; }
  const std::vector<LayerSummary>& summary() const noexcept { return summary_; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  void set_mode(Mode mode) {
    mode_ = mode;
    for (auto& layer : layers_) layer->set_mode(mode);
  }
  Mode mode() const noexcept { return mode_; }

  Tensor<T> forward(Tensor<T> batch) {
    if (batch.rank() != sample_shape_.rank() + 1 || detail::drop_batch(batch.shape()) != sample_shape_)
      throw ShapeError("model input " + batch.shape().to_string() + " does not match [N," +
                       sample_shape_.to_string().substr(1));
    for (auto& layer : layers_) batch = layer->forward(std::move(batch));
    return batch;
  }

  // Propagates dL/dlogits back through the chain, filling every parameter gradient.
  Tensor<T> backward(const Tensor<T>& dlogits) {
    Tensor<T> grad = dlogits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) grad = (*it)->backward(grad);
    return grad;
  }

  std::vector<Param<T>> params() {
    std::vector<Param<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      for (auto p : layers_[i]->params()) {
        p.name = std::to_string(i) + "." + std::string(layers_[i]->kind()) + "." + p.name;
        out.push_back(std::move(p));
      }
    return out;
  }

  std::vector<Tensor<T>*> buffers() {
    std::vector<Tensor<T>*> out;
    for (auto& layer : layers_)
      for (auto* b : layer->buffers()) out.push_back(b);
    return out;
  }

  // Learnable scalars: conv/dense weights and biases plus batch-norm gamma
  // and beta. Running statistics are state, not parameters.
  std::size_t param_count() const {
    std::size_t total = 0;
    for (const auto& s : summary_) total += s.params;
    return total;
  }

 private:
  Shape sample_shape_;
  Shape output_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::optional<ModelSpec> spec_;
  std::vector<LayerSummary> summary_;
  Mode mode_ = Mode::Train;
};

template <typename T>
std::size_t param_count(const Model<T>& model) {
  return model.param_count();
}

/// Builds BTBCNN or BTMCNN: per conv block Conv(3x3, pad 1) -> BatchNorm ->
/// ReLU -> MaxPool(2), then Flatten -> Dense(512) -> ReLU -> Dropout ->
/// Dense(output_width). Weights are drawn from one Rng(seed) in layer order;
/// dropout gets its own derived stream.
template <typename T = float>
Model<T> build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<std::unique_ptr<Layer<T>>> layers;
  std::size_t channels = spec.in_channels;
  for (std::size_t out : spec.conv_channels()) {
    auto conv = std::make_unique<Conv2d<T>>(channels, out, 3, 1, 1);
    conv->init(rng);
    layers.push_back(std::move(conv));
    layers.push_back(std::make_unique<BatchNorm2d<T>>(out));
    layers.push_back(std::make_unique<ReLU<T>>());
    layers.push_back(std::make_unique<MaxPool2d<T>>());
    channels = out;
  }
  layers.push_back(std::make_unique<Flatten<T>>());
  auto fc1 = std::make_unique<Dense<T>>(spec.flatten_size(), ModelSpec::kHiddenUnits);
  fc1->init(rng);
  layers.push_back(std::move(fc1));
  layers.push_back(std::make_unique<ReLU<T>>());
  layers.push_back(std::make_unique<Dropout<T>>(spec.dropout, derive_seed(seed, 1)));
  auto fc2 = std::make_unique<Dense<T>>(ModelSpec::kHiddenUnits, spec.output_width());
  fc2->init(rng);
  layers.push_back(std::move(fc2));

  Model<T> model(Shape{spec.in_channels, spec.input_size, spec.input_size}, std::move(layers), spec);
  if (model.output_shape() != Shape{spec.output_width()})
    throw ConfigError("model spec: layer chain ends in " + model.output_shape().to_string());
  return model;
}

// Closed-form parameter count, independent of any built model.
inline std::size_t expected_param_count(const ModelSpec& spec) {
  spec.validate();
  std::size_t total = 0, in = spec.in_channels;
  for (std::size_t out : spec.conv_channels()) {
    total += out * in * 9 + out;  // conv weight + bias
    total += 2 * out;             // batch-norm scale + shift
    in = out;
  }
  total += spec.flatten_size() * ModelSpec::kHiddenUnits + ModelSpec::kHiddenUnits;
  total += ModelSpec::kHiddenUnits * spec.output_width() + spec.output_width();
  return total;
}

// Published parameter figure for BTMCNN (224x224 input, 4 classes). The
// layer-by-layer count for single-channel input is 576 lower; with 3-channel
// input (conv1 grows by 2 * 32 * 9 weights) the two agree exactly.
inline constexpr std::size_t kPublishedBtmcnnParams = 51'476'484;

// One-line note comparing a count against the published figure, or empty
// when no published figure applies to the spec.
inline std::string param_count_note(const ModelSpec& spec, std::size_t count) {
  if (spec.kind != ModelKind::BTMCNN || spec.num_classes != 4 || spec.input_size != 224) return {};
  const long long diff = static_cast<long long>(kPublishedBtmcnnParams) - static_cast<long long>(count);
  if (diff == 0) return "matches the published BTMCNN figure of 51,476,484 parameters";
  ModelSpec rgb = spec;
  rgb.in_channels = 3;
  std::string note = "published BTMCNN figure is 51,476,484 parameters, " + std::to_string(diff) +
                     " more than this count";
  if (expected_param_count(rgb) == kPublishedBtmcnnParams)
    note += "; it equals the count for 3-channel input";
  return note;
}

// FNV-1a over the raw bytes of every parameter (and optionally the buffers).
template <typename T>
std::uint64_t parameter_hash(Model<T>& model, bool include_buffers = false) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const Tensor<T>& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : model.params()) feed(*p.value);
  if (include_buffers)
    for (const auto* b : model.buffers()) feed(*b);
  return h;
}

}  // namespace leancnn
