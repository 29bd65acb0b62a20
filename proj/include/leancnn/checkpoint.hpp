#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "leancnn/error.hpp"
#include "leancnn/model.hpp"

namespace leancnn {

// Training metadata stored alongside the weights.
struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  double lr = 0.0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct LoadedCheckpoint {
  Model<float> model;
  CheckpointMeta meta;
};

/// Checkpoint layout (all integers and floats little-endian), see docs/checkpoint.md:
///   "LCNN" | u16 version
///   spec:  u8 kind | u32 in_channels | u32 num_classes | u32 input_size | f32 dropout
///   meta:  u64 seed | u32 epochs | f64 lr
///   u32 tensor count, then per tensor: u32 rank | u32 dims[rank] | f32 data[prod(dims)]
/// Tensors appear layer by layer: parameters first (weight, bias / gamma,
/// beta), then buffers (running mean, running var).
namespace checkpoint {

inline constexpr char kMagic[4] = {'L', 'C', 'N', 'N'};
inline constexpr std::uint16_t kVersion = 1;

namespace detail {

class Writer {
 public:
  template <typename U>
  void put(U value) {
    static_assert(std::is_trivially_copyable_v<U>);
    unsigned char raw[sizeof(U)];
    std::memcpy(raw, &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(U));
  }
  void put_bytes(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  void put_floats(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* raw = reinterpret_cast<const unsigned char*>(values.data());
      bytes_.insert(bytes_.end(), raw, raw + values.size_bytes());
    } else {
      for (float v : values) put<float>(v);
    }
  }
  const std::vector<unsigned char>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    unsigned char raw[sizeof(U)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, raw, sizeof(U));
    return value;
  }
  void get_floats(std::span<float> out, const char* what) {
    need(out.size_bytes(), what);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
      pos_ += out.size_bytes();
    } else {
      for (float& v : out) v = get<float>(what);
    }
  }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<Tensor<float>*> ordered_tensors(Model<float>& model) {
  std::vector<Tensor<float>*> out;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    for (auto& p : model.layer(i).params()) out.push_back(p.value);
    for (auto* b : model.layer(i).buffers()) out.push_back(b);
  }
  return out;
}

}  // namespace detail

inline std::vector<unsigned char> serialize(Model<float>& model, const CheckpointMeta& meta) {
  if (!model.spec()) throw ConfigError("checkpoint: only spec-built models can be saved");
  const ModelSpec& spec = *model.spec();
  detail::Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.in_channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.num_classes));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.input_size));
  w.put<float>(static_cast<float>(spec.dropout));
  w.put<std::uint64_t>(meta.seed);
  w.put<std::uint32_t>(meta.epochs);
  w.put<double>(meta.lr);
  const auto tensors = detail::ordered_tensors(model);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape().dims()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_floats(t->span());
  }
  return w.bytes();
}

inline LoadedCheckpoint deserialize(std::vector<unsigned char> bytes) {
  detail::Reader r(std::move(bytes));
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.get<std::uint8_t>("magic"));
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic (not an LCNN file)");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  ModelSpec spec;
  const auto kind = r.get<std::uint8_t>("model kind");
  if (kind > 1) throw FormatError("checkpoint: unknown model kind " + std::to_string(kind));
  spec.kind = static_cast<ModelKind>(kind);
  spec.in_channels = r.get<std::uint32_t>("in_channels");
  spec.num_classes = r.get<std::uint32_t>("num_classes");
  spec.input_size = r.get<std::uint32_t>("input_size");
  spec.dropout = static_cast<double>(r.get<float>("dropout"));
  CheckpointMeta meta;
  meta.seed = r.get<std::uint64_t>("seed");
  meta.epochs = r.get<std::uint32_t>("epochs");
  meta.lr = r.get<double>("lr");
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model spec: ") + e.what());
  }

  Model<float> model = build<float>(spec, meta.seed);
  const auto tensors = detail::ordered_tensors(model);
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != tensors.size())
    throw FormatError("checkpoint: expected " + std::to_string(tensors.size()) + " tensors, found " +
                      std::to_string(count));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor<float>& target = *tensors[i];
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank != target.rank()) throw FormatError("checkpoint: tensor " + std::to_string(i) + " has wrong rank");
    for (std::size_t d = 0; d < rank; ++d)
      if (r.get<std::uint32_t>("tensor dims") != target.dim(d))
        throw FormatError("checkpoint: tensor " + std::to_string(i) + " has wrong dims");
    r.get_floats(target.span(), "tensor data");
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after last tensor");
  return {std::move(model), meta};
}

inline void save(Model<float>& model, const std::filesystem::path& path, const CheckpointMeta& meta = {}) {
  const auto bytes = serialize(model, meta);
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline LoadedCheckpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("data error: path not found: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(std::move(bytes));
}

}  // namespace checkpoint
}  // namespace leancnn
