#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "leancnn/error.hpp"
#include "leancnn/image.hpp"
#include "leancnn/log.hpp"
#include "leancnn/parallel.hpp"
#include "leancnn/rng.hpp"
#include "leancnn/tensor.hpp"

namespace leancnn {

namespace fs = std::filesystem;

enum class SplitTag { None, Train, Test };

inline std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::Train: return "train";
    case SplitTag::Test: return "test";
    default: return "none";
  }
}

struct Record {
  std::string path;  // relative to the manifest root, '/'-separated
  int label = 0;
  SplitTag split = SplitTag::None;

  friend bool operator==(const Record&, const Record&) = default;
};

/// Listing of a dataset folder. Classes are sorted by folder name; records
/// are ordered by split (train folder first), then class, then path.
struct DatasetManifest {
  fs::path root;
  std::vector<std::string> classes;
  std::vector<Record> records;

  bool has_predefined_split() const {
    return std::any_of(records.begin(), records.end(), [](const Record& r) { return r.split != SplitTag::None; });
  }
  std::size_t count(SplitTag tag) const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [tag](const Record& r) { return r.split == tag; }));
  }
  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(classes.size(), 0);
    for (const auto& r : records) ++counts.at(static_cast<std::size_t>(r.label));
    return counts;
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

namespace dataset_detail {

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::vector<std::string> subdirectories(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && !name.empty() && name[0] != '.') out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::string> list_images(const fs::path& root, const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    std::ifstream probe(entry.path(), std::ios::binary);
    if (!probe) {
      log_warning("skipping unreadable file " + entry.path().string());
      continue;
    }
    out.push_back(fs::relative(entry.path(), root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline const char* split_folder(const fs::path& root, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (fs::is_directory(root / n)) return n;
  return nullptr;
}

}  // namespace dataset_detail

/// Scans `root/<class>/*.{png,jpg,jpeg}` or
/// `root/{Training,Testing}/<class>/*`. The second layout tags every record
/// with its predefined split.
inline DatasetManifest scan_dataset(const fs::path& root) {
  using namespace dataset_detail;
  if (!fs::exists(root)) throw DataError("data error: path not found: " + root.string());
  if (!fs::is_directory(root)) throw DataError("data error: not a directory: " + root.string());

  DatasetManifest m;
  m.root = root;
  const char* train_dir = split_folder(root, {"Training", "training", "train"});
  const char* test_dir = split_folder(root, {"Testing", "testing", "test"});
  std::vector<std::pair<fs::path, SplitTag>> groups;
  if (train_dir || test_dir) {
    if (train_dir) groups.emplace_back(root / train_dir, SplitTag::Train);
    if (test_dir) groups.emplace_back(root / test_dir, SplitTag::Test);
  } else {
    groups.emplace_back(root, SplitTag::None);
  }

  std::set<std::string> names;
  for (const auto& [dir, tag] : groups)
    for (auto& c : subdirectories(dir)) names.insert(c);
  m.classes.assign(names.begin(), names.end());
  if (m.classes.empty()) throw DataError("data error: no classes found in " + root.string());

  for (const auto& [dir, tag] : groups) {
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
      const fs::path class_dir = dir / m.classes[c];
      if (!fs::is_directory(class_dir)) {
        log_warning("class '" + m.classes[c] + "' missing under " + dir.string());
        continue;
      }
      const auto files = list_images(root, class_dir);
      if (files.empty()) log_warning("class folder " + class_dir.string() + " has no images");
      for (const auto& f : files) m.records.push_back({f, static_cast<int>(c), tag});
    }
  }
  return m;
}

// ---- manifest cache --------------------------------------------------------

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) {
    nlohmann::json rec = {{"path", r.path}, {"label", r.label}};
    rec["split"] = r.split == SplitTag::None ? nlohmann::json(nullptr) : nlohmann::json(to_string(r.split));
    records.push_back(std::move(rec));
  }
  return {{"format_version", 1}, {"root", m.root.generic_string()}, {"classes", m.classes}, {"records", records}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw FormatError("manifest: unsupported format_version");
    DatasetManifest m;
    m.root = j.at("root").get<std::string>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& rec : j.at("records")) {
      Record r;
      r.path = rec.at("path").get<std::string>();
      r.label = rec.at("label").get<int>();
      if (r.label < 0 || static_cast<std::size_t>(r.label) >= m.classes.size())
        throw FormatError("manifest: label out of range for " + r.path);
      const auto& s = rec.at("split");
      r.split = s.is_null() ? SplitTag::None : (s.get<std::string>() == "train" ? SplitTag::Train : SplitTag::Test);
      m.records.push_back(std::move(r));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("data error: path not found: " + path.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

// ---- splitting -------------------------------------------------------------

// Indices into DatasetManifest::records, each list ascending.
struct Partition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  friend bool operator==(const Partition&, const Partition&) = default;
};

enum class SplitMode {
  Auto,     // predefined folders when present, ratio split otherwise
  Ratio,    // seeded shuffle, then the first floor(ratio * n) go to train
  Folders,  // predefined Training/Testing folders (error if absent)
};

// Train size is floor(ratio * n); the 1e-9 slack keeps e.g. 0.29 * 100 at 29.
inline std::size_t train_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

inline Partition split_indices(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0,1)");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t cut = train_count(n, ratio);
  Partition p{{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut)},
              {order.begin() + static_cast<std::ptrdiff_t>(cut), order.end()}};
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.test.begin(), p.test.end());
  return p;
}

inline Partition split(const DatasetManifest& m, double ratio = 0.8, std::uint64_t seed = 42,
                       SplitMode mode = SplitMode::Ratio) {
  const bool folders = m.has_predefined_split();
  if (mode == SplitMode::Folders && !folders)
    throw ConfigError("respect-folders requested but " + m.root.string() + " has no Training/Testing folders");
  if (mode == SplitMode::Folders || (mode == SplitMode::Auto && folders)) {
    Partition p;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      if (m.records[i].split == SplitTag::Train) p.train.push_back(i);
      if (m.records[i].split == SplitTag::Test) p.test.push_back(i);
    }
    return p;
  }
  return split_indices(m.records.size(), ratio, seed);
}

// ---- labels ----------------------------------------------------------------

/// Maps the named classes to label 1 and every other class to label 0. The
/// two resulting classes are named by joining their members with '+'.
inline DatasetManifest binarize_labels(const DatasetManifest& m, std::span<const std::string> positive) {
  if (positive.empty()) throw ConfigError("binarize: positive class set is empty");
  std::vector<bool> is_pos(m.classes.size(), false);
  for (const auto& name : positive) {
    auto it = std::find(m.classes.begin(), m.classes.end(), name);
    if (it == m.classes.end()) throw ConfigError("binarize: unknown class '" + name + "'");
    is_pos[static_cast<std::size_t>(it - m.classes.begin())] = true;
  }
  std::string neg_name, pos_name;
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    std::string& target = is_pos[c] ? pos_name : neg_name;
    target += (target.empty() ? "" : "+") + m.classes[c];
  }
  DatasetManifest out = m;
  out.classes = {neg_name.empty() ? "none" : neg_name, pos_name};
  for (auto& r : out.records) r.label = is_pos[static_cast<std::size_t>(r.label)] ? 1 : 0;
  return out;
}

inline const std::vector<std::string>& default_positive_classes() {
  static const std::vector<std::string> names{"glioma", "meningioma", "pituitary"};
  return names;
}

// ---- batching and sampling -------------------------------------------------

/// Splits `records` into consecutive batches of `batch` (last one may be
/// shorter). With shuffle on, the order for a given epoch is a Fisher-Yates
/// permutation drawn from Rng(seed + epoch).
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> records, std::size_t batch,
                                                          bool shuffle, std::uint64_t seed, std::uint64_t epoch = 0) {
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(records.begin(), records.end());
  if (shuffle) {
    Rng rng(seed + epoch);
    rng.shuffle(std::span<std::size_t>(order));
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch)));
  return out;
}

/// Exactly k candidates per class, without replacement. Classes are visited
/// in label order and share one Rng(seed) stream; each class's candidates
/// are shuffled and the first k kept. Output is class-major.
inline std::vector<std::size_t> few_shot_subset(std::span<const int> labels, std::span<const std::string> class_names,
                                                std::span<const std::size_t> candidates, std::size_t k,
                                                std::uint64_t seed) {
  if (k == 0) return {};
  std::vector<std::vector<std::size_t>> by_class(class_names.size());
  for (std::size_t idx : candidates) {
    const int label = labels[idx];
    if (label < 0 || static_cast<std::size_t>(label) >= class_names.size())
      throw DataError("data error: label out of range in few-shot sampling");
    by_class[static_cast<std::size_t>(label)].push_back(idx);
  }
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    if (pool.size() < k)
      throw DataError("data error: class '" + class_names[c] + "' has " + std::to_string(pool.size()) +
                      " training records, fewer than k=" + std::to_string(k));
    rng.shuffle(std::span<std::size_t>(pool));
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

inline std::vector<std::size_t> few_shot_subset(const DatasetManifest& m, std::span<const std::size_t> train,
                                                std::size_t k, std::uint64_t seed) {
  std::vector<int> labels(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) labels[i] = m.records[i].label;
  return few_shot_subset(labels, m.classes, train, k, seed);
}

// ---- in-memory samples -----------------------------------------------------

/// Preprocessed images and labels held in one contiguous buffer.
///
/// Records which samples have been read through gather(), so experiment code
/// can audit how much training data a model actually saw.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(Shape sample_shape, std::vector<std::string> class_names)
      : shape_(std::move(sample_shape)), names_(std::move(class_names)) {}

  const Shape& sample_shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t num_classes() const noexcept { return names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return names_; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  void add(const Tensor<float>& sample, int label) {
    if (sample.shape() != shape_)
      throw ShapeError("sample shape " + sample.shape().to_string() + " does not match " + shape_.to_string());
    if (label < 0 || static_cast<std::size_t>(label) >= names_.size()) throw ValidationError("sample label out of range");
    pixels_.insert(pixels_.end(), sample.values().begin(), sample.values().end());
    labels_.push_back(label);
    touched_.push_back(0);
  }

  // Pre-sized storage for parallel fills via set().
  void resize(std::size_t n) {
    pixels_.assign(n * shape_.elements(), 0.0f);
    labels_.assign(n, 0);
    touched_.assign(n, 0);
  }
  void set(std::size_t i, const Tensor<float>& sample, int label) {
    if (sample.shape() != shape_) throw ShapeError("sample shape mismatch");
    std::copy(sample.values().begin(), sample.values().end(), pixels_.begin() + static_cast<std::ptrdiff_t>(i * shape_.elements()));
    labels_.at(i) = label;
  }

  // [B, ...sample_shape] in the order of `indices`.
  Tensor<float> gather(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> dims{indices.size()};
    dims.insert(dims.end(), shape_.dims().begin(), shape_.dims().end());
    Tensor<float> out{Shape(std::move(dims))};
    const std::size_t per = shape_.elements();
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const std::size_t i = indices[b];
      if (i >= size()) throw ShapeError("sample index out of range");
      std::copy_n(pixels_.begin() + static_cast<std::ptrdiff_t>(i * per), per, out.data() + b * per);
      touched_[i] = 1;
    }
    return out;
  }

  std::vector<int> labels_of(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels_.at(i));
    return out;
  }

  SampleSet subset(std::span<const std::size_t> indices) const {
    SampleSet out(shape_, names_);
    out.resize(indices.size());
    const std::size_t per = shape_.elements();
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const std::size_t i = indices[b];
      std::copy_n(pixels_.begin() + static_cast<std::ptrdiff_t>(i * per), per,
                  out.pixels_.begin() + static_cast<std::ptrdiff_t>(b * per));
      out.labels_[b] = labels_.at(i);
    }
    return out;
  }

  std::size_t distinct_accessed() const {
    return static_cast<std::size_t>(std::count(touched_.begin(), touched_.end(), std::uint8_t{1}));
  }
  void reset_access() const { std::fill(touched_.begin(), touched_.end(), std::uint8_t{0}); }

  std::vector<std::size_t> class_histogram() const {
    std::vector<std::size_t> h(names_.size(), 0);
    for (int l : labels_) ++h[static_cast<std::size_t>(l)];
    return h;
  }

 private:
  Shape shape_;
  std::vector<std::string> names_;
  std::vector<float> pixels_;
  std::vector<int> labels_;
  mutable std::vector<std::uint8_t> touched_;
};

// Decodes and preprocesses manifest records (in the given order). Workers
// fill pre-assigned slots, so the result does not depend on scheduling.
inline SampleSet load_samples(const DatasetManifest& m, std::span<const std::size_t> records,
                              const PreprocessConfig& cfg = {}) {
  cfg.validate();
  SampleSet out(Shape{1, cfg.target_size, cfg.target_size}, m.classes);
  out.resize(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const Record& r = m.records.at(records[i]);
    const fs::path path = m.root / r.path;
    out.set(i, preprocess(read_file(path), cfg, path.string()), r.label);
  });
  return out;
}

}  // namespace leancnn
