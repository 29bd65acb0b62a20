#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "leancnn/error.hpp"
#include "leancnn/model.hpp"
#include "leancnn/parallel.hpp"
#include "leancnn/rng.hpp"
#include "leancnn/train.hpp"

namespace leancnn {

struct BenchConfig {
  std::size_t batch = 128;
  std::size_t warmup = 1;
  std::size_t measured = 5;
  std::size_t threads = 1;
  std::uint64_t seed = 7;  // synthetic input batch

  void validate() const {
    if (batch == 0) throw ConfigError("bench: batch must be >= 1");
    if (warmup < 1) throw ConfigError("bench: warmup must be >= 1");
    if (measured < 5) throw ConfigError("bench: measured iterations must be >= 5");
    if (threads == 0) throw ConfigError("bench: threads must be >= 1");
  }
};

struct LatencyStats {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
};

inline LatencyStats latency_stats(std::vector<double> samples) {
  if (samples.empty()) throw ConfigError("latency statistics need at least one sample");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  LatencyStats s;
  double total = 0.0;
  for (double v : samples) total += v;
  s.mean = total / static_cast<double>(n);
  s.median = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  // nearest rank
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = samples[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

inline std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        cpu = line.substr(colon + 1);
        cpu.erase(0, cpu.find_first_not_of(' '));
      }
      break;
    }
  }
  std::ostringstream out;
  out << cpu << "; " << std::thread::hardware_concurrency() << " logical cpus";
#if defined(__AVX512F__)
  out << "; avx512";
#elif defined(__AVX2__)
  out << "; avx2";
#endif
#if defined(__VERSION__)
  out << "; compiler " << __VERSION__;
#endif
  return out.str();
}

struct BenchEntry {
  std::string model;
  std::size_t batch = 0;
  std::size_t threads = 0;
  std::size_t input_size = 0;
  std::size_t param_count = 0;
  std::size_t warmup = 0;
  LatencyStats ms_per_batch;
  double ms_per_image = 0.0;  // median / batch
  std::vector<double> samples_ms;
};

/// Latency of eval-mode forward passes on one synthetic batch. Warmup passes
/// are run and discarded.
inline BenchEntry time_inference(Model<float>& model, const BenchConfig& cfg) {
  cfg.validate();
  ExecutionScope scope({cfg.threads, cfg.threads == 1});
  model.set_mode(Mode::Eval);
  std::vector<std::size_t> dims{cfg.batch};
  dims.insert(dims.end(), model.sample_shape().dims().begin(), model.sample_shape().dims().end());
  Rng rng(cfg.seed);
  const Tensor<float> input = uniform<float>(Shape(dims), rng, 0.0f, 1.0f);

  for (std::size_t i = 0; i < cfg.warmup; ++i) (void)model.forward(input);
  BenchEntry e;
  e.samples_ms.reserve(cfg.measured);
  for (std::size_t i = 0; i < cfg.measured; ++i) {
    Tensor<float> x = input;
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<float> y = model.forward(std::move(x));
    const auto t1 = std::chrono::steady_clock::now();
    e.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  e.model = model.spec() ? std::string(to_string(model.spec()->kind)) : "custom";
  e.batch = cfg.batch;
  e.threads = cfg.threads;
  e.input_size = model.sample_shape()[model.sample_shape().rank() - 1];
  e.param_count = model.param_count();
  e.warmup = cfg.warmup;
  e.ms_per_batch = latency_stats(e.samples_ms);
  e.ms_per_image = e.ms_per_batch.median / static_cast<double>(cfg.batch);
  return e;
}

struct TrainingTiming {
  std::string model;
  int epochs = 0;
  std::size_t dataset_size = 0;
  std::size_t batch = 0;
  std::size_t threads = 0;
  double seconds = 0.0;
  std::string hardware;
};

/// Wall-clock seconds of the full training loop (no evaluation).
inline TrainingTiming time_training(const ModelSpec& spec, const SampleSet& data, int epochs, TrainConfig cfg) {
  if (epochs < 1) throw ConfigError("bench: training timing needs at least one epoch");
  cfg.epochs = epochs;
  cfg.validate();
  ExecutionScope scope(cfg.policy());
  Model<float> model = build<float>(spec, cfg.seed);
  Trainer trainer(model, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  for (int e = 1; e <= epochs; ++e) (void)trainer.run_epoch(data, e);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::string(to_string(spec.kind)), epochs, data.size(), cfg.batch, cfg.threads, seconds, hardware_descriptor()};
}

// Published per-batch inference times at batch 128 (ms) for two datasets.
// These are reference values only; nothing here was measured.
struct LiteratureRow {
  const char* model;
  double br35h_ms;
  double mri_ms;
};

inline const std::vector<LiteratureRow>& literature_inference_ms() {
  static const std::vector<LiteratureRow> rows{
      {"BTBCNN", 0.9, 0.9}, {"BTMCNN", 1.2, 1.4}, {"ResNet18", 3.8, 4.0}, {"VGG16", 2.8, 2.8}};
  return rows;
}

struct BenchReport {
  std::string hardware;
  std::vector<BenchEntry> entries;
  std::vector<TrainingTiming> training;
};

inline nlohmann::json to_json(const BenchEntry& e) {
  return {{"model", e.model},
          {"batch", e.batch},
          {"threads", e.threads},
          {"input_size", e.input_size},
          {"param_count", e.param_count},
          {"warmup", e.warmup},
          {"mean_ms", e.ms_per_batch.mean},
          {"median_ms", e.ms_per_batch.median},
          {"p95_ms", e.ms_per_batch.p95},
          {"ms_per_image", e.ms_per_image},
          {"samples_ms", e.samples_ms}};
}

inline nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json entries = nlohmann::json::array(), training = nlohmann::json::array(),
                 literature = nlohmann::json::array();
  for (const auto& e : r.entries) entries.push_back(to_json(e));
  for (const auto& t : r.training)
    training.push_back({{"model", t.model},
                        {"epochs", t.epochs},
                        {"dataset_size", t.dataset_size},
                        {"batch", t.batch},
                        {"threads", t.threads},
                        {"seconds", t.seconds},
                        {"hardware", t.hardware}});
  for (const auto& l : literature_inference_ms())
    literature.push_back({{"model", l.model}, {"br35h_ms", l.br35h_ms}, {"mri_ms", l.mri_ms}});
  return {{"hardware", r.hardware},
          {"inference", entries},
          {"training", training},
          {"literature_inference_ms", literature}};
}

inline std::string render_bench_markdown(const nlohmann::json& j) {
  std::ostringstream out;
  auto fixed = [](double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return std::string(buf);
  };
  out << "# Inference time per batch\n\nhardware: " << j.at("hardware").get<std::string>() << "\n\n";
  out << "| model | batch | threads | input | params | mean ms | median ms | p95 ms | ms/image |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& e : j.at("inference")) {
    out << "| " << e.at("model").get<std::string>() << " | " << e.at("batch").get<std::size_t>() << " | "
        << e.at("threads").get<std::size_t>() << " | " << e.at("input_size").get<std::size_t>() << " | "
        << e.at("param_count").get<std::size_t>() << " | " << fixed(e.at("mean_ms").get<double>(), 2) << " | "
        << fixed(e.at("median_ms").get<double>(), 2) << " | " << fixed(e.at("p95_ms").get<double>(), 2) << " | "
        << fixed(e.at("ms_per_image").get<double>(), 3) << " |\n";
  }
  if (!j.at("training").empty()) {
    out << "\n## Training time\n\n| model | epochs | images | batch | threads | seconds |\n|---|---|---|---|---|---|\n";
    for (const auto& t : j.at("training"))
      out << "| " << t.at("model").get<std::string>() << " | " << t.at("epochs").get<int>() << " | "
          << t.at("dataset_size").get<std::size_t>() << " | " << t.at("batch").get<std::size_t>() << " | "
          << t.at("threads").get<std::size_t>() << " | " << fixed(t.at("seconds").get<double>(), 3) << " |\n";
  }
  out << "\n## Literature values (not measured here, hardware unknown)\n\n";
  out << "| model | Br35H ms/batch | Brain Tumor MRI ms/batch |\n|---|---|---|\n";
  for (const auto& l : j.at("literature_inference_ms"))
    out << "| " << l.at("model").get<std::string>() << " | " << fixed(l.at("br35h_ms").get<double>(), 1) << " | "
        << fixed(l.at("mri_ms").get<double>(), 1) << " |\n";
  return out.str();
}

}  // namespace leancnn
