#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "leancnn/checkpoint.hpp"
#include "leancnn/error.hpp"
#include "leancnn/metrics.hpp"
#include "leancnn/model.hpp"
#include "leancnn/train.hpp"

#ifndef LEANCNN_VERSION
#define LEANCNN_VERSION "0.1.0"
#endif

namespace leancnn {

namespace fs = std::filesystem;

inline constexpr int kRunLayoutVersion = 1;
inline constexpr const char* kEngineVersion = LEANCNN_VERSION;

// File names inside a run directory.
namespace run_files {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kTrace = "trace.csv";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kConfusion = "confusion.csv";
inline constexpr const char* kSummary = "summary.md";
inline constexpr const char* kCheckpoint = "model.lcnn";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kSweep = "sweep.json";
inline constexpr const char* kFewShot = "fewshot.json";
inline constexpr const char* kBench = "bench.json";
}  // namespace run_files

inline std::string format_real(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

inline std::string format_count(std::size_t n) {
  std::string digits = std::to_string(n), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

// ---- JSON ------------------------------------------------------------------

inline nlohmann::json to_json(const ModelSpec& spec) {
  return {{"kind", std::string(to_string(spec.kind))},
          {"in_channels", spec.in_channels},
          {"num_classes", spec.num_classes},
          {"input_size", spec.input_size},
          {"dropout", spec.dropout}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    s.kind = parse_model_kind(j.at("kind").get<std::string>());
    s.in_channels = j.at("in_channels").get<std::size_t>();
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.input_size = j.at("input_size").get<std::size_t>();
    s.dropout = j.at("dropout").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("format error: model spec: ") + e.what());
  }
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"seed", c.seed},
          {"loss", to_string(c.loss)},
          {"eval_every", c.eval_every},
          {"deterministic", c.deterministic},
          {"threads", c.threads}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch = j.at("batch").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.loss = parse_loss_kind(j.at("loss").get<std::string>());
    c.eval_every = j.at("eval_every").get<int>();
    c.deterministic = j.at("deterministic").get<bool>();
    c.threads = j.at("threads").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("format error: train config: ") + e.what());
  }
}

// Wall-clock time is left out so identical runs serialize identically.
inline nlohmann::json to_json(const RunResult& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_accuracy", e.train_accuracy}};
    if (e.eval_accuracy) row["eval_accuracy"] = *e.eval_accuracy;
    epochs.push_back(row);
  }
  return {{"config", to_json(r.config)},
          {"epochs", epochs},
          {"metrics", to_json(r.report)},
          {"confusion", to_json(r.confusion)},
          {"train_size", r.train_size},
          {"test_size", r.test_size},
          {"train_samples_seen", r.train_samples_seen},
          {"param_count", r.param_count}};
}

inline std::string render_trace_csv(const std::vector<EpochRecord>& epochs) {
  std::string out = "epoch,train_loss,train_accuracy,eval_accuracy\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + ',' + format_real(e.train_loss) + ',' + format_real(e.train_accuracy) + ',' +
           (e.eval_accuracy ? format_real(*e.eval_accuracy) : std::string()) + '\n';
  }
  return out;
}

// ---- files -----------------------------------------------------------------

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("data error: cannot write " + path.string());
  f << text;
  if (!f) throw DataError("data error: write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("data error: path not found: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("format error: " + path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// Creates `base`, or base-1, base-2, ... if it already exists. Existing
/// directories are never reused.
inline fs::path create_unique_dir(const fs::path& base) {
  if (!base.parent_path().empty()) fs::create_directories(base.parent_path());
  if (fs::create_directory(base)) return base;
  for (int i = 1; i < 100000; ++i) {
    fs::path candidate = base;
    candidate += "-" + std::to_string(i);
    if (fs::create_directory(candidate)) return candidate;
  }
  throw DataError("data error: cannot create a fresh directory next to " + base.string());
}

// ---- run summary -----------------------------------------------------------

// The summary is rendered from the persisted config.json and report.json so
// that `report <run-dir>` reproduces it byte for byte.
inline std::string render_run_summary(const nlohmann::json& config, const nlohmann::json& report) {
  std::ostringstream out;
  const ModelSpec spec = model_spec_from_json(config.at("model"));
  const nlohmann::json& tc = config.at("train");
  out << "# Run summary\n\n";
  out << "- model: " << to_string(spec.kind) << " (" << spec.in_channels << " channel, " << spec.input_size << "x"
      << spec.input_size << " input, " << spec.num_classes << " classes)\n";
  const std::size_t params = report.at("param_count").get<std::size_t>();
  out << "- parameters: " << format_count(params) << "\n";
  if (const std::string note = param_count_note(spec, params); !note.empty()) out << "- note: " << note << "\n";
  out << "- lr: " << format_real(tc.at("lr").get<double>(), 6) << ", epochs: " << tc.at("epochs").get<int>()
      << ", batch: " << tc.at("batch").get<std::size_t>() << ", seed: " << tc.at("seed").get<std::uint64_t>() << "\n";
  if (config.contains("data")) out << "- data: " << config.at("data").get<std::string>() << "\n";
  out << "- train samples: " << report.at("train_size").get<std::size_t>()
      << ", test samples: " << report.at("test_size").get<std::size_t>() << "\n";
  const auto& epochs = report.at("epochs");
  if (!epochs.empty()) {
    const auto& last = epochs.back();
    out << "- final train loss: " << format_real(last.at("train_loss").get<double>(), 6) << "\n";
  } else {
    out << "- zero-shot: no training performed\n";
  }
  out << "\n";
  const MetricsReport metrics = report_from_json(report.at("metrics"));
  out << render_report(metrics, ReportFormat::Markdown);
  out << "\n## Confusion matrix\n\n";
  const ConfusionMatrix cm = confusion_from_json(report.at("confusion"));
  out << "| true \\ predicted |";
  for (const auto& n : cm.class_names()) out << ' ' << n << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < cm.num_classes(); ++i) out << "---|";
  out << "\n";
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    out << "| " << cm.class_names()[i] << " |";
    for (std::size_t j = 0; j < cm.num_classes(); ++j) out << ' ' << cm.at(i, j) << " |";
    out << "\n";
  }
  return out.str();
}

struct RunFiles {
  fs::path dir;
  std::vector<std::string> artifacts;  // names relative to dir
};

/// Writes config.json, trace.csv, report.json, confusion.csv, summary.md and
/// (optionally) the checkpoint into an existing directory.
inline RunFiles write_run_artifacts(const fs::path& dir, const ModelSpec& spec, TrainOutcome& outcome,
                                    const std::string& data_label, bool save_checkpoint = true) {
  RunFiles files{dir, {}};
  nlohmann::json config{{"layout_version", kRunLayoutVersion},
                        {"model", to_json(spec)},
                        {"train", to_json(outcome.result.config)},
                        {"data", data_label}};
  if (save_checkpoint) {
    checkpoint::save(outcome.model, dir / run_files::kCheckpoint,
                     {outcome.result.config.seed, static_cast<std::uint32_t>(outcome.result.config.epochs),
                      outcome.result.config.lr});
    outcome.result.checkpoint_path = (dir / run_files::kCheckpoint).string();
    config["checkpoint"] = run_files::kCheckpoint;
  }
  const nlohmann::json report = to_json(outcome.result);
  write_json(dir / run_files::kConfig, config);
  write_text(dir / run_files::kTrace, render_trace_csv(outcome.result.epochs));
  write_json(dir / run_files::kReport, report);
  write_text(dir / run_files::kConfusion, render_confusion_csv(outcome.result.confusion));
  write_text(dir / run_files::kSummary, render_run_summary(config, report));
  files.artifacts = {run_files::kConfig, run_files::kTrace, run_files::kReport, run_files::kConfusion,
                     run_files::kSummary};
  if (save_checkpoint) files.artifacts.push_back(run_files::kCheckpoint);
  return files;
}

// ---- sweep and few-shot tables ---------------------------------------------

inline nlohmann::json sweep_to_json(const SweepResult& s, const std::vector<std::string>& run_dirs) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    const auto& e = s.entries[i];
    nlohmann::json row{{"lr", e.lr}, {"failed", e.failed()}};
    if (i < run_dirs.size()) row["run_dir"] = run_dirs[i];
    if (e.failed()) {
      row["error"] = e.error;
    } else {
      row["accuracy"] = e.result->report.accuracy;
      row["precision"] = e.result->report.precision;
      row["recall"] = e.result->report.recall;
      row["f1"] = e.result->report.f1;
    }
    entries.push_back(row);
  }
  nlohmann::json j{{"entries", entries}, {"tie_rule", SweepResult::kTieRule}};
  if (s.best) {
    j["best_lr"] = s.best_lr();
    j["best_accuracy"] = s.best_accuracy();
  } else {
    j["best_lr"] = nullptr;
  }
  return j;
}

inline std::string render_sweep_summary(const nlohmann::json& sweep) {
  std::ostringstream out;
  out << "# Learning-rate sweep\n\n| lr | accuracy | precision | recall | f1 |\n|---|---|---|---|---|\n";
  for (const auto& e : sweep.at("entries")) {
    out << "| " << format_real(e.at("lr").get<double>(), 6) << " |";
    if (e.at("failed").get<bool>()) {
      out << " failed: " << e.at("error").get<std::string>() << " | | | |\n";
      continue;
    }
    for (const char* k : {"accuracy", "precision", "recall", "f1"}) out << ' ' << format_percent(e.at(k).get<double>()) << " |";
    out << "\n";
  }
  out << "\n";
  if (sweep.at("best_lr").is_null()) {
    out << "best lr: none (every run failed)\n";
  } else {
    out << "best lr: " << format_real(sweep.at("best_lr").get<double>(), 6) << " (accuracy "
        << format_percent(sweep.at("best_accuracy").get<double>()) << ")\n";
  }
  out << "selection: " << sweep.at("tie_rule").get<std::string>() << "\n";
  return out.str();
}

inline nlohmann::json fewshot_to_json(const FewShotTable& t, std::uint64_t sample_seed,
                                      const std::vector<std::string>& run_dirs) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    nlohmann::json row{{"k", r.k},
                       {"train_samples", r.train_samples},
                       {"samples_seen", r.samples_seen},
                       {"accuracy", r.result.report.accuracy},
                       {"precision", r.result.report.precision},
                       {"recall", r.result.report.recall},
                       {"f1", r.result.report.f1}};
    if (i < run_dirs.size()) row["run_dir"] = run_dirs[i];
    rows.push_back(row);
  }
  return {{"rows", rows}, {"sample_seed", sample_seed}};
}

inline std::string render_fewshot_summary(const nlohmann::json& fs_json) {
  std::ostringstream out;
  out << "# Few-shot results\n\nsample seed: " << fs_json.at("sample_seed").get<std::uint64_t>() << "\n\n";
  out << "| k | training images | accuracy | precision | recall | f1 |\n|---|---|---|---|---|---|\n";
  for (const auto& r : fs_json.at("rows")) {
    out << "| " << r.at("k").get<std::size_t>() << " | " << r.at("train_samples").get<std::size_t>() << " |";
    for (const char* k : {"accuracy", "precision", "recall", "f1"}) out << ' ' << format_percent(r.at(k).get<double>()) << " |";
    out << "\n";
  }
  return out.str();
}

// ---- manifest --------------------------------------------------------------

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::vector<std::string> command;
  std::string config_path;  // empty when no config file was given
  std::map<std::string, std::string> resolved;
  std::string started;
  std::string finished;
  double wall_seconds = 0.0;
  std::vector<std::string> artifacts;
  std::string engine_version = kEngineVersion;
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"layout_version", kRunLayoutVersion},
          {"engine_version", m.engine_version},
          {"command", m.command},
          {"config_path", m.config_path},
          {"resolved", m.resolved},
          {"started", m.started},
          {"finished", m.finished},
          {"wall_seconds", m.wall_seconds},
          {"artifacts", m.artifacts}};
}

}  // namespace leancnn
