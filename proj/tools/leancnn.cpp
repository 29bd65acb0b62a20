// leancnn command-line driver: scan, train, eval, sweep, fewshot, bench, report.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "leancnn/leancnn.hpp"

namespace {

using namespace leancnn;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

struct CommonOpts {
  std::string out;
  bool json = false;
  std::size_t threads = 1;
  bool deterministic = false;
};

struct DataOpts {
  std::string data;
  double ratio = 0.8;
  bool respect_folders = false;
  std::uint64_t split_seed = 42;
  std::string positive = "glioma,meningioma,pituitary";
  std::size_t input_size = 224;
  CLI::Option* ratio_opt = nullptr;
};

struct ModelOpts {
  std::string model = "btbcnn";
  double lr = 5e-4;
  int epochs = 50;
  std::size_t batch = 32;
  std::uint64_t seed = 42;
  int eval_every = 0;
  std::string loss = "auto";
  bool no_checkpoint = false;
};

struct Options {
  std::string config_path;
  CommonOpts common;
  DataOpts data;
  ModelOpts model;
  std::string scan_root;
  std::string report_dir;
  bool report_check = false;
  std::string checkpoint;
  std::string lrs = "0.001,0.0005,0.0001,0.00005";
  std::string shots = "0,5,10,15,20,40,80";
  std::uint64_t sample_seed = 2024;
  std::string bench_models = "btbcnn,btmcnn";
  std::size_t bench_batch = 128;
  std::size_t warmup = 1;
  std::size_t iters = 5;
  int train_epochs = 0;
  std::size_t train_images = 64;
};

void add_common(CLI::App* sub, CommonOpts& c) {
  sub->add_option("--out", c.out, "Output directory, default runs/<command> (a numeric suffix is added if it exists)");
  sub->add_flag("--json", c.json, "Print machine-readable JSON on stdout");
  sub->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("--deterministic", c.deterministic, "Force single-threaded, bit-reproducible execution");
}

void add_data(CLI::App* sub, DataOpts& d, bool with_input_size = true) {
  sub->add_option("--data", d.data, "Dataset root (class folders, optionally under Training/Testing)")->required();
  d.ratio_opt = sub->add_option("--ratio", d.ratio, "Random train fraction of all records");
  auto* folders = sub->add_flag("--respect-folders", d.respect_folders, "Use the Training/Testing folders");
  d.ratio_opt->excludes(folders);
  sub->add_option("--split-seed", d.split_seed, "Seed of the random split");
  sub->add_option("--positive", d.positive, "Classes mapped to the positive label for binary models");
  if (with_input_size) sub->add_option("--input-size", d.input_size, "Square input side in pixels");
}

void add_model(CLI::App* sub, ModelOpts& m) {
  sub->add_option("--model", m.model, "btbcnn or btmcnn")->check(CLI::IsMember({"btbcnn", "btmcnn"}));
  sub->add_option("--lr", m.lr, "Adam learning rate");
  sub->add_option("--epochs", m.epochs, "Training epochs (0 = evaluate the untrained model)");
  sub->add_option("--batch", m.batch, "Mini-batch size");
  sub->add_option("--seed", m.seed, "Initialization, dropout and shuffle seed");
  sub->add_option("--eval-every", m.eval_every, "Test accuracy every N epochs (0 = final only)");
  sub->add_option("--loss", m.loss, "bce, ce or auto")->check(CLI::IsMember({"bce", "ce", "auto"}));
  sub->add_flag("--no-checkpoint", m.no_checkpoint, "Do not write model checkpoints");
}

std::vector<OptionInfo> option_infos(const CLI::App* sub) {
  std::vector<OptionInfo> out;
  for (const CLI::Option* o : sub->get_options()) {
    if (o->get_lnames().empty() || o->get_lnames().front() == "help") continue;
    OptionInfo info{o->get_lnames().front(), {}};
    for (const CLI::Option* x : o->get_excludes())
      if (!x->get_lnames().empty()) info.excludes.push_back(x->get_lnames().front());
    out.push_back(std::move(info));
  }
  return out;
}

std::map<std::string, std::string> resolved_values(const CLI::App* sub) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* o : sub->get_options()) {
    if (o->get_lnames().empty() || o->get_lnames().front() == "help") continue;
    std::string value;
    if (o->count() > 0) {
      for (const auto& r : o->results()) value += (value.empty() ? "" : ",") + r;
      if (o->get_expected_min() == 0 && value.empty()) value = "true";
    } else {
      value = o->get_default_str();
      if (o->get_expected_min() == 0 && value.empty()) value = "false";
    }
    out[o->get_lnames().front()] = value;
  }
  for (const CLI::Option* o : sub->get_options())
    if (o->get_lnames().empty() && !o->get_name().empty() && o->count() > 0)
      out[o->get_name()] = o->results().empty() ? "" : o->results().front();
  return out;
}

ExecutionPolicy policy_of(const CommonOpts& c) { return {c.threads, c.deterministic}; }

TrainConfig train_config(const Options& o) {
  TrainConfig cfg;
  cfg.lr = o.model.lr;
  cfg.epochs = o.model.epochs;
  cfg.batch = o.model.batch;
  cfg.seed = o.model.seed;
  cfg.eval_every = o.model.eval_every;
  cfg.loss = parse_loss_kind(o.model.loss);
  cfg.threads = o.common.threads;
  cfg.deterministic = o.common.deterministic;
  cfg.validate();
  return cfg;
}

struct PreparedData {
  DatasetManifest manifest;
  Partition partition;
  SampleSet train;
  SampleSet test;
  std::string label;
};

// Scans, relabels for binary models, splits and decodes the dataset.
PreparedData prepare_data(const DataOpts& d, ModelKind kind, std::size_t input_size, bool load_train) {
  PreparedData p;
  p.manifest = scan_dataset(d.data);
  if (kind == ModelKind::BTBCNN) {
    if (p.manifest.classes.size() < 2) throw DataError("data error: need at least 2 classes in " + d.data);
    if (p.manifest.classes.size() > 2) {
      const auto positive = split_list(d.positive);
      for (const auto& name : positive)
        if (std::find(p.manifest.classes.begin(), p.manifest.classes.end(), name) == p.manifest.classes.end())
          throw ConfigError("positive class '" + name + "' is not in " + d.data + " (set --positive)");
      p.manifest = binarize_labels(p.manifest, positive);
    }
  } else if (p.manifest.classes.size() < 2) {
    throw DataError("data error: need at least 2 classes in " + d.data);
  }
  SplitMode mode = SplitMode::Auto;
  if (d.respect_folders) mode = SplitMode::Folders;
  else if (d.ratio_opt && d.ratio_opt->count() > 0) mode = SplitMode::Ratio;
  p.partition = split(p.manifest, d.ratio, d.split_seed, mode);
  PreprocessConfig pre;
  pre.target_size = input_size;
  if (load_train) p.train = load_samples(p.manifest, p.partition.train, pre);
  p.test = load_samples(p.manifest, p.partition.test, pre);
  p.label = d.data;
  return p;
}

ModelSpec spec_for(const ModelOpts& m, std::size_t input_size, std::size_t classes) {
  const ModelKind kind = parse_model_kind(m.model);
  ModelSpec spec = kind == ModelKind::BTBCNN ? ModelSpec::btbcnn(1, input_size) : ModelSpec::btmcnn(classes, 1, input_size);
  spec.validate();
  return spec;
}

class Session {
 public:
  Session(std::vector<std::string> command, std::string config_path, std::map<std::string, std::string> resolved)
      : start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.config_path = std::move(config_path);
    manifest_.resolved = std::move(resolved);
    manifest_.started = utc_timestamp();
  }

  void add_artifacts(const fs::path& base, const fs::path& dir, const std::vector<std::string>& names) {
    for (const auto& n : names) manifest_.artifacts.push_back((fs::relative(dir, base) / n).lexically_normal().string());
  }
  void add_artifact(const std::string& name) { manifest_.artifacts.push_back(name); }

  void finish(const fs::path& dir) {
    manifest_.finished = utc_timestamp();
    manifest_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_.artifacts.push_back(run_files::kManifest);
    write_json(dir / run_files::kManifest, to_json(manifest_));
  }

 private:
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

// ---- commands --------------------------------------------------------------

int cmd_scan(const Options& o, Session& session) {
  ExecutionScope scope(policy_of(o.common));
  const DatasetManifest m = scan_dataset(o.scan_root);
  const fs::path dir = create_unique_dir(o.common.out);
  save_manifest(m, dir / "dataset.json");
  session.add_artifact("dataset.json");
  session.finish(dir);
  if (o.common.json) {
    std::cout << to_json(m).dump(2) << "\n";
    return 0;
  }
  const auto counts = m.class_counts();
  std::cout << "dataset: " << m.root.string() << "\n";
  std::cout << "records: " << m.records.size();
  if (m.has_predefined_split())
    std::cout << " (training " << m.count(SplitTag::Train) << ", testing " << m.count(SplitTag::Test) << ")";
  std::cout << "\nclasses:\n";
  for (std::size_t c = 0; c < m.classes.size(); ++c) std::cout << "  " << m.classes[c] << ": " << counts[c] << "\n";
  std::cout << "output: " << dir.string() << "\n";
  return 0;
}

int cmd_train(const Options& o, Session& session) {
  ExecutionScope scope(policy_of(o.common));
  const TrainConfig cfg = train_config(o);
  const ModelKind kind = parse_model_kind(o.model.model);
  PreparedData data = prepare_data(o.data, kind, o.data.input_size, cfg.epochs > 0);
  const ModelSpec spec = spec_for(o.model, o.data.input_size, data.manifest.classes.size());
  TrainOutcome outcome = train(spec, data.train, data.test, cfg);
  const fs::path dir = create_unique_dir(o.common.out);
  const bool save = !o.model.no_checkpoint && cfg.epochs > 0;
  const RunFiles files = write_run_artifacts(dir, spec, outcome, data.label, save);
  session.add_artifacts(dir, dir, files.artifacts);
  session.finish(dir);
  if (o.common.json) {
    nlohmann::json j = to_json(outcome.result);
    j["run_dir"] = dir.string();
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << read_text(dir / run_files::kSummary) << "\nrun directory: " << dir.string() << "\n";
  }
  return 0;
}

int cmd_eval(const Options& o, Session& session) {
  ExecutionScope scope(policy_of(o.common));
  LoadedCheckpoint ck = checkpoint::load(o.checkpoint);
  const ModelSpec spec = *ck.model.spec();
  PreparedData data = prepare_data(o.data, spec.kind, spec.input_size, false);
  if (data.manifest.classes.size() != spec.num_classes)
    throw ConfigError("checkpoint expects " + std::to_string(spec.num_classes) + " classes, dataset has " +
                      std::to_string(data.manifest.classes.size()));
  const EvalResult r = evaluate(ck.model, data.test, o.model.batch);
  const fs::path dir = create_unique_dir(o.common.out);
  nlohmann::json report{{"checkpoint", o.checkpoint},
                        {"model", to_json(spec)},
                        {"test_size", data.test.size()},
                        {"metrics", to_json(r.report)},
                        {"confusion", to_json(r.confusion)}};
  write_json(dir / run_files::kReport, report);
  write_text(dir / run_files::kConfusion, render_confusion_csv(r.confusion));
  session.add_artifacts(dir, dir, {run_files::kReport, run_files::kConfusion});
  session.finish(dir);
  if (o.common.json) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::cout << render_report(r.report, ReportFormat::Markdown) << "\nrun directory: " << dir.string() << "\n";
  }
  return 0;
}

std::string lr_dir_name(double lr) { return "lr-" + format_real(lr, 6); }

int cmd_sweep(const Options& o, Session& session) {
  ExecutionScope scope(policy_of(o.common));
  const TrainConfig base = train_config(o);
  const auto lrs = parse_real_list(o.lrs, "lrs");
  for (double lr : lrs)
    if (!(lr > 0.0)) throw ConfigError("lrs: learning rates must be positive");
  const ModelKind kind = parse_model_kind(o.model.model);
  PreparedData data = prepare_data(o.data, kind, o.data.input_size, base.epochs > 0);
  const ModelSpec spec = spec_for(o.model, o.data.input_size, data.manifest.classes.size());
  const fs::path dir = create_unique_dir(o.common.out);
  std::map<double, std::string> run_dir_of;
  const SweepResult sweep = lr_sweep(spec, data.train, data.test, lrs, base, [&](double lr, TrainOutcome& outcome) {
    const fs::path run_dir = create_unique_dir(dir / lr_dir_name(lr));
    const RunFiles files =
        write_run_artifacts(run_dir, spec, outcome, data.label, !o.model.no_checkpoint && base.epochs > 0);
    session.add_artifacts(dir, run_dir, files.artifacts);
    run_dir_of[lr] = run_dir.filename().string();
    if (!o.common.json)
      std::cout << "lr " << format_real(lr, 6) << ": accuracy " << format_percent(outcome.result.report.accuracy) << "\n";
  });
  std::vector<std::string> run_dirs;
  for (const auto& e : sweep.entries) run_dirs.push_back(run_dir_of.count(e.lr) ? run_dir_of[e.lr] : "");
  const nlohmann::json j = sweep_to_json(sweep, run_dirs);
  write_json(dir / run_files::kSweep, j);
  write_text(dir / run_files::kSummary, render_sweep_summary(j));
  session.add_artifact(run_files::kSweep);
  session.add_artifact(run_files::kSummary);
  session.finish(dir);
  if (o.common.json) {
    nlohmann::json out = j;
    out["run_dir"] = dir.string();
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "\n" << render_sweep_summary(j) << "\nrun directory: " << dir.string() << "\n";
  }
  return 0;
}

int cmd_fewshot(const Options& o, Session& session) {
  ExecutionScope scope(policy_of(o.common));
  const TrainConfig cfg = train_config(o);
  const auto ks = parse_count_list(o.shots, "shots");
  const ModelKind kind = parse_model_kind(o.model.model);
  PreparedData data = prepare_data(o.data, kind, o.data.input_size, true);
  const ModelSpec spec = spec_for(o.model, o.data.input_size, data.manifest.classes.size());
  check_shots(data.train, ks);
  const fs::path dir = create_unique_dir(o.common.out);
  std::vector<std::string> run_dirs;
  const FewShotTable table =
      few_shot_experiment(spec, data.train, data.test, ks, cfg, o.sample_seed, [&](std::size_t k, TrainOutcome& outcome) {
        const fs::path run_dir = create_unique_dir(dir / ("k-" + std::to_string(k)));
        const RunFiles files =
            write_run_artifacts(run_dir, spec, outcome, data.label, !o.model.no_checkpoint && k > 0 && cfg.epochs > 0);
        session.add_artifacts(dir, run_dir, files.artifacts);
        run_dirs.push_back(run_dir.filename().string());
        if (!o.common.json)
          std::cout << "k=" << k << ": accuracy " << format_percent(outcome.result.report.accuracy) << "\n";
      });
  const nlohmann::json j = fewshot_to_json(table, o.sample_seed, run_dirs);
  write_json(dir / run_files::kFewShot, j);
  write_text(dir / run_files::kSummary, render_fewshot_summary(j));
  session.add_artifact(run_files::kFewShot);
  session.add_artifact(run_files::kSummary);
  session.finish(dir);
  if (o.common.json) {
    nlohmann::json out = j;
    out["run_dir"] = dir.string();
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "\n" << render_fewshot_summary(j) << "\nrun directory: " << dir.string() << "\n";
  }
  return 0;
}

// Random images with alternating labels, for training-time measurements
// without a dataset on disk.
SampleSet synthetic_samples(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < spec.num_classes; ++c) names.push_back("class" + std::to_string(c));
  SampleSet set(Shape{spec.in_channels, spec.input_size, spec.input_size}, names);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i)
    set.add(uniform<float>(set.sample_shape(), rng, 0.0f, 1.0f), static_cast<int>(i % spec.num_classes));
  return set;
}

int cmd_bench(const Options& o, Session& session) {
  BenchConfig bc;
  bc.batch = o.bench_batch;
  bc.warmup = o.warmup;
  bc.measured = o.iters;
  bc.threads = o.common.deterministic ? 1 : o.common.threads;
  bc.validate();
  if (o.train_epochs < 0) throw ConfigError("train-epochs must be >= 0");
  const auto names = split_list(o.bench_models);
  if (names.empty()) throw ConfigError("models: empty list");
  BenchReport report;
  report.hardware = hardware_descriptor();
  for (const auto& name : names) {
    const ModelKind kind = parse_model_kind(name);
    const ModelSpec spec =
        kind == ModelKind::BTBCNN ? ModelSpec::btbcnn(1, o.data.input_size) : ModelSpec::btmcnn(4, 1, o.data.input_size);
    {
      Model<float> model = build<float>(spec, o.model.seed);
      report.entries.push_back(time_inference(model, bc));
    }
    if (!o.common.json)
      std::cout << name << ": median " << format_real(report.entries.back().ms_per_batch.median, 4) << " ms/batch\n";
    if (o.train_epochs > 0) {
      TrainConfig cfg;
      cfg.batch = o.model.batch;
      cfg.seed = o.model.seed;
      cfg.threads = bc.threads;
      cfg.deterministic = o.common.deterministic;
      const SampleSet data = synthetic_samples(spec, o.train_images, o.model.seed);
      report.training.push_back(time_training(spec, data, o.train_epochs, cfg));
    }
  }
  const fs::path dir = create_unique_dir(o.common.out);
  const nlohmann::json j = to_json(report);
  write_json(dir / run_files::kBench, j);
  write_text(dir / run_files::kSummary, render_bench_markdown(j));
  session.add_artifact(run_files::kBench);
  session.add_artifact(run_files::kSummary);
  session.finish(dir);
  if (o.common.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "\n" << render_bench_markdown(j) << "\nrun directory: " << dir.string() << "\n";
  }
  return 0;
}

// Re-renders summary.md from the structured files in a run directory.
std::string render_directory_summary(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data error: path not found: " + dir.string());
  if (fs::exists(dir / run_files::kSweep)) return render_sweep_summary(read_json(dir / run_files::kSweep));
  if (fs::exists(dir / run_files::kFewShot)) return render_fewshot_summary(read_json(dir / run_files::kFewShot));
  if (fs::exists(dir / run_files::kBench)) return render_bench_markdown(read_json(dir / run_files::kBench));
  if (fs::exists(dir / run_files::kReport) && fs::exists(dir / run_files::kConfig))
    return render_run_summary(read_json(dir / run_files::kConfig), read_json(dir / run_files::kReport));
  throw DataError("data error: no run artifacts in " + dir.string());
}

int cmd_report(const Options& o) {
  const fs::path dir = o.report_dir;
  const std::string summary = render_directory_summary(dir);
  if (o.report_check) {
    const std::string stored = fs::exists(dir / run_files::kSummary) ? read_text(dir / run_files::kSummary) : "";
    if (stored != summary) throw FormatError("format error: summary.md differs from the re-rendered summary");
  }
  if (o.common.json) {
    std::cout << nlohmann::json{{"run_dir", dir.string()}, {"summary", summary}}.dump(2) << "\n";
  } else {
    std::cout << summary;
  }
  return 0;
}

std::string single_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int fail(int code, const std::string& prefix, const std::string& what) {
  const std::string msg = what.rfind(prefix, 0) == 0 ? what : prefix + what;
  std::cerr << single_line(msg) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"leancnn: compact CNNs for brain-tumor MRI classification"};
  app.set_version_flag("--version", std::string(kEngineVersion));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.add_option("--config", o.config_path, "Flat key = value config file");
  app.fallthrough();

  auto* scan = app.add_subcommand("scan", "Index a dataset folder");
  scan->add_option("root", o.scan_root, "Dataset root")->required();
  add_common(scan, o.common);

  auto* train_cmd = app.add_subcommand("train", "Train one model and evaluate it on the test split");
  add_common(train_cmd, o.common);
  add_data(train_cmd, o.data);
  add_model(train_cmd, o.model);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(eval, o.common);
  add_data(eval, o.data, false);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  eval->add_option("--batch", o.model.batch, "Evaluation batch size");

  auto* sweep = app.add_subcommand("sweep", "One training run per learning rate");
  add_common(sweep, o.common);
  add_data(sweep, o.data);
  add_model(sweep, o.model);
  sweep->add_option("--lrs", o.lrs, "Comma-separated learning rates");

  auto* fewshot = app.add_subcommand("fewshot", "k-shot training subsets, evaluated on the full test split");
  add_common(fewshot, o.common);
  add_data(fewshot, o.data);
  add_model(fewshot, o.model);
  fewshot->add_option("--shots", o.shots, "Comma-separated k values (images per class)");
  fewshot->add_option("--sample-seed", o.sample_seed, "Seed of the k-shot subset sampler");

  auto* bench = app.add_subcommand("bench", "Inference latency and training time");
  add_common(bench, o.common);
  bench->add_option("--models", o.bench_models, "Comma-separated model kinds");
  bench->add_option("--batch", o.bench_batch, "Images per batch");
  bench->add_option("--warmup", o.warmup, "Discarded warmup passes");
  bench->add_option("--iters", o.iters, "Measured passes");
  bench->add_option("--input-size", o.data.input_size, "Square input side in pixels");
  bench->add_option("--seed", o.model.seed, "Weight and input seed");
  bench->add_option("--train-epochs", o.train_epochs, "Also time this many training epochs (0 = skip)");
  bench->add_option("--train-images", o.train_images, "Synthetic images for training timing");
  bench->add_option("--train-batch", o.model.batch, "Mini-batch size for training timing");

  auto* report = app.add_subcommand("report", "Re-render the summary of a run directory");
  report->add_option("run-dir", o.report_dir, "Run directory")->required();
  report->add_flag("--check", o.report_check, "Fail if summary.md differs from the re-rendered text");
  report->add_flag("--json", o.common.json, "Print machine-readable JSON on stdout");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // Layer env and config-file values under the command line before parsing.
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (config_path.empty())
      if (const char* env = std::getenv("LEANCNN_CONFIG")) config_path = env;
    ConfigMap file;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw DataError("data error: path not found: " + config_path);
      file = parse_config_text(read_text(config_path), config_path);
    }
    CLI::App* active = nullptr;
    for (const auto& a : args) {
      if (a.empty() || a[0] == '-') continue;
      for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; }))
        if (sub->get_name() == a) active = sub;
      if (active) break;
    }
    if (active) {
      const auto infos = option_infos(active);
      std::set<std::string> known{"config"};
      for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; }))
        for (const auto& info : option_infos(sub)) known.insert(info.name);
      for (const auto& [key, value] : file)
        if (!known.count(key)) throw ConfigError(config_path + ": unknown key '" + key + "'");
      args = layer_arguments(args, infos, file, process_env()).args;
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);

    std::vector<std::string> command(argv, argv + argc);
    if (report->parsed()) return cmd_report(o);
    CLI::App* sub = app.get_subcommands().front();
    if (o.common.out.empty()) o.common.out = "runs/" + sub->get_name();
    auto resolved = resolved_values(sub);
    if (resolved.count("out")) resolved["out"] = o.common.out;
    Session session(command, config_path, std::move(resolved));
    if (scan->parsed()) return cmd_scan(o, session);
    if (train_cmd->parsed()) return cmd_train(o, session);
    if (eval->parsed()) return cmd_eval(o, session);
    if (sweep->parsed()) return cmd_sweep(o, session);
    if (fewshot->parsed()) return cmd_fewshot(o, session);
    if (bench->parsed()) return cmd_bench(o, session);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail(kExitUsage, "usage error: ", e.what());
  } catch (const DivergenceError& e) {
    return fail(kExitDivergence, "numeric divergence: ", e.what());
  } catch (const DataError& e) {
    return fail(kExitData, "data error: ", e.what());
  } catch (const FormatError& e) {
    return fail(kExitData, "format error: ", e.what());
  } catch (const ValidationError& e) {
    return fail(kExitData, "data error: ", e.what());
  } catch (const ConfigError& e) {
    return fail(kExitUsage, "usage error: ", e.what());
  } catch (const ShapeError& e) {
    return fail(kExitUsage, "usage error: ", e.what());
  } catch (const std::exception& e) {
    return fail(kExitUsage, "error: ", e.what());
  }
}
