#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leancnn/adam.hpp"
#include "leancnn/dataset.hpp"
#include "leancnn/error.hpp"
#include "leancnn/loss.hpp"
#include "leancnn/metrics.hpp"
#include "leancnn/model.hpp"
#include "leancnn/parallel.hpp"

namespace leancnn {

enum class LossKind { Auto, BCE, CE };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::BCE: return "bce";
    case LossKind::CE: return "ce";
    default: return "auto";
  }
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "bce") return LossKind::BCE;
  if (s == "ce") return LossKind::CE;
  if (s == "auto") return LossKind::Auto;
  throw ConfigError("unknown loss kind '" + s + "' (expected bce, ce or auto)");
}

struct TrainConfig {
  double lr = 5e-4;
  int epochs = 50;  // 0 = evaluate the freshly initialized model only
  std::size_t batch = 32;
  std::uint64_t seed = 42;  // weight init, dropout stream and per-epoch shuffles
  LossKind loss = LossKind::Auto;  // Auto: BCE for btbcnn, CE for btmcnn
  int eval_every = 0;              // test accuracy every N epochs; 0 = final only
  bool deterministic = true;
  std::size_t threads = 1;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch == 0) throw ConfigError("batch must be >= 1");
    if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
    if (threads == 0) throw ConfigError("threads must be >= 1");
  }

  ExecutionPolicy policy() const { return {threads, deterministic}; }
};

inline LossKind resolve_loss(const ModelSpec& spec, LossKind requested) {
  const LossKind natural = spec.kind == ModelKind::BTBCNN ? LossKind::BCE : LossKind::CE;
  if (requested == LossKind::Auto) return natural;
  if (requested != natural)
    throw ConfigError(std::string(to_string(spec.kind)) + " requires the " + to_string(natural) + " loss");
  return requested;
}

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // from train-mode logits during the epoch
  std::optional<double> eval_accuracy;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunResult {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  ConfusionMatrix confusion;
  MetricsReport report;
  double wall_seconds = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t train_samples_seen = 0;  // distinct training samples read
  std::size_t param_count = 0;
  std::string checkpoint_path;
};

struct EvalResult {
  ConfusionMatrix confusion;
  MetricsReport report;
};

// Binary models predict class 1 when sigmoid(z) >= 0.5, i.e. z >= 0. Wider
// outputs predict the first maximal logit.
inline std::vector<int> predict_labels(const Tensor<float>& logits) {
  const std::size_t n = logits.dim(0), width = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.data() + i * width;
    if (width == 1) {
      out[i] = row[0] >= 0.0f ? 1 : 0;
    } else {
      out[i] = static_cast<int>(std::max_element(row, row + width) - row);
    }
  }
  return out;
}

/// One pass over `data` in eval mode; the model's previous mode is restored.
inline EvalResult evaluate(Model<float>& model, const SampleSet& data, std::size_t batch = 32) {
  if (data.empty()) throw DataError("data error: evaluation set is empty");
  if (batch == 0) throw ConfigError("batch must be >= 1");
  const Mode previous = model.mode();
  model.set_mode(Mode::Eval);
  ConfusionMatrix cm(data.class_names());
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (const auto& idx : make_batches(all, batch, false, 0)) {
    const auto preds = predict_labels(model.forward(data.gather(idx)));
    const auto truth = data.labels_of(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) cm.update(truth[i], preds[i]);
  }
  model.set_mode(previous);
  EvalResult r{cm, cm.num_classes() == 2 ? binary_metrics(cm) : multiclass_metrics(cm)};
  return r;
}

/// Epoch-level driver: owns the optimizer and runs one shuffled pass per call.
class Trainer {
 public:
  Trainer(Model<float>& model, const TrainConfig& config)
      : model_(model), config_(config), optimizer_(AdamOptions{config.lr}) {
    config_.validate();
    if (!model.spec()) throw ConfigError("trainer requires a spec-built model");
    loss_ = resolve_loss(*model.spec(), config.loss);
  }

  // `epoch` is 1-based and selects the shuffle permutation (seed + epoch).
  EpochRecord run_epoch(const SampleSet& train, int epoch) {
    if (train.empty()) throw DataError("data error: training set is empty");
    ExecutionScope scope(config_.policy());
    model_.set_mode(Mode::Train);
    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (const auto& idx : make_batches(all, config_.batch, true, config_.seed, static_cast<std::uint64_t>(epoch))) {
      const auto labels = train.labels_of(idx);
      const Tensor<float> logits = model_.forward(train.gather(idx));
      LossResult<float> loss;
      if (loss_ == LossKind::BCE) {
        Tensor<float> targets(Shape{idx.size(), 1});
        for (std::size_t i = 0; i < idx.size(); ++i) targets[i] = static_cast<float>(labels[i]);
        loss = bce_with_logits(logits, targets);
      } else {
        loss = cross_entropy(logits, std::span<const int>(labels));
      }
      if (!std::isfinite(loss.loss))
        throw DivergenceError("numeric divergence: non-finite loss at epoch " + std::to_string(epoch) +
                                  " (last finite loss " + std::to_string(last_finite_loss_) + ")",
                              epoch, last_finite_loss_);
      last_finite_loss_ = loss.loss;
      const auto preds = predict_labels(logits);
      for (std::size_t i = 0; i < idx.size(); ++i) correct += preds[i] == labels[i] ? 1 : 0;
      seen += idx.size();
      loss_sum += loss.loss * static_cast<double>(idx.size());
      model_.backward(loss.grad);
      const auto params = model_.params();
      optimizer_.step(params);
    }
    return {epoch, loss_sum / static_cast<double>(seen), static_cast<double>(correct) / static_cast<double>(seen), {}};
  }

  const TrainConfig& config() const noexcept { return config_; }
  const Adam<float>& optimizer() const noexcept { return optimizer_; }

 private:
  Model<float>& model_;
  TrainConfig config_;
  Adam<float> optimizer_;
  LossKind loss_ = LossKind::BCE;
  double last_finite_loss_ = 0.0;
};

struct TrainOutcome {
  Model<float> model;
  RunResult result;
};

/// Fresh model from (spec, config.seed), trained for exactly config.epochs
/// epochs and then evaluated on `test`. With epochs == 0 no parameter is
/// touched before evaluation.
inline TrainOutcome train(const ModelSpec& spec, const SampleSet& train_set, const SampleSet& test_set,
                          const TrainConfig& config) {
  config.validate();
  if (config.epochs > 0 && train_set.empty()) throw DataError("data error: training set is empty");
  if (test_set.empty()) throw DataError("data error: test set is empty");
  ExecutionScope scope(config.policy());
  const auto start = std::chrono::steady_clock::now();

  TrainOutcome out{build<float>(spec, config.seed), {}};
  RunResult& r = out.result;
  r.config = config;
  r.train_size = train_set.size();
  r.test_size = test_set.size();
  r.param_count = out.model.param_count();
  train_set.reset_access();

  Trainer trainer(out.model, config);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec = trainer.run_epoch(train_set, epoch);
    if (config.eval_every > 0 && epoch % config.eval_every == 0)
      rec.eval_accuracy = evaluate(out.model, test_set, config.batch).report.accuracy;
    r.epochs.push_back(rec);
  }
  r.train_samples_seen = train_set.distinct_accessed();
  EvalResult final_eval = evaluate(out.model, test_set, config.batch);
  r.confusion = std::move(final_eval.confusion);
  r.report = std::move(final_eval.report);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---- learning-rate sweep ---------------------------------------------------

inline const std::vector<double>& default_learning_rates() {
  static const std::vector<double> lrs{0.001, 0.0005, 0.0001, 0.00005};
  return lrs;
}

struct SweepEntry {
  double lr = 0.0;
  std::optional<RunResult> result;
  std::string error;  // set when the run failed

  bool failed() const noexcept { return !result.has_value(); }
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  std::optional<std::size_t> best;  // index into entries
  static constexpr const char* kTieRule = "highest test accuracy; ties go to the lower learning rate";

  double best_lr() const { return entries.at(best.value()).lr; }
  double best_accuracy() const { return entries.at(best.value()).result->report.accuracy; }
};

using RunCallback = std::function<void(double lr, TrainOutcome&)>;

// Best entry among successful runs: max accuracy, ties to the lower lr.
inline std::optional<std::size_t> select_best(const std::vector<SweepEntry>& entries) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].failed()) continue;
    if (!best) {
      best = i;
      continue;
    }
    const double acc = entries[i].result->report.accuracy, best_acc = entries[*best].result->report.accuracy;
    if (acc > best_acc || (acc == best_acc && entries[i].lr < entries[*best].lr)) best = i;
  }
  return best;
}

/// One independent run per learning rate, each from a fresh initialization
/// with the same seed. A failing run is recorded and the sweep continues.
inline SweepResult lr_sweep(const ModelSpec& spec, const SampleSet& train_set, const SampleSet& test_set,
                            std::span<const double> lrs, const TrainConfig& base, const RunCallback& on_run = {}) {
  if (lrs.empty()) throw ConfigError("sweep needs at least one learning rate");
  SweepResult sweep;
  for (double lr : lrs) {
    SweepEntry entry{lr, std::nullopt, {}};
    TrainConfig cfg = base;
    cfg.lr = lr;
    try {
      TrainOutcome outcome = train(spec, train_set, test_set, cfg);
      if (on_run) on_run(lr, outcome);
      entry.result = std::move(outcome.result);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      entry.error = e.what();
    }
    sweep.entries.push_back(std::move(entry));
  }
  sweep.best = select_best(sweep.entries);
  return sweep;
}

// ---- few-shot protocol -----------------------------------------------------

inline const std::vector<std::size_t>& default_shots() {
  static const std::vector<std::size_t> ks{0, 5, 10, 15, 20, 40, 80};
  return ks;
}

struct FewShotRow {
  std::size_t k = 0;
  std::size_t train_samples = 0;  // k * classes
  std::size_t samples_seen = 0;   // audited distinct samples read during training
  RunResult result;
};

struct FewShotTable {
  std::vector<FewShotRow> rows;
};

// Every class must hold at least max(ks) training samples.
inline void check_shots(const SampleSet& train_set, std::span<const std::size_t> ks) {
  if (ks.empty()) throw ConfigError("few-shot needs at least one k");
  const auto hist = train_set.class_histogram();
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  for (std::size_t c = 0; c < hist.size(); ++c)
    if (hist[c] < max_k)
      throw DataError("data error: class '" + train_set.class_names()[c] + "' has " + std::to_string(hist[c]) +
                      " training records, fewer than k=" + std::to_string(max_k));
}

using ShotCallback = std::function<void(std::size_t k, TrainOutcome&)>;

/// For each k: sample exactly k training images per class with
/// Rng(sample_seed), train a fresh model on them and evaluate on the full
/// test set. k = 0 evaluates the untrained model.
inline FewShotTable few_shot_experiment(const ModelSpec& spec, const SampleSet& train_set, const SampleSet& test_set,
                                        std::span<const std::size_t> ks, const TrainConfig& config,
                                        std::uint64_t sample_seed, const ShotCallback& on_row = {}) {
  check_shots(train_set, ks);

  std::vector<std::size_t> all(train_set.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  FewShotTable table;
  for (std::size_t k : ks) {
    const auto picked = few_shot_subset(train_set.labels(), train_set.class_names(), all, k, sample_seed);
    const SampleSet subset = train_set.subset(picked);
    TrainConfig cfg = config;
    if (k == 0) cfg.epochs = 0;
    TrainOutcome outcome = train(spec, subset, test_set, cfg);
    if (on_row) on_row(k, outcome);
    table.rows.push_back({k, picked.size(), subset.distinct_accessed(), std::move(outcome.result)});
  }
  return table;
}

}  // namespace leancnn
