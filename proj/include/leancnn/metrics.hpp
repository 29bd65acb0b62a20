#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "leancnn/error.hpp"

namespace leancnn {

/// C x C counts; cell (i, j) holds samples of true class i predicted as j.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_names)
      : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {
    if (names_.size() < 2) throw ConfigError("confusion matrix needs at least 2 classes");
  }
  explicit ConfusionMatrix(std::size_t num_classes) : ConfusionMatrix(default_names(num_classes)) {}

  // Binary matrix with class 1 as the positive class.
  static ConfusionMatrix from_binary_counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
    ConfusionMatrix cm(std::vector<std::string>{"negative", "positive"});
    cm.counts_ = {tn, fp, fn, tp};
    return cm;
  }

  void update(int truth, int predicted) {
    const std::size_t c = names_.size();
    if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= c || static_cast<std::size_t>(predicted) >= c)
      throw ValidationError("confusion matrix: label pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                            ") outside [0," + std::to_string(c) + ")");
    ++counts_[static_cast<std::size_t>(truth) * c + static_cast<std::size_t>(predicted)];
  }

  // Adds n observations of (truth, predicted) at once.
  void add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
    if (truth >= names_.size() || predicted >= names_.size()) throw ValidationError("confusion matrix: cell out of range");
    counts_[truth * names_.size() + predicted] += n;
  }

  void merge(const ConfusionMatrix& other) {
    if (other.names_.size() != names_.size()) throw ShapeError("confusion matrix merge: class count differs");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  }

  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * names_.size() + predicted); }
  std::size_t num_classes() const noexcept { return names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return names_; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
  }
  std::uint64_t trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < names_.size(); ++i) t += at(i, i);
    return t;
  }
  std::uint64_t row_sum(std::size_t truth) const {
    std::uint64_t t = 0;
    for (std::size_t j = 0; j < names_.size(); ++j) t += at(truth, j);
    return t;
  }
  std::uint64_t col_sum(std::size_t predicted) const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < names_.size(); ++i) t += at(i, predicted);
    return t;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  static std::vector<std::string> default_names(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("class" + std::to_string(i));
    return names;
  }

  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;  // true samples of this class
  bool undefined = false;     // some ratio had a zero denominator

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

/// Headline metrics plus one-vs-rest metrics per class. Ratios whose
/// denominator is zero are reported as 0 and listed in `undefined_fields`.
struct MetricsReport {
  std::string averaging;  // "binary" (positive class) or "macro"
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t total = 0;
  std::vector<std::string> undefined_fields;
  std::vector<ClassMetrics> per_class;

  bool undefined() const noexcept { return !undefined_fields.empty(); }

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

namespace metrics_detail {

inline double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  if (den == 0) {
    undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

// F1 = 2PR / (P + R) from the class's own precision and recall.
inline ClassMetrics one_vs_rest(const ConfusionMatrix& cm, std::size_t c) {
  ClassMetrics m;
  m.name = cm.class_names()[c];
  const std::uint64_t tp = cm.at(c, c);
  m.support = cm.row_sum(c);
  bool p_undef = false, r_undef = false;
  m.precision = ratio(tp, cm.col_sum(c), p_undef);
  m.recall = ratio(tp, m.support, r_undef);
  const double denom = m.precision + m.recall;
  m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
  m.undefined = p_undef || r_undef || denom == 0.0;
  return m;
}

inline void headline_accuracy(const ConfusionMatrix& cm, MetricsReport& r) {
  r.total = cm.total();
  bool undef = false;
  r.accuracy = ratio(cm.trace(), r.total, undef);
  if (undef) r.undefined_fields.push_back("accuracy");
}

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
  return buf;
}

}  // namespace metrics_detail

// precision = TP/(TP+FP), recall = TP/(TP+FN), accuracy = (TP+TN)/total.
inline MetricsReport binary_metrics(const ConfusionMatrix& cm, std::size_t positive = 1) {
  if (cm.num_classes() != 2) throw ConfigError("binary_metrics needs a 2-class matrix");
  if (positive > 1) throw ConfigError("binary_metrics: positive class must be 0 or 1");
  MetricsReport r;
  r.averaging = "binary";
  metrics_detail::headline_accuracy(cm, r);
  for (std::size_t c = 0; c < 2; ++c) r.per_class.push_back(metrics_detail::one_vs_rest(cm, c));
  const ClassMetrics& pos = r.per_class[positive];
  r.precision = pos.precision;
  r.recall = pos.recall;
  r.f1 = pos.f1;
  if (cm.col_sum(positive) == 0) r.undefined_fields.push_back("precision");
  if (cm.row_sum(positive) == 0) r.undefined_fields.push_back("recall");
  if (pos.precision + pos.recall == 0.0) r.undefined_fields.push_back("f1");
  return r;
}

// Unweighted mean of the per-class one-vs-rest metrics; accuracy = trace/total.
inline MetricsReport multiclass_metrics(const ConfusionMatrix& cm) {
  if (cm.num_classes() < 2) throw ConfigError("multiclass_metrics needs at least 2 classes");
  MetricsReport r;
  r.averaging = "macro";
  metrics_detail::headline_accuracy(cm, r);
  bool any_undef = false;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    r.per_class.push_back(metrics_detail::one_vs_rest(cm, c));
    r.precision += r.per_class.back().precision;
    r.recall += r.per_class.back().recall;
    r.f1 += r.per_class.back().f1;
    any_undef = any_undef || r.per_class.back().undefined;
  }
  const auto c = static_cast<double>(cm.num_classes());
  r.precision /= c;
  r.recall /= c;
  r.f1 /= c;
  if (any_undef) r.undefined_fields.push_back("per_class");
  return r;
}

// ---- rendering -------------------------------------------------------------

enum class ReportFormat { Json, Markdown, Csv };

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& m : r.per_class)
    per.push_back({{"name", m.name},
                   {"precision", m.precision},
                   {"recall", m.recall},
                   {"f1", m.f1},
                   {"support", m.support},
                   {"undefined", m.undefined}});
  return {{"averaging", r.averaging}, {"accuracy", r.accuracy}, {"precision", r.precision},
          {"recall", r.recall},       {"f1", r.f1},             {"total", r.total},
          {"undefined", r.undefined_fields}, {"per_class", per}};
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.averaging = j.at("averaging").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.total = j.at("total").get<std::uint64_t>();
    r.undefined_fields = j.at("undefined").get<std::vector<std::string>>();
    for (const auto& m : j.at("per_class"))
      r.per_class.push_back({m.at("name").get<std::string>(), m.at("precision").get<double>(), m.at("recall").get<double>(),
                             m.at("f1").get<double>(), m.at("support").get<std::uint64_t>(), m.at("undefined").get<bool>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics report: ") + e.what());
  }
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < cm.num_classes(); ++j) row.push_back(cm.at(i, j));
    rows.push_back(row);
  }
  return {{"classes", cm.class_names()}, {"counts", rows}};
}

inline ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  try {
    ConfusionMatrix cm(j.at("classes").get<std::vector<std::string>>());
    const auto& rows = j.at("counts");
    if (rows.size() != cm.num_classes()) throw FormatError("confusion matrix: row count mismatch");
    for (std::size_t i = 0; i < cm.num_classes(); ++i) {
      if (rows[i].size() != cm.num_classes()) throw FormatError("confusion matrix: column count mismatch");
      for (std::size_t k = 0; k < cm.num_classes(); ++k)
        cm.add(i, k, rows[i][k].get<std::uint64_t>());
    }
    return cm;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("confusion matrix: ") + e.what());
  }
}

/// Markdown: one table row per metric, then per-class rows. CSV: `metric,value`
/// lines. Percentages use two decimals; JSON keeps full precision.
inline std::string render_report(const MetricsReport& r, ReportFormat format) {
  using metrics_detail::percent;
  std::ostringstream out;
  switch (format) {
    case ReportFormat::Json:
      return to_json(r).dump(2) + "\n";
    case ReportFormat::Markdown: {
      out << "| Metric | Value |\n|---|---|\n";
      out << "| Accuracy | " << percent(r.accuracy) << " |\n";
      out << "| Precision | " << percent(r.precision) << " |\n";
      out << "| Recall | " << percent(r.recall) << " |\n";
      out << "| F1-Score | " << percent(r.f1) << " |\n";
      out << "\nAveraging: " << r.averaging << "; samples: " << r.total << "\n";
      if (r.undefined()) {
        out << "Undefined (zero denominator, reported as 0):";
        for (const auto& f : r.undefined_fields) out << ' ' << f;
        out << "\n";
      }
      if (!r.per_class.empty()) {
        out << "\n| Class | Precision | Recall | F1-Score | Support |\n|---|---|---|---|---|\n";
        for (const auto& m : r.per_class)
          out << "| " << m.name << " | " << percent(m.precision) << " | " << percent(m.recall) << " | "
              << percent(m.f1) << " | " << m.support << " |\n";
      }
      return out.str();
    }
    case ReportFormat::Csv:
      out << "metric,value\n";
      out << "accuracy," << percent(r.accuracy) << "\n";
      out << "precision," << percent(r.precision) << "\n";
      out << "recall," << percent(r.recall) << "\n";
      out << "f1," << percent(r.f1) << "\n";
      out << "averaging," << r.averaging << "\n";
      return out.str();
  }
  return {};
}

// Header row and first column carry class names: (C+1) x (C+1) cells.
inline std::string render_confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\pred";
  for (const auto& n : cm.class_names()) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    out << cm.class_names()[i];
    for (std::size_t j = 0; j < cm.num_classes(); ++j) out << ',' << cm.at(i, j);
    out << '\n';
  }
  return out.str();
}

}  // namespace leancnn
