#include <gtest/gtest.h>

#include "leancnn/leancnn.hpp"
#include "oracles.hpp"

using namespace leancnn;

TEST(Metrics, PublishedBinaryExample) {
  const auto r = binary_metrics(ConfusionMatrix::from_binary_counts(308, 284, 3, 5));
  EXPECT_NEAR(r.accuracy * 100, 98.6667, 1e-4);
  EXPECT_NEAR(r.precision * 100, 99.0354, 1e-4);
  EXPECT_NEAR(r.recall * 100, 98.4026, 1e-4);
  EXPECT_NEAR(r.f1 * 100, 98.7179, 1e-4);
  EXPECT_EQ(r.total, 600u);
  EXPECT_FALSE(r.undefined());
}

TEST(Metrics, NoPositivePredictionsIsFlaggedUndefined) {
  const auto r = binary_metrics(ConfusionMatrix::from_binary_counts(0, 10, 0, 5));
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_TRUE(r.undefined());
  EXPECT_NE(std::find(r.undefined_fields.begin(), r.undefined_fields.end(), "precision"), r.undefined_fields.end());
}

TEST(Metrics, MacroAveragesPerClass) {
  ConfusionMatrix cm(std::vector<std::string>{"a", "b", "c"});
  // a: 2 right, 1 -> b; b: 3 right; c: 1 right, 1 -> a
  cm.add(0, 0, 2);
  cm.add(0, 1, 1);
  cm.add(1, 1, 3);
  cm.add(2, 2, 1);
  cm.add(2, 0, 1);
  const auto r = multiclass_metrics(cm);
  EXPECT_EQ(r.averaging, "macro");
  EXPECT_NEAR(r.accuracy, 6.0 / 8.0, 1e-15);
  const double pa = 2.0 / 3, pb = 3.0 / 4, pc = 1.0;
  const double ra = 2.0 / 3, rb = 1.0, rc = 0.5;
  EXPECT_NEAR(r.precision, (pa + pb + pc) / 3, 1e-15);
  EXPECT_NEAR(r.recall, (ra + rb + rc) / 3, 1e-15);
  auto f = [](double p, double q) { return 2 * p * q / (p + q); };
  EXPECT_NEAR(r.f1, (f(pa, ra) + f(pb, rb) + f(pc, rc)) / 3, 1e-15);
}

TEST(Metrics, UpdateRejectsOutOfRange) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(cm.update(2, 0), ValidationError);
  EXPECT_THROW(cm.update(0, -1), ValidationError);
  EXPECT_THROW(ConfusionMatrix(1), ConfigError);
}

TEST(Metrics, StreamOracleProperty) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng.below(4);
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> truth(n), pred(n);
    ConfusionMatrix cm(c);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(c));
      pred[i] = rng.bernoulli(0.6) ? truth[i] : static_cast<int>(rng.below(c));
      cm.update(truth[i], pred[i]);
    }
    ASSERT_EQ(cm.total(), n);
    const auto ref = oracle::stream_metrics(truth, pred, c);
    const auto r = multiclass_metrics(cm);
    ASSERT_EQ(r.accuracy, ref.accuracy);
    for (std::size_t k = 0; k < c; ++k) {
      ASSERT_EQ(r.per_class[k].precision, ref.precision[k]);
      ASSERT_EQ(r.per_class[k].recall, ref.recall[k]);
      ASSERT_EQ(r.per_class[k].f1, ref.f1[k]);
    }
    if (c == 2) {
      const auto b = binary_metrics(cm);
      ASSERT_EQ(b.precision, r.per_class[1].precision);
      ASSERT_EQ(b.recall, r.per_class[1].recall);
      ASSERT_EQ(b.f1, r.per_class[1].f1);
      ASSERT_EQ(b.accuracy, r.accuracy);
    }
  }
}

TEST(Metrics, JsonRoundTrip) {
  ConfusionMatrix cm(std::vector<std::string>{"x", "y", "z"});
  cm.add(0, 0, 4);
  cm.add(1, 2, 2);
  cm.add(2, 2, 7);
  EXPECT_EQ(confusion_from_json(to_json(cm)), cm);
  const auto r = multiclass_metrics(cm);
  EXPECT_EQ(report_from_json(to_json(r)), r);
  EXPECT_EQ(report_from_json(nlohmann::json::parse(to_json(r).dump())), r);
}

TEST(Metrics, Rendering) {
  const auto r = binary_metrics(ConfusionMatrix::from_binary_counts(308, 284, 3, 5));
  const auto md = render_report(r, ReportFormat::Markdown);
  EXPECT_NE(md.find("98.67%"), std::string::npos);
  EXPECT_NE(md.find("99.04%"), std::string::npos);
  const auto csv = render_report(r, ReportFormat::Csv);
  EXPECT_EQ(csv.rfind("metric,value\n", 0), 0u);
  const auto cm_csv = render_confusion_csv(ConfusionMatrix::from_binary_counts(1, 2, 3, 4));
  EXPECT_EQ(std::count(cm_csv.begin(), cm_csv.end(), '\n'), 3);
}
