#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "leancnn/leancnn.hpp"
#include "oracles.hpp"

using namespace leancnn;

namespace {

TrainConfig quick(int epochs, double lr = 1e-3) {
  TrainConfig c;
  c.epochs = epochs;
  c.lr = lr;
  c.batch = 8;
  c.seed = 42;
  return c;
}

SweepEntry entry(double lr, double accuracy) {
  SweepEntry e{lr, RunResult{}, {}};
  e.result->report.accuracy = accuracy;
  return e;
}

}  // namespace

TEST(Train, LearnsBrightnessTask) {
  const auto train_set = oracle::brightness_set(12, 16, 1);
  const auto test_set = oracle::brightness_set(10, 16, 2);
  const auto out = train(ModelSpec::btbcnn(1, 16), train_set, test_set, quick(8));
  ASSERT_EQ(out.result.epochs.size(), 8u);
  EXPECT_LT(out.result.epochs.back().train_loss, out.result.epochs.front().train_loss);
  EXPECT_GE(out.result.report.accuracy, 0.9);
  EXPECT_EQ(out.result.report.total, 20u);
  EXPECT_EQ(out.result.train_samples_seen, 24u);
}

TEST(Train, MulticlassUsesCrossEntropy) {
  const auto train_set = oracle::brightness_set(8, 16, 3);
  const auto test_set = oracle::brightness_set(4, 16, 4);
  const auto out = train(ModelSpec::btmcnn(2, 1, 16), train_set, test_set, quick(4));
  EXPECT_EQ(resolve_loss(ModelSpec::btmcnn(2, 1, 16), LossKind::Auto), LossKind::CE);
  EXPECT_TRUE(std::isfinite(out.result.epochs.back().train_loss));
  TrainConfig bad = quick(1);
  bad.loss = LossKind::BCE;
  EXPECT_THROW(train(ModelSpec::btmcnn(2, 1, 16), train_set, test_set, bad), ConfigError);
}

TEST(Train, ZeroEpochsLeavesInitialParameters) {
  const auto train_set = oracle::brightness_set(4, 16, 5);
  const auto test_set = oracle::brightness_set(4, 16, 6);
  auto out = train(ModelSpec::btbcnn(1, 16), train_set, test_set, quick(0));
  auto fresh = build<float>(ModelSpec::btbcnn(1, 16), 42);
  EXPECT_EQ(parameter_hash(out.model, true), parameter_hash(fresh, true));
  EXPECT_TRUE(out.result.epochs.empty());
  EXPECT_EQ(out.result.train_samples_seen, 0u);
  EXPECT_EQ(out.result.report.total, 8u);
}

TEST(Train, SameSeedGivesIdenticalTrace) {
  const auto train_set = oracle::brightness_set(6, 16, 7);
  const auto test_set = oracle::brightness_set(3, 16, 8);
  auto cfg = quick(3);
  cfg.eval_every = 1;
  const auto a = train(ModelSpec::btbcnn(1, 16), train_set, test_set, cfg);
  const auto b = train(ModelSpec::btbcnn(1, 16), train_set, test_set, cfg);
  ASSERT_EQ(a.result.epochs.size(), b.result.epochs.size());
  for (std::size_t i = 0; i < a.result.epochs.size(); ++i) {
    EXPECT_EQ(a.result.epochs[i].train_loss, b.result.epochs[i].train_loss);
    EXPECT_EQ(a.result.epochs[i].eval_accuracy, b.result.epochs[i].eval_accuracy);
  }
  EXPECT_EQ(render_trace_csv(a.result.epochs), render_trace_csv(b.result.epochs));
}

TEST(Evaluate, IsPureAndCountsEverySample) {
  const auto test_set = oracle::brightness_set(7, 16, 9);
  auto model = build<float>(ModelSpec::btmcnn(2, 1, 16), 1);
  model.set_mode(Mode::Train);
  const auto before = parameter_hash(model, true);
  const auto r = evaluate(model, test_set, 4);
  EXPECT_EQ(r.confusion.total(), 14u);
  EXPECT_EQ(parameter_hash(model, true), before);
  EXPECT_EQ(model.mode(), Mode::Train);
  EXPECT_THROW(evaluate(model, SampleSet(Shape{1, 16, 16}, {"a", "b"})), DataError);
}

TEST(Evaluate, PredictionRule) {
  Tensor<float> binary(Shape{3, 1}, std::vector<float>{-0.1f, 0.0f, 2.0f});
  EXPECT_EQ(predict_labels(binary), (std::vector<int>{0, 1, 1}));
  Tensor<float> multi(Shape{2, 3}, std::vector<float>{1, 3, 3, 0, -1, -2});
  EXPECT_EQ(predict_labels(multi), (std::vector<int>{1, 0}));
}

TEST(Sweep, TieGoesToLowerLearningRate) {
  std::vector<SweepEntry> entries{entry(1e-3, 0.9), entry(5e-4, 0.95), entry(1e-4, 0.95), entry(5e-5, 0.8)};
  EXPECT_EQ(select_best(entries), 2u);
  entries[1].result.reset();
  entries[2].result.reset();
  EXPECT_EQ(select_best(entries), 0u);
  for (auto& e : entries) e.result.reset();
  EXPECT_FALSE(select_best(entries).has_value());
}

TEST(Sweep, RunsEveryRateAndRecordsDivergence) {
  const auto train_set = oracle::brightness_set(4, 16, 10);
  const auto test_set = oracle::brightness_set(2, 16, 11);
  const std::vector<double> lrs{1e-3, 1e-4};
  std::vector<double> seen;
  const auto sweep = lr_sweep(ModelSpec::btbcnn(1, 16), train_set, test_set, lrs, quick(2),
                              [&](double lr, TrainOutcome&) { seen.push_back(lr); });
  EXPECT_EQ(seen, lrs);
  ASSERT_EQ(sweep.entries.size(), 2u);
  ASSERT_TRUE(sweep.best.has_value());

  // A NaN pixel poisons every logit it reaches.
  SampleSet poisoned(Shape{1, 16, 16}, {"dark", "bright"});
  Tensor<float> nan_img(Shape{1, 16, 16}, std::numeric_limits<float>::quiet_NaN());
  poisoned.add(nan_img, 0);
  poisoned.add(nan_img, 1);
  const auto bad = lr_sweep(ModelSpec::btbcnn(1, 16), poisoned, test_set, lrs, quick(2));
  for (const auto& e : bad.entries) {
    EXPECT_TRUE(e.failed());
    EXPECT_NE(e.error.find("diverge"), std::string::npos) << e.error;
  }
  EXPECT_FALSE(bad.best.has_value());
}

TEST(Train, NonFiniteLossIsDivergenceError) {
  SampleSet poisoned(Shape{1, 16, 16}, {"dark", "bright"});
  poisoned.add(Tensor<float>(Shape{1, 16, 16}, std::numeric_limits<float>::infinity()), 1);
  poisoned.add(Tensor<float>(Shape{1, 16, 16}, 0.5f), 0);
  try {
    train(ModelSpec::btbcnn(1, 16), poisoned, oracle::brightness_set(1, 16, 1), quick(3));
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 1);
  }
}

TEST(FewShot, TrainsOnExactlyKPerClass) {
  const auto train_set = oracle::brightness_set(20, 16, 12);
  const auto test_set = oracle::brightness_set(3, 16, 13);
  const std::vector<std::size_t> ks{0, 2, 5};
  auto cfg = quick(1);
  const auto table = few_shot_experiment(ModelSpec::btbcnn(1, 16), train_set, test_set, ks, cfg, 2024);
  ASSERT_EQ(table.rows.size(), 3u);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    EXPECT_EQ(table.rows[i].train_samples, 2 * ks[i]);
    EXPECT_EQ(table.rows[i].samples_seen, 2 * ks[i]);
    EXPECT_EQ(table.rows[i].result.test_size, 6u);
  }
  EXPECT_TRUE(table.rows[0].result.epochs.empty());
  const std::vector<std::size_t> too_many{21};
  EXPECT_THROW(check_shots(train_set, too_many), DataError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_loss_kind("bce"), LossKind::BCE);
  EXPECT_THROW(parse_loss_kind("mse"), ConfigError);
}
