#include <gtest/gtest.h>

#include "leancnn/leancnn.hpp"
#include "oracles.hpp"

using namespace leancnn;

namespace {

BenchConfig small(std::size_t batch) {
  BenchConfig c;
  c.batch = batch;
  c.warmup = 1;
  c.measured = 7;
  return c;
}

// Timing on a shared machine is noisy; a property is accepted if any of a few
// independent measurements satisfies it.
template <typename Fn>
bool holds_in_some_attempt(Fn&& attempt, int tries = 3) {
  for (int i = 0; i < tries; ++i)
    if (attempt()) return true;
  return false;
}

}  // namespace

TEST(Latency, Statistics) {
  const auto s = latency_stats({4, 1, 3, 2});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_DOUBLE_EQ(s.p95, 4);
  const auto odd = latency_stats({5, 1, 9, 7, 3});
  EXPECT_DOUBLE_EQ(odd.median, 5);
  EXPECT_LE(odd.median, odd.p95);
  std::vector<double> many(100);
  for (std::size_t i = 0; i < many.size(); ++i) many[i] = static_cast<double>(i + 1);
  EXPECT_DOUBLE_EQ(latency_stats(many).p95, 95);
  EXPECT_THROW(latency_stats({}), ConfigError);
}

TEST(Latency, ConfigValidation) {
  BenchConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.batch, 128u);
  c.measured = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = BenchConfig{};
  c.warmup = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Latency, EntryContract) {
  auto m = build<float>(ModelSpec::btbcnn(1, 32), 1);
  const auto e = time_inference(m, small(4));
  EXPECT_EQ(e.batch, 4u);
  EXPECT_EQ(e.samples_ms.size(), 7u);
  EXPECT_GT(e.ms_per_batch.mean, 0.0);
  EXPECT_LE(e.ms_per_batch.median, e.ms_per_batch.p95);
  EXPECT_EQ(latency_stats(e.samples_ms).median, e.ms_per_batch.median);
  EXPECT_EQ(e.param_count, m.param_count());
  EXPECT_EQ(e.model, "btbcnn");
  BenchReport r{hardware_descriptor(), {e}, {}};
  const auto j = to_json(r);
  EXPECT_FALSE(j.at("hardware").get<std::string>().empty());
  const auto md = render_bench_markdown(j);
  EXPECT_NE(md.find("not measured here"), std::string::npos);
  EXPECT_NE(md.find("| btbcnn | 4 | 1 | 32 |"), std::string::npos);
}

TEST(Latency, BinaryModelIsNotSlowerThanMulticlass) {
  auto b = build<float>(ModelSpec::btbcnn(1, 64), 1);
  auto m = build<float>(ModelSpec::btmcnn(4, 1, 64), 1);
  EXPECT_TRUE(holds_in_some_attempt([&] {
    return time_inference(b, small(16)).ms_per_batch.median <= time_inference(m, small(16)).ms_per_batch.median;
  }));
}

TEST(Latency, DoublingBatchRoughlyDoublesTime) {
  auto b = build<float>(ModelSpec::btbcnn(1, 64), 1);
  double ratio = 0;
  EXPECT_TRUE(holds_in_some_attempt([&] {
    ratio = time_inference(b, small(16)).ms_per_batch.median / time_inference(b, small(8)).ms_per_batch.median;
    return ratio >= 1.5 && ratio <= 2.5;
  })) << "last ratio " << ratio;
}

TEST(TrainingTime, ContractAndLinearity) {
  const auto data = oracle::brightness_set(16, 32, 3);
  TrainConfig cfg;
  cfg.batch = 8;
  const auto one = time_training(ModelSpec::btbcnn(1, 32), data, 1, cfg);
  EXPECT_EQ(one.epochs, 1);
  EXPECT_EQ(one.dataset_size, 32u);
  EXPECT_FALSE(one.hardware.empty());
  double ratio = 0;
  EXPECT_TRUE(holds_in_some_attempt([&] {
    const double t1 = time_training(ModelSpec::btbcnn(1, 32), data, 1, cfg).seconds;
    const double t2 = time_training(ModelSpec::btbcnn(1, 32), data, 2, cfg).seconds;
    ratio = t2 / t1;
    return ratio >= 2 * 0.7 && ratio <= 2 * 1.3;
  })) << "last ratio " << ratio;
  EXPECT_THROW(time_training(ModelSpec::btbcnn(1, 32), data, 0, cfg), ConfigError);
}
