#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "leancnn/leancnn.hpp"
#include "oracles.hpp"

using namespace leancnn;

TEST(Shape, RejectsZeroDims) {
  EXPECT_THROW(Shape({2, 0, 3}), ShapeError);
  EXPECT_EQ(Shape({2, 3, 4}).elements(), 24u);
}

TEST(Shape, OverflowIsSizeError) {
  const std::size_t big = std::size_t{1} << 40;
  EXPECT_THROW(Shape({big, big}), SizeError);
}

TEST(Tensor, ConstructFromBufferChecksSize) {
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  Tensor<float> t(Shape{2, 3}, std::vector<float>{0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at({1, 2}), 5.0f);
  EXPECT_EQ(t.at({0, 1}), 1.0f);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  Tensor<float> t(Shape{2, 3}, std::vector<float>{0, 1, 2, 3, 4, 5});
  const auto r = t.reshaped(Shape{3, 2});
  EXPECT_EQ(r.values(), t.values());
  EXPECT_THROW(t.reshaped(Shape{4, 2}), ShapeError);
}

TEST(Tensor, ElementwiseShapeMismatch) {
  const auto a = zeros<float>(Shape{2, 3});
  const auto b = zeros<float>(Shape{3, 2});
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, b), ShapeError);
}

TEST(Tensor, StableSigmoidExtremes) {
  EXPECT_EQ(stable_sigmoid(1000.0), 1.0);
  EXPECT_EQ(stable_sigmoid(-1000.0), 0.0);
  EXPECT_DOUBLE_EQ(stable_sigmoid(0.0), 0.5);
  EXPECT_FALSE(std::isnan(stable_sigmoid(-800.0f)));
  for (double z : {-30.0, -2.5, 0.3, 7.0}) EXPECT_NEAR(stable_sigmoid(z), 1.0 / (1.0 + std::exp(-z)), 1e-15);
}

TEST(Tensor, ReduceMatchesNaiveLoops) {
  Rng rng(3);
  const auto x = uniform<double>(Shape{3, 4, 5}, rng, -1, 1);
  const auto s1 = reduce(x, {1}, Reduce::Sum);
  ASSERT_EQ(s1.shape(), Shape({3, 5}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 5; ++k) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += x.at({i, j, k});
      EXPECT_NEAR(s1.at({i, k}), s, 1e-12);
    }
  const auto m02 = reduce(x, {2, 0}, Reduce::Max);
  ASSERT_EQ(m02.shape(), Shape({4}));
  for (std::size_t j = 0; j < 4; ++j) {
    double m = -1e9;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 5; ++k) m = std::max(m, x.at({i, j, k}));
    EXPECT_EQ(m02[j], m);
  }
  const auto all = reduce(x, {0, 1, 2}, Reduce::Mean);
  EXPECT_EQ(all.shape(), Shape({1}));
  EXPECT_NEAR(all[0], sum(x) / 60.0, 1e-12);
}

TEST(Tensor, ReduceRejectsBadAxes) {
  const auto x = zeros<float>(Shape{2, 2});
  EXPECT_THROW(reduce(x, {2}, Reduce::Sum), ShapeError);
  EXPECT_THROW(reduce(x, {0, 0}, Reduce::Sum), ShapeError);
}

TEST(Tensor, UniformRequiresOrderedBounds) {
  Rng rng(1);
  EXPECT_THROW(uniform<float>(Shape{2}, rng, 1.0, 1.0), ConfigError);
  const auto u = uniform<float>(Shape{1000}, rng, -2.0, 3.0);
  for (float v : u.values()) {
    EXPECT_GE(v, -2.0f);
    EXPECT_LE(v, 3.0f);
  }
}

// Reference values from an independent Python implementation of
// splitmix64-seeded xoshiro256**.
TEST(Rng, MatchesReferenceSequence) {
  Rng a(42);
  EXPECT_EQ(a.next(), 0x15780b2e0c2ec716ULL);
  EXPECT_EQ(a.next(), 0x6104d9866d113a7eULL);
  EXPECT_EQ(a.next(), 0xae17533239e499a1ULL);
  Rng b(0);
  EXPECT_EQ(b.next(), 0x99ec5f36cb75f2b4ULL);
  EXPECT_EQ(b.next(), 0xbf6e1f784956452aULL);
}

TEST(Rng, BelowIsInRangeAndRoughlyUniform) {
  Rng rng(9);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hist[v];
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(5);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(v, sorted);
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Parallel, ForVisitsEverySlotAndRethrows) {
  ExecutionScope scope({4, false});
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw DataError("boom");
               }),
               DataError);
}

TEST(Parallel, DeterministicForcesOneThread) {
  ExecutionPolicy p{8, true};
  EXPECT_EQ(p.effective_threads(), 1u);
  ExecutionPolicy q{8, false};
  EXPECT_EQ(q.effective_threads(), 8u);
}
