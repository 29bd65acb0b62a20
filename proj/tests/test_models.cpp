#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "leancnn/leancnn.hpp"
#include "oracles.hpp"

using namespace leancnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("leancnn_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> summary_shapes(const Model<float>& m) {
  std::vector<std::string> out;
  for (const auto& s : m.summary()) out.push_back(s.output.to_string());
  return out;
}

}  // namespace

TEST(Models, FullSizeParameterCountsMatchClosedForm) {
  {
    const auto m = build<float>(ModelSpec::btbcnn(), 42);
    EXPECT_EQ(m.param_count(), oracle::param_count(false, 1, 2, 224));
    EXPECT_EQ(m.param_count(), 102'780'481u);
    const auto shapes = summary_shapes(m);
    EXPECT_NE(std::find(shapes.begin(), shapes.end(), "[32,112,112]"), shapes.end());
    EXPECT_NE(std::find(shapes.begin(), shapes.end(), "[64,56,56]"), shapes.end());
    EXPECT_NE(std::find(shapes.begin(), shapes.end(), "[200704]"), shapes.end());
    EXPECT_EQ(shapes.back(), "[1]");
  }
  {
    const auto m = build<float>(ModelSpec::btmcnn(4), 42);
    EXPECT_EQ(m.param_count(), oracle::param_count(true, 1, 4, 224));
    EXPECT_EQ(m.param_count(), 51'475'908u);
    const auto shapes = summary_shapes(m);
    EXPECT_NE(std::find(shapes.begin(), shapes.end(), "[128,28,28]"), shapes.end());
    EXPECT_NE(std::find(shapes.begin(), shapes.end(), "[100352]"), shapes.end());
    EXPECT_EQ(shapes.back(), "[4]");
  }
}

TEST(Models, ParameterCountPropertyOverSpecs) {
  for (std::size_t in : {1, 2, 3})
    for (std::size_t size : {16, 32, 48}) {
      EXPECT_EQ(build<float>(ModelSpec::btbcnn(in, size), 1).param_count(), oracle::param_count(false, in, 2, size));
      for (std::size_t classes : {2, 4, 7})
        EXPECT_EQ(build<float>(ModelSpec::btmcnn(classes, in, size), 1).param_count(),
                  oracle::param_count(true, in, classes, size));
    }
}

TEST(Models, PublishedFigureNote) {
  EXPECT_EQ(expected_param_count(ModelSpec::btmcnn(4, 3)), kPublishedBtmcnnParams);
  const std::string note = param_count_note(ModelSpec::btmcnn(), expected_param_count(ModelSpec::btmcnn()));
  EXPECT_NE(note.find("576"), std::string::npos);
  EXPECT_NE(note.find("3-channel"), std::string::npos);
  EXPECT_TRUE(param_count_note(ModelSpec::btbcnn(), 1).empty());
}

TEST(Models, SpecValidation) {
  EXPECT_THROW(build<float>(ModelSpec{ModelKind::BTBCNN, 1, 3, 32, 0.5}, 1), ConfigError);
  EXPECT_THROW(build<float>(ModelSpec::btmcnn(1), 1), ConfigError);
  EXPECT_THROW(build<float>(ModelSpec::btmcnn(4, 1, 36), 1), ConfigError);  // 36 is not divisible by 8
  EXPECT_THROW(build<float>(ModelSpec::btbcnn(0, 32), 1), ConfigError);
  EXPECT_THROW(parse_model_kind("resnet"), ConfigError);
}

TEST(Models, SameSeedSameParameters) {
  auto a = build<float>(ModelSpec::btmcnn(4, 1, 32), 42);
  auto b = build<float>(ModelSpec::btmcnn(4, 1, 32), 42);
  auto c = build<float>(ModelSpec::btmcnn(4, 1, 32), 43);
  EXPECT_EQ(parameter_hash(a), parameter_hash(b));
  EXPECT_NE(parameter_hash(a), parameter_hash(c));
}

TEST(Models, ForwardShapesAndInputCheck) {
  auto m = build<float>(ModelSpec::btbcnn(1, 32), 1);
  m.set_mode(Mode::Eval);
  Rng rng(2);
  for (std::size_t n : {1, 5})
    EXPECT_EQ(m.forward(uniform<float>(Shape{n, 1, 32, 32}, rng, 0, 1)).shape(), Shape({n, 1}));
  EXPECT_THROW(m.forward(zeros<float>(Shape{1, 1, 16, 16})), ShapeError);
  auto mc = build<float>(ModelSpec::btmcnn(4, 1, 32), 1);
  mc.set_mode(Mode::Eval);
  EXPECT_EQ(mc.forward(zeros<float>(Shape{3, 1, 32, 32})).shape(), Shape({3, 4}));
}

TEST(Models, EvalIsPureAndBatchConsistent) {
  auto m = build<float>(ModelSpec::btmcnn(4, 1, 32), 3);
  m.set_mode(Mode::Eval);
  Rng rng(4);
  const auto x = uniform<float>(Shape{4, 1, 32, 32}, rng, 0, 1);
  const auto y1 = m.forward(x);
  EXPECT_EQ(y1, m.forward(x));
  double worst = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor<float> xi(Shape{1, 1, 32, 32});
    std::copy_n(x.data() + i * 1024, 1024, xi.data());
    const auto yi = m.forward(xi);
    for (std::size_t j = 0; j < 4; ++j) worst = std::max(worst, std::abs(double(yi[j]) - y1.at({i, j})));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Models, BackwardFillsEveryGradient) {
  auto m = build<double>(ModelSpec::btmcnn(3, 1, 16), 5);
  Rng rng(6);
  const auto y = m.forward(uniform<double>(Shape{2, 1, 16, 16}, rng, 0, 1));
  const std::vector<int> labels{0, 2};
  const auto loss = cross_entropy(y, std::span<const int>(labels));
  (void)m.backward(loss.grad);
  for (const auto& p : m.params()) EXPECT_GT(sum(mul(*p.grad, *p.grad)), 0.0) << p.name;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto m = build<float>(ModelSpec::btmcnn(4, 1, 32), 9);
  // move running stats off their initial values
  Rng rng(1);
  (void)m.forward(uniform<float>(Shape{3, 1, 32, 32}, rng, 0, 1));
  m.set_mode(Mode::Eval);
  const auto x = uniform<float>(Shape{2, 1, 32, 32}, rng, 0, 1);
  const auto want = m.forward(x);

  const fs::path dir = temp_dir("ckpt");
  checkpoint::save(m, dir / "m.lcnn", {9, 3, 0.0005});
  auto loaded = checkpoint::load(dir / "m.lcnn");
  EXPECT_EQ(*loaded.model.spec(), *m.spec());
  EXPECT_EQ(loaded.meta.seed, 9u);
  EXPECT_EQ(loaded.meta.epochs, 3u);
  EXPECT_EQ(loaded.meta.lr, 0.0005);
  EXPECT_EQ(loaded.model.param_count(), m.param_count());
  EXPECT_EQ(parameter_hash(loaded.model, true), parameter_hash(m, true));
  loaded.model.set_mode(Mode::Eval);
  EXPECT_EQ(loaded.model.forward(x), want);
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  auto m = build<float>(ModelSpec::btbcnn(1, 16), 1);
  const auto bytes = checkpoint::serialize(m, {});
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(checkpoint::deserialize(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 99;
  EXPECT_THROW(checkpoint::deserialize(bad_version), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  EXPECT_THROW(checkpoint::deserialize(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(checkpoint::deserialize(trailing), FormatError);
  EXPECT_NO_THROW(checkpoint::deserialize(bytes));
  EXPECT_THROW(checkpoint::load("/nonexistent/leancnn.lcnn"), DataError);
}

TEST(Checkpoint, HeaderLayout) {
  auto m = build<float>(ModelSpec::btmcnn(4, 1, 16), 1);
  const auto b = checkpoint::serialize(m, {77, 5, 0.25});
  ASSERT_GT(b.size(), 40u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "LCNN");
  EXPECT_EQ(b[4], 1);  // version, little-endian u16
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[6], 1);  // kind: btmcnn
  EXPECT_EQ(b[7], 1);  // in_channels u32
  EXPECT_EQ(b[11], 4);  // num_classes u32
  EXPECT_EQ(b[15], 16);  // input_size u32
}
