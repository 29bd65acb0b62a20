#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sys/wait.h>
#include <unistd.h>

#include "leancnn/leancnn.hpp"

using namespace leancnn;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(LEANCNN_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("leancnn_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    Rng rng(5);
    for (int c = 0; c < 2; ++c) {
      fs::create_directories(root_ / "data" / (c ? "yes" : "no"));
      for (int i = 0; i < 8; ++i) {
        Image img{20, 20, 1, std::vector<std::uint8_t>(400)};
        for (auto& v : img.pixels) v = static_cast<std::uint8_t>((c ? 180 : 60) + rng.below(30));
        write_png(root_ / "data" / (c ? "yes" : "no") / (std::to_string(i) + ".png"), img);
      }
    }
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string data() { return "--data " + (root_ / "data").string() + " --input-size 16"; }
  static std::string out(const std::string& name) { return "--out " + (root_ / name).string(); }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, MissingDatasetIsExitTwo) {
  const auto r = run("train --data /nonexistent/leancnn --epochs 1 " + out("missing"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("data error: path not found"), std::string::npos) << r.out;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);
}

TEST_F(Cli, UsageErrorsAreExitOne) {
  EXPECT_EQ(run("train " + data() + " --ratio 0.7 --respect-folders").code, 1);
  EXPECT_EQ(run("train " + data() + " --model resnet").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  const fs::path cfg = root_ / "bad.cfg";
  write_text(cfg, "no_such_key = 1\n");
  EXPECT_EQ(run("--config " + cfg.string() + " scan " + (root_ / "data").string()).code, 1);
}

TEST_F(Cli, ZeroEpochTrainWritesReportOnly) {
  const auto r = run("train " + data() + " --epochs 0 " + out("zero"));
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path dir = root_ / "zero";
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_FALSE(fs::exists(dir / "model.lcnn"));
  EXPECT_EQ(read_text(dir / "trace.csv"), "epoch,train_loss,train_accuracy,eval_accuracy\n");
}

TEST_F(Cli, ReportReproducesSummaryAndRunsNeverOverwrite) {
  ASSERT_EQ(run("train " + data() + " --epochs 2 --batch 4 " + out("train")).code, 0);
  ASSERT_EQ(run("train " + data() + " --epochs 1 --batch 4 " + out("train")).code, 0);
  EXPECT_TRUE(fs::exists(root_ / "train-1" / "report.json"));
  const auto r = run("report " + (root_ / "train").string() + " --check");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, read_text(root_ / "train" / "summary.md"));
  const auto manifest = read_json(root_ / "train" / "manifest.json");
  EXPECT_EQ(manifest.at("resolved").at("epochs"), "2");
  // input size comes from the checkpoint
  const auto ev = run("eval --checkpoint " + (root_ / "train" / "model.lcnn").string() + " --data " +
                      (root_ / "data").string() + " " + out("eval"));
  EXPECT_EQ(ev.code, 0) << ev.out;
}

TEST_F(Cli, ConfigFileAndEnvironmentLayering) {
  const fs::path cfg = root_ / "run.cfg";
  write_text(cfg, "lr = 0.01\nepochs = 4\nbatch = 4\n");
  const std::string cmd = "LEANCNN_LR=0.002 " + std::string(LEANCNN_CLI_PATH) + " --config " + cfg.string() +
                          " train " + data() + " --epochs 1 " + out("layered2") + " > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto config = read_json(root_ / "layered2" / "config.json");
  EXPECT_EQ(config.at("train").at("lr").get<double>(), 0.002);
  EXPECT_EQ(config.at("train").at("epochs").get<int>(), 1);
  EXPECT_EQ(config.at("train").at("batch").get<std::size_t>(), 4u);
}

TEST_F(Cli, SweepIsByteIdenticalAcrossInvocations) {
  const std::string args = "sweep " + data() + " --epochs 2 --batch 4 --lrs 0.001,0.0001 ";
  ASSERT_EQ(run(args + out("sweep-a")).code, 0);
  ASSERT_EQ(run(args + out("sweep-b")).code, 0);
  for (const char* lr : {"lr-0.001", "lr-0.0001"})
    for (const char* f : {"trace.csv", "report.json", "confusion.csv", "summary.md"})
      EXPECT_EQ(read_text(root_ / "sweep-a" / lr / f), read_text(root_ / "sweep-b" / lr / f)) << lr << "/" << f;
  EXPECT_EQ(read_text(root_ / "sweep-a" / "sweep.json"), read_text(root_ / "sweep-b" / "sweep.json"));
  EXPECT_EQ(run("report --check " + (root_ / "sweep-a").string()).code, 0);
}

TEST_F(Cli, FewShotTable) {
  const auto r = run("fewshot " + data() + " --ratio 0.75 --epochs 1 --batch 4 --shots 0,2,4 " + out("fs"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = read_json(root_ / "fs" / "fewshot.json");
  ASSERT_EQ(j.at("rows").size(), 3u);
  EXPECT_EQ(j.at("rows")[2].at("train_samples").get<std::size_t>(), 8u);
  const auto too_many = run("fewshot " + data() + " --epochs 1 --shots 50 " + out("fs-bad"));
  EXPECT_EQ(too_many.code, 2);
  EXPECT_FALSE(fs::exists(root_ / "fs-bad"));
}

TEST_F(Cli, ScanPrintsClasses) {
  const auto r = run("scan " + (root_ / "data").string() + " --json " + out("scan"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("\"yes\""), std::string::npos);
}
