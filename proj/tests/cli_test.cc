// Copyright 2026 The MCSD Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("mcsd_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the binary with `args`; stdout lands in out_, stderr in err_.
  int Run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(MCSD_BINARY) + " " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    out_ = Slurp(out);
    err_ = Slurp(err);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string Small(int width = 8) const {
    return "--train-size 60 --test-size 40 --width " + std::to_string(width) +
           " --hidden 8 --blocks 2 --epochs 3 --seed 5 -o " + (dir_ / "out").string();
  }

  fs::path dir_;
  std::string out_, err_;
};

TEST_F(CliTest, MakeDataIsDeterministic) {
  ASSERT_EQ(Run("make-data " + Small()), 0) << err_;
  const std::string first = Slurp(dir_ / "out" / "train.csv");
  EXPECT_NE(out_.find("train.csv"), std::string::npos);
  EXPECT_EQ(first.substr(0, first.find('\n')), "x0,x1,label");
  ASSERT_EQ(Run("make-data " + Small()), 0);
  EXPECT_EQ(Slurp(dir_ / "out" / "train.csv"), first);

  ASSERT_EQ(Run("make-data --dataset boxes-detection --images 4 " + Small()), 0) << err_;
  EXPECT_TRUE(fs::exists(dir_ / "out" / "detections.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "ground_truth.csv"));
}

TEST_F(CliTest, ConfigFileWithFlagOverrides) {
  std::ofstream(dir_ / "cfg.json") << R"({"seed": 42, "train": {"epochs": 7},
                                          "method": {"kind": "block_drop"}})";
  ASSERT_EQ(Run("config -c " + (dir_ / "cfg.json").string() + " --epochs 9"), 0) << err_;
  EXPECT_NE(out_.find("\"seed\": 42"), std::string::npos) << out_;
  EXPECT_NE(out_.find("\"epochs\": 9"), std::string::npos);
  EXPECT_NE(out_.find("\"kind\": \"block_drop\""), std::string::npos);

  // The echoed JSON is itself a valid config.
  std::ofstream(dir_ / "echo.json") << out_;
  const std::string echoed = out_;
  ASSERT_EQ(Run("config -c " + (dir_ / "echo.json").string()), 0) << err_;
  EXPECT_EQ(out_, echoed);
}

TEST_F(CliTest, SweepThenSelect) {
  ASSERT_EQ(Run("sweep " + Small() +
                " --grid-methods MCD,MCSD --grid-drop-rates 0.1,0.2 --grid-passes 3"
                " --grid-conf-thresholds 0"),
            0)
      << err_;
  EXPECT_NE(out_.find("cells 4 failed 0 rows 4 training_runs 4"), std::string::npos) << out_;
  const fs::path reports = dir_ / "out" / "reports.csv";
  ASSERT_TRUE(fs::exists(reports));
  ASSERT_EQ(Run("select " + reports.string()), 0) << err_;
  EXPECT_EQ(out_.rfind("method,drop_rate,T,", 0), 0u);
  EXPECT_NE(out_.find("ipp_distance "), std::string::npos);
  // The selected row is one of the report rows.
  const std::string row = out_.substr(out_.find('\n') + 1,
                                      out_.find('\n', out_.find('\n') + 1) - out_.find('\n'));
  EXPECT_NE(Slurp(reports).find(row), std::string::npos) << row;
  ASSERT_EQ(Run("select --pareto " + reports.string()), 0);
  EXPECT_EQ(out_.rfind("method,", 0), 0u);
}

TEST_F(CliTest, TrainEvalShift) {
  const std::string ckpt = (dir_ / "model.ckpt").string();
  ASSERT_EQ(Run("train " + Small() + " --checkpoint " + ckpt), 0) << err_;
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_EQ(Slurp(dir_ / "model.loss.csv").rfind("epoch,mean_loss\n1,", 0), 0u);

  ASSERT_EQ(Run("eval " + Small() + " -T 4 --checkpoint " + ckpt + " --summary " +
                (dir_ / "summary.csv").string()),
            0)
      << err_;
  EXPECT_EQ(out_.rfind("map_50_95=", 0), 0u) << out_;
  EXPECT_EQ(Slurp(dir_ / "summary.csv").rfind("pass,sample,class,prob\n0,0,0,", 0), 0u);

  ASSERT_EQ(Run("eval " + Small() + " --deterministic --checkpoint " + ckpt), 0) << err_;
  ASSERT_EQ(Run("eval " + Small() + " --mode deterministic_scaled --checkpoint " + ckpt), 0);
  const std::string scaled = out_;
  ASSERT_EQ(Run("eval " + Small() + " --deterministic --checkpoint " + ckpt), 0);
  EXPECT_EQ(out_, scaled);

  ASSERT_EQ(Run("shift " + Small() + " -T 4 --checkpoint " + ckpt), 0) << err_;
  const std::string curve = Slurp(dir_ / "out" / "shift_curve.csv");
  EXPECT_EQ(curve.rfind("level,performance,mean_entropy\nclean,", 0), 0u) << curve;
  EXPECT_NE(curve.find("\nsevere,"), std::string::npos);

  // A checkpoint for another architecture is rejected.
  EXPECT_EQ(Run("eval " + Small(6) + " --checkpoint " + ckpt), 1);
  EXPECT_NE(err_.find("architecture"), std::string::npos) << err_;

  // Parent directories of an explicit checkpoint path are created.
  const std::string nested = (dir_ / "a" / "b" / "m.ckpt").string();
  EXPECT_EQ(Run("train " + Small() + " --checkpoint " + nested), 0) << err_;
  EXPECT_TRUE(fs::exists(nested));
}

TEST_F(CliTest, EvalDetectionFiles) {
  const std::string out = (dir_ / "out").string();
  ASSERT_EQ(Run("make-data --dataset boxes-detection --images 6 -T 5 -o " + out), 0) << err_;
  ASSERT_EQ(Run("eval --task detection --detections " + out + "/detections.csv" +
                " --ground-truth " + out + "/ground_truth.csv"),
            0)
      << err_;
  EXPECT_EQ(out_.rfind("map_50_95=", 0), 0u) << out_;
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(Run(""), 1);
  EXPECT_EQ(Run("sweep --no-such-flag"), 1);
  EXPECT_EQ(Run("config --drop-rate 1.5"), 1);
  EXPECT_NE(err_.find("mcsd: "), std::string::npos);
  EXPECT_EQ(Run("select " + (dir_ / "missing.csv").string()), 1);
  EXPECT_EQ(Run("--help"), 0);

  // Every cell diverges: hard failure.
  EXPECT_EQ(Run("sweep " + Small() + " --lr 1e6 --grid-methods MCSD --grid-drop-rates 0.1"
                " --grid-passes 2"),
            1);
  // Only the block-drop cell fails: partial failure.
  EXPECT_EQ(Run("sweep " + Small() +
                " --grid-methods MCDB,MCSD --grid-drop-rates 0.99 --grid-passes 2"
                " --grid-adapted-blocks single-last --block-size 8"),
            2)
      << out_ << err_;
  EXPECT_TRUE(fs::exists(dir_ / "out" / "failures.txt"));
}

}  // namespace
