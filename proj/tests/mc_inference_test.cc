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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "mcsd/mc_inference.h"
#include "mcsd/random.h"

namespace mcsd {
namespace {

Tensor RandomInput(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  Rng rng(seed);
  Tensor x = Tensor::Matrix(rows, cols);
  for (double& v : x.data()) v = rng.Normal();
  return x;
}

StochasticSpec Spec(DropKind kind, double rate, std::vector<int> blocks) {
  return {kind, rate, 2, std::move(blocks), DropMode::kMCInference};
}

TEST(McPredictTest, ZeroRatePassesAreIdentical) {
  const NetShape shape{3, 6, 6, 2, 4};
  const ResidualNet net = ResidualNet::Initialize(shape, 1);
  const Tensor x = RandomInput(2, 5, 3);
  const auto s = McPredict(net, x, Spec(DropKind::kPathDrop, 0.0, {1, 2}), 7, 3);
  ASSERT_EQ(s.passes, 7u);
  for (std::size_t t = 1; t < 7; ++t) EXPECT_EQ(s.Pass(t), s.Pass(0));
  EXPECT_EQ(s.Pass(0), Probabilities(Forward(net, x), OutputMode::kSoftmax));
}

TEST(McPredictTest, SinglePassIsTheMean) {
  const NetShape shape{3, 6, 6, 2, 4};
  const ResidualNet net = ResidualNet::Initialize(shape, 1);
  const auto s =
      McPredict(net, RandomInput(2, 5, 3), Spec(DropKind::kUnitDrop, 0.3, {1, 2}), 1, 4);
  EXPECT_EQ(s.mean_probs, s.Pass(0));
}

TEST(McPredictTest, MeanIsExactAverageAndRowsAreDistributions) {
  const NetShape shape{3, 6, 6, 3, 4};
  const ResidualNet net = ResidualNet::Initialize(shape, 5);
  const auto s = McPredict(net, RandomInput(6, 8, 3),
                           Spec(DropKind::kPathDrop, 0.4, {1, 2, 3}), 9, 7);
  for (std::size_t i = 0; i < 8; ++i) {
    double row = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      double sum = 0.0;
      for (std::size_t t = 0; t < 9; ++t) sum += s.per_pass_probs[(t * 8 + i) * 4 + c];
      EXPECT_EQ(s.mean_probs(i, c), sum / 9.0);
      row += s.mean_probs(i, c);
    }
    EXPECT_NEAR(row, 1.0, 1e-9);
  }
}

TEST(McPredictTest, SigmoidEntriesAreNotRenormalized) {
  const NetShape shape{3, 6, 6, 2, 4, OutputMode::kSigmoid};
  const ResidualNet net = ResidualNet::Initialize(shape, 5);
  const Tensor x = RandomInput(6, 8, 3);
  const auto s = McPredict(net, x, Spec(DropKind::kPathDrop, 0.0, {1}), 2, 7);
  EXPECT_EQ(s.mean_probs, Probabilities(Forward(net, x), OutputMode::kSigmoid));
  for (double p : s.mean_probs.data()) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(McPredictTest, PassesOwnIndexedStreams) {
  const NetShape shape{3, 6, 6, 2, 4};
  const ResidualNet net = ResidualNet::Initialize(shape, 5);
  const Tensor x = RandomInput(6, 4, 3);
  const StochasticSpec spec = Spec(DropKind::kPathDrop, 0.5, {1, 2});
  const auto five = McPredict(net, x, spec, 5, 99);
  const auto ten = McPredict(net, x, spec, 10, 99);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(five.Pass(t), ten.Pass(t));
  const auto threaded = McPredict(net, x, spec, 10, 99, 4);
  EXPECT_EQ(threaded.per_pass_probs, ten.per_pass_probs);
  EXPECT_EQ(threaded.mean_probs, ten.mean_probs);
}

TEST(McPredictTest, PassOrderDoesNotChangeTheMean) {
  const NetShape shape{3, 6, 6, 2, 3};
  const ResidualNet net = ResidualNet::Initialize(shape, 5);
  const auto s = McPredict(net, RandomInput(6, 4, 3),
                           Spec(DropKind::kBlockDrop, 0.3, {1, 2}), 6, 12);
  std::vector<std::size_t> order(6);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  Tensor shuffled(s.per_pass_probs.shape());
  const std::size_t stride = 4 * 3;
  for (std::size_t t = 0; t < 6; ++t) {
    std::copy_n(s.per_pass_probs.data().begin() + order[t] * stride, stride,
                shuffled.data().begin() + t * stride);
  }
  const auto again = Summarize(shuffled, OutputMode::kSoftmax);
  for (std::size_t i = 0; i < s.mean_probs.size(); ++i) {
    EXPECT_NEAR(again.mean_probs[i], s.mean_probs[i], 1e-15);
  }
}

TEST(McPredictTest, ErrorsAreTaggedWithPassIndex) {
  const NetShape shape{3, 6, 6, 2, 3};
  ResidualNet net = ResidualNet::Initialize(shape, 5);
  net.head().weight.value[0] = 1e308;
  net.head().weight.value[1] = 1e308;
  try {
    McPredict(net, RandomInput(6, 4, 3), Spec(DropKind::kPathDrop, 0.3, {1}), 3, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("pass 0"), std::string::npos) << e.what();
  }
  EXPECT_THROW(McPredict(net, RandomInput(6, 4, 3), Spec(DropKind::kPathDrop, 0.3, {1}), 0, 1),
               Error);
  StochasticSpec training = Spec(DropKind::kPathDrop, 0.3, {1});
  training.mode = DropMode::kTraining;
  EXPECT_THROW(McPredict(ResidualNet::Initialize(shape, 5), RandomInput(6, 4, 3), training, 2, 1),
               Error);
}

TEST(McPredictTest, VarianceOfMeanDecaysAsOneOverT) {
  const NetShape shape{2, 6, 6, 2, 3};
  const ResidualNet net = ResidualNet::Initialize(shape, 31);
  const Tensor x = RandomInput(32, 1, 2);
  const StochasticSpec spec = Spec(DropKind::kPathDrop, 0.3, {1, 2});
  std::vector<double> log_t, log_var;
  for (std::size_t passes : {5, 20, 80, 320}) {
    constexpr int kSeeds = 400;
    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < kSeeds; ++s) {
      const double p = McPredict(net, x, spec, passes, DeriveSeed(7, "var", {passes, static_cast<std::uint64_t>(s)})).mean_probs[0];
      sum += p;
      sum_sq += p * p;
    }
    const double mean = sum / kSeeds;
    log_t.push_back(std::log(static_cast<double>(passes)));
    log_var.push_back(std::log(sum_sq / kSeeds - mean * mean));
  }
  const double mt = std::accumulate(log_t.begin(), log_t.end(), 0.0) / 4.0;
  const double mv = std::accumulate(log_var.begin(), log_var.end(), 0.0) / 4.0;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    num += (log_t[i] - mt) * (log_var[i] - mv);
    den += (log_t[i] - mt) * (log_t[i] - mt);
  }
  const double slope = num / den;
  EXPECT_GE(slope, -1.2);
  EXPECT_LE(slope, -0.8);
}

TEST(McPredictTest, LinearNetMeanMatchesPlainForward) {
  NetShape shape{3, 4, 4, 1, 2, OutputMode::kSoftmax, Activation::kIdentity};
  const ResidualNet net = ResidualNet::Initialize(shape, 41);
  const Tensor x = RandomInput(42, 3, 3);
  const auto s = McPredict(net, x, Spec(DropKind::kPathDrop, 0.2, {1}), 100000, 43);
  const Tensor plain = Forward(net, x);
  double scale = 0.0;
  for (double v : plain.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < plain.size(); ++i) {
    EXPECT_NEAR(s.mean_logits[i], plain[i], 0.01 * scale);
  }
}

TEST(DeterministicPredictTest, Contracts) {
  NetShape shape{3, 4, 4, 1, 2, OutputMode::kSoftmax, Activation::kIdentity};
  const ResidualNet net = ResidualNet::Initialize(shape, 51);
  const Tensor x = RandomInput(52, 3, 3);
  const Tensor plain = Forward(net, x);
  EXPECT_EQ(DeterministicLogits(net, x, Spec(DropKind::kPathDrop, 0.0, {1})), plain);
  EXPECT_EQ(DeterministicLogits(net, x, Spec(DropKind::kUnitDrop, 0.6, {1})), plain);
  EXPECT_EQ(DeterministicLogits(net, x, Spec(DropKind::kBlockDrop, 0.6, {1})), plain);

  // Closed form for one linear block: head(h + 0.8 F(h)), h = stem(x).
  const Tensor scaled = DeterministicLogits(net, x, Spec(DropKind::kPathDrop, 0.2, {1}));
  const auto& stem = net.stem();
  const auto& block = net.blocks()[0];
  const auto& head = net.head();
  auto affine = [](const Affine& l, const std::vector<double>& in) {
    std::vector<double> out(l.weight.value.rows());
    for (std::size_t o = 0; o < out.size(); ++o) {
      out[o] = l.bias.value[o];
      for (std::size_t i = 0; i < in.size(); ++i) out[o] += l.weight.value(o, i) * in[i];
    }
    return out;
  };
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> h = affine(stem, {x(r, 0), x(r, 1), x(r, 2)});
    const auto f = affine(block.fc2, affine(block.fc1, h));
    for (std::size_t j = 0; j < h.size(); ++j) h[j] += 0.8 * f[j];
    const auto logits = affine(head, h);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(scaled(r, c), logits[c], 1e-12);
  }
}

TEST(PredictiveSummaryTest, CsvIsColumnar) {
  const Tensor per_pass({2, 1, 2}, {0.25, 0.75, 0.5, 0.5});
  const auto s = Summarize(per_pass, OutputMode::kSoftmax);
  EXPECT_EQ(s.mean_probs, Tensor({1, 2}, {0.375, 0.625}));
  std::ostringstream out;
  WritePredictiveSummary(out, s);
  EXPECT_EQ(out.str(),
            "pass,sample,class,prob\n0,0,0,0.25\n0,0,1,0.75\n1,0,0,0.5\n1,0,1,0.5\n");
}

}  // namespace
}  // namespace mcsd
