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

#include <benchmark/benchmark.h>

#include <vector>

#include "mcsd/dataset.h"
#include "mcsd/detection.h"
#include "mcsd/mc_inference.h"
#include "mcsd/metrics.h"
#include "mcsd/nn.h"
#include "mcsd/random.h"
#include "mcsd/stochastic.h"
#include "mcsd/training.h"

namespace mcsd {
namespace {

NetShape BenchShape() {
  NetShape shape;
  shape.input_dim = 16;
  shape.width = 64;
  shape.hidden = 64;
  shape.num_blocks = 4;
  shape.num_classes = 10;
  return shape;
}

Tensor RandomInput(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({rows, cols});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.Normal();
  return x;
}

void BM_Forward(benchmark::State& state) {
  const NetShape shape = BenchShape();
  const ResidualNet net = ResidualNet::Initialize(shape, 1);
  const Tensor x = RandomInput(static_cast<std::size_t>(state.range(0)), shape.input_dim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Forward(net, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(256);

void BM_Backward(benchmark::State& state) {
  const NetShape shape = BenchShape();
  ResidualNet net = ResidualNet::Initialize(shape, 1);
  const Tensor x = RandomInput(64, shape.input_dim, 2);
  std::vector<int> labels(64);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  const Targets targets = Targets::Labels(labels);
  for (auto _ : state) benchmark::DoNotOptimize(Backward(net, x, targets, 1e-4));
}
BENCHMARK(BM_Backward);

void BM_McPredict(benchmark::State& state) {
  const NetShape shape = BenchShape();
  const ResidualNet net = ResidualNet::Initialize(shape, 1);
  const Tensor x = RandomInput(128, shape.input_dim, 2);
  StochasticSpec spec;
  spec.kind = static_cast<DropKind>(state.range(0));
  spec.drop_rate = 0.2;
  spec.block_size = 8;
  spec.adapted_blocks = {1, 2, 3, 4};
  for (auto _ : state) benchmark::DoNotOptimize(McPredict(net, x, spec, 20, 3));
  state.SetLabel(ToString(spec.kind));
}
BENCHMARK(BM_McPredict)
    ->Arg(static_cast<int>(DropKind::kUnitDrop))
    ->Arg(static_cast<int>(DropKind::kBlockDrop))
    ->Arg(static_cast<int>(DropKind::kPathDrop));

std::vector<GroundTruth> BenchScenes() {
  DatasetParams params;
  params.images = 50;
  params.num_classes = 5;
  return MakeScenes(params, 4);
}

void BM_BsasCluster(benchmark::State& state) {
  const auto scenes = BenchScenes();
  NoiseSpec noise;
  noise.num_classes = 5;
  auto dets = SynthDetector(scenes, noise, static_cast<std::size_t>(state.range(0)), 5);
  std::erase_if(dets, [](const Detection& d) { return d.image_id != 0; });
  for (auto _ : state) benchmark::DoNotOptimize(BsasCluster(dets));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(dets.size()));
}
BENCHMARK(BM_BsasCluster)->Arg(10)->Arg(50);

void BM_MeanAveragePrecision(benchmark::State& state) {
  const auto scenes = BenchScenes();
  NoiseSpec noise;
  noise.num_classes = 5;
  std::vector<ScoredBox> boxes;
  for (const auto& d : SynthDetector(scenes, noise, 1, 6)) boxes.push_back(ToScoredBox(d));
  for (auto _ : state) benchmark::DoNotOptimize(MeanAveragePrecision(boxes, scenes));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(boxes.size()));
}
BENCHMARK(BM_MeanAveragePrecision);

std::vector<ScoredPrediction> RandomScored(std::size_t n) {
  Rng rng(7);
  std::vector<ScoredPrediction> preds;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p(10);
    double sum = 0.0;
    for (double& v : p) sum += (v = rng.Uniform() + 1e-3);
    for (double& v : p) v /= sum;
    const int label = static_cast<int>(rng.UniformIndex(10));
    const bool correct = static_cast<int>(ArgMax(p)) == label;
    preds.push_back(MakeScoredPrediction(std::move(p), correct, label, OutputMode::kSoftmax));
  }
  return preds;
}

void BM_Metrics(benchmark::State& state) {
  const auto preds = RandomScored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(Brier(preds));
    benchmark::DoNotOptimize(Ece(preds));
    benchmark::DoNotOptimize(Auarc(preds));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Metrics)->Arg(1000)->Arg(100000);

}  // namespace
}  // namespace mcsd

BENCHMARK_MAIN();
