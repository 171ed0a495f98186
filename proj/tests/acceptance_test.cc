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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "mcsd/config.h"
#include "mcsd/detection.h"
#include "mcsd/harness.h"
#include "mcsd/mc_inference.h"
#include "mcsd/metrics.h"
#include "mcsd/nn.h"
#include "mcsd/random.h"
#include "mcsd/stochastic.h"
#include "oracles.h"

namespace mcsd {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

void FillRandom(ResidualNet& net, Rng& rng, double scale) {
  for (Parameter* p : net.Parameters()) {
    for (double& v : p->value.data()) v = rng.Normal(0.0, scale);
  }
}

Tensor RandomMatrix(Rng& rng, std::size_t rows, std::size_t cols, double lo,
                    double hi) {
  Tensor t = Tensor::Matrix(rows, cols);
  for (double& v : t.data()) v = rng.Uniform(lo, hi);
  return t;
}

// 1. Analytic gradients against central differences.
Outcome GradientOracle() {
  constexpr double kEps = 1e-5;
  // Central differences of an O(1) loss carry ~1e-10 absolute rounding
  // noise at this step, so magnitudes below kGradFloor are compared on an
  // absolute scale.
  constexpr double kGradFloor = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  Rng rng(DeriveSeed(1, "acceptance_gradient"));
  for (OutputMode mode : {OutputMode::kSoftmax, OutputMode::kSigmoid}) {
    for (DropKind kind :
         {DropKind::kUnitDrop, DropKind::kBlockDrop, DropKind::kPathDrop}) {
      NetShape shape{3, 6, 8, 2, 4, mode, Activation::kRelu};
      ResidualNet net(shape);
      FillRandom(net, rng, 0.7);
      const Tensor x = RandomMatrix(rng, 5, 3, -1.5, 1.5);
      std::vector<int> labels{0, 3, 1, 2, 1};
      const Targets targets = mode == OutputMode::kSoftmax
                                  ? Targets::Labels(labels)
                                  : Targets::OneHot(labels, 4);
      StochasticSpec spec{kind, 0.3, 3, {1, 2}, DropMode::kTraining};
      const ScalingSet scalings =
          ToScalings(SampleMask(spec, shape, 5, rng), spec, shape);
      const double wd = 1e-2;
      Backward(net, x, targets, wd, &scalings);
      for (Parameter* p : net.Parameters()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
          const double saved = p->value[i];
          p->value[i] = saved + kEps;
          const double up = Loss(Forward(net, x, &scalings), targets, net, wd);
          p->value[i] = saved - kEps;
          const double down = Loss(Forward(net, x, &scalings), targets, net, wd);
          p->value[i] = saved;
          const double numeric = (up - down) / (2.0 * kEps);
          const double analytic = p->grad[i];
          const double denom =
              std::max({std::abs(numeric), std::abs(analytic), kGradFloor});
          worst = std::max(worst, std::abs(numeric - analytic) / denom);
          ++checked;
        }
      }
    }
  }
  return {worst < 1e-4, Fmt("%.0f gradients, max relative error %.3g", checked, worst)};
}

// 2. Monte Carlo mean of the path-drop block output.
Outcome PathDropUnbiased() {
  constexpr std::size_t kMasks = 100000;
  Rng data_rng(DeriveSeed(2, "acceptance_unbiased"));
  const std::size_t rows = 4, cols = 5;
  const Tensor identity = RandomMatrix(data_rng, rows, cols, 2.0, 4.0);
  const Tensor residual = RandomMatrix(data_rng, rows, cols, -2.0, 2.0);
  NetShape shape{cols, cols, 4, 1, 2};
  double worst = 0.0;
  for (double p_drop : {0.1, 0.25, 0.5}) {
    StochasticSpec spec{DropKind::kPathDrop, p_drop, 1, {1}, DropMode::kMCInference};
    Rng rng(DeriveSeed(2, "acceptance_masks", {SeedKey(p_drop)}));
    std::vector<double> sum(rows * cols, 0.0);
    for (std::size_t t = 0; t < kMasks; ++t) {
      const MaskSample mask = SampleMask(spec, shape, rows, rng);
      const Tensor out =
          ApplyPathDrop(residual, identity, mask.blocks[0].bits, spec.keep_prob());
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += out[i];
    }
    for (std::size_t i = 0; i < sum.size(); ++i) {
      const double expected = identity[i] + residual[i];
      const double mean = sum[i] / static_cast<double>(kMasks);
      worst = std::max(worst, std::abs(mean - expected) / std::abs(residual[i]));
    }
  }
  return {worst <= 0.01,
          Fmt("max deviation %.4f relative to the residual, 3 rates", worst)};
}

// 3. Linear residual net: MC mean logits against the mask-free forward.
Outcome LinearComposition() {
  constexpr std::size_t kPasses = 100000;
  Rng rng(DeriveSeed(3, "acceptance_linear"));
  NetShape shape{3, 6, 6, 3, 3, OutputMode::kSoftmax, Activation::kIdentity};
  ResidualNet net(shape);
  FillRandom(net, rng, 0.5);
  const Tensor x = RandomMatrix(rng, 4, 3, -1.0, 1.0);
  const Tensor plain = Forward(net, x);
  double scale = 0.0;
  for (double v : plain.data()) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (DropKind kind :
       {DropKind::kPathDrop, DropKind::kUnitDrop, DropKind::kBlockDrop}) {
    StochasticSpec spec{kind, 0.25, 2, {1, 2, 3}, DropMode::kMCInference};
    const PredictiveSummary s = McPredict(net, x, spec, kPasses, 33);
    for (std::size_t i = 0; i < plain.size(); ++i) {
      worst = std::max(worst, std::abs(s.mean_logits[i] - plain[i]) / scale);
    }
  }
  return {worst <= 0.01,
          Fmt("max deviation %.4f of the output scale, T=1e5", worst)};
}

// 4. Metric oracles on random instances, plus exact uniform entropy.
Outcome MetricOracles() {
  Rng rng(DeriveSeed(4, "acceptance_metrics"));
  double worst = 0.0;
  std::size_t front_mismatch = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t n = 1 + rng.UniformIndex(40);
    const std::size_t classes = 2 + rng.UniformIndex(4);
    const auto preds = oracle::RandomPredictions(rng, n, classes);
    worst = std::max(worst, std::abs(Brier(preds) - oracle::Brier(preds)));
    worst = std::max(worst, std::abs(Ece(preds, 15) - oracle::Ece(preds, 15)));
    worst = std::max(worst, std::abs(Auarc(preds) - oracle::Auarc(preds)));
    std::vector<ReportRow> rows(n);
    for (auto& row : rows) {
      row.second.map_50_95 = static_cast<double>(rng.UniformIndex(10)) / 10.0;
      row.second.auarc = static_cast<double>(rng.UniformIndex(10)) / 10.0;
    }
    front_mismatch += ParetoFrontIndices(rows) != oracle::ParetoFront(rows) ? 1 : 0;
  }
  std::size_t entropy_mismatch = 0;
  for (std::size_t c = 2; c <= 10; ++c) {
    const std::vector<double> uniform(c, 1.0 / static_cast<double>(c));
    entropy_mismatch +=
        ShannonEntropy(uniform) == std::log2(static_cast<double>(c)) ? 0 : 1;
  }
  const bool pass = worst <= 1e-12 && front_mismatch == 0 && entropy_mismatch == 0;
  return {pass, Fmt("max metric deviation %.3g, pareto mismatches %.0f, "
                    "entropy mismatches %.0f",
                    worst, front_mismatch, entropy_mismatch)};
}

// 5. IPP on fixed YOLOv8x (mAP, AUARC) reference rows.
Outcome IppOnReferenceRows() {
  auto row = [](const char* method, double map, double auarc) {
    ReportRow r;
    r.first.method = method;
    r.second.map_50_95 = map;
    r.second.auarc = auarc;
    return r;
  };
  const std::vector<ReportRow> rows{row("MCD", 0.505, 0.668),
                                    row("MCDB", 0.473, 0.771),
                                    row("MCSD", 0.496, 0.778)};
  const ConfigPoint best = IppSelect(rows);
  return {best.method == "MCSD",
          "selected " + best.method +
              Fmt(" (d = %.4f, %.4f, %.4f)", IdealPointDistance(rows[0].second),
                  IdealPointDistance(rows[1].second),
                  IdealPointDistance(rows[2].second))};
}

// 6. BSAS trace, three-detection mAP table and a perfect detector.
Outcome DetectionGolden() {
  std::vector<std::string> problems;
  // BSAS: input order differs from processing order (pass_index first).
  const std::vector<Detection> dets{
      MakeDetection(0, 1, {0, 0, 10, 8}, {0.6, 0.3, 0.1}),
      MakeDetection(0, 0, {0, 0, 10, 10}, {0.8, 0.1, 0.1}),
      MakeDetection(0, 1, {0, 0, 10, 9}, {0.2, 0.7, 0.1}),
      MakeDetection(0, 0, {50, 50, 60, 60}, {0.1, 0.8, 0.1}),
      MakeDetection(0, 2, {5, 0, 15, 9}, {0.2, 0.7, 0.1}),
      MakeDetection(0, 2, {2, 0, 12, 9}, {0.3, 0.6, 0.1}),
  };
  std::vector<BsasStep> trace;
  const auto clusters = BsasCluster(dets, 0.5, SemanticRule::kArgmaxMatch, &trace);
  const std::vector<std::size_t> order{1, 3, 0, 2, 4, 5};
  const std::vector<std::size_t> assigned{0, 1, 0, 2, 3, 2};
  const std::vector<bool> founded{true, true, false, true, true, false};
  if (trace.size() != 6 || clusters.size() != 4) {
    problems.push_back("bsas shape");
  } else {
    for (std::size_t k = 0; k < 6; ++k) {
      if (trace[k].detection != order[k] || trace[k].cluster != assigned[k] ||
          trace[k].founded != founded[k]) {
        problems.push_back("bsas step " + std::to_string(k));
      }
    }
    if (!(clusters[0].mean_box == Box{0, 0, 10, 9}) ||
        !(clusters[2].mean_box == Box{1, 0, 11, 9}) ||
        clusters[2].support() != 2 || clusters[3].support() != 1) {
      problems.push_back("bsas means");
    }
  }

  const std::vector<GroundTruth> gts{{{0, 0, 10, 10}, 0, 0}, {{20, 20, 30, 30}, 1, 0}};
  const std::vector<ScoredBox> boxes{{{0, 0, 10, 7.8}, 0, 0.9, 0},
                                     {{0, 0, 10, 10}, 0, 0.8, 0},
                                     {{0, 0, 10, 10}, 1, 0.7, 0}};
  const MapResult map = MeanAveragePrecision(boxes, gts);
  for (std::size_t t = 0; t < kIouThresholdCount; ++t) {
    const double expected0 = t <= 5 ? 1.0 : 0.5;
    if (map.ap[0][t] != expected0 || map.ap[1][t] != 0.0) {
      problems.push_back("ap at threshold " + std::to_string(t));
    }
  }
  if (std::abs(map.map - 0.4) > 1e-12) problems.push_back("map table");

  DatasetParams params;
  params.images = 25;
  const auto scenes = MakeScenes(params, 66);
  NoiseSpec clean;
  clean.box_sigma = 0.0;
  clean.miss_prob = 0.0;
  clean.hallucination_rate = 0.0;
  const auto passes = SynthDetector(scenes, clean, 10, 67);
  std::map<int, std::vector<Detection>> by_image;
  for (const auto& d : passes) by_image[d.image_id].push_back(d);
  std::vector<ScoredBox> fused;
  for (const auto& [image, group] : by_image) {
    for (const auto& c : BsasCluster(group)) fused.push_back(ToScoredBox(c));
  }
  const double perfect = MeanAveragePrecision(fused, scenes).map;
  if (perfect != 1.0) problems.push_back(Fmt("perfect detector mAP %.6f", perfect));

  std::string detail = problems.empty() ? "trace, AP table and perfect run exact" : "";
  for (const auto& p : problems) detail += p + "; ";
  return {problems.empty(), detail};
}

ExperimentConfig NoisyBlobs(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.dataset.label_noise = 0.15;
  cfg.dataset.train_size = 600;
  cfg.dataset.test_size = 600;
  cfg.method.method = "MCSD";
  cfg.method.drop_rate = 0.2;
  cfg.method.passes = 20;
  cfg.Finalize();
  return cfg;
}

// 7. Calibration of MCSD T=20 against a single deterministic pass.
Outcome CalibrationDirection() {
  double ece_mc = 0.0, ece_det = 0.0, auarc_mc = 0.0, auarc_det = 0.0;
  constexpr int kSeeds = 5;
  for (int s = 0; s < kSeeds; ++s) {
    const ExperimentConfig cfg = NoisyBlobs(static_cast<std::uint64_t>(s));
    const auto& m = cfg.method;
    const TaskData task = BuildTaskData(cfg);
    const ResidualNet net =
        TrainCell(cfg, task, m.method, m.drop_rate, m.adapted_blocks).net;
    const StochasticSpec spec = cfg.SpecFor(m.method, m.drop_rate, m.adapted_blocks);
    const Tensor& x = task.data.test.features;
    const auto& y = task.data.test.labels;
    const auto mc = McPredict(net, x, spec, m.passes,
                              McSeed(cfg, m.method, m.drop_rate, m.adapted_blocks, m.passes));
    const auto mc_eval =
        EvaluateClassification(mc.mean_probs, y, cfg.net.output_mode, 0.0, 15);
    const auto det_eval = EvaluateClassification(DeterministicPredict(net, x, spec), y,
                                                 cfg.net.output_mode, 0.0, 15);
    ece_mc += mc_eval.report.ece / kSeeds;
    ece_det += det_eval.report.ece / kSeeds;
    auarc_mc += mc_eval.report.auarc / kSeeds;
    auarc_det += det_eval.report.auarc / kSeeds;
  }
  const bool pass = ece_mc <= ece_det && auarc_mc >= auarc_det - 0.01;
  return {pass, Fmt("ECE mc %.4f vs det %.4f; ", ece_mc, ece_det) +
                    Fmt("AUARC mc %.4f vs det %.4f", auarc_mc, auarc_det)};
}

ShiftSpec FourLevels() {
  ShiftSpec shift;
  shift.levels = {{"clean", 0.0, 0.0, 0.0},
                  {"mild", 0.3, 0.1, 0.1},
                  {"moderate", 0.6, 0.2, 0.2},
                  {"severe", 0.9, 0.3, 0.3}};
  return shift;
}

// 8. Accuracy falls and entropy rises with shift severity.
Outcome ShiftResponse() {
  constexpr int kSeeds = 5;
  const ShiftSpec shift = FourLevels();
  std::vector<double> accuracy(shift.levels.size(), 0.0);
  std::vector<double> entropy(shift.levels.size(), 0.0);
  for (int s = 0; s < kSeeds; ++s) {
    ExperimentConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(100 + s);
    cfg.Finalize();
    const auto rows = RunShift(cfg, cfg.method, shift);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      accuracy[i] += rows[i].performance / kSeeds;
      entropy[i] += rows[i].mean_entropy / kSeeds;
    }
  }
  int violations = 0;
  double largest = 0.0;
  for (std::size_t i = 1; i < accuracy.size(); ++i) {
    const double rise = accuracy[i] - accuracy[i - 1];
    if (rise > 0.0) {
      ++violations;
      largest = std::max(largest, rise);
    }
  }
  const bool pass = (violations == 0 || (violations == 1 && largest < 0.02)) &&
                    entropy.back() > entropy.front();
  std::string detail = "accuracy";
  for (double a : accuracy) detail += Fmt(" %.4f", a);
  detail += "; entropy";
  for (double e : entropy) detail += Fmt(" %.4f", e);
  return {pass, detail};
}

std::string ReadAll(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 9. Two sweeps with the same seed write identical CSV files.
Outcome SweepDeterminism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "mcsd_acceptance_sweep";
  fs::remove_all(root);
  ExperimentConfig cfg;
  cfg.seed = 9;
  cfg.grid.drop_rates = {0.1, 0.2};
  cfg.grid.passes = {5, 20};
  cfg.shift = FourLevels();
  cfg.Finalize();
  ExperimentConfig threaded = cfg;
  threaded.threads = 3;
  RunSweep(cfg, (root / "a").string());
  RunSweep(threaded, (root / "b").string());
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    ++files;
    const fs::path other = root / "b" / fs::relative(entry.path(), root / "a");
    if (!fs::exists(other) || ReadAll(entry.path()) != ReadAll(other)) ++differing;
  }
  fs::remove_all(root);
  return {files > 0 && differing == 0,
          Fmt("%.0f CSV files compared, %.0f differ (sequential vs 3 threads)",
              files, differing)};
}

}  // namespace
}  // namespace mcsd

int main() {
  using Check = std::function<mcsd::Outcome()>;
  const std::vector<std::pair<const char*, Check>> criteria{
      {"gradient oracle", mcsd::GradientOracle},
      {"per-block path-drop unbiasedness", mcsd::PathDropUnbiased},
      {"linear-network composition", mcsd::LinearComposition},
      {"metric oracles", mcsd::MetricOracles},
      {"IPP selection on reference rows", mcsd::IppOnReferenceRows},
      {"detection golden", mcsd::DetectionGolden},
      {"calibration direction", mcsd::CalibrationDirection},
      {"shift response", mcsd::ShiftResponse},
      {"sweep determinism", mcsd::SweepDeterminism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    mcsd::Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    failures += outcome.pass ? 0 : 1;
    std::printf("%s criterion %zu: %s -- %s [%.1fs]\n",
                outcome.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                outcome.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
