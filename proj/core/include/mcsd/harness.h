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

#ifndef MCSD_HARNESS_H_
#define MCSD_HARNESS_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mcsd/config.h"
#include "mcsd/dataset.h"
#include "mcsd/detection.h"
#include "mcsd/metrics.h"
#include "mcsd/nn.h"

namespace mcsd {

// Seed streams, all derived from ExperimentConfig::seed:
//   "data"                         classification splits
//   "scenes", "objects"            detection ground truth and object features
//   "init"                         network initialisation (shared by cells)
//   "train"  (method, rate, preset)       minibatch order and training masks
//   "mc"     (method, rate, preset, T)    MC pass streams
//   "detector" (T), "clutter" (T)  synthetic boxes and hallucination features
//   "shift"  (level)               corruption noise
struct TaskData {
  SplitDataset data;
  std::vector<GroundTruth> scenes;  // detection only
  Tensor object_features;           // detection only, one row per scene GT
};

TaskData BuildTaskData(const ExperimentConfig& cfg);

// Trains the model for one (method, drop_rate, adapted_blocks) cell.
TrainResult TrainCell(const ExperimentConfig& cfg, const TaskData& task,
                      const std::string& method, double drop_rate,
                      const std::string& adapted_blocks);

struct PointEvaluation {
  EvalReport report;
  // Retained predictions (classification) or fused observations (detection).
  std::vector<ScoredPrediction> predictions;
};

// Scores a [N, C] probability matrix. Predictions whose confidence is below
// conf_threshold abstain: they are excluded from the calibration metrics and
// count as errors in the performance column (selective accuracy).
PointEvaluation EvaluateClassification(const Tensor& probs,
                                       std::span<const int> labels,
                                       OutputMode mode, double conf_threshold,
                                       std::size_t ece_bins);

// Fused detections for every image: synthetic boxes for T passes whose class
// probabilities come from the network's T stochastic passes over each
// object's features, clustered per image with BSAS.
std::vector<ClusteredObservation> RunDetectionPasses(
    const ExperimentConfig& cfg, const ResidualNet& net,
    const StochasticSpec& spec, std::size_t passes, std::uint64_t mc_seed,
    std::span<const GroundTruth> scenes, const Tensor& object_features);

// Thresholds clusters on confidence, then computes mAP@[.5:.95] and the
// calibration / ranking metrics over TP/FP-labelled observations.
PointEvaluation EvaluateDetection(std::span<const ClusteredObservation> clusters,
                                  std::span<const GroundTruth> scenes,
                                  OutputMode mode, double conf_threshold,
                                  std::size_t ece_bins, double match_iou);

std::uint64_t McSeed(const ExperimentConfig& cfg, const std::string& method,
                     double drop_rate, const std::string& adapted_blocks,
                     std::size_t passes);

struct SweepResult {
  std::vector<ReportRow> rows;
  std::vector<std::vector<ScoredPrediction>> predictions;  // parallel to rows
  std::vector<std::string> failures;
  std::size_t cells = 0;
  std::size_t failed_cells = 0;
  std::size_t training_runs = 0;

  // 0 success, 1 every cell failed, 2 partial failure.
  int ExitCode() const;
};

// Trains once per (method, drop_rate, adapted_blocks) cell and evaluates
// every (T, conf_threshold) pair on that model. Cells may run concurrently
// (cfg.threads); rows come back in grid order regardless. With a non-empty
// `output_dir`, writes per-cell checkpoints and reports, then the merged
// reports.csv, pareto_points.csv and arc_curve.csv.
SweepResult RunSweep(const ExperimentConfig& cfg,
                     const std::string& output_dir = "");

// Re-runs a single configuration point from scratch.
PointEvaluation RunPoint(const ExperimentConfig& cfg, const ConfigPoint& point);

struct ShiftRow {
  std::string level;
  double performance = 0.0;  // selective accuracy or mAP
  double mean_entropy = 0.0;
};

// Evaluates `method` at every shift level, training the cell model unless
// `trained` is supplied. Level corruption applies to test (or object)
// features only.
std::vector<ShiftRow> RunShift(const ExperimentConfig& cfg,
                               const MethodConfig& method,
                               const ShiftSpec& shift,
                               const ResidualNet* trained = nullptr);

// "method,drop_rate,T,conf_threshold,adapted_blocks,map_50_95,brier,ece,
//  auarc,mean_entropy"
void WriteReportsCsv(std::ostream& out, std::span<const ReportRow> rows);
std::vector<ReportRow> ReadReportsCsv(std::istream& in);

// pareto_points.csv: the report columns plus on_front (0/1) and
//                    ipp_distance.
// arc_curve.csv:     r,acc for the IPP-selected row.
// shift_curve.csv:   level,performance,mean_entropy (only when `shift` is
//                    non-empty).
void EmitCurves(const std::string& dir, std::span<const ReportRow> rows,
                std::span<const std::vector<ScoredPrediction>> predictions,
                std::span<const ShiftRow> shift = {});
void WriteShiftCsv(std::ostream& out, std::span<const ShiftRow> rows);

// Writes `contents` to `path` through a temporary file and rename.
void WriteFileAtomically(const std::string& path, const std::string& contents);

}  // namespace mcsd

#endif  // MCSD_HARNESS_H_
