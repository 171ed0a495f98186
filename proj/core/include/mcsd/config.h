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

#ifndef MCSD_CONFIG_H_
#define MCSD_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mcsd/dataset.h"
#include "mcsd/detection.h"
#include "mcsd/nn.h"
#include "mcsd/stochastic.h"
#include "mcsd/training.h"

namespace mcsd {

enum class Task { kClassification, kDetection };

std::string ToString(Task task);
Task ParseTask(const std::string& text);

// Method names used in reports: MCD (unit drop), MCDB (block drop),
// MCSD (path drop).
std::string MethodName(DropKind kind);
DropKind MethodKind(const std::string& method);

// Adapted-block presets: all, first-half, last-half, single-first,
// single-last; or an explicit ';'-separated list of 1-based indices.
std::vector<int> ResolveAdaptedBlocks(const std::string& preset,
                                      std::size_t num_blocks);

struct EvalGrid {
  std::vector<std::string> methods{"MCD", "MCDB", "MCSD"};
  std::vector<double> drop_rates{0.05, 0.1, 0.2};
  std::vector<std::size_t> passes{5, 20};
  std::vector<double> conf_thresholds{0.0, 0.5};
  std::vector<std::string> adapted_blocks{"all"};
};

// The stochastic mechanism of a single-model run (train / eval / shift).
struct MethodConfig {
  std::string method = "MCSD";
  double drop_rate = 0.1;
  std::string adapted_blocks = "all";
  std::size_t block_size = 4;  // MCDB span length
  std::size_t passes = 20;
  double conf_threshold = 0.0;
  // Evaluation mode: mc_inference, or deterministic_scaled (MCSD only).
  DropMode mode = DropMode::kMCInference;
};

struct ExperimentConfig {
  Task task = Task::kClassification;
  DatasetKind dataset_kind = DatasetKind::kBlobs;
  DatasetParams dataset;
  NetShape net;
  TrainConfig train;
  MethodConfig method;
  EvalGrid grid;
  NoiseSpec detector;
  ShiftSpec shift;
  std::size_t ece_bins = 15;
  double bsas_iou = 0.5;   // spatial affinity threshold for fusion
  double match_iou = 0.5;  // TP/FP labelling threshold
  std::size_t threads = 1;
  std::string output_dir = "mcsd_out";
  std::uint64_t seed = 0;

  // Aligns dependent fields (input width, class counts, detector mode) and
  // checks every invariant. Throws Error.
  void Finalize();

  StochasticSpec SpecFor(const std::string& method, double drop_rate,
                         const std::string& adapted_blocks) const;
};

// JSON with the same nesting as ExperimentConfig; every key optional.
ExperimentConfig ConfigFromJson(const std::string& text);
std::string ConfigToJson(const ExperimentConfig& cfg);
ExperimentConfig LoadConfig(const std::string& path);

}  // namespace mcsd

#endif  // MCSD_CONFIG_H_
