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

#ifndef MCSD_METRICS_H_
#define MCSD_METRICS_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcsd/nn.h"

namespace mcsd {

// One evaluated prediction. For classification `correct` means argmax equals
// the label; for detections it means the observation is a true positive.
struct ScoredPrediction {
  std::vector<double> probs;
  double confidence = 0.0;   // max over probs
  bool correct = false;
  double uncertainty = 0.0;  // entropy score, higher = less certain
  std::optional<int> true_label;
};

// Fills confidence from probs and uncertainty from the mode-appropriate
// entropy (Shannon for softmax, mean binary entropy for sigmoid).
ScoredPrediction MakeScoredPrediction(std::vector<double> probs, bool correct,
                                      std::optional<int> true_label,
                                      OutputMode mode);

// Hyperparameters that produced one evaluation row.
struct ConfigPoint {
  std::string method;  // MCD | MCDB | MCSD
  double drop_rate = 0.0;
  std::size_t passes = 1;  // T
  double conf_threshold = 0.0;
  std::string adapted_blocks;  // preset name or explicit list

  friend bool operator==(const ConfigPoint&, const ConfigPoint&) = default;
};

struct EvalReport {
  double map_50_95 = 0.0;  // top-1 selective accuracy on classification tasks
  double brier = 0.0;
  double ece = 0.0;
  double auarc = 0.0;
  double mean_entropy = 0.0;
  ConfigPoint config;
};

using ReportRow = std::pair<ConfigPoint, EvalReport>;

inline constexpr double kSimplexTolerance = 1e-6;
inline constexpr std::size_t kDefaultEceBins = 15;

// -sum p log2 p over a probability simplex; 0 log 0 = 0. Inputs whose sum is
// within kSimplexTolerance of 1 are renormalized first.
double ShannonEntropy(std::span<const double> probs);

// Mean over classes of the binary entropy H(p_c), in bits.
double MeanBinaryEntropy(std::span<const double> probs);

// (1 / (N C)) sum_i sum_c (p_ic - y_ic)^2 over predictions that carry a
// true label; y is one-hot at the label. Multi-hot targets go through
// BrierMultiHot.
double Brier(std::span<const ScoredPrediction> preds);
double BrierMultiHot(std::span<const std::vector<double>> probs,
                     std::span<const std::vector<double>> targets);

// Equal-width confidence bins [(m-1)/M, m/M), last bin closed at 1.
double Ece(std::span<const ScoredPrediction> preds,
           std::size_t bins = kDefaultEceBins);

struct CurvePoint {
  double rejected = 0.0;  // r = k / N
  double accuracy = 0.0;  // correct fraction of the N - k retained items
};

// Items sorted by uncertainty, most uncertain first (stable on ties), and
// rejected one at a time; N points for k = 0 .. N-1.
std::vector<CurvePoint> AccuracyRejectionCurve(
    std::span<const ScoredPrediction> preds);

// Left Riemann sum of the accuracy-rejection curve: (1/N) sum_k Acc(k/N).
double Auarc(std::span<const ScoredPrediction> preds);

// Euclidean distance to the ideal point (mAP = 1, AUARC = 1).
double IdealPointDistance(const EvalReport& report);

// Index of the row closest to the ideal point; first occurrence wins ties.
std::size_t IppSelectIndex(std::span<const ReportRow> rows);
ConfigPoint IppSelect(std::span<const ReportRow> rows);

// Rows not dominated in (mAP, AUARC), in input order. Row a dominates b when
// a is at least as good in both and strictly better in one.
std::vector<std::size_t> ParetoFrontIndices(std::span<const ReportRow> rows);
std::vector<ReportRow> ParetoFront(std::span<const ReportRow> rows);

}  // namespace mcsd

#endif  // MCSD_METRICS_H_
