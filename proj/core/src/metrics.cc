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

#include "mcsd/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mcsd/tensor.h"

namespace mcsd {
namespace {

double PLog2P(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

void RequireNonEmpty(std::size_t n, const char* what) {
  if (n == 0) throw Error(std::string(what) + " of an empty prediction set");
}

}  // namespace

ScoredPrediction MakeScoredPrediction(std::vector<double> probs, bool correct,
                                      std::optional<int> true_label,
                                      OutputMode mode) {
  ScoredPrediction p;
  p.confidence = probs.empty() ? 0.0 : *std::max_element(probs.begin(), probs.end());
  p.uncertainty = mode == OutputMode::kSoftmax ? ShannonEntropy(probs)
                                               : MeanBinaryEntropy(probs);
  p.probs = std::move(probs);
  p.correct = correct;
  p.true_label = true_label;
  return p;
}

double ShannonEntropy(std::span<const double> probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw Error("entropy of a negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw Error("probabilities sum to " + std::to_string(sum) + ", not 1");
  }
  // Extended precision keeps the uniform case exact: H(1/C, ...) == log2(C).
  long double total = 0.0L;
  for (double p : probs) total += p;
  long double h = 0.0L;
  for (double p : probs) {
    if (p > 0.0) {
      const long double q = static_cast<long double>(p) / total;
      h -= q * std::log2(q);
    }
  }
  return static_cast<double>(h) + 0.0;  // -0.0 -> 0.0
}

double MeanBinaryEntropy(std::span<const double> probs) {
  if (probs.empty()) throw Error("binary entropy of an empty vector");
  double h = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error("binary entropy needs probabilities in [0, 1]");
    }
    h -= PLog2P(p) + PLog2P(1.0 - p);
  }
  return h / static_cast<double>(probs.size()) + 0.0;
}

double Brier(std::span<const ScoredPrediction> preds) {
  double total = 0.0;
  std::size_t n = 0, c = 0;
  for (const ScoredPrediction& p : preds) {
    if (!p.true_label) continue;
    if (n == 0) c = p.probs.size();
    if (p.probs.size() != c) throw ShapeError("inconsistent class count");
    const auto label = static_cast<std::size_t>(*p.true_label);
    if (label >= c) throw Error("true label out of range");
    for (std::size_t k = 0; k < c; ++k) {
      const double d = p.probs[k] - (k == label ? 1.0 : 0.0);
      total += d * d;
    }
    ++n;
  }
  RequireNonEmpty(n, "Brier score");
  return total / static_cast<double>(n * c);
}

double BrierMultiHot(std::span<const std::vector<double>> probs,
                     std::span<const std::vector<double>> targets) {
  RequireNonEmpty(probs.size(), "Brier score");
  if (probs.size() != targets.size()) throw ShapeError("probs/targets length");
  const std::size_t c = probs[0].size();
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != c || targets[i].size() != c) {
      throw ShapeError("inconsistent class count");
    }
    for (std::size_t k = 0; k < c; ++k) {
      const double d = probs[i][k] - targets[i][k];
      total += d * d;
    }
  }
  return total / static_cast<double>(probs.size() * c);
}

double Ece(std::span<const ScoredPrediction> preds, std::size_t bins) {
  RequireNonEmpty(preds.size(), "ECE");
  if (bins == 0) throw Error("ECE needs at least one bin");
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> correct(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (const ScoredPrediction& p : preds) {
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
      throw Error("confidence outside [0, 1]");
    }
    const auto m = std::min(
        bins - 1, static_cast<std::size_t>(p.confidence * static_cast<double>(bins)));
    conf_sum[m] += p.confidence;
    correct[m] += p.correct ? 1.0 : 0.0;
    ++count[m];
  }
  const double n = static_cast<double>(preds.size());
  double ece = 0.0;
  for (std::size_t m = 0; m < bins; ++m) {
    if (count[m] == 0) continue;
    const double size = static_cast<double>(count[m]);
    ece += (size / n) * std::abs(correct[m] / size - conf_sum[m] / size);
  }
  return ece;
}

std::vector<CurvePoint> AccuracyRejectionCurve(
    std::span<const ScoredPrediction> preds) {
  RequireNonEmpty(preds.size(), "accuracy-rejection curve");
  const std::size_t n = preds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].uncertainty > preds[b].uncertainty;
  });
  // Suffix counts: correct items among order[k..n).
  std::vector<std::size_t> suffix(n + 1, 0);
  for (std::size_t k = n; k-- > 0;) {
    suffix[k] = suffix[k + 1] + (preds[order[k]].correct ? 1 : 0);
  }
  std::vector<CurvePoint> curve(n);
  for (std::size_t k = 0; k < n; ++k) {
    curve[k] = {static_cast<double>(k) / static_cast<double>(n),
                static_cast<double>(suffix[k]) / static_cast<double>(n - k)};
  }
  return curve;
}

double Auarc(std::span<const ScoredPrediction> preds) {
  const auto curve = AccuracyRejectionCurve(preds);
  double sum = 0.0;
  for (const CurvePoint& p : curve) sum += p.accuracy;
  return sum / static_cast<double>(curve.size());
}

double IdealPointDistance(const EvalReport& report) {
  return std::hypot(1.0 - report.auarc, 1.0 - report.map_50_95);
}

std::size_t IppSelectIndex(std::span<const ReportRow> rows) {
  if (rows.empty()) throw Error("IPP selection over an empty set");
  std::size_t best = 0;
  double best_d = IdealPointDistance(rows[0].second);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double d = IdealPointDistance(rows[i].second);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

ConfigPoint IppSelect(std::span<const ReportRow> rows) {
  return rows[IppSelectIndex(rows)].first;
}

std::vector<std::size_t> ParetoFrontIndices(std::span<const ReportRow> rows) {
  // Sort by mAP descending, AUARC descending; a row is on the front iff its
  // AUARC beats every row that is at least as good in mAP and not identical.
  const std::size_t n = rows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = rows[a].second;
    const auto& rb = rows[b].second;
    if (ra.map_50_95 != rb.map_50_95) return ra.map_50_95 > rb.map_50_95;
    return ra.auarc > rb.auarc;
  });
  std::vector<bool> on_front(n, false);
  double best_auarc = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n;) {
    // Group rows with equal mAP; within a group only the top AUARC survives,
    // and all exact ties on both coordinates survive together.
    std::size_t j = i;
    const double map = rows[order[i]].second.map_50_95;
    while (j < n && rows[order[j]].second.map_50_95 == map) ++j;
    const double group_top = rows[order[i]].second.auarc;
    if (group_top > best_auarc) {
      for (std::size_t k = i; k < j && rows[order[k]].second.auarc == group_top; ++k) {
        on_front[order[k]] = true;
      }
      best_auarc = group_top;
    }
    i = j;
  }
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < n; ++i) {
    if (on_front[i]) front.push_back(i);
  }
  return front;
}

std::vector<ReportRow> ParetoFront(std::span<const ReportRow> rows) {
  std::vector<ReportRow> out;
  for (std::size_t i : ParetoFrontIndices(rows)) out.push_back(rows[i]);
  return out;
}

}  // namespace mcsd
