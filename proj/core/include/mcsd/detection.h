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

#ifndef MCSD_DETECTION_H_
#define MCSD_DETECTION_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mcsd/metrics.h"
#include "mcsd/nn.h"

namespace mcsd {

// Axis-aligned box, x1 < x2 and y1 < y2.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double Area() const { return (x2 - x1) * (y2 - y1); }
  bool Valid() const { return x1 < x2 && y1 < y2; }
  friend bool operator==(const Box&, const Box&) = default;
};

double Iou(const Box& a, const Box& b);

struct Detection {
  Box box;
  std::vector<double> probs;
  double confidence = 0.0;  // max over probs
  int pass_index = 0;
  int image_id = 0;
  // Ground-truth row the synthetic detector derived this box from, -1 for
  // hallucinations and for detections read from files.
  int source = -1;
};

Detection MakeDetection(int image_id, int pass_index, const Box& box,
                        std::vector<double> probs, int source = -1);

struct GroundTruth {
  Box box;
  int class_id = 0;
  int image_id = 0;
};

struct ClusteredObservation {
  std::vector<Detection> members;
  Box mean_box;
  std::vector<double> mean_probs;
  int image_id = 0;

  std::size_t support() const { return members.size(); }
  double confidence() const;
  int predicted_class() const;
};

enum class SemanticRule {
  kArgmaxMatch,  // detection joins only clusters predicting the same class
  kIgnore,       // spatial affinity only
};

// One line per input detection, in processing order.
struct BsasStep {
  std::size_t detection = 0;  // index into the input list
  std::size_t cluster = 0;
  bool founded = false;
  double iou_at_insertion = 1.0;  // IoU with the cluster mean before joining
};

inline constexpr double kDefaultBsasIou = 0.5;

// Basic Sequential Algorithmic Scheme over the detections of one image.
// Detections are visited in (pass_index, input order). Each joins the first
// existing cluster whose running mean box has IoU >= iou_threshold with it
// and, under kArgmaxMatch, whose mean_probs argmax equals its own argmax;
// otherwise it founds a new cluster. Cluster means are updated incrementally.
std::vector<ClusteredObservation> BsasCluster(
    std::span<const Detection> detections,
    double iou_threshold = kDefaultBsasIou,
    SemanticRule rule = SemanticRule::kArgmaxMatch,
    std::vector<BsasStep>* trace = nullptr);

// Box with a single class and score, the unit mAP operates on.
struct ScoredBox {
  Box box;
  int class_id = 0;
  double score = 0.0;
  int image_id = 0;
};

ScoredBox ToScoredBox(const ClusteredObservation& cluster);
ScoredBox ToScoredBox(const Detection& detection);

inline constexpr std::size_t kIouThresholdCount = 10;
// 0.50, 0.55, ..., 0.95
double IouThreshold(std::size_t i);

struct MapResult {
  double map = 0.0;
  std::vector<int> classes;             // classes with at least one GT
  std::vector<std::vector<double>> ap;  // [class][threshold]
};

// COCO-style mAP@[.50:.95] with 101-point interpolated AP. Boxes scored
// below conf_threshold are dropped first. Per class and IoU threshold, boxes
// are visited by descending score and greedily matched to the unmatched
// same-class GT of the same image with highest IoU >= threshold.
MapResult MeanAveragePrecision(std::span<const ScoredBox> boxes,
                               std::span<const GroundTruth> gts,
                               double conf_threshold = 0.0);

// Labels each cluster TP/FP by greedy descending-confidence matching at IoU
// `iou_threshold` with class agreement, per image. TPs carry the matched GT's
// class as true_label; uncertainty is the entropy suited to `mode`.
std::vector<ScoredPrediction> LabelTpFp(
    std::span<const ClusteredObservation> clusters,
    std::span<const GroundTruth> gts, double iou_threshold, OutputMode mode);

struct NoiseSpec {
  double box_sigma = 0.05;          // jitter stddev, fraction of box size
  double miss_prob = 0.1;           // per GT per pass
  double hallucination_rate = 0.2;  // Poisson rate per image per pass
  double sharpness = 4.0;           // true-class logit margin
  double logit_noise = 0.5;         // stddev of per-class logit noise
  std::size_t num_classes = 3;
  OutputMode mode = OutputMode::kSoftmax;
  double image_width = 100.0;
  double image_height = 100.0;

  void Validate() const;
};

// Emits T passes of detections for the ground truths of one or more images.
// For each pass and GT: with probability 1 - miss_prob a jittered copy of
// the box whose probability vector peaks at the true class. Per pass and
// image, Poisson(hallucination_rate) random boxes with diffuse probabilities.
std::vector<Detection> SynthDetector(std::span<const GroundTruth> scene,
                                     const NoiseSpec& noise, std::size_t passes,
                                     std::uint64_t seed);

// Line formats (comma separated, '#' starts a comment line):
//   detections:   image_id,pass_index,x1,y1,x2,y2,p_0,...,p_{C-1}
//   ground truth: image_id,class_id,x1,y1,x2,y2
void WriteDetections(std::ostream& out, std::span<const Detection> dets);
std::vector<Detection> ReadDetections(std::istream& in);
void WriteGroundTruth(std::ostream& out, std::span<const GroundTruth> gts);
std::vector<GroundTruth> ReadGroundTruth(std::istream& in);

}  // namespace mcsd

#endif  // MCSD_DETECTION_H_
