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

#include "mcsd/detection.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "mcsd/checkpoint.h"
#include "mcsd/random.h"
#include "mcsd/tensor.h"
#include "mcsd/training.h"

namespace mcsd {
namespace {

constexpr std::size_t kRecallPoints = 101;

std::vector<std::size_t> ByDescendingScore(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

// Greedy matching of candidate boxes (already in visiting order) against the
// GT rows of one class; returns the matched GT per candidate or -1.
std::vector<int> GreedyMatch(std::span<const Box> boxes,
                             std::span<const int> box_images,
                             std::span<const GroundTruth> gts,
                             std::span<const std::size_t> gt_rows,
                             double iou_threshold) {
  std::vector<bool> taken(gt_rows.size(), false);
  std::vector<int> match(boxes.size(), -1);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gt_rows.size(); ++g) {
      const GroundTruth& gt = gts[gt_rows[g]];
      if (taken[g] || gt.image_id != box_images[i]) continue;
      const double iou = Iou(boxes[i], gt.box);
      if (iou >= iou_threshold && iou > best_iou) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      match[i] = static_cast<int>(gt_rows[best]);
    }
  }
  return match;
}

// `match` holds the matched GT row per visited box, -1 for false positives.
double AveragePrecision(std::span<const int> match, std::size_t num_gt) {
  const std::size_t n = match.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += match[i] >= 0 ? 1 : 0;
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < kRecallPoints; ++j) {
    const double r = static_cast<double>(j) / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[it - recall.begin()];
  }
  return sum / static_cast<double>(kRecallPoints);
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

bool SkipLine(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

double ToReal(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used == 0) throw Error("bad number '" + s + "'");
  return v;
}

std::vector<double> Softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] - m);
  for (double& v : p) v /= s;
  return p;
}

std::vector<double> ProbsFromLogits(std::span<const double> z, OutputMode mode) {
  if (mode == OutputMode::kSoftmax) return Softmax(z);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-z[i]));
  return p;
}

}  // namespace

double Iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.Area() + b.Area() - inter);
}

Detection MakeDetection(int image_id, int pass_index, const Box& box,
                        std::vector<double> probs, int source) {
  Detection d;
  d.box = box;
  d.confidence = probs.empty() ? 0.0 : *std::max_element(probs.begin(), probs.end());
  d.probs = std::move(probs);
  d.pass_index = pass_index;
  d.image_id = image_id;
  d.source = source;
  return d;
}

double ClusteredObservation::confidence() const {
  return *std::max_element(mean_probs.begin(), mean_probs.end());
}

int ClusteredObservation::predicted_class() const {
  return static_cast<int>(ArgMax(mean_probs));
}

std::vector<ClusteredObservation> BsasCluster(
    std::span<const Detection> detections, double iou_threshold,
    SemanticRule rule, std::vector<BsasStep>* trace) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].pass_index < detections[b].pass_index;
  });
  if (trace) trace->clear();

  std::vector<ClusteredObservation> clusters;
  for (std::size_t idx : order) {
    const Detection& det = detections[idx];
    if (!det.box.Valid()) throw Error("BSAS input has an invalid box");
    const std::size_t det_class = ArgMax(det.probs);
    std::size_t target = clusters.size();
    double target_iou = 1.0;
    for (std::size_t k = 0; k < clusters.size(); ++k) {
      const ClusteredObservation& c = clusters[k];
      if (c.mean_probs.size() != det.probs.size()) {
        throw ShapeError("BSAS input mixes class counts");
      }
      if (rule == SemanticRule::kArgmaxMatch &&
          static_cast<std::size_t>(c.predicted_class()) != det_class) {
        continue;
      }
      const double iou = Iou(c.mean_box, det.box);
      if (iou >= iou_threshold) {
        target = k;
        target_iou = iou;
        break;
      }
    }
    const bool founded = target == clusters.size();
    if (founded) {
      ClusteredObservation c;
      c.members.push_back(det);
      c.mean_box = det.box;
      c.mean_probs = det.probs;
      c.image_id = det.image_id;
      clusters.push_back(std::move(c));
    } else {
      ClusteredObservation& c = clusters[target];
      c.members.push_back(det);
      const double w = 1.0 / static_cast<double>(c.members.size());
      c.mean_box.x1 += (det.box.x1 - c.mean_box.x1) * w;
      c.mean_box.y1 += (det.box.y1 - c.mean_box.y1) * w;
      c.mean_box.x2 += (det.box.x2 - c.mean_box.x2) * w;
      c.mean_box.y2 += (det.box.y2 - c.mean_box.y2) * w;
      for (std::size_t k = 0; k < c.mean_probs.size(); ++k) {
        c.mean_probs[k] += (det.probs[k] - c.mean_probs[k]) * w;
      }
    }
    if (trace) trace->push_back({idx, target, founded, target_iou});
  }
  return clusters;
}

ScoredBox ToScoredBox(const ClusteredObservation& cluster) {
  return {cluster.mean_box, cluster.predicted_class(), cluster.confidence(),
          cluster.image_id};
}

ScoredBox ToScoredBox(const Detection& detection) {
  return {detection.box, static_cast<int>(ArgMax(detection.probs)),
          detection.confidence, detection.image_id};
}

double IouThreshold(std::size_t i) {
  return static_cast<double>(50 + 5 * i) / 100.0;
}

MapResult MeanAveragePrecision(std::span<const ScoredBox> boxes,
                               std::span<const GroundTruth> gts,
                               double conf_threshold) {
  if (gts.empty()) throw Error("mAP needs at least one ground truth");
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
    throw Error("confidence threshold must be in [0, 1]");
  }
  std::map<int, std::vector<std::size_t>> gt_by_class;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    gt_by_class[gts[i].class_id].push_back(i);
  }

  MapResult result;
  double total = 0.0;
  for (const auto& [cls, gt_rows] : gt_by_class) {
    std::vector<double> scores;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (boxes[i].class_id == cls && boxes[i].score >= conf_threshold) {
        rows.push_back(i);
        scores.push_back(boxes[i].score);
      }
    }
    std::vector<Box> sorted_boxes;
    std::vector<int> sorted_images;
    for (std::size_t k : ByDescendingScore(scores)) {
      sorted_boxes.push_back(boxes[rows[k]].box);
      sorted_images.push_back(boxes[rows[k]].image_id);
    }
    std::vector<double> ap_row;
    for (std::size_t t = 0; t < kIouThresholdCount; ++t) {
      const auto match = GreedyMatch(sorted_boxes, sorted_images, gts, gt_rows,
                                     IouThreshold(t));
      const double ap = AveragePrecision(match, gt_rows.size());
      ap_row.push_back(ap);
      total += ap;
    }
    result.classes.push_back(cls);
    result.ap.push_back(std::move(ap_row));
  }
  result.map = total / static_cast<double>(gt_by_class.size() * kIouThresholdCount);
  return result;
}

std::vector<ScoredPrediction> LabelTpFp(
    std::span<const ClusteredObservation> clusters,
    std::span<const GroundTruth> gts, double iou_threshold, OutputMode mode) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw Error("IoU threshold must be in [0, 1]");
  }
  std::vector<double> scores;
  for (const auto& c : clusters) scores.push_back(c.confidence());
  const auto order = ByDescendingScore(scores);

  std::vector<int> matched(clusters.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i : order) {
    const ClusteredObservation& c = clusters[i];
    const int cls = c.predicted_class();
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].image_id != c.image_id || gts[g].class_id != cls) {
        continue;
      }
      const double iou = Iou(c.mean_box, gts[g].box);
      if (iou >= iou_threshold && iou > best_iou) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      matched[i] = best;
    }
  }

  std::vector<ScoredPrediction> preds;
  preds.reserve(clusters.size());
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    std::optional<int> label;
    if (matched[i] >= 0) label = gts[matched[i]].class_id;
    preds.push_back(MakeScoredPrediction(clusters[i].mean_probs, matched[i] >= 0,
                                         label, mode));
  }
  return preds;
}

void NoiseSpec::Validate() const {
  if (!(box_sigma >= 0.0)) throw Error("box_sigma must be non-negative");
  if (!(miss_prob >= 0.0 && miss_prob <= 1.0)) {
    throw Error("miss_prob must be in [0, 1]");
  }
  if (!(hallucination_rate >= 0.0)) {
    throw Error("hallucination_rate must be non-negative");
  }
  if (!(logit_noise >= 0.0)) throw Error("logit_noise must be non-negative");
  if (num_classes == 0) throw Error("num_classes must be positive");
  if (!(image_width > 0.0 && image_height > 0.0)) {
    throw Error("image size must be positive");
  }
}

std::vector<Detection> SynthDetector(std::span<const GroundTruth> scene,
                                     const NoiseSpec& noise, std::size_t passes,
                                     std::uint64_t seed) {
  noise.Validate();
  std::vector<int> images;
  for (const GroundTruth& gt : scene) {
    if (!gt.box.Valid()) throw Error("scene contains an invalid box");
    if (gt.class_id < 0 || static_cast<std::size_t>(gt.class_id) >= noise.num_classes) {
      throw Error("scene class outside the detector's class range");
    }
    if (std::find(images.begin(), images.end(), gt.image_id) == images.end()) {
      images.push_back(gt.image_id);
    }
  }
  const std::size_t c = noise.num_classes;
  const double bias = noise.mode == OutputMode::kSoftmax ? 0.0 : -0.5 * noise.sharpness;

  std::vector<Detection> out;
  for (std::size_t t = 0; t < passes; ++t) {
    for (int image : images) {
      Rng rng(DeriveSeed(seed, "synth_detector",
                         {static_cast<std::uint64_t>(image), t}));
      for (std::size_t g = 0; g < scene.size(); ++g) {
        const GroundTruth& gt = scene[g];
        if (gt.image_id != image) continue;
        if (rng.Bernoulli(noise.miss_prob)) continue;
        const double w = gt.box.x2 - gt.box.x1;
        const double h = gt.box.y2 - gt.box.y1;
        Box b{gt.box.x1 + noise.box_sigma * w * rng.Normal(),
              gt.box.y1 + noise.box_sigma * h * rng.Normal(),
              gt.box.x2 + noise.box_sigma * w * rng.Normal(),
              gt.box.y2 + noise.box_sigma * h * rng.Normal()};
        if (b.x2 <= b.x1) b.x2 = b.x1 + 0.01 * w;
        if (b.y2 <= b.y1) b.y2 = b.y1 + 0.01 * h;
        std::vector<double> logits(c);
        for (std::size_t k = 0; k < c; ++k) {
          logits[k] = bias + noise.logit_noise * rng.Normal();
        }
        logits[gt.class_id] += noise.sharpness;
        out.push_back(MakeDetection(image, static_cast<int>(t), b,
                                    ProbsFromLogits(logits, noise.mode),
                                    static_cast<int>(g)));
      }
      const int extra = rng.Poisson(noise.hallucination_rate);
      for (int k = 0; k < extra; ++k) {
        const double w = rng.Uniform(0.05, 0.3) * noise.image_width;
        const double h = rng.Uniform(0.05, 0.3) * noise.image_height;
        const double x = rng.Uniform(0.0, noise.image_width - w);
        const double y = rng.Uniform(0.0, noise.image_height - h);
        std::vector<double> logits(c);
        for (std::size_t j = 0; j < c; ++j) {
          logits[j] = noise.logit_noise * rng.Normal();
        }
        out.push_back(MakeDetection(image, static_cast<int>(t), {x, y, x + w, y + h},
                                    ProbsFromLogits(logits, noise.mode)));
      }
    }
  }
  return out;
}

void WriteDetections(std::ostream& out, std::span<const Detection> dets) {
  for (const Detection& d : dets) {
    out << d.image_id << ',' << d.pass_index << ',' << FormatReal(d.box.x1)
        << ',' << FormatReal(d.box.y1) << ',' << FormatReal(d.box.x2) << ','
        << FormatReal(d.box.y2);
    for (double p : d.probs) out << ',' << FormatReal(p);
    out << '\n';
  }
}

std::vector<Detection> ReadDetections(std::istream& in) {
  std::vector<Detection> dets;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (SkipLine(line)) continue;
    const auto f = SplitCsv(line);
    if (f.size() < 7) {
      throw Error("detection line " + std::to_string(lineno) +
                  ": expected image_id,pass_index,x1,y1,x2,y2,probs...");
    }
    std::vector<double> probs;
    for (std::size_t i = 6; i < f.size(); ++i) probs.push_back(ToReal(f[i]));
    if (!dets.empty() && dets.front().probs.size() != probs.size()) {
      throw Error("detection line " + std::to_string(lineno) +
                  ": inconsistent class count");
    }
    const Box box{ToReal(f[2]), ToReal(f[3]), ToReal(f[4]), ToReal(f[5])};
    if (!box.Valid()) {
      throw Error("detection line " + std::to_string(lineno) + ": invalid box");
    }
    dets.push_back(MakeDetection(std::stoi(f[0]), std::stoi(f[1]), box,
                                 std::move(probs)));
  }
  return dets;
}

void WriteGroundTruth(std::ostream& out, std::span<const GroundTruth> gts) {
  for (const GroundTruth& g : gts) {
    out << g.image_id << ',' << g.class_id << ',' << FormatReal(g.box.x1) << ','
        << FormatReal(g.box.y1) << ',' << FormatReal(g.box.x2) << ','
        << FormatReal(g.box.y2) << '\n';
  }
}

std::vector<GroundTruth> ReadGroundTruth(std::istream& in) {
  std::vector<GroundTruth> gts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (SkipLine(line)) continue;
    const auto f = SplitCsv(line);
    if (f.size() != 6) {
      throw Error("ground-truth line " + std::to_string(lineno) +
                  ": expected image_id,class_id,x1,y1,x2,y2");
    }
    GroundTruth g;
    g.image_id = std::stoi(f[0]);
    g.class_id = std::stoi(f[1]);
    g.box = {ToReal(f[2]), ToReal(f[3]), ToReal(f[4]), ToReal(f[5])};
    if (!g.box.Valid()) {
      throw Error("ground-truth line " + std::to_string(lineno) + ": invalid box");
    }
    gts.push_back(g);
  }
  return gts;
}

}  // namespace mcsd
