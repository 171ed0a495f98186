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

#include "mcsd/dataset.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "mcsd/checkpoint.h"
#include "mcsd/random.h"

namespace mcsd {
namespace {

int NoisyLabel(int label, const DatasetParams& params, Rng& rng) {
  if (params.num_classes < 2 || !rng.Bernoulli(params.label_noise)) return label;
  const auto shift = 1 + rng.UniformIndex(params.num_classes - 1);
  return static_cast<int>((static_cast<std::size_t>(label) + shift) %
                          params.num_classes);
}

Dataset MakeSplit(DatasetKind kind, const DatasetParams& params,
                  std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.num_classes = kind == DatasetKind::kMoons ? 2 : params.num_classes;
  data.features = Tensor::Matrix(size, params.dim);
  data.labels.resize(size);
  for (std::size_t i = 0; i < size; ++i) {
    const int label = static_cast<int>(i % data.num_classes);
    auto x = data.features.row(i);
    if (kind == DatasetKind::kBlobs) {
      const auto center = BlobCenter(params, static_cast<std::size_t>(label));
      for (std::size_t d = 0; d < params.dim; ++d) {
        x[d] = center[d] + params.spread * rng.Normal();
      }
    } else {
      const double t = std::numbers::pi * rng.Uniform();
      if (label == 0) {
        x[0] = std::cos(t);
        x[1] = std::sin(t);
      } else {
        x[0] = 1.0 - std::cos(t);
        x[1] = 0.5 - std::sin(t);
      }
      for (std::size_t d = 0; d < params.dim; ++d) {
        x[d] += params.moon_noise * rng.Normal();
      }
    }
    data.labels[i] = NoisyLabel(label, params, rng);
  }
  return data;
}

}  // namespace

std::string ToString(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kBlobs:
      return "blobs-classification";
    case DatasetKind::kMoons:
      return "moons-classification";
    case DatasetKind::kBoxes:
      return "boxes-detection";
  }
  return "?";
}

DatasetKind ParseDatasetKind(const std::string& text) {
  if (text == "blobs-classification" || text == "blobs") return DatasetKind::kBlobs;
  if (text == "moons-classification" || text == "moons") return DatasetKind::kMoons;
  if (text == "boxes-detection" || text == "boxes") return DatasetKind::kBoxes;
  throw Error("unknown dataset kind '" + text + "'");
}

void DatasetParams::Validate(DatasetKind kind) const {
  if (kind == DatasetKind::kBoxes) {
    if (images == 0 || max_objects == 0) {
      throw Error("boxes-detection needs images >= 1 and max_objects >= 1");
    }
    if (!(image_size > 0.0)) throw Error("image_size must be positive");
    if (num_classes == 0) throw Error("num_classes must be positive");
    return;
  }
  if (train_size == 0 || test_size == 0) throw Error("dataset sizes must be positive");
  if (dim < 2) throw Error("features need at least 2 dimensions");
  if (kind == DatasetKind::kBlobs && num_classes < 2) {
    throw Error("blobs need at least 2 classes");
  }
  if (!(spread >= 0.0) || !(radius >= 0.0) || !(moon_noise >= 0.0)) {
    throw Error("radius, spread and moon_noise must be non-negative");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) {
    throw Error("label_noise must be in [0, 1]");
  }
}

std::vector<double> BlobCenter(const DatasetParams& params, std::size_t cls) {
  std::vector<double> c(params.dim, 0.0);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(cls) /
                       static_cast<double>(params.num_classes);
  c[0] = params.radius * std::cos(angle);
  c[1] = params.radius * std::sin(angle);
  return c;
}

SplitDataset MakeClassificationData(DatasetKind kind,
                                    const DatasetParams& params,
                                    std::uint64_t seed) {
  if (kind == DatasetKind::kBoxes) {
    throw Error("boxes-detection is not a classification dataset");
  }
  params.Validate(kind);
  return {MakeSplit(kind, params, params.train_size,
                    DeriveSeed(seed, "dataset", {0})),
          MakeSplit(kind, params, params.test_size,
                    DeriveSeed(seed, "dataset", {1}))};
}

Tensor SampleBlobFeatures(std::span<const int> labels,
                          const DatasetParams& params, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = Tensor::Matrix(labels.size(), params.dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto center = BlobCenter(params, static_cast<std::size_t>(labels[i]));
    for (std::size_t d = 0; d < params.dim; ++d) {
      x(i, d) = center[d] + params.spread * rng.Normal();
    }
  }
  return x;
}

std::vector<GroundTruth> MakeScenes(const DatasetParams& params,
                                    std::uint64_t seed) {
  params.Validate(DatasetKind::kBoxes);
  Rng rng(seed);
  std::vector<GroundTruth> gts;
  const double size = params.image_size;
  for (std::size_t image = 0; image < params.images; ++image) {
    const std::size_t count = 1 + rng.UniformIndex(params.max_objects);
    const std::size_t first = gts.size();
    for (std::size_t k = 0; k < count; ++k) {
      // Objects in one image overlap by less than kMaxSceneIou; a slot
      // with no acceptable draw stays empty.
      for (int attempt = 0; attempt < 50; ++attempt) {
        const double w = rng.Uniform(0.1, 0.3) * size;
        const double h = rng.Uniform(0.1, 0.3) * size;
        const double x = rng.Uniform(0.0, size - w);
        const double y = rng.Uniform(0.0, size - h);
        const Box box{x, y, x + w, y + h};
        bool clear = true;
        for (std::size_t j = first; j < gts.size() && clear; ++j) {
          clear = Iou(box, gts[j].box) < kMaxSceneIou;
        }
        if (!clear) continue;
        GroundTruth g;
        g.image_id = static_cast<int>(image);
        g.class_id = static_cast<int>(rng.UniformIndex(params.num_classes));
        g.box = box;
        gts.push_back(g);
        break;
      }
    }
  }
  return gts;
}

void WriteDatasetCsv(std::ostream& out, const Dataset& data) {
  const std::size_t d = data.features.cols();
  for (std::size_t j = 0; j < d; ++j) out << 'x' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << FormatReal(data.features(i, j)) << ',';
    out << data.labels[i] << '\n';
  }
}

Dataset ReadDatasetCsv(std::istream& in, std::size_t num_classes) {
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset file is empty");
  std::size_t dim = 0;
  for (char c : line) dim += c == ',';
  if (dim == 0) throw Error("dataset header needs feature columns");
  std::vector<double> values;
  Dataset data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t col = 0;
    while (std::getline(ss, field, ',')) {
      if (col < dim) {
        values.push_back(std::stod(field));
      } else {
        data.labels.push_back(std::stoi(field));
      }
      ++col;
    }
    if (col != dim + 1) {
      throw Error("dataset line " + std::to_string(lineno) + " has " +
                  std::to_string(col) + " fields, expected " +
                  std::to_string(dim + 1));
    }
  }
  data.features = Tensor({data.labels.size(), dim}, std::move(values));
  std::size_t inferred = 0;
  for (int y : data.labels) {
    inferred = std::max(inferred, static_cast<std::size_t>(y) + 1);
  }
  data.num_classes = num_classes ? num_classes : inferred;
  data.Validate();
  return data;
}

Dataset LoadDatasetCsv(const std::string& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return ReadDatasetCsv(in, num_classes);
}

std::vector<std::string> MakeDatasetFiles(DatasetKind kind,
                                          const DatasetParams& params,
                                          const NoiseSpec& detector,
                                          std::size_t passes,
                                          std::uint64_t seed,
                                          const std::string& dir) {
  params.Validate(kind);
  if (kind == DatasetKind::kBoxes) {
    detector.Validate();
    if (detector.num_classes < params.num_classes) {
      throw Error("detector has fewer classes than the scenes");
    }
    if (passes == 0) throw Error("passes must be positive");
  }
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, auto&& body) {
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    body(out);
    return path;
  };
  if (kind == DatasetKind::kBoxes) {
    const auto scenes = MakeScenes(params, DeriveSeed(seed, "scenes"));
    const auto dets = SynthDetector(scenes, detector, passes,
                                    DeriveSeed(seed, "detector", {passes}));
    return {write("ground_truth.csv",
                  [&](std::ostream& o) { WriteGroundTruth(o, scenes); }),
            write("detections.csv",
                  [&](std::ostream& o) { WriteDetections(o, dets); })};
  }
  const SplitDataset split =
      MakeClassificationData(kind, params, DeriveSeed(seed, "data"));
  return {write("train.csv", [&](std::ostream& o) { WriteDatasetCsv(o, split.train); }),
          write("test.csv", [&](std::ostream& o) { WriteDatasetCsv(o, split.test); })};
}

void ShiftSpec::Validate() const {
  if (levels.empty()) throw Error("shift spec needs at least one level");
  for (const ShiftLevel& l : levels) {
    if (!(l.noise >= 0.0)) throw Error("shift noise must be non-negative");
    if (!(l.drift >= 0.0 && l.drift <= 1.0)) {
      throw Error("shift drift must be in [0, 1]");
    }
  }
}

Tensor ApplyShift(const Tensor& features, std::span<const int> labels,
                  const ShiftLevel& level, const DatasetParams& params,
                  std::uint64_t seed) {
  if (features.rows() != labels.size()) throw ShapeError("features/labels");
  if (features.cols() < 2) throw ShapeError("shift needs 2+ feature columns");
  Rng rng(seed);
  Tensor out = features;
  const double c = std::cos(level.rotation), s = std::sin(level.rotation);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto x = out.row(i);
    const double x0 = x[0], x1 = x[1];
    x[0] = c * x0 - s * x1;
    x[1] = s * x0 + c * x1;
    if (level.drift > 0.0 && params.num_classes >= 2) {
      const auto y = static_cast<std::size_t>(labels[i]);
      const auto from = BlobCenter(params, y % params.num_classes);
      const auto to = BlobCenter(params, (y + 1) % params.num_classes);
      for (std::size_t d = 0; d < x.size(); ++d) {
        x[d] += level.drift * (to[d] - from[d]);
      }
    }
    for (double& v : x) v += level.noise * rng.Normal();
  }
  return out;
}

}  // namespace mcsd
