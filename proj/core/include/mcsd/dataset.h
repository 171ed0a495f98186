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

#ifndef MCSD_DATASET_H_
#define MCSD_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mcsd/detection.h"
#include "mcsd/training.h"

namespace mcsd {

enum class DatasetKind {
  kBlobs,  // "blobs-classification"
  kMoons,  // "moons-classification"
  kBoxes,  // "boxes-detection"
};

std::string ToString(DatasetKind kind);
DatasetKind ParseDatasetKind(const std::string& text);

struct DatasetParams {
  std::size_t train_size = 600;
  std::size_t test_size = 600;
  std::size_t num_classes = 3;
  std::size_t dim = 2;
  double radius = 2.0;       // blob centres sit on a circle of this radius
  double spread = 1.0;       // per-coordinate stddev around a blob centre
  double label_noise = 0.0;  // probability a label is replaced by another class
  double moon_noise = 0.1;
  // boxes-detection
  std::size_t images = 40;
  std::size_t max_objects = 4;
  double image_size = 100.0;

  void Validate(DatasetKind kind) const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

// Blob centre of class k: radius * (cos 2pi k/C, sin 2pi k/C, 0, ...).
std::vector<double> BlobCenter(const DatasetParams& params, std::size_t cls);

// Blobs or moons, train and test drawn from independent streams of `seed`.
// Label noise is applied to both splits.
SplitDataset MakeClassificationData(DatasetKind kind,
                                    const DatasetParams& params,
                                    std::uint64_t seed);

// Clean blob features for the given labels (used for detection objects).
Tensor SampleBlobFeatures(std::span<const int> labels,
                          const DatasetParams& params, std::uint64_t seed);

inline constexpr double kMaxSceneIou = 0.1;

// Random ground-truth scenes: 1..max_objects boxes per image, pairwise IoU
// below kMaxSceneIou within an image.
std::vector<GroundTruth> MakeScenes(const DatasetParams& params,
                                    std::uint64_t seed);

// CSV with header "x0,...,x{d-1},label".
void WriteDatasetCsv(std::ostream& out, const Dataset& data);
// `num_classes` = 0 infers max label + 1.
Dataset ReadDatasetCsv(std::istream& in, std::size_t num_classes = 0);
Dataset LoadDatasetCsv(const std::string& path, std::size_t num_classes = 0);

// Writes the files for one dataset kind into `dir` and returns their paths:
//   blobs/moons: train.csv, test.csv
//   boxes:       ground_truth.csv, detections.csv (synthetic detector output)
// Parameters are validated before anything is written.
std::vector<std::string> MakeDatasetFiles(DatasetKind kind,
                                          const DatasetParams& params,
                                          const NoiseSpec& detector,
                                          std::size_t passes,
                                          std::uint64_t seed,
                                          const std::string& dir);

// One level of synthetic distribution shift applied to input features:
// rotate the first two coordinates, move each sample a fraction `drift`
// of the way towards the next class's blob centre, then add Gaussian noise.
struct ShiftLevel {
  std::string name;
  double noise = 0.0;
  double rotation = 0.0;  // radians
  double drift = 0.0;
};

struct ShiftSpec {
  std::vector<ShiftLevel> levels;  // ordered by increasing severity
  void Validate() const;
};

Tensor ApplyShift(const Tensor& features, std::span<const int> labels,
                  const ShiftLevel& level, const DatasetParams& params,
                  std::uint64_t seed);

}  // namespace mcsd

#endif  // MCSD_DATASET_H_
