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

#ifndef MCSD_TRAINING_H_
#define MCSD_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mcsd/nn.h"
#include "mcsd/stochastic.h"
#include "mcsd/tensor.h"

namespace mcsd {

struct TrainConfig {
  double learning_rate = 0.05;
  double weight_decay = 1e-4;  // coefficient of the L2 term
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void Validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Labelled feature matrix; row i of `features` has class `labels[i]`.
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  void Validate() const;
};

struct TrainResult {
  ResidualNet net;
  std::vector<double> loss_trace;  // mean minibatch loss per epoch
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

// Softmax heads train on class indices; sigmoid heads on one-hot rows.
Targets TargetsFor(const ResidualNet& net, const Dataset& data);

// Minibatch SGD on task loss + weight_decay * ||W||^2. Each epoch visits a
// fresh seeded permutation of the data. With `stochastic` set, one mask is
// sampled per minibatch (PathDrop masks are shared by all rows of the
// minibatch) and the mechanism runs in training mode.
TrainResult Train(ResidualNet net, const Dataset& data, const TrainConfig& cfg,
                  const StochasticSpec* stochastic = nullptr);

// Top-1 accuracy of the mask-free forward pass.
double Accuracy(const ResidualNet& net, const Dataset& data,
                const ScalingSet* scalings = nullptr);

std::size_t ArgMax(std::span<const double> values);

}  // namespace mcsd

#endif  // MCSD_TRAINING_H_
