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

#include "mcsd/training.h"

#include <cmath>
#include <numeric>

#include "mcsd/random.h"

namespace mcsd {

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw Error("weight_decay must be non-negative");
  if (batch_size == 0) throw Error("batch_size must be positive");
}

void Dataset::Validate() const {
  if (labels.empty()) throw Error("dataset is empty");
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(labels.size()) +
                     " labels for features " + features.ShapeString());
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error("label " + std::to_string(y) + " outside [0, " +
                  std::to_string(num_classes) + ")");
    }
  }
}

Targets TargetsFor(const ResidualNet& net, const Dataset& data) {
  if (net.shape().output_mode == OutputMode::kSoftmax) {
    return Targets::Labels(data.labels);
  }
  return Targets::OneHot(data.labels, net.shape().num_classes);
}

TrainResult Train(ResidualNet net, const Dataset& data, const TrainConfig& cfg,
                  const StochasticSpec* stochastic) {
  cfg.Validate();
  data.Validate();
  if (data.num_classes > net.shape().num_classes) {
    throw Error("dataset has more classes than the net's head");
  }
  StochasticSpec spec;
  if (stochastic) {
    spec = stochastic->WithMode(DropMode::kTraining);
    spec.Validate(net.shape().num_blocks);
  }
  const Targets targets = TargetsFor(net, data);

  Rng order_rng(DeriveSeed(cfg.seed, "train_order"));
  Rng mask_rng(DeriveSeed(cfg.seed, "train_mask"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{std::move(net), {}};
  result.loss_trace.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.Shuffle(order);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      const Tensor x = data.features.GatherRows(rows);
      const Targets y = targets.Subset(rows);

      ScalingSet scalings;
      if (stochastic) {
        const MaskSample mask =
            SampleMask(spec, result.net.shape(), /*batch_size=*/1, mask_rng);
        scalings = ToScalings(mask, spec, result.net.shape());
      }
      double loss;
      try {
        loss = Backward(result.net, x, y, cfg.weight_decay,
                        stochastic ? &scalings : nullptr);
      } catch (const Error& e) {
        throw TrainingDiverged("epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batches) + ": " +
                               e.what());
      }
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("loss became non-finite at epoch " +
                               std::to_string(epoch) + ", batch " +
                               std::to_string(batches) +
                               "; lower the learning rate");
      }
      SgdStep(result.net, cfg.learning_rate);
      sum += loss;
      ++batches;
    }
    result.loss_trace.push_back(sum / static_cast<double>(batches));
  }
  return result;
}

std::size_t ArgMax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double Accuracy(const ResidualNet& net, const Dataset& data,
                const ScalingSet* scalings) {
  data.Validate();
  const Tensor logits = Forward(net, data.features, scalings);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    correct += ArgMax(logits.row(r)) == static_cast<std::size_t>(data.labels[r]);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace mcsd
