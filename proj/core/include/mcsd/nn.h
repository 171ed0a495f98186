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

#ifndef MCSD_NN_H_
#define MCSD_NN_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mcsd/tensor.h"

namespace mcsd {

enum class OutputMode { kSoftmax, kSigmoid };
enum class Activation { kRelu, kIdentity };

std::string ToString(OutputMode mode);
std::string ToString(Activation activation);
OutputMode ParseOutputMode(const std::string& text);
Activation ParseActivation(const std::string& text);

// Architecture of a residual MLP:
//   h_0 = stem(x)
//   h_l = h_{l-1} + F_l(h_{l-1}),  F_l(h) = fc2(act(fc1(h)))
//   logits = head(h_L)
// The stem is purely affine; the only nonlinearity lives inside F_l.
struct NetShape {
  std::size_t input_dim = 2;
  std::size_t width = 16;
  std::size_t hidden = 16;
  std::size_t num_blocks = 2;
  std::size_t num_classes = 2;
  OutputMode output_mode = OutputMode::kSoftmax;
  Activation activation = Activation::kRelu;

  void Validate() const;
  friend bool operator==(const NetShape&, const NetShape&) = default;
};

struct Parameter {
  std::string id;
  Tensor value;
  Tensor grad;
  // Weight matrices carry the L2 penalty; biases do not.
  bool decayed = false;
};

// y = x W^T + b with W of shape [out, in] and b of shape [1, out].
struct Affine {
  Parameter weight;
  Parameter bias;
};

struct ResidualBlock {
  int index = 0;  // 1-based position in the stack
  Affine fc1;     // width -> hidden
  Affine fc2;     // hidden -> width
};

class ResidualNet {
 public:
  // All parameters zero.
  explicit ResidualNet(const NetShape& shape);

  // He-scaled Gaussian weights, zero biases, drawn from `seed`.
  static ResidualNet Initialize(const NetShape& shape, std::uint64_t seed);

  const NetShape& shape() const { return shape_; }
  Affine& stem() { return stem_; }
  const Affine& stem() const { return stem_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }
  Affine& head() { return head_; }
  const Affine& head() const { return head_; }

  // Stable order: stem, blocks in order (fc1 then fc2), head; weight before
  // bias in each layer.
  std::vector<Parameter*> Parameters();
  std::vector<const Parameter*> Parameters() const;

  void ZeroGrad();
  // Sum of squared entries over all decayed parameters.
  double WeightSquaredNorm() const;

  bool SameValues(const ResidualNet& other) const;

 private:
  NetShape shape_;
  Affine stem_;
  std::vector<ResidualBlock> blocks_;
  Affine head_;
};

// Multiplicative modifiers applied inside one residual block. Empty vectors
// mean "no scaling".
//   unit_scale: one factor per hidden unit, applied to act(fc1(h)).
//   row_scale:  one factor per batch row (a single entry broadcasts to all
//               rows), applied to the residual branch output F_l(h).
// Dropout, block drop and stochastic depth all reduce to these two hooks.
struct BlockScaling {
  std::vector<double> unit_scale;
  std::vector<double> row_scale;
};

// Keyed by 1-based block index; blocks without an entry run unmodified.
using ScalingSet = std::map<int, BlockScaling>;

Tensor Forward(const ResidualNet& net, const Tensor& x,
               const ScalingSet* scalings = nullptr);

// Softmax over each row, or elementwise logistic sigmoid.
Tensor Probabilities(const Tensor& logits, OutputMode mode);

// Supervision for one batch: class indices for softmax heads, multi-hot
// rows for sigmoid heads.
class Targets {
 public:
  static Targets Labels(std::vector<int> labels);
  static Targets MultiHot(Tensor multi_hot);
  // One-hot rows from labels, for sigmoid heads trained on single-label data.
  static Targets OneHot(std::span<const int> labels, std::size_t num_classes);

  bool is_labels() const { return is_labels_; }
  std::size_t size() const;
  const std::vector<int>& labels() const { return labels_; }
  const Tensor& multi_hot() const { return multi_hot_; }

  Targets Subset(std::span<const std::size_t> rows) const;

 private:
  bool is_labels_ = true;
  std::vector<int> labels_;
  Tensor multi_hot_;
};

// Batch-mean task loss plus weight_decay * (sum of squared weights).
// Softmax heads use cross-entropy, sigmoid heads binary cross-entropy summed
// over classes.
double Loss(const Tensor& logits, const Targets& targets,
            const ResidualNet& net, double weight_decay);

// Overwrites every Parameter::grad with the gradient of Loss evaluated on
// Forward(net, x, scalings). Returns the loss value.
double Backward(ResidualNet& net, const Tensor& x, const Targets& targets,
                double weight_decay, const ScalingSet* scalings = nullptr);

// value <- value - learning_rate * grad for every parameter.
void SgdStep(ResidualNet& net, double learning_rate);

}  // namespace mcsd

#endif  // MCSD_NN_H_
