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

#ifndef MCSD_STOCHASTIC_H_
#define MCSD_STOCHASTIC_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mcsd/nn.h"
#include "mcsd/random.h"
#include "mcsd/tensor.h"

namespace mcsd {

// UnitDrop: Bernoulli mask over the hidden units of F_l (dropout).
// BlockDrop: Bernoulli mask over contiguous spans of hidden units.
// PathDrop: one Bernoulli variable per batch row that gates the whole
//           residual branch F_l (stochastic depth).
enum class DropKind { kUnitDrop, kBlockDrop, kPathDrop };

// Training and MCInference both sample masks; DeterministicScaled replaces
// sampling with the expected keep factor and is defined for PathDrop only.
enum class DropMode { kTraining, kMCInference, kDeterministicScaled };

std::string ToString(DropKind kind);
std::string ToString(DropMode mode);
DropKind ParseDropKind(const std::string& text);
DropMode ParseDropMode(const std::string& text);

struct StochasticSpec {
  DropKind kind = DropKind::kPathDrop;
  double drop_rate = 0.0;
  std::size_t block_size = 1;      // BlockDrop span length
  std::vector<int> adapted_blocks;  // 1-based, sorted, unique
  DropMode mode = DropMode::kMCInference;

  double keep_prob() const { return 1.0 - drop_rate; }
  // Throws Error on any invariant violation. `num_blocks` bounds the
  // adapted block indices.
  void Validate(std::size_t num_blocks) const;
  StochasticSpec WithMode(DropMode m) const {
    StochasticSpec copy = *this;
    copy.mode = m;
    return copy;
  }
};

// Mask for one adapted block, row-major [rows, cols] of 0/1 entries.
//   UnitDrop:  rows = 1, cols = hidden width
//   BlockDrop: rows = 1, cols = number of spans
//   PathDrop:  rows = batch size, cols = 1
struct BlockMask {
  int block_index = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;
};

struct MaskSample {
  DropKind kind = DropKind::kPathDrop;
  std::vector<BlockMask> blocks;  // one per adapted block, in spec order
};

// Number of hidden-unit spans BlockDrop uses for a hidden width. The last
// span is shorter when the width is not a multiple of the span length.
std::size_t SpanCount(std::size_t hidden, std::size_t block_size);

// Draws one independent Bernoulli(keep_prob) entry per mask position. For
// PathDrop, `batch_size` sets the number of rows (pass 1 for a single mask
// shared by a whole minibatch). BlockDrop redraws a block's mask when every
// span came up dropped, up to 100 times.
MaskSample SampleMask(const StochasticSpec& spec, const NetShape& shape,
                      std::size_t batch_size, Rng& rng);

// activations * mask / keep_prob, mask broadcast over rows.
Tensor ApplyUnitDrop(const Tensor& activations,
                     std::span<const std::uint8_t> mask, double keep_prob);

// Zeroes dropped spans and rescales survivors by total_units / kept_units.
Tensor ApplyBlockDrop(const Tensor& activations,
                      std::span<const std::uint8_t> span_mask,
                      std::size_t block_size);

// identity + mask[row] * residual / keep_prob, per batch row. A single-entry
// mask broadcasts to all rows.
Tensor ApplyPathDrop(const Tensor& residual, const Tensor& identity,
                     std::span<const std::uint8_t> per_sample_mask,
                     double keep_prob);

// identity + keep_prob * residual.
Tensor ApplyDeterministicScaled(const Tensor& residual, const Tensor& identity,
                                double keep_prob);

// Per-unit multipliers that ApplyUnitDrop / ApplyBlockDrop would apply.
std::vector<double> UnitDropScale(std::span<const std::uint8_t> mask,
                                  double keep_prob);
std::vector<double> BlockDropScale(std::span<const std::uint8_t> span_mask,
                                   std::size_t hidden, std::size_t block_size);

// Translates a sampled mask into the scaling hooks consumed by Forward.
ScalingSet ToScalings(const MaskSample& mask, const StochasticSpec& spec,
                      const NetShape& shape);

// Scalings for the mask-free inference pass: the keep_prob factor on adapted
// blocks for PathDrop, nothing for the other kinds.
ScalingSet DeterministicScalings(const StochasticSpec& spec);

}  // namespace mcsd

#endif  // MCSD_STOCHASTIC_H_
