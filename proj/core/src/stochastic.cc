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

#include "mcsd/stochastic.h"

#include <algorithm>

namespace mcsd {
namespace {

constexpr int kMaxBlockDropRedraws = 100;

void CheckKeepProb(double keep_prob) {
  if (!(keep_prob > 0.0) || keep_prob > 1.0) {
    throw Error("keep probability must be in (0, 1], got " +
                std::to_string(keep_prob));
  }
}

}  // namespace

std::string ToString(DropKind kind) {
  switch (kind) {
    case DropKind::kUnitDrop:
      return "unit_drop";
    case DropKind::kBlockDrop:
      return "block_drop";
    case DropKind::kPathDrop:
      return "path_drop";
  }
  return "?";
}

std::string ToString(DropMode mode) {
  switch (mode) {
    case DropMode::kTraining:
      return "training";
    case DropMode::kMCInference:
      return "mc_inference";
    case DropMode::kDeterministicScaled:
      return "deterministic_scaled";
  }
  return "?";
}

DropKind ParseDropKind(const std::string& text) {
  if (text == "unit_drop" || text == "MCD") return DropKind::kUnitDrop;
  if (text == "block_drop" || text == "MCDB") return DropKind::kBlockDrop;
  if (text == "path_drop" || text == "MCSD") return DropKind::kPathDrop;
  throw Error("unknown drop kind '" + text + "'");
}

DropMode ParseDropMode(const std::string& text) {
  if (text == "training") return DropMode::kTraining;
  if (text == "mc_inference") return DropMode::kMCInference;
  if (text == "deterministic_scaled") return DropMode::kDeterministicScaled;
  throw Error("unknown drop mode '" + text + "'");
}

void StochasticSpec::Validate(std::size_t num_blocks) const {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) {
    throw Error("drop_rate must be in [0, 1), got " + std::to_string(drop_rate));
  }
  if (mode == DropMode::kDeterministicScaled && kind != DropKind::kPathDrop) {
    throw Error("deterministic_scaled mode is only defined for path_drop");
  }
  if (kind == DropKind::kBlockDrop && block_size == 0) {
    throw Error("block_size must be positive");
  }
  for (std::size_t i = 0; i < adapted_blocks.size(); ++i) {
    const int b = adapted_blocks[i];
    if (b < 1 || static_cast<std::size_t>(b) > num_blocks) {
      throw Error("adapted block " + std::to_string(b) + " outside [1, " +
                  std::to_string(num_blocks) + "]");
    }
    if (i > 0 && adapted_blocks[i - 1] >= b) {
      throw Error("adapted_blocks must be sorted and unique");
    }
  }
}

std::size_t SpanCount(std::size_t hidden, std::size_t block_size) {
  return (hidden + block_size - 1) / block_size;
}

MaskSample SampleMask(const StochasticSpec& spec, const NetShape& shape,
                      std::size_t batch_size, Rng& rng) {
  spec.Validate(shape.num_blocks);
  if (spec.mode == DropMode::kDeterministicScaled) {
    throw Error("no mask is sampled in deterministic_scaled mode");
  }
  const double keep = spec.keep_prob();
  MaskSample sample;
  sample.kind = spec.kind;
  for (int index : spec.adapted_blocks) {
    BlockMask mask;
    mask.block_index = index;
    switch (spec.kind) {
      case DropKind::kUnitDrop:
        mask.rows = 1;
        mask.cols = shape.hidden;
        break;
      case DropKind::kBlockDrop:
        mask.rows = 1;
        mask.cols = SpanCount(shape.hidden, spec.block_size);
        break;
      case DropKind::kPathDrop:
        mask.rows = batch_size;
        mask.cols = 1;
        break;
    }
    mask.bits.resize(mask.rows * mask.cols);
    for (int attempt = 0;; ++attempt) {
      for (auto& bit : mask.bits) bit = rng.Bernoulli(keep) ? 1 : 0;
      const bool all_dropped =
          std::none_of(mask.bits.begin(), mask.bits.end(),
                       [](std::uint8_t b) { return b != 0; });
      if (spec.kind != DropKind::kBlockDrop || !all_dropped) break;
      if (attempt + 1 >= kMaxBlockDropRedraws) {
        throw Error("block drop dropped every span in " +
                    std::to_string(kMaxBlockDropRedraws) + " draws");
      }
    }
    sample.blocks.push_back(std::move(mask));
  }
  return sample;
}

std::vector<double> UnitDropScale(std::span<const std::uint8_t> mask,
                                  double keep_prob) {
  CheckKeepProb(keep_prob);
  std::vector<double> scale(mask.size());
  for (std::size_t j = 0; j < mask.size(); ++j) {
    scale[j] = mask[j] ? 1.0 / keep_prob : 0.0;
  }
  return scale;
}

std::vector<double> BlockDropScale(std::span<const std::uint8_t> span_mask,
                                   std::size_t hidden, std::size_t block_size) {
  if (block_size == 0) throw Error("block_size must be positive");
  if (span_mask.size() != SpanCount(hidden, block_size)) {
    throw ShapeError("span mask has " + std::to_string(span_mask.size()) +
                     " entries, expected " +
                     std::to_string(SpanCount(hidden, block_size)));
  }
  std::size_t kept = 0;
  for (std::size_t j = 0; j < hidden; ++j) kept += span_mask[j / block_size];
  if (kept == 0) throw Error("block drop mask drops every span");
  const double factor = static_cast<double>(hidden) / static_cast<double>(kept);
  std::vector<double> scale(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    scale[j] = span_mask[j / block_size] ? factor : 0.0;
  }
  return scale;
}

Tensor ApplyUnitDrop(const Tensor& activations,
                     std::span<const std::uint8_t> mask, double keep_prob) {
  if (mask.size() != activations.cols()) {
    throw ShapeError("dropout mask length " + std::to_string(mask.size()) +
                     " != width " + std::to_string(activations.cols()));
  }
  const auto scale = UnitDropScale(mask, keep_prob);
  Tensor out = activations;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] *= scale[j];
  }
  return out;
}

Tensor ApplyBlockDrop(const Tensor& activations,
                      std::span<const std::uint8_t> span_mask,
                      std::size_t block_size) {
  const auto scale = BlockDropScale(span_mask, activations.cols(), block_size);
  Tensor out = activations;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] *= scale[j];
  }
  return out;
}

Tensor ApplyPathDrop(const Tensor& residual, const Tensor& identity,
                     std::span<const std::uint8_t> per_sample_mask,
                     double keep_prob) {
  CheckKeepProb(keep_prob);
  if (residual.shape() != identity.shape()) {
    throw ShapeError("residual " + residual.ShapeString() + " vs identity " +
                     identity.ShapeString());
  }
  const std::size_t n = residual.rows();
  if (per_sample_mask.size() != n && per_sample_mask.size() != 1) {
    throw ShapeError("path mask has " + std::to_string(per_sample_mask.size()) +
                     " entries for batch of " + std::to_string(n));
  }
  Tensor out = identity;
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t m =
        per_sample_mask[per_sample_mask.size() == 1 ? 0 : r];
    if (!m) continue;
    auto o = out.row(r);
    auto res = residual.row(r);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += res[j] / keep_prob;
  }
  return out;
}

Tensor ApplyDeterministicScaled(const Tensor& residual, const Tensor& identity,
                                double keep_prob) {
  if (residual.shape() != identity.shape()) {
    throw ShapeError("residual " + residual.ShapeString() + " vs identity " +
                     identity.ShapeString());
  }
  Tensor out = identity;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += keep_prob * residual[i];
  return out;
}

ScalingSet ToScalings(const MaskSample& mask, const StochasticSpec& spec,
                      const NetShape& shape) {
  ScalingSet scalings;
  const double keep = spec.keep_prob();
  for (const BlockMask& block : mask.blocks) {
    BlockScaling& s = scalings[block.block_index];
    switch (mask.kind) {
      case DropKind::kUnitDrop:
        s.unit_scale = UnitDropScale(block.bits, keep);
        break;
      case DropKind::kBlockDrop:
        s.unit_scale = BlockDropScale(block.bits, shape.hidden, spec.block_size);
        break;
      case DropKind::kPathDrop:
        CheckKeepProb(keep);
        s.row_scale.resize(block.bits.size());
        for (std::size_t r = 0; r < block.bits.size(); ++r) {
          s.row_scale[r] = block.bits[r] ? 1.0 / keep : 0.0;
        }
        break;
    }
  }
  return scalings;
}

ScalingSet DeterministicScalings(const StochasticSpec& spec) {
  ScalingSet scalings;
  if (spec.kind != DropKind::kPathDrop) return scalings;
  for (int index : spec.adapted_blocks) {
    scalings[index].row_scale = {spec.keep_prob()};
  }
  return scalings;
}

}  // namespace mcsd
