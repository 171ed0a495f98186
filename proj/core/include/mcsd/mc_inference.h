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

#ifndef MCSD_MC_INFERENCE_H_
#define MCSD_MC_INFERENCE_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>

#include "mcsd/nn.h"
#include "mcsd/stochastic.h"
#include "mcsd/tensor.h"

namespace mcsd {

struct PredictiveSummary {
  Tensor mean_probs;      // [batch, C], average of per_pass_probs over passes
  Tensor per_pass_probs;  // [T, batch, C]
  Tensor mean_logits;     // [batch, C], average pre-nonlinearity output
  std::size_t passes = 0;
  OutputMode mode = OutputMode::kSoftmax;

  std::size_t batch() const { return mean_probs.rows(); }
  std::size_t classes() const { return mean_probs.cols(); }
  // Copy of pass t as a [batch, C] tensor.
  Tensor Pass(std::size_t t) const;
};

// Seed of the RNG stream owned by MC pass `pass_index`.
std::uint64_t PassSeed(std::uint64_t base_seed, std::size_t pass_index);

// T stochastic forward passes, each with masks drawn from its own stream
// PassSeed(base_seed, t). PathDrop draws one Bernoulli per batch row and
// adapted block; UnitDrop and BlockDrop draw one mask per block per pass.
// Probabilities are averaged after the output nonlinearity. `threads` > 1
// runs passes concurrently; the result is identical to sequential execution.
PredictiveSummary McPredict(const ResidualNet& net, const Tensor& x,
                            const StochasticSpec& spec, std::size_t passes,
                            std::uint64_t base_seed, std::size_t threads = 1);

// Rebuilds a summary from recorded per-pass probabilities [T, batch, C].
PredictiveSummary Summarize(Tensor per_pass_probs, OutputMode mode);

// Single mask-free pass. PathDrop uses the scaled rule h + keep_prob * F(h)
// on adapted blocks; UnitDrop and BlockDrop run the plain network.
Tensor DeterministicLogits(const ResidualNet& net, const Tensor& x,
                           const StochasticSpec& spec);
Tensor DeterministicPredict(const ResidualNet& net, const Tensor& x,
                            const StochasticSpec& spec);

// Columnar CSV "pass,sample,class,prob", one row per entry of per_pass_probs.
void WritePredictiveSummary(std::ostream& out, const PredictiveSummary& s);

}  // namespace mcsd

#endif  // MCSD_MC_INFERENCE_H_
