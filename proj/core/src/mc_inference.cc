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

#include "mcsd/mc_inference.h"

#include <algorithm>
#include <exception>
#include <ostream>
#include <thread>

#include "mcsd/checkpoint.h"
#include "mcsd/random.h"

namespace mcsd {

Tensor PredictiveSummary::Pass(std::size_t t) const {
  const std::size_t n = batch(), c = classes();
  const auto src = per_pass_probs.data().subspan(t * n * c, n * c);
  return Tensor({n, c}, std::vector<double>(src.begin(), src.end()));
}

std::uint64_t PassSeed(std::uint64_t base_seed, std::size_t pass_index) {
  return DeriveSeed(base_seed, "mc_pass", {pass_index});
}

PredictiveSummary McPredict(const ResidualNet& net, const Tensor& x,
                            const StochasticSpec& spec, std::size_t passes,
                            std::uint64_t base_seed, std::size_t threads) {
  if (passes == 0) throw Error("MC prediction needs at least one pass");
  if (spec.mode != DropMode::kMCInference) {
    throw Error("McPredict requires mc_inference mode, got " +
                ToString(spec.mode));
  }
  spec.Validate(net.shape().num_blocks);
  if (x.rank() != 2) throw ShapeError("input must be [batch, features]");

  const std::size_t n = x.rows(), c = net.shape().num_classes;
  const OutputMode mode = net.shape().output_mode;
  Tensor per_pass({passes, n, c});
  Tensor logit_sum = Tensor::Matrix(n, c);
  std::vector<Tensor> pass_logits(passes);

  auto run_pass = [&](std::size_t t) {
    Rng rng(PassSeed(base_seed, t));
    const MaskSample mask = SampleMask(spec, net.shape(), n, rng);
    const ScalingSet scalings = ToScalings(mask, spec, net.shape());
    Tensor logits;
    try {
      logits = Forward(net, x, &scalings);
    } catch (const ShapeError& e) {
      throw ShapeError("pass " + std::to_string(t) + ": " + e.what(),
                       e.block_index());
    } catch (const Error& e) {
      throw Error("pass " + std::to_string(t) + ": " + e.what());
    }
    const Tensor probs = Probabilities(logits, mode);
    std::copy(probs.data().begin(), probs.data().end(),
              per_pass.data().begin() + t * n * c);
    pass_logits[t] = std::move(logits);
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, passes);
  if (workers == 1) {
    for (std::size_t t = 0; t < passes; ++t) run_pass(t);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t t = w; t < passes; t += workers) run_pass(t);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Reduce in pass order so the sums do not depend on scheduling.
  for (const Tensor& logits : pass_logits) {
    for (std::size_t i = 0; i < logit_sum.size(); ++i) logit_sum[i] += logits[i];
  }
  PredictiveSummary summary = Summarize(std::move(per_pass), mode);
  for (double& v : logit_sum.data()) v /= static_cast<double>(passes);
  summary.mean_logits = std::move(logit_sum);
  return summary;
}

PredictiveSummary Summarize(Tensor per_pass_probs, OutputMode mode) {
  if (per_pass_probs.rank() != 3 || per_pass_probs.shape()[0] == 0) {
    throw ShapeError("per-pass probabilities must be [T, batch, C]");
  }
  const std::size_t passes = per_pass_probs.shape()[0];
  const std::size_t n = per_pass_probs.shape()[1];
  const std::size_t c = per_pass_probs.shape()[2];
  Tensor mean = Tensor::Matrix(n, c);
  for (std::size_t t = 0; t < passes; ++t) {
    for (std::size_t i = 0; i < n * c; ++i) {
      mean[i] += per_pass_probs[t * n * c + i];
    }
  }
  for (double& v : mean.data()) v /= static_cast<double>(passes);
  PredictiveSummary s;
  s.mean_probs = std::move(mean);
  s.per_pass_probs = std::move(per_pass_probs);
  s.passes = passes;
  s.mode = mode;
  return s;
}

Tensor DeterministicLogits(const ResidualNet& net, const Tensor& x,
                           const StochasticSpec& spec) {
  spec.Validate(net.shape().num_blocks);
  const ScalingSet scalings = DeterministicScalings(spec);
  return Forward(net, x, &scalings);
}

Tensor DeterministicPredict(const ResidualNet& net, const Tensor& x,
                            const StochasticSpec& spec) {
  return Probabilities(DeterministicLogits(net, x, spec),
                       net.shape().output_mode);
}

void WritePredictiveSummary(std::ostream& out, const PredictiveSummary& s) {
  out << "pass,sample,class,prob\n";
  const std::size_t n = s.batch(), c = s.classes();
  for (std::size_t t = 0; t < s.passes; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        out << t << ',' << i << ',' << k << ','
            << FormatReal(s.per_pass_probs[(t * n + i) * c + k]) << '\n';
      }
    }
  }
}

}  // namespace mcsd
