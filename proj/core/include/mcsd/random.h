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

#ifndef MCSD_RANDOM_H_
#define MCSD_RANDOM_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace mcsd {

// Derives an independent stream seed from a root seed, a component name and
// a list of indices. Every random draw in the library is rooted here; there
// is no ambient RNG. The mixing is FNV-1a over the name followed by
// SplitMix64 finalization per index, so the result is platform independent.
std::uint64_t DeriveSeed(std::uint64_t root, std::string_view component,
                         std::initializer_list<std::uint64_t> indices = {});

// Bit pattern of a double, for feeding real-valued keys into DeriveSeed.
std::uint64_t SeedKey(double value);
std::uint64_t SeedKey(std::string_view text);

// Seeded random source. The engine is std::mt19937_64 (fully specified by the
// standard); all distributions are implemented here rather than taken from
// <random>, whose distributions are implementation defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of resolution.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Standard normal via Box-Muller; consumes two uniforms per call.
  double Normal();
  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }
  bool Bernoulli(double p) { return Uniform() < p; }
  // Uniform integer in [0, n) by rejection, n > 0.
  std::size_t UniformIndex(std::size_t n);
  // Knuth's multiplication method; fine for the small rates used here.
  int Poisson(double rate);

  template <typename T>
  void Shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[UniformIndex(i)]);
    }
  }

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mcsd

#endif  // MCSD_RANDOM_H_
