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

#ifndef MCSD_CHECKPOINT_H_
#define MCSD_CHECKPOINT_H_

#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "mcsd/nn.h"
#include "mcsd/training.h"

namespace mcsd {

// Text checkpoint, whitespace separated, fields in this order:
//
//   mcsd-checkpoint 1
//   net <input_dim> <width> <hidden> <num_blocks> <num_classes> <output> <act>
//   shapes <P>
//   <param id> <rows> <cols>          (P lines, ResidualNet::Parameters order)
//   data
//   <rows*cols values, row-major>     (one line per parameter, same order)
//   config <lr> <weight_decay> <epochs> <batch_size> <seed> | config none
//
// Reals are written in shortest round-trip form, so Load(Save(net)) is exact.
struct Checkpoint {
  ResidualNet net;
  std::optional<TrainConfig> config;
};

void WriteCheckpoint(std::ostream& out, const ResidualNet& net,
                     const TrainConfig* config = nullptr);
Checkpoint ReadCheckpoint(std::istream& in);

void SaveCheckpoint(const std::string& path, const ResidualNet& net,
                    const TrainConfig* config = nullptr);
Checkpoint LoadCheckpoint(const std::string& path);

// CSV with header "epoch,mean_loss", epochs numbered from 1.
void WriteLossTrace(std::ostream& out, std::span<const double> trace);

// Shortest decimal representation that parses back to the same double.
std::string FormatReal(double value);

}  // namespace mcsd

#endif  // MCSD_CHECKPOINT_H_
