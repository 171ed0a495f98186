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

#include "mcsd/checkpoint.h"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mcsd {
namespace {

constexpr char kMagic[] = "mcsd-checkpoint";
constexpr int kVersion = 1;

template <typename T>
T ReadField(std::istream& in, const char* what) {
  T value;
  if (!(in >> value)) {
    throw Error(std::string("checkpoint: failed to read ") + what);
  }
  return value;
}

void Expect(std::istream& in, const std::string& token) {
  const auto got = ReadField<std::string>(in, token.c_str());
  if (got != token) {
    throw Error("checkpoint: expected '" + token + "', found '" + got + "'");
  }
}

double ReadReal(std::istream& in) {
  const auto text = ReadField<std::string>(in, "real");
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("checkpoint: bad real '" + text + "'");
  }
  return value;
}

}  // namespace

std::string FormatReal(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void WriteCheckpoint(std::ostream& out, const ResidualNet& net,
                     const TrainConfig* config) {
  const NetShape& s = net.shape();
  out << kMagic << ' ' << kVersion << '\n';
  out << "net " << s.input_dim << ' ' << s.width << ' ' << s.hidden << ' '
      << s.num_blocks << ' ' << s.num_classes << ' ' << ToString(s.output_mode)
      << ' ' << ToString(s.activation) << '\n';
  const auto params = net.Parameters();
  out << "shapes " << params.size() << '\n';
  for (const Parameter* p : params) {
    out << p->id << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
  }
  out << "data\n";
  for (const Parameter* p : params) {
    const auto values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out << ' ';
      out << FormatReal(values[i]);
    }
    out << '\n';
  }
  if (config) {
    out << "config " << FormatReal(config->learning_rate) << ' '
        << FormatReal(config->weight_decay) << ' ' << config->epochs << ' '
        << config->batch_size << ' ' << config->seed << '\n';
  } else {
    out << "config none\n";
  }
}

Checkpoint ReadCheckpoint(std::istream& in) {
  Expect(in, kMagic);
  if (ReadField<int>(in, "version") != kVersion) {
    throw Error("checkpoint: unsupported version");
  }
  Expect(in, "net");
  NetShape s;
  s.input_dim = ReadField<std::size_t>(in, "input_dim");
  s.width = ReadField<std::size_t>(in, "width");
  s.hidden = ReadField<std::size_t>(in, "hidden");
  s.num_blocks = ReadField<std::size_t>(in, "num_blocks");
  s.num_classes = ReadField<std::size_t>(in, "num_classes");
  s.output_mode = ParseOutputMode(ReadField<std::string>(in, "output mode"));
  s.activation = ParseActivation(ReadField<std::string>(in, "activation"));
  ResidualNet net(s);

  auto params = net.Parameters();
  Expect(in, "shapes");
  if (ReadField<std::size_t>(in, "parameter count") != params.size()) {
    throw Error("checkpoint: parameter count does not match architecture");
  }
  for (Parameter* p : params) {
    const auto id = ReadField<std::string>(in, "parameter id");
    const auto rows = ReadField<std::size_t>(in, "rows");
    const auto cols = ReadField<std::size_t>(in, "cols");
    if (id != p->id || rows != p->value.rows() || cols != p->value.cols()) {
      throw Error("checkpoint: unexpected parameter '" + id + "'");
    }
  }
  Expect(in, "data");
  for (Parameter* p : params) {
    for (double& v : p->value.data()) v = ReadReal(in);
  }
  Expect(in, "config");
  Checkpoint ckpt{std::move(net), std::nullopt};
  const auto first = ReadField<std::string>(in, "config");
  if (first != "none") {
    std::istringstream lr(first);
    TrainConfig cfg;
    cfg.learning_rate = ReadReal(lr);
    cfg.weight_decay = ReadReal(in);
    cfg.epochs = ReadField<std::size_t>(in, "epochs");
    cfg.batch_size = ReadField<std::size_t>(in, "batch_size");
    cfg.seed = ReadField<std::uint64_t>(in, "seed");
    ckpt.config = cfg;
  }
  return ckpt;
}

void SaveCheckpoint(const std::string& path, const ResidualNet& net,
                    const TrainConfig* config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  WriteCheckpoint(out, net, config);
  if (!out) throw Error("failed writing " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return ReadCheckpoint(in);
}

void WriteLossTrace(std::ostream& out, std::span<const double> trace) {
  out << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << (i + 1) << ',' << FormatReal(trace[i]) << '\n';
  }
}

}  // namespace mcsd
