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

#include "mcsd/nn.h"

#include <algorithm>
#include <cmath>

#include "mcsd/random.h"

namespace mcsd {
namespace {

Affine MakeAffine(const std::string& name, std::size_t in, std::size_t out) {
  Affine layer;
  layer.weight = {name + ".weight", Tensor::Matrix(out, in),
                  Tensor::Matrix(out, in), true};
  layer.bias = {name + ".bias", Tensor::Matrix(1, out), Tensor::Matrix(1, out),
                false};
  return layer;
}

// out[n, o] = sum_i x[n, i] * W[o, i] + b[o]
Tensor ApplyAffine(const Affine& layer, const Tensor& x) {
  const Tensor& w = layer.weight.value;
  const std::size_t n = x.rows(), in = w.cols(), out = w.rows();
  Tensor y = Tensor::Matrix(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      auto wo = w.row(o);
      double acc = layer.bias.value[o];
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
      y(r, o) = acc;
    }
  }
  return y;
}

// Accumulates dW += g^T x, db += colsum(g) and returns dx = g W.
Tensor AffineBackward(Affine& layer, const Tensor& x, const Tensor& g) {
  const Tensor& w = layer.weight.value;
  Tensor& dw = layer.weight.grad;
  Tensor& db = layer.bias.grad;
  const std::size_t n = x.rows(), in = w.cols(), out = w.rows();
  Tensor dx = Tensor::Matrix(n, in);
  for (std::size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    auto gr = g.row(r);
    auto dxr = dx.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const double go = gr[o];
      if (go == 0.0) continue;
      db[o] += go;
      auto wo = w.row(o);
      auto dwo = dw.row(o);
      for (std::size_t i = 0; i < in; ++i) {
        dwo[i] += go * xr[i];
        dxr[i] += go * wo[i];
      }
    }
  }
  return dx;
}

double RowFactor(const std::vector<double>& row_scale, std::size_t r) {
  if (row_scale.empty()) return 1.0;
  return row_scale.size() == 1 ? row_scale[0] : row_scale[r];
}

void CheckScaling(const ResidualNet& net, const ScalingSet& scalings,
                  std::size_t batch) {
  const NetShape& s = net.shape();
  for (const auto& [index, scaling] : scalings) {
    if (index < 1 || static_cast<std::size_t>(index) > s.num_blocks) {
      throw ShapeError("scaling refers to block " + std::to_string(index) +
                           " but the net has " + std::to_string(s.num_blocks),
                       index);
    }
    if (!scaling.unit_scale.empty() && scaling.unit_scale.size() != s.hidden) {
      throw ShapeError("block " + std::to_string(index) + ": unit mask has " +
                           std::to_string(scaling.unit_scale.size()) +
                           " entries, hidden width is " +
                           std::to_string(s.hidden),
                       index);
    }
    const std::size_t rs = scaling.row_scale.size();
    if (rs > 1 && rs != batch) {
      throw ShapeError("block " + std::to_string(index) + ": row mask has " +
                           std::to_string(rs) + " entries for batch of " +
                           std::to_string(batch),
                       index);
    }
  }
}

struct BlockTrace {
  Tensor input;       // h_{l-1}
  Tensor pre;         // fc1(h)
  Tensor activation;  // act(pre) * unit_scale
  const BlockScaling* scaling = nullptr;
};

struct Trace {
  Tensor stem_out;
  std::vector<BlockTrace> blocks;
  Tensor head_in;
};

Tensor ForwardImpl(const ResidualNet& net, const Tensor& x,
                   const ScalingSet* scalings, Trace* trace) {
  const NetShape& s = net.shape();
  if (x.rank() != 2 || x.cols() != s.input_dim) {
    throw ShapeError("input " + x.ShapeString() + " does not match stem width " +
                     std::to_string(s.input_dim));
  }
  if (scalings) CheckScaling(net, *scalings, x.rows());

  Tensor h = ApplyAffine(net.stem(), x);
  if (trace) trace->blocks.reserve(s.num_blocks);
  for (const ResidualBlock& block : net.blocks()) {
    const BlockScaling* scaling = nullptr;
    if (scalings) {
      auto it = scalings->find(block.index);
      if (it != scalings->end()) scaling = &it->second;
    }
    Tensor pre = ApplyAffine(block.fc1, h);
    Tensor act = pre;
    if (s.activation == Activation::kRelu) {
      for (double& v : act.data()) v = std::max(v, 0.0);
    }
    if (scaling && !scaling->unit_scale.empty()) {
      for (std::size_t r = 0; r < act.rows(); ++r) {
        auto ar = act.row(r);
        for (std::size_t j = 0; j < ar.size(); ++j) {
          ar[j] *= scaling->unit_scale[j];
        }
      }
    }
    Tensor residual = ApplyAffine(block.fc2, act);
    if (residual.shape() != h.shape()) {
      throw ShapeError("block " + std::to_string(block.index) +
                           ": residual " + residual.ShapeString() +
                           " vs identity " + h.ShapeString(),
                       block.index);
    }
    Tensor out = h;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const double f = scaling ? RowFactor(scaling->row_scale, r) : 1.0;
      auto o = out.row(r);
      auto res = residual.row(r);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += f * res[j];
    }
    if (trace) {
      trace->blocks.push_back(
          {std::move(h), std::move(pre), std::move(act), scaling});
    }
    h = std::move(out);
  }
  Tensor logits = ApplyAffine(net.head(), h);
  if (!logits.AllFinite()) {
    throw Error("forward pass produced non-finite logits");
  }
  if (trace) trace->head_in = std::move(h);
  return logits;
}

double LogSumExp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

// softplus(z) - y z, stable for large |z|
double BinaryCrossEntropyWithLogit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void CheckTargets(const Tensor& logits, const Targets& targets,
                  OutputMode mode) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (n == 0) throw Error("loss of an empty batch");
  if (targets.size() != n) {
    throw ShapeError("targets have " + std::to_string(targets.size()) +
                     " rows, logits have " + std::to_string(n));
  }
  if (mode == OutputMode::kSoftmax) {
    if (!targets.is_labels()) {
      throw Error("softmax head needs class-index targets");
    }
    for (int y : targets.labels()) {
      if (y < 0 || static_cast<std::size_t>(y) >= c) {
        throw Error("class index " + std::to_string(y) + " out of range");
      }
    }
  } else if (targets.is_labels() || targets.multi_hot().cols() != c) {
    throw Error("sigmoid head needs multi-hot targets with " +
                std::to_string(c) + " columns");
  }
}

double TaskLoss(const Tensor& logits, const Targets& targets, OutputMode mode) {
  CheckTargets(logits, targets, mode);
  const std::size_t n = logits.rows(), c = logits.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    auto z = logits.row(r);
    if (mode == OutputMode::kSoftmax) {
      total += LogSumExp(z) - z[targets.labels()[r]];
    } else {
      for (std::size_t k = 0; k < c; ++k) {
        total += BinaryCrossEntropyWithLogit(z[k], targets.multi_hot()(r, k));
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

std::string ToString(OutputMode mode) {
  return mode == OutputMode::kSoftmax ? "softmax" : "sigmoid";
}

std::string ToString(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "identity";
}

OutputMode ParseOutputMode(const std::string& text) {
  if (text == "softmax") return OutputMode::kSoftmax;
  if (text == "sigmoid") return OutputMode::kSigmoid;
  throw Error("unknown output mode '" + text + "'");
}

Activation ParseActivation(const std::string& text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "identity" || text == "linear") return Activation::kIdentity;
  throw Error("unknown activation '" + text + "'");
}

void NetShape::Validate() const {
  if (input_dim == 0 || width == 0 || hidden == 0 || num_classes == 0) {
    throw Error("net widths must be positive");
  }
  if (num_blocks < 1) throw Error("a residual net needs at least one block");
}

ResidualNet::ResidualNet(const NetShape& shape) : shape_(shape) {
  shape_.Validate();
  stem_ = MakeAffine("stem", shape.input_dim, shape.width);
  for (std::size_t l = 1; l <= shape.num_blocks; ++l) {
    const std::string name = "block" + std::to_string(l);
    blocks_.push_back({static_cast<int>(l),
                       MakeAffine(name + ".fc1", shape.width, shape.hidden),
                       MakeAffine(name + ".fc2", shape.hidden, shape.width)});
  }
  head_ = MakeAffine("head", shape.width, shape.num_classes);
}

ResidualNet ResidualNet::Initialize(const NetShape& shape, std::uint64_t seed) {
  ResidualNet net(shape);
  Rng rng(DeriveSeed(seed, "init"));
  for (Parameter* p : net.Parameters()) {
    if (!p->decayed) continue;
    const double fan_in = static_cast<double>(p->value.cols());
    // He scaling for layers feeding a ReLU; the head gets the plain 1/fan_in.
    const bool is_head = p->id.starts_with("head");
    const double stddev = std::sqrt((is_head ? 1.0 : 2.0) / fan_in);
    for (double& v : p->value.data()) v = rng.Normal(0.0, stddev);
  }
  return net;
}

std::vector<Parameter*> ResidualNet::Parameters() {
  std::vector<Parameter*> out{&stem_.weight, &stem_.bias};
  for (ResidualBlock& b : blocks_) {
    out.insert(out.end(),
               {&b.fc1.weight, &b.fc1.bias, &b.fc2.weight, &b.fc2.bias});
  }
  out.insert(out.end(), {&head_.weight, &head_.bias});
  return out;
}

std::vector<const Parameter*> ResidualNet::Parameters() const {
  auto mutable_params = const_cast<ResidualNet*>(this)->Parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

void ResidualNet::ZeroGrad() {
  for (Parameter* p : Parameters()) p->grad.Fill(0.0);
}

double ResidualNet::WeightSquaredNorm() const {
  double total = 0.0;
  for (const Parameter* p : Parameters()) {
    if (!p->decayed) continue;
    for (double v : p->value.data()) total += v * v;
  }
  return total;
}

bool ResidualNet::SameValues(const ResidualNet& other) const {
  if (!(shape_ == other.shape_)) return false;
  auto a = Parameters();
  auto b = other.Parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i]->value == b[i]->value)) return false;
  }
  return true;
}

Tensor Forward(const ResidualNet& net, const Tensor& x,
               const ScalingSet* scalings) {
  return ForwardImpl(net, x, scalings, nullptr);
}

Tensor Probabilities(const Tensor& logits, OutputMode mode) {
  Tensor probs = logits;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto p = probs.row(r);
    if (mode == OutputMode::kSoftmax) {
      const double lse = LogSumExp(logits.row(r));
      for (double& v : p) v = std::exp(v - lse);
    } else {
      for (double& v : p) v = Sigmoid(v);
    }
  }
  return probs;
}

Targets Targets::Labels(std::vector<int> labels) {
  Targets t;
  t.is_labels_ = true;
  t.labels_ = std::move(labels);
  return t;
}

Targets Targets::MultiHot(Tensor multi_hot) {
  Targets t;
  t.is_labels_ = false;
  t.multi_hot_ = std::move(multi_hot);
  return t;
}

Targets Targets::OneHot(std::span<const int> labels, std::size_t num_classes) {
  Tensor m = Tensor::Matrix(labels.size(), num_classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    m(r, static_cast<std::size_t>(labels[r])) = 1.0;
  }
  return MultiHot(std::move(m));
}

std::size_t Targets::size() const {
  return is_labels_ ? labels_.size()
                    : (multi_hot_.empty() ? 0 : multi_hot_.rows());
}

Targets Targets::Subset(std::span<const std::size_t> rows) const {
  if (!is_labels_) return MultiHot(multi_hot_.GatherRows(rows));
  std::vector<int> picked;
  picked.reserve(rows.size());
  for (std::size_t r : rows) picked.push_back(labels_.at(r));
  return Labels(std::move(picked));
}

double Loss(const Tensor& logits, const Targets& targets,
            const ResidualNet& net, double weight_decay) {
  return TaskLoss(logits, targets, net.shape().output_mode) +
         weight_decay * net.WeightSquaredNorm();
}

double Backward(ResidualNet& net, const Tensor& x, const Targets& targets,
                double weight_decay, const ScalingSet* scalings) {
  Trace trace;
  const Tensor logits = ForwardImpl(net, x, scalings, &trace);
  const OutputMode mode = net.shape().output_mode;
  const double loss = Loss(logits, targets, net, weight_decay);

  const std::size_t n = logits.rows(), c = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor g = Probabilities(logits, mode);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < c; ++k) {
      const double y = mode == OutputMode::kSoftmax
                           ? (targets.labels()[r] == static_cast<int>(k))
                           : targets.multi_hot()(r, k);
      g(r, k) = (g(r, k) - y) * inv_n;
    }
  }

  net.ZeroGrad();
  Tensor dh = AffineBackward(net.head(), trace.head_in, g);
  const bool relu = net.shape().activation == Activation::kRelu;
  for (std::size_t l = net.blocks().size(); l-- > 0;) {
    ResidualBlock& block = net.blocks()[l];
    BlockTrace& bt = trace.blocks[l];
    Tensor dres = dh;
    if (bt.scaling && !bt.scaling->row_scale.empty()) {
      for (std::size_t r = 0; r < dres.rows(); ++r) {
        const double f = RowFactor(bt.scaling->row_scale, r);
        for (double& v : dres.row(r)) v *= f;
      }
    }
    Tensor dact = AffineBackward(block.fc2, bt.activation, dres);
    for (std::size_t r = 0; r < dact.rows(); ++r) {
      auto d = dact.row(r);
      auto pre = bt.pre.row(r);
      for (std::size_t j = 0; j < d.size(); ++j) {
        if (bt.scaling && !bt.scaling->unit_scale.empty()) {
          d[j] *= bt.scaling->unit_scale[j];
        }
        if (relu && pre[j] <= 0.0) d[j] = 0.0;
      }
    }
    Tensor dx = AffineBackward(block.fc1, bt.input, dact);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dx[i];
  }
  AffineBackward(net.stem(), x, dh);

  if (weight_decay != 0.0) {
    for (Parameter* p : net.Parameters()) {
      if (!p->decayed) continue;
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->grad[i] += 2.0 * weight_decay * p->value[i];
      }
    }
  }
  return loss;
}

void SgdStep(ResidualNet& net, double learning_rate) {
  for (Parameter* p : net.Parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->value[i] -= learning_rate * p->grad[i];
    }
  }
}

}  // namespace mcsd
