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

#include "mcsd/config.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mcsd {
namespace {

using nlohmann::json;

template <typename T>
void Get(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

void CheckKeys(const json& j, std::initializer_list<const char*> keys,
               const std::string& where) {
  if (!j.is_object()) throw Error(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(),
                     [&](const char* k) { return key == k; }) == keys.end()) {
      throw Error("unknown config key '" + where + "." + key + "'");
    }
  }
}

}  // namespace

std::string ToString(Task task) {
  return task == Task::kClassification ? "classification" : "detection";
}

Task ParseTask(const std::string& text) {
  if (text == "classification") return Task::kClassification;
  if (text == "detection") return Task::kDetection;
  throw Error("unknown task '" + text + "'");
}

std::string MethodName(DropKind kind) {
  switch (kind) {
    case DropKind::kUnitDrop:
      return "MCD";
    case DropKind::kBlockDrop:
      return "MCDB";
    case DropKind::kPathDrop:
      return "MCSD";
  }
  return "?";
}

DropKind MethodKind(const std::string& method) {
  if (method == "MCD") return DropKind::kUnitDrop;
  if (method == "MCDB") return DropKind::kBlockDrop;
  if (method == "MCSD") return DropKind::kPathDrop;
  throw Error("unknown method '" + method + "' (expected MCD, MCDB or MCSD)");
}

std::vector<int> ResolveAdaptedBlocks(const std::string& preset,
                                      std::size_t num_blocks) {
  const int l = static_cast<int>(num_blocks);
  const int half = std::max(1, l / 2);
  std::vector<int> blocks;
  auto range = [&](int lo, int hi) {
    for (int b = lo; b <= hi; ++b) blocks.push_back(b);
  };
  if (preset == "all") {
    range(1, l);
  } else if (preset == "first-half") {
    range(1, half);
  } else if (preset == "last-half") {
    range(l - half + 1, l);
  } else if (preset == "single-first") {
    range(1, 1);
  } else if (preset == "single-last") {
    range(l, l);
  } else {
    std::stringstream ss(preset);
    std::string item;
    while (std::getline(ss, item, ';')) {
      std::size_t used = 0;
      int b = 0;
      try {
        b = std::stoi(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != item.size()) {
        throw Error("unknown adapted-blocks preset '" + preset + "'");
      }
      blocks.push_back(b);
    }
    std::sort(blocks.begin(), blocks.end());
    blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  }
  if (blocks.empty()) throw Error("adapted-blocks preset '" + preset + "' is empty");
  for (int b : blocks) {
    if (b < 1 || b > l) {
      throw Error("adapted block " + std::to_string(b) + " outside [1, " +
                  std::to_string(l) + "]");
    }
  }
  return blocks;
}

void ExperimentConfig::Finalize() {
  if (task == Task::kDetection && dataset_kind == DatasetKind::kMoons) {
    throw Error("detection objects are drawn from blobs; use dataset kind blobs");
  }
  if (dataset_kind == DatasetKind::kBoxes) task = Task::kDetection;
  const DatasetKind feature_kind =
      dataset_kind == DatasetKind::kBoxes ? DatasetKind::kBlobs : dataset_kind;
  if (task == Task::kDetection) dataset_kind = DatasetKind::kBoxes;
  dataset.Validate(feature_kind);
  if (dataset_kind == DatasetKind::kBoxes) dataset.Validate(DatasetKind::kBoxes);
  net.input_dim = dataset.dim;
  net.num_classes = feature_kind == DatasetKind::kMoons ? 2 : dataset.num_classes;
  net.Validate();
  train.Validate();
  detector.num_classes = net.num_classes;
  detector.mode = net.output_mode;
  detector.image_width = detector.image_height = dataset.image_size;
  detector.Validate();

  auto check_method = [&](const std::string& m, double rate,
                          const std::string& preset) {
    SpecFor(m, rate, preset).Validate(net.num_blocks);
  };
  check_method(method.method, method.drop_rate, method.adapted_blocks);
  if (method.mode == DropMode::kTraining) {
    throw Error("method.mode must be mc_inference or deterministic_scaled");
  }
  SpecFor(method.method, method.drop_rate, method.adapted_blocks)
      .WithMode(method.mode)
      .Validate(net.num_blocks);
  if (method.passes == 0) throw Error("method.passes must be positive");
  if (grid.methods.empty() || grid.drop_rates.empty() || grid.passes.empty() ||
      grid.conf_thresholds.empty() || grid.adapted_blocks.empty()) {
    throw Error("every grid list must be non-empty");
  }
  for (const auto& m : grid.methods) {
    for (double r : grid.drop_rates) {
      for (const auto& p : grid.adapted_blocks) check_method(m, r, p);
    }
  }
  for (std::size_t t : grid.passes) {
    if (t == 0) throw Error("grid passes must be positive");
  }
  for (double c : grid.conf_thresholds) {
    if (!(c >= 0.0 && c <= 1.0)) throw Error("conf thresholds must be in [0, 1]");
  }
  if (ece_bins == 0) throw Error("ece_bins must be positive");
  if (threads == 0) threads = 1;
  if (!shift.levels.empty()) shift.Validate();
}

StochasticSpec ExperimentConfig::SpecFor(const std::string& m, double drop_rate,
                                         const std::string& adapted) const {
  StochasticSpec spec;
  spec.kind = MethodKind(m);
  spec.drop_rate = drop_rate;
  spec.block_size = method.block_size;
  spec.adapted_blocks = ResolveAdaptedBlocks(adapted, net.num_blocks);
  spec.mode = DropMode::kMCInference;
  return spec;
}

ExperimentConfig ConfigFromJson(const std::string& text) {
  ExperimentConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    CheckKeys(j,
              {"task", "seed", "output_dir", "threads", "ece_bins", "bsas_iou",
               "match_iou", "dataset", "net", "train", "method", "grid",
               "detector", "shift"},
              "config");
    if (j.contains("task")) cfg.task = ParseTask(j.at("task").get<std::string>());
    Get(j, "seed", cfg.seed);
    Get(j, "output_dir", cfg.output_dir);
    Get(j, "threads", cfg.threads);
    Get(j, "ece_bins", cfg.ece_bins);
    Get(j, "bsas_iou", cfg.bsas_iou);
    Get(j, "match_iou", cfg.match_iou);

    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      CheckKeys(d,
                {"kind", "train_size", "test_size", "num_classes", "dim",
                 "radius", "spread", "label_noise", "moon_noise", "images",
                 "max_objects", "image_size"},
                "dataset");
      if (d.contains("kind")) {
        cfg.dataset_kind = ParseDatasetKind(d.at("kind").get<std::string>());
      }
      auto& p = cfg.dataset;
      Get(d, "train_size", p.train_size);
      Get(d, "test_size", p.test_size);
      Get(d, "num_classes", p.num_classes);
      Get(d, "dim", p.dim);
      Get(d, "radius", p.radius);
      Get(d, "spread", p.spread);
      Get(d, "label_noise", p.label_noise);
      Get(d, "moon_noise", p.moon_noise);
      Get(d, "images", p.images);
      Get(d, "max_objects", p.max_objects);
      Get(d, "image_size", p.image_size);
    }
    if (j.contains("net")) {
      const json& n = j.at("net");
      CheckKeys(n, {"width", "hidden", "blocks", "output_mode", "activation"},
                "net");
      Get(n, "width", cfg.net.width);
      Get(n, "hidden", cfg.net.hidden);
      Get(n, "blocks", cfg.net.num_blocks);
      if (n.contains("output_mode")) {
        cfg.net.output_mode = ParseOutputMode(n.at("output_mode").get<std::string>());
      }
      if (n.contains("activation")) {
        cfg.net.activation = ParseActivation(n.at("activation").get<std::string>());
      }
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      CheckKeys(t, {"learning_rate", "weight_decay", "epochs", "batch_size"},
                "train");
      Get(t, "learning_rate", cfg.train.learning_rate);
      Get(t, "weight_decay", cfg.train.weight_decay);
      Get(t, "epochs", cfg.train.epochs);
      Get(t, "batch_size", cfg.train.batch_size);
    }
    if (j.contains("method")) {
      const json& m = j.at("method");
      CheckKeys(m,
                {"method", "kind", "drop_rate", "adapted_blocks",
                 "block_size", "passes", "conf_threshold", "mode"},
                "method");
      Get(m, "method", cfg.method.method);
      if (m.contains("kind")) {
        const std::string kind =
            MethodName(ParseDropKind(m.at("kind").get<std::string>()));
        if (m.contains("method") &&
            MethodName(MethodKind(cfg.method.method)) != kind) {
          throw Error("method.kind '" + m.at("kind").get<std::string>() +
                      "' contradicts method.method '" + cfg.method.method + "'");
        }
        cfg.method.method = kind;
      }
      if (m.contains("mode")) {
        cfg.method.mode = ParseDropMode(m.at("mode").get<std::string>());
      }
      Get(m, "drop_rate", cfg.method.drop_rate);
      Get(m, "adapted_blocks", cfg.method.adapted_blocks);
      Get(m, "block_size", cfg.method.block_size);
      Get(m, "passes", cfg.method.passes);
      Get(m, "conf_threshold", cfg.method.conf_threshold);
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      CheckKeys(g,
                {"methods", "drop_rates", "passes", "conf_thresholds",
                 "adapted_blocks"},
                "grid");
      Get(g, "methods", cfg.grid.methods);
      Get(g, "drop_rates", cfg.grid.drop_rates);
      Get(g, "passes", cfg.grid.passes);
      Get(g, "conf_thresholds", cfg.grid.conf_thresholds);
      Get(g, "adapted_blocks", cfg.grid.adapted_blocks);
    }
    if (j.contains("detector")) {
      const json& d = j.at("detector");
      CheckKeys(d,
                {"box_sigma", "miss_prob", "hallucination_rate", "sharpness",
                 "logit_noise"},
                "detector");
      Get(d, "box_sigma", cfg.detector.box_sigma);
      Get(d, "miss_prob", cfg.detector.miss_prob);
      Get(d, "hallucination_rate", cfg.detector.hallucination_rate);
      Get(d, "sharpness", cfg.detector.sharpness);
      Get(d, "logit_noise", cfg.detector.logit_noise);
    }
    if (j.contains("shift")) {
      for (const json& l : j.at("shift").at("levels")) {
        CheckKeys(l, {"name", "noise", "rotation", "drift"}, "shift.levels[]");
        ShiftLevel level;
        Get(l, "name", level.name);
        Get(l, "noise", level.noise);
        Get(l, "rotation", level.rotation);
        Get(l, "drift", level.drift);
        cfg.shift.levels.push_back(level);
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string ConfigToJson(const ExperimentConfig& cfg) {
  json j;
  j["task"] = ToString(cfg.task);
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["threads"] = cfg.threads;
  j["ece_bins"] = cfg.ece_bins;
  j["bsas_iou"] = cfg.bsas_iou;
  j["match_iou"] = cfg.match_iou;
  const auto& p = cfg.dataset;
  j["dataset"] = {{"kind", ToString(cfg.dataset_kind)},
                  {"train_size", p.train_size},
                  {"test_size", p.test_size},
                  {"num_classes", p.num_classes},
                  {"dim", p.dim},
                  {"radius", p.radius},
                  {"spread", p.spread},
                  {"label_noise", p.label_noise},
                  {"moon_noise", p.moon_noise},
                  {"images", p.images},
                  {"max_objects", p.max_objects},
                  {"image_size", p.image_size}};
  j["net"] = {{"width", cfg.net.width},
              {"hidden", cfg.net.hidden},
              {"blocks", cfg.net.num_blocks},
              {"output_mode", ToString(cfg.net.output_mode)},
              {"activation", ToString(cfg.net.activation)}};
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"weight_decay", cfg.train.weight_decay},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size}};
  j["method"] = {{"kind", ToString(MethodKind(cfg.method.method))},
                 {"drop_rate", cfg.method.drop_rate},
                 {"adapted_blocks", cfg.method.adapted_blocks},
                 {"block_size", cfg.method.block_size},
                 {"passes", cfg.method.passes},
                 {"conf_threshold", cfg.method.conf_threshold},
                 {"mode", ToString(cfg.method.mode)}};
  j["grid"] = {{"methods", cfg.grid.methods},
               {"drop_rates", cfg.grid.drop_rates},
               {"passes", cfg.grid.passes},
               {"conf_thresholds", cfg.grid.conf_thresholds},
               {"adapted_blocks", cfg.grid.adapted_blocks}};
  j["detector"] = {{"box_sigma", cfg.detector.box_sigma},
                   {"miss_prob", cfg.detector.miss_prob},
                   {"hallucination_rate", cfg.detector.hallucination_rate},
                   {"sharpness", cfg.detector.sharpness},
                   {"logit_noise", cfg.detector.logit_noise}};
  json levels = json::array();
  for (const ShiftLevel& l : cfg.shift.levels) {
    levels.push_back({{"name", l.name},
                      {"noise", l.noise},
                      {"rotation", l.rotation},
                      {"drift", l.drift}});
  }
  j["shift"] = {{"levels", levels}};
  return j.dump(2);
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ConfigFromJson(ss.str());
}

}  // namespace mcsd
