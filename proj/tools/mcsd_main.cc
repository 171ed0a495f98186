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

// mcsd: command-line front end for data generation, training, MC evaluation,
// sweeps, shift runs and IPP selection.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcsd/checkpoint.h"
#include "mcsd/config.h"
#include "mcsd/harness.h"
#include "mcsd/mc_inference.h"
#include "mcsd/metrics.h"
#include "mcsd/random.h"

namespace {

namespace fs = std::filesystem;
using mcsd::ExperimentConfig;

// Raw flag values. Each is applied on top of the config file only when the
// flag was given on the command line.
struct Flags {
  std::string config_path;
  std::string task, dataset, output_mode, activation;
  std::string output_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t train_size = 0, test_size = 0, classes = 0, dim = 0;
  double radius = 0, spread = 0, label_noise = 0, moon_noise = 0;
  std::size_t images = 0, max_objects = 0;
  std::size_t blocks = 0, width = 0, hidden = 0;
  double lr = 0, weight_decay = 0;
  std::size_t epochs = 0, batch_size = 0;
  std::string method, adapted_blocks, mode;
  double drop_rate = 0, conf_threshold = 0;
  std::size_t block_size = 0, passes = 0;
  std::vector<std::string> grid_methods, grid_adapted;
  std::vector<double> grid_rates, grid_thresholds;
  std::vector<std::size_t> grid_passes;
  std::size_t ece_bins = 0;
  double bsas_iou = 0, match_iou = 0;
};

class ConfigFlags {
 public:
  void Register(CLI::App* app) {
    app->add_option("-c,--config", f_.config_path, "JSON experiment config");
    Add(app, "--task", f_.task, "classification | detection",
        [this](ExperimentConfig& c) { c.task = mcsd::ParseTask(f_.task); });
    Add(app, "--dataset", f_.dataset,
        "blobs-classification | moons-classification | boxes-detection",
        [this](ExperimentConfig& c) {
          c.dataset_kind = mcsd::ParseDatasetKind(f_.dataset);
        });
    Add(app, "--seed", f_.seed, "root seed",
        [this](ExperimentConfig& c) { c.seed = f_.seed; });
    Add(app, "-o,--output-dir", f_.output_dir, "output directory",
        [this](ExperimentConfig& c) { c.output_dir = f_.output_dir; });
    Add(app, "--threads", f_.threads, "worker threads",
        [this](ExperimentConfig& c) { c.threads = f_.threads; });

    Add(app, "--train-size", f_.train_size, "training samples",
        [this](ExperimentConfig& c) { c.dataset.train_size = f_.train_size; });
    Add(app, "--test-size", f_.test_size, "test samples",
        [this](ExperimentConfig& c) { c.dataset.test_size = f_.test_size; });
    Add(app, "--classes", f_.classes, "number of classes",
        [this](ExperimentConfig& c) { c.dataset.num_classes = f_.classes; });
    Add(app, "--dim", f_.dim, "feature dimension",
        [this](ExperimentConfig& c) { c.dataset.dim = f_.dim; });
    Add(app, "--radius", f_.radius, "blob centre radius",
        [this](ExperimentConfig& c) { c.dataset.radius = f_.radius; });
    Add(app, "--spread", f_.spread, "blob stddev",
        [this](ExperimentConfig& c) { c.dataset.spread = f_.spread; });
    Add(app, "--label-noise", f_.label_noise, "label flip probability",
        [this](ExperimentConfig& c) { c.dataset.label_noise = f_.label_noise; });
    Add(app, "--moon-noise", f_.moon_noise, "moons jitter",
        [this](ExperimentConfig& c) { c.dataset.moon_noise = f_.moon_noise; });
    Add(app, "--images", f_.images, "detection images",
        [this](ExperimentConfig& c) { c.dataset.images = f_.images; });
    Add(app, "--max-objects", f_.max_objects, "objects per image",
        [this](ExperimentConfig& c) { c.dataset.max_objects = f_.max_objects; });

    Add(app, "--blocks", f_.blocks, "residual blocks",
        [this](ExperimentConfig& c) { c.net.num_blocks = f_.blocks; });
    Add(app, "--width", f_.width, "residual stream width",
        [this](ExperimentConfig& c) { c.net.width = f_.width; });
    Add(app, "--hidden", f_.hidden, "hidden units per block",
        [this](ExperimentConfig& c) { c.net.hidden = f_.hidden; });
    Add(app, "--output-mode", f_.output_mode, "softmax | sigmoid",
        [this](ExperimentConfig& c) {
          c.net.output_mode = mcsd::ParseOutputMode(f_.output_mode);
        });
    Add(app, "--activation", f_.activation, "relu | identity",
        [this](ExperimentConfig& c) {
          c.net.activation = mcsd::ParseActivation(f_.activation);
        });

    Add(app, "--lr", f_.lr, "learning rate",
        [this](ExperimentConfig& c) { c.train.learning_rate = f_.lr; });
    Add(app, "--weight-decay", f_.weight_decay, "L2 coefficient",
        [this](ExperimentConfig& c) { c.train.weight_decay = f_.weight_decay; });
    Add(app, "--epochs", f_.epochs, "training epochs",
        [this](ExperimentConfig& c) { c.train.epochs = f_.epochs; });
    Add(app, "--batch-size", f_.batch_size, "minibatch size",
        [this](ExperimentConfig& c) { c.train.batch_size = f_.batch_size; });

    Add(app, "--method", f_.method, "MCD | MCDB | MCSD",
        [this](ExperimentConfig& c) { c.method.method = f_.method; });
    Add(app, "--drop-rate", f_.drop_rate, "drop probability",
        [this](ExperimentConfig& c) { c.method.drop_rate = f_.drop_rate; });
    Add(app, "--adapted-blocks", f_.adapted_blocks,
        "all | first-half | last-half | single-first | single-last | i;j;...",
        [this](ExperimentConfig& c) {
          c.method.adapted_blocks = f_.adapted_blocks;
        });
    Add(app, "--block-size", f_.block_size, "MCDB span length",
        [this](ExperimentConfig& c) { c.method.block_size = f_.block_size; });
    Add(app, "-T,--passes", f_.passes, "MC passes",
        [this](ExperimentConfig& c) { c.method.passes = f_.passes; });
    Add(app, "--mode", f_.mode, "mc_inference | deterministic_scaled",
        [this](ExperimentConfig& c) {
          c.method.mode = mcsd::ParseDropMode(f_.mode);
        });
    Add(app, "--conf-threshold", f_.conf_threshold, "confidence threshold",
        [this](ExperimentConfig& c) {
          c.method.conf_threshold = f_.conf_threshold;
        });

    Add(app, "--grid-methods", f_.grid_methods, "sweep methods",
        [this](ExperimentConfig& c) { c.grid.methods = f_.grid_methods; });
    Add(app, "--grid-drop-rates", f_.grid_rates, "sweep drop rates",
        [this](ExperimentConfig& c) { c.grid.drop_rates = f_.grid_rates; });
    Add(app, "--grid-passes", f_.grid_passes, "sweep MC pass counts",
        [this](ExperimentConfig& c) { c.grid.passes = f_.grid_passes; });
    Add(app, "--grid-conf-thresholds", f_.grid_thresholds,
        "sweep confidence thresholds", [this](ExperimentConfig& c) {
          c.grid.conf_thresholds = f_.grid_thresholds;
        });
    Add(app, "--grid-adapted-blocks", f_.grid_adapted, "sweep block presets",
        [this](ExperimentConfig& c) { c.grid.adapted_blocks = f_.grid_adapted; });

    Add(app, "--ece-bins", f_.ece_bins, "calibration bins",
        [this](ExperimentConfig& c) { c.ece_bins = f_.ece_bins; });
    Add(app, "--bsas-iou", f_.bsas_iou, "fusion IoU threshold",
        [this](ExperimentConfig& c) { c.bsas_iou = f_.bsas_iou; });
    Add(app, "--match-iou", f_.match_iou, "TP/FP IoU threshold",
        [this](ExperimentConfig& c) { c.match_iou = f_.match_iou; });
  }

  ExperimentConfig Resolve() const {
    ExperimentConfig cfg = f_.config_path.empty()
                               ? ExperimentConfig{}
                               : mcsd::LoadConfig(f_.config_path);
    for (const auto& [opt, apply] : setters_) {
      if (opt->count() > 0) apply(cfg);
    }
    cfg.Finalize();
    return cfg;
  }

 private:
  using Setter = std::function<void(ExperimentConfig&)>;

  template <typename T>
  void Add(CLI::App* app, const std::string& name, T& target,
           const std::string& help, Setter apply) {
    CLI::Option* opt = app->add_option(name, target, help);
    if constexpr (requires { target.push_back(target.front()); }) {
      opt->delimiter(',');
    }
    setters_.emplace_back(opt, std::move(apply));
  }

  Flags f_;
  std::vector<std::pair<CLI::Option*, Setter>> setters_;
};

void PrintReport(std::ostream& out, const mcsd::EvalReport& r) {
  out << "map_50_95=" << mcsd::FormatReal(r.map_50_95)
      << " brier=" << mcsd::FormatReal(r.brier)
      << " ece=" << mcsd::FormatReal(r.ece)
      << " auarc=" << mcsd::FormatReal(r.auarc)
      << " mean_entropy=" << mcsd::FormatReal(r.mean_entropy) << '\n';
}

mcsd::ConfigPoint MethodPoint(const ExperimentConfig& cfg) {
  return {cfg.method.method, cfg.method.drop_rate, cfg.method.passes,
          cfg.method.conf_threshold, cfg.method.adapted_blocks};
}

std::string OutputPath(const ExperimentConfig& cfg, const std::string& given,
                       const std::string& fallback) {
  if (!given.empty()) {
    const fs::path parent = fs::path(given).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    return given;
  }
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / fallback).string();
}

int MakeData(const ExperimentConfig& cfg) {
  const auto paths =
      mcsd::MakeDatasetFiles(cfg.dataset_kind, cfg.dataset, cfg.detector,
                             cfg.method.passes, cfg.seed, cfg.output_dir);
  for (const auto& p : paths) std::cout << p << '\n';
  return 0;
}

int Train(const ExperimentConfig& cfg, const std::string& train_csv,
          const std::string& checkpoint) {
  mcsd::TaskData task = mcsd::BuildTaskData(cfg);
  if (!train_csv.empty()) {
    task.data.train = mcsd::LoadDatasetCsv(train_csv, cfg.net.num_classes);
  }
  const auto& m = cfg.method;
  const mcsd::TrainResult result =
      mcsd::TrainCell(cfg, task, m.method, m.drop_rate, m.adapted_blocks);
  const std::string path = OutputPath(cfg, checkpoint, "model.ckpt");
  mcsd::TrainConfig train = cfg.train;
  mcsd::SaveCheckpoint(path, result.net, &train);
  std::ofstream trace(fs::path(path).replace_extension(".loss.csv"));
  mcsd::WriteLossTrace(trace, result.loss_trace);
  std::cout << "checkpoint " << path << " final_loss "
            << mcsd::FormatReal(result.loss_trace.back()) << '\n';
  return 0;
}

int EvalDetectionFiles(const ExperimentConfig& cfg, const std::string& dets_path,
                       const std::string& gt_path) {
  std::ifstream dets_in(dets_path), gt_in(gt_path);
  if (!dets_in) throw mcsd::Error("cannot open " + dets_path);
  if (!gt_in) throw mcsd::Error("cannot open " + gt_path);
  const auto dets = mcsd::ReadDetections(dets_in);
  const auto gts = mcsd::ReadGroundTruth(gt_in);
  std::map<int, std::vector<mcsd::Detection>> by_image;
  for (const auto& d : dets) by_image[d.image_id].push_back(d);
  std::vector<mcsd::ClusteredObservation> clusters;
  for (const auto& [image, group] : by_image) {
    for (auto& c : mcsd::BsasCluster(group, cfg.bsas_iou,
                                     mcsd::SemanticRule::kArgmaxMatch)) {
      clusters.push_back(std::move(c));
    }
  }
  const auto eval = mcsd::EvaluateDetection(
      clusters, gts, cfg.net.output_mode, cfg.method.conf_threshold,
      cfg.ece_bins, cfg.match_iou);
  PrintReport(std::cout, eval.report);
  return 0;
}

int Eval(const ExperimentConfig& cfg, const std::string& checkpoint,
         const std::string& test_csv, const std::string& summary_path,
         bool deterministic) {
  deterministic =
      deterministic || cfg.method.mode == mcsd::DropMode::kDeterministicScaled;
  if (checkpoint.empty()) {
    if (deterministic) throw mcsd::Error("deterministic evaluation needs --checkpoint");
    const auto eval = mcsd::RunPoint(cfg, MethodPoint(cfg));
    PrintReport(std::cout, eval.report);
    return 0;
  }
  const mcsd::Checkpoint ckpt = mcsd::LoadCheckpoint(checkpoint);
  const auto& m = cfg.method;
  mcsd::StochasticSpec spec = cfg.SpecFor(m.method, m.drop_rate, m.adapted_blocks);
  mcsd::TaskData task = mcsd::BuildTaskData(cfg);
  if (ckpt.net.shape() != cfg.net) {
    throw mcsd::Error("checkpoint architecture does not match the config");
  }
  const std::uint64_t mc_seed =
      mcsd::McSeed(cfg, m.method, m.drop_rate, m.adapted_blocks, m.passes);
  mcsd::PointEvaluation eval;
  if (cfg.task == mcsd::Task::kClassification) {
    if (!test_csv.empty()) {
      task.data.test = mcsd::LoadDatasetCsv(test_csv, cfg.net.num_classes);
    }
    const mcsd::Tensor& x = task.data.test.features;
    mcsd::Tensor probs;
    if (deterministic) {
      probs = mcsd::DeterministicPredict(ckpt.net, x, spec);
    } else {
      const auto summary = mcsd::McPredict(ckpt.net, x, spec, m.passes, mc_seed);
      if (!summary_path.empty()) {
        std::ofstream out(summary_path);
        if (!out) throw mcsd::Error("cannot open " + summary_path);
        mcsd::WritePredictiveSummary(out, summary);
      }
      probs = summary.mean_probs;
    }
    eval = mcsd::EvaluateClassification(probs, task.data.test.labels,
                                        cfg.net.output_mode, m.conf_threshold,
                                        cfg.ece_bins);
  } else {
    if (deterministic) {
      throw mcsd::Error("deterministic evaluation applies to classification only");
    }
    const auto clusters = mcsd::RunDetectionPasses(
        cfg, ckpt.net, spec, m.passes, mc_seed, task.scenes, task.object_features);
    eval = mcsd::EvaluateDetection(clusters, task.scenes, cfg.net.output_mode,
                                   m.conf_threshold, cfg.ece_bins, cfg.match_iou);
  }
  PrintReport(std::cout, eval.report);
  return 0;
}

int Sweep(const ExperimentConfig& cfg) {
  const mcsd::SweepResult result = mcsd::RunSweep(cfg, cfg.output_dir);
  std::cout << "cells " << result.cells << " failed " << result.failed_cells
            << " rows " << result.rows.size() << " training_runs "
            << result.training_runs << '\n';
  for (const auto& f : result.failures) std::cerr << "failure: " << f << '\n';
  if (!result.rows.empty()) {
    const mcsd::ConfigPoint best = mcsd::IppSelect(result.rows);
    std::cout << "ipp " << best.method << " drop_rate="
              << mcsd::FormatReal(best.drop_rate) << " T=" << best.passes
              << " conf=" << mcsd::FormatReal(best.conf_threshold)
              << " blocks=" << best.adapted_blocks << '\n';
  }
  return result.ExitCode();
}

mcsd::ShiftSpec DefaultShift() {
  mcsd::ShiftSpec spec;
  spec.levels = {{"clean", 0.0, 0.0, 0.0},
                 {"mild", 0.5, 0.15, 0.1},
                 {"moderate", 1.0, 0.3, 0.2},
                 {"severe", 1.5, 0.45, 0.3}};
  return spec;
}

int Shift(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const mcsd::ShiftSpec shift =
      cfg.shift.levels.empty() ? DefaultShift() : cfg.shift;
  std::optional<mcsd::Checkpoint> ckpt;
  if (!checkpoint.empty()) ckpt = mcsd::LoadCheckpoint(checkpoint);
  const auto rows =
      mcsd::RunShift(cfg, cfg.method, shift, ckpt ? &ckpt->net : nullptr);
  std::ostringstream csv;
  mcsd::WriteShiftCsv(csv, rows);
  fs::create_directories(cfg.output_dir);
  mcsd::WriteFileAtomically(
      (fs::path(cfg.output_dir) / "shift_curve.csv").string(), csv.str());
  std::cout << csv.str();
  return 0;
}

int Select(const std::string& reports_path, bool front) {
  std::ifstream in(reports_path);
  if (!in) throw mcsd::Error("cannot open " + reports_path);
  const auto rows = mcsd::ReadReportsCsv(in);
  if (rows.empty()) throw mcsd::Error("no rows in " + reports_path);
  if (front) {
    std::ostringstream out;
    mcsd::WriteReportsCsv(out, mcsd::ParetoFront(rows));
    std::cout << out.str();
    return 0;
  }
  const std::size_t best = mcsd::IppSelectIndex(rows);
  std::ostringstream out;
  mcsd::WriteReportsCsv(out, std::span(rows).subspan(best, 1));
  std::cout << out.str() << "ipp_distance "
            << mcsd::FormatReal(mcsd::IdealPointDistance(rows[best].second))
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo stochastic-depth experiments"};
  app.require_subcommand(1);

  ConfigFlags data_flags, train_flags, eval_flags, sweep_flags, shift_flags,
      config_flags;
  std::string train_csv, test_csv, checkpoint, summary_path, dets_path,
      gt_path, reports_path;
  bool deterministic = false, front = false;

  auto* make_data = app.add_subcommand("make-data", "write synthetic dataset files");
  data_flags.Register(make_data);

  auto* train = app.add_subcommand("train", "train one model and save a checkpoint");
  train_flags.Register(train);
  train->add_option("--train-csv", train_csv, "train on this CSV instead");
  train->add_option("--checkpoint", checkpoint, "checkpoint output path");

  auto* eval = app.add_subcommand("eval", "evaluate one configuration");
  eval_flags.Register(eval);
  eval->add_option("--checkpoint", checkpoint, "trained model (else train first)");
  eval->add_option("--test-csv", test_csv, "evaluate on this CSV");
  eval->add_option("--summary", summary_path, "write per-pass probabilities");
  eval->add_flag("--deterministic", deterministic,
                 "single mask-free pass with expectation scaling");
  eval->add_option("--detections", dets_path, "detections CSV to fuse and score");
  eval->add_option("--ground-truth", gt_path, "ground-truth CSV");

  auto* sweep = app.add_subcommand("sweep", "train and evaluate the full grid");
  sweep_flags.Register(sweep);

  auto* shift = app.add_subcommand("shift", "evaluate under increasing shift");
  shift_flags.Register(shift);
  shift->add_option("--checkpoint", checkpoint, "trained model (else train first)");

  auto* select = app.add_subcommand("select", "pick the IPP row of a report CSV");
  select->add_option("reports", reports_path, "reports.csv")->required();
  select->add_flag("--pareto", front, "print the Pareto front instead");

  auto* show = app.add_subcommand("config", "print the effective config as JSON");
  config_flags.Register(show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*make_data) return MakeData(data_flags.Resolve());
    if (*train) return Train(train_flags.Resolve(), train_csv, checkpoint);
    if (*eval) {
      const ExperimentConfig cfg = eval_flags.Resolve();
      if (!dets_path.empty() || !gt_path.empty()) {
        if (dets_path.empty() || gt_path.empty()) {
          throw mcsd::Error("--detections and --ground-truth go together");
        }
        return EvalDetectionFiles(cfg, dets_path, gt_path);
      }
      return Eval(cfg, checkpoint, test_csv, summary_path, deterministic);
    }
    if (*sweep) return Sweep(sweep_flags.Resolve());
    if (*shift) return Shift(shift_flags.Resolve(), checkpoint);
    if (*select) return Select(reports_path, front);
    if (*show) {
      std::cout << mcsd::ConfigToJson(config_flags.Resolve()) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "mcsd: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
