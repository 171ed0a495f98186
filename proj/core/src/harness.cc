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

#include "mcsd/harness.h"

#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "mcsd/checkpoint.h"
#include "mcsd/mc_inference.h"
#include "mcsd/random.h"
#include "mcsd/training.h"

namespace mcsd {
namespace {

namespace fs = std::filesystem;

constexpr char kReportHeader[] =
    "method,drop_rate,T,conf_threshold,adapted_blocks,map_50_95,brier,ece,"
    "auarc,mean_entropy";

std::uint64_t CellSeed(const ExperimentConfig& cfg, std::string_view stream,
                       const std::string& method, double drop_rate,
                       const std::string& adapted_blocks) {
  return DeriveSeed(cfg.seed, stream,
                    {SeedKey(method), SeedKey(drop_rate), SeedKey(adapted_blocks)});
}

double MeanUncertainty(std::span<const ScoredPrediction> preds) {
  double sum = 0.0;
  for (const auto& p : preds) sum += p.uncertainty;
  return sum / static_cast<double>(preds.size());
}

void WriteReportRow(std::ostream& out, const ReportRow& row) {
  const ConfigPoint& c = row.first;
  const EvalReport& r = row.second;
  out << c.method << ',' << FormatReal(c.drop_rate) << ',' << c.passes << ','
      << FormatReal(c.conf_threshold) << ',' << c.adapted_blocks << ','
      << FormatReal(r.map_50_95) << ',' << FormatReal(r.brier) << ','
      << FormatReal(r.ece) << ',' << FormatReal(r.auarc) << ','
      << FormatReal(r.mean_entropy);
}

std::string CellName(std::size_t index) {
  std::ostringstream name;
  name << "cell_";
  name.width(4);
  name.fill('0');
  name << index;
  return name.str();
}

struct CellSpec {
  std::string method;
  double drop_rate = 0.0;
  std::string adapted_blocks;
};

struct CellOutcome {
  std::vector<ReportRow> rows;
  std::vector<std::vector<ScoredPrediction>> predictions;
  std::vector<std::string> failures;
  bool failed = false;
  bool trained = false;
  ResidualNet net{NetShape{}};
  std::vector<double> loss_trace;
};

CellOutcome RunCell(const ExperimentConfig& cfg, const TaskData& task,
                    const CellSpec& cell) {
  CellOutcome out;
  const std::string label = cell.method + " rate=" + FormatReal(cell.drop_rate) +
                            " blocks=" + cell.adapted_blocks;
  try {
    TrainResult trained =
        TrainCell(cfg, task, cell.method, cell.drop_rate, cell.adapted_blocks);
    out.trained = true;
    out.net = std::move(trained.net);
    out.loss_trace = std::move(trained.loss_trace);
  } catch (const std::exception& e) {
    out.failed = true;
    out.failures.push_back(label + ": training failed: " + e.what());
    return out;
  }
  const StochasticSpec spec =
      cfg.SpecFor(cell.method, cell.drop_rate, cell.adapted_blocks);
  const OutputMode mode = cfg.net.output_mode;
  for (std::size_t passes : cfg.grid.passes) {
    const std::uint64_t mc_seed =
        McSeed(cfg, cell.method, cell.drop_rate, cell.adapted_blocks, passes);
    PredictiveSummary summary;
    std::vector<ClusteredObservation> clusters;
    try {
      if (cfg.task == Task::kClassification) {
        summary = McPredict(out.net, task.data.test.features, spec, passes, mc_seed);
      } else {
        clusters = RunDetectionPasses(cfg, out.net, spec, passes, mc_seed,
                                      task.scenes, task.object_features);
      }
    } catch (const std::exception& e) {
      out.failures.push_back(label + " T=" + std::to_string(passes) + ": " +
                             e.what());
      continue;
    }
    for (double threshold : cfg.grid.conf_thresholds) {
      ConfigPoint point{cell.method, cell.drop_rate, passes, threshold,
                        cell.adapted_blocks};
      try {
        PointEvaluation eval =
            cfg.task == Task::kClassification
                ? EvaluateClassification(summary.mean_probs,
                                         task.data.test.labels, mode, threshold,
                                         cfg.ece_bins)
                : EvaluateDetection(clusters, task.scenes, mode, threshold,
                                    cfg.ece_bins, cfg.match_iou);
        eval.report.config = point;
        out.rows.emplace_back(point, eval.report);
        out.predictions.push_back(std::move(eval.predictions));
      } catch (const std::exception& e) {
        out.failures.push_back(label + " T=" + std::to_string(passes) +
                               " conf=" + FormatReal(threshold) + ": " + e.what());
      }
    }
  }
  if (out.rows.empty()) out.failed = true;
  return out;
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

TaskData BuildTaskData(const ExperimentConfig& cfg) {
  TaskData task;
  const DatasetKind feature_kind =
      cfg.task == Task::kDetection ? DatasetKind::kBlobs : cfg.dataset_kind;
  task.data = MakeClassificationData(feature_kind, cfg.dataset,
                                     DeriveSeed(cfg.seed, "data"));
  if (cfg.task == Task::kDetection) {
    task.scenes = MakeScenes(cfg.dataset, DeriveSeed(cfg.seed, "scenes"));
    std::vector<int> labels;
    for (const auto& g : task.scenes) labels.push_back(g.class_id);
    task.object_features =
        SampleBlobFeatures(labels, cfg.dataset, DeriveSeed(cfg.seed, "objects"));
  }
  return task;
}

TrainResult TrainCell(const ExperimentConfig& cfg, const TaskData& task,
                      const std::string& method, double drop_rate,
                      const std::string& adapted_blocks) {
  const StochasticSpec spec =
      cfg.SpecFor(method, drop_rate, adapted_blocks).WithMode(DropMode::kTraining);
  TrainConfig train = cfg.train;
  train.seed = CellSeed(cfg, "train", method, drop_rate, adapted_blocks);
  ResidualNet net = ResidualNet::Initialize(cfg.net, DeriveSeed(cfg.seed, "init"));
  return Train(std::move(net), task.data.train, train, &spec);
}

std::uint64_t McSeed(const ExperimentConfig& cfg, const std::string& method,
                     double drop_rate, const std::string& adapted_blocks,
                     std::size_t passes) {
  return DeriveSeed(CellSeed(cfg, "mc", method, drop_rate, adapted_blocks),
                    "passes", {passes});
}

PointEvaluation EvaluateClassification(const Tensor& probs,
                                       std::span<const int> labels,
                                       OutputMode mode, double conf_threshold,
                                       std::size_t ece_bins) {
  if (probs.rows() != labels.size()) throw ShapeError("probs/labels length");
  if (labels.empty()) throw Error("nothing to evaluate");
  PointEvaluation eval;
  std::size_t retained_correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = probs.row(i);
    std::vector<double> p(row.begin(), row.end());
    const bool correct = ArgMax(p) == static_cast<std::size_t>(labels[i]);
    ScoredPrediction pred = MakeScoredPrediction(std::move(p), correct, labels[i], mode);
    if (pred.confidence < conf_threshold) continue;
    retained_correct += correct ? 1 : 0;
    eval.predictions.push_back(std::move(pred));
  }
  if (eval.predictions.empty()) {
    throw Error("no prediction reaches confidence " + FormatReal(conf_threshold));
  }
  EvalReport& r = eval.report;
  r.map_50_95 = static_cast<double>(retained_correct) / static_cast<double>(labels.size());
  r.brier = Brier(eval.predictions);
  r.ece = Ece(eval.predictions, ece_bins);
  r.auarc = Auarc(eval.predictions);
  r.mean_entropy = MeanUncertainty(eval.predictions);
  return eval;
}

std::vector<ClusteredObservation> RunDetectionPasses(
    const ExperimentConfig& cfg, const ResidualNet& net,
    const StochasticSpec& spec, std::size_t passes, std::uint64_t mc_seed,
    std::span<const GroundTruth> scenes, const Tensor& object_features) {
  if (object_features.rows() != scenes.size()) {
    throw ShapeError("one feature row per ground-truth object expected");
  }
  std::vector<Detection> dets = SynthDetector(
      scenes, cfg.detector, passes, DeriveSeed(cfg.seed, "detector", {passes}));

  // Feature rows: scene objects first, then one clutter row per hallucination.
  const std::size_t objects = scenes.size();
  std::size_t clutter = 0;
  for (const Detection& d : dets) clutter += d.source < 0 ? 1 : 0;
  const std::size_t dim = object_features.cols();
  Tensor features = Tensor::Matrix(objects + clutter, dim);
  std::copy(object_features.data().begin(), object_features.data().end(),
            features.data().begin());
  Rng rng(DeriveSeed(cfg.seed, "clutter", {passes}));
  const double scale = std::hypot(cfg.dataset.radius, cfg.dataset.spread);
  for (std::size_t r = objects; r < features.rows(); ++r) {
    for (double& v : features.row(r)) v = scale * rng.Normal();
  }

  const PredictiveSummary summary =
      McPredict(net, features, spec, passes, mc_seed);
  const std::size_t n = features.rows(), c = summary.classes();
  std::size_t next_clutter = objects;
  std::map<int, std::vector<Detection>> by_image;
  for (Detection& d : dets) {
    const std::size_t row =
        d.source >= 0 ? static_cast<std::size_t>(d.source) : next_clutter++;
    const auto src = summary.per_pass_probs.data().subspan(
        (static_cast<std::size_t>(d.pass_index) * n + row) * c, c);
    by_image[d.image_id].push_back(MakeDetection(
        d.image_id, d.pass_index, d.box, {src.begin(), src.end()}, d.source));
  }
  std::vector<ClusteredObservation> clusters;
  for (auto& [image, image_dets] : by_image) {
    auto fused = BsasCluster(image_dets, cfg.bsas_iou, SemanticRule::kArgmaxMatch);
    for (auto& obs : fused) clusters.push_back(std::move(obs));
  }
  return clusters;
}

PointEvaluation EvaluateDetection(std::span<const ClusteredObservation> clusters,
                                  std::span<const GroundTruth> scenes,
                                  OutputMode mode, double conf_threshold,
                                  std::size_t ece_bins, double match_iou) {
  std::vector<ClusteredObservation> kept;
  std::vector<ScoredBox> boxes;
  for (const auto& c : clusters) {
    if (c.confidence() < conf_threshold) continue;
    kept.push_back(c);
    boxes.push_back(ToScoredBox(c));
  }
  if (kept.empty()) {
    throw Error("no observation reaches confidence " + FormatReal(conf_threshold));
  }
  PointEvaluation eval;
  eval.predictions = LabelTpFp(kept, scenes, match_iou, mode);
  EvalReport& r = eval.report;
  r.map_50_95 = MeanAveragePrecision(boxes, scenes).map;
  r.brier = Brier(eval.predictions);
  r.ece = Ece(eval.predictions, ece_bins);
  r.auarc = Auarc(eval.predictions);
  r.mean_entropy = MeanUncertainty(eval.predictions);
  return eval;
}

int SweepResult::ExitCode() const {
  if (cells > 0 && failed_cells == cells) return 1;
  return failures.empty() ? 0 : 2;
}

SweepResult RunSweep(const ExperimentConfig& config, const std::string& output_dir) {
  ExperimentConfig cfg = config;
  cfg.Finalize();
  const TaskData task = BuildTaskData(cfg);

  std::vector<CellSpec> cells;
  for (const auto& method : cfg.grid.methods) {
    for (double rate : cfg.grid.drop_rates) {
      for (const auto& preset : cfg.grid.adapted_blocks) {
        cells.push_back({method, rate, preset});
      }
    }
  }

  if (!output_dir.empty()) {
    fs::create_directories(fs::path(output_dir) / "cells");
    fs::create_directories(fs::path(output_dir) / "models");
  }
  auto persist = [&](std::size_t index, const CellOutcome& outcome) {
    if (output_dir.empty()) return;
    const std::string name = CellName(index);
    std::ostringstream rows;
    for (const ReportRow& row : outcome.rows) {
      WriteReportRow(rows, row);
      rows << '\n';
    }
    WriteFileAtomically((fs::path(output_dir) / "cells" / (name + ".csv")).string(),
                        rows.str());
    if (outcome.trained) {
      std::ostringstream ckpt;
      TrainConfig train = cfg.train;
      train.seed = CellSeed(cfg, "train", cells[index].method,
                            cells[index].drop_rate, cells[index].adapted_blocks);
      WriteCheckpoint(ckpt, outcome.net, &train);
      WriteFileAtomically(
          (fs::path(output_dir) / "models" / (name + ".ckpt")).string(), ckpt.str());
      std::ostringstream trace;
      WriteLossTrace(trace, outcome.loss_trace);
      WriteFileAtomically(
          (fs::path(output_dir) / "models" / (name + "_loss.csv")).string(),
          trace.str());
    }
  };

  std::vector<CellOutcome> outcomes(cells.size());
  const std::size_t workers = std::min(cfg.threads, std::max<std::size_t>(1, cells.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      outcomes[i] = RunCell(cfg, task, cells[i]);
      persist(i, outcomes[i]);
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (;;) {
            std::size_t i;
            {
              std::lock_guard<std::mutex> lock(mu);
              if (next >= cells.size()) return;
              i = next++;
            }
            outcomes[i] = RunCell(cfg, task, cells[i]);
            persist(i, outcomes[i]);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  SweepResult result;
  result.cells = cells.size();
  for (CellOutcome& outcome : outcomes) {
    result.training_runs += outcome.trained ? 1 : 0;
    result.failed_cells += outcome.failed ? 1 : 0;
    for (auto& f : outcome.failures) result.failures.push_back(std::move(f));
    for (std::size_t k = 0; k < outcome.rows.size(); ++k) {
      result.rows.push_back(std::move(outcome.rows[k]));
      result.predictions.push_back(std::move(outcome.predictions[k]));
    }
  }

  if (!output_dir.empty()) {
    std::ostringstream reports;
    WriteReportsCsv(reports, result.rows);
    WriteFileAtomically((fs::path(output_dir) / "reports.csv").string(),
                        reports.str());
    if (!result.failures.empty()) {
      std::ostringstream failures;
      for (const auto& f : result.failures) failures << f << '\n';
      WriteFileAtomically((fs::path(output_dir) / "failures.txt").string(),
                          failures.str());
    }
    std::vector<ShiftRow> shift_rows;
    if (!result.rows.empty() && !cfg.shift.levels.empty()) {
      const ConfigPoint best = IppSelect(result.rows);
      MethodConfig m = cfg.method;
      m.method = best.method;
      m.drop_rate = best.drop_rate;
      m.adapted_blocks = best.adapted_blocks;
      m.passes = best.passes;
      m.conf_threshold = best.conf_threshold;
      shift_rows = RunShift(cfg, m, cfg.shift);
    }
    if (!result.rows.empty()) {
      EmitCurves(output_dir, result.rows, result.predictions, shift_rows);
    }
  }
  return result;
}

PointEvaluation RunPoint(const ExperimentConfig& config, const ConfigPoint& point) {
  ExperimentConfig cfg = config;
  cfg.Finalize();
  const TaskData task = BuildTaskData(cfg);
  const TrainResult trained =
      TrainCell(cfg, task, point.method, point.drop_rate, point.adapted_blocks);
  const StochasticSpec spec =
      cfg.SpecFor(point.method, point.drop_rate, point.adapted_blocks);
  const std::uint64_t mc_seed = McSeed(cfg, point.method, point.drop_rate,
                                       point.adapted_blocks, point.passes);
  PointEvaluation eval;
  if (cfg.task == Task::kClassification) {
    const auto summary = McPredict(trained.net, task.data.test.features, spec,
                                   point.passes, mc_seed);
    eval = EvaluateClassification(summary.mean_probs, task.data.test.labels,
                                  cfg.net.output_mode, point.conf_threshold,
                                  cfg.ece_bins);
  } else {
    const auto clusters = RunDetectionPasses(cfg, trained.net, spec, point.passes,
                                             mc_seed, task.scenes,
                                             task.object_features);
    eval = EvaluateDetection(clusters, task.scenes, cfg.net.output_mode,
                             point.conf_threshold, cfg.ece_bins, cfg.match_iou);
  }
  eval.report.config = point;
  return eval;
}

std::vector<ShiftRow> RunShift(const ExperimentConfig& config,
                               const MethodConfig& method,
                               const ShiftSpec& shift,
                               const ResidualNet* trained) {
  ExperimentConfig cfg = config;
  cfg.Finalize();
  shift.Validate();
  const TaskData task = BuildTaskData(cfg);
  std::optional<ResidualNet> own;
  if (!trained) {
    own = TrainCell(cfg, task, method.method, method.drop_rate,
                    method.adapted_blocks)
              .net;
    trained = &*own;
  }
  const StochasticSpec spec =
      cfg.SpecFor(method.method, method.drop_rate, method.adapted_blocks);
  const std::uint64_t mc_seed = McSeed(cfg, method.method, method.drop_rate,
                                       method.adapted_blocks, method.passes);

  std::vector<ShiftRow> rows;
  for (std::size_t i = 0; i < shift.levels.size(); ++i) {
    const ShiftLevel& level = shift.levels[i];
    const std::uint64_t seed = DeriveSeed(cfg.seed, "shift", {i});
    PointEvaluation eval;
    if (cfg.task == Task::kClassification) {
      const Tensor x = ApplyShift(task.data.test.features, task.data.test.labels,
                                  level, cfg.dataset, seed);
      const auto summary = McPredict(*trained, x, spec, method.passes, mc_seed);
      eval = EvaluateClassification(summary.mean_probs, task.data.test.labels,
                                    cfg.net.output_mode, method.conf_threshold,
                                    cfg.ece_bins);
    } else {
      std::vector<int> labels;
      for (const auto& g : task.scenes) labels.push_back(g.class_id);
      const Tensor x =
          ApplyShift(task.object_features, labels, level, cfg.dataset, seed);
      const auto clusters = RunDetectionPasses(cfg, *trained, spec, method.passes,
                                               mc_seed, task.scenes, x);
      eval = EvaluateDetection(clusters, task.scenes, cfg.net.output_mode,
                               method.conf_threshold, cfg.ece_bins, cfg.match_iou);
    }
    rows.push_back({level.name, eval.report.map_50_95, eval.report.mean_entropy});
  }
  return rows;
}

void WriteReportsCsv(std::ostream& out, std::span<const ReportRow> rows) {
  out << kReportHeader << '\n';
  for (const ReportRow& row : rows) {
    WriteReportRow(out, row);
    out << '\n';
  }
}

std::vector<ReportRow> ReadReportsCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("report file is empty");
  const auto header = SplitCsvLine(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name :
       {"method", "drop_rate", "T", "conf_threshold", "adapted_blocks",
        "map_50_95", "brier", "ece", "auarc", "mean_entropy"}) {
    if (!col.count(name)) {
      throw Error(std::string("report file lacks column '") + name + "'");
    }
  }
  std::vector<ReportRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = SplitCsvLine(line);
    if (f.size() != header.size()) {
      throw Error("report line " + std::to_string(lineno) + " has " +
                  std::to_string(f.size()) + " fields");
    }
    ConfigPoint c{f[col["method"]], std::stod(f[col["drop_rate"]]),
                  static_cast<std::size_t>(std::stoul(f[col["T"]])),
                  std::stod(f[col["conf_threshold"]]), f[col["adapted_blocks"]]};
    EvalReport r;
    r.map_50_95 = std::stod(f[col["map_50_95"]]);
    r.brier = std::stod(f[col["brier"]]);
    r.ece = std::stod(f[col["ece"]]);
    r.auarc = std::stod(f[col["auarc"]]);
    r.mean_entropy = std::stod(f[col["mean_entropy"]]);
    r.config = c;
    rows.emplace_back(c, r);
  }
  return rows;
}

void WriteShiftCsv(std::ostream& out, std::span<const ShiftRow> rows) {
  out << "level,performance,mean_entropy\n";
  for (const ShiftRow& r : rows) {
    out << r.level << ',' << FormatReal(r.performance) << ','
        << FormatReal(r.mean_entropy) << '\n';
  }
}

void EmitCurves(const std::string& dir, std::span<const ReportRow> rows,
                std::span<const std::vector<ScoredPrediction>> predictions,
                std::span<const ShiftRow> shift) {
  if (rows.empty()) throw Error("no report rows to plot");
  if (predictions.size() != rows.size()) {
    throw Error("one prediction set per report row expected");
  }
  fs::create_directories(dir);
  const auto front = ParetoFrontIndices(rows);
  std::vector<bool> on_front(rows.size(), false);
  for (std::size_t i : front) on_front[i] = true;

  std::ostringstream pareto;
  pareto << kReportHeader << ",on_front,ipp_distance\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    WriteReportRow(pareto, rows[i]);
    pareto << ',' << (on_front[i] ? 1 : 0) << ','
           << FormatReal(IdealPointDistance(rows[i].second)) << '\n';
  }
  WriteFileAtomically((fs::path(dir) / "pareto_points.csv").string(), pareto.str());

  const std::size_t best = IppSelectIndex(rows);
  std::ostringstream arc;
  arc << "r,acc\n";
  for (const CurvePoint& p : AccuracyRejectionCurve(predictions[best])) {
    arc << FormatReal(p.rejected) << ',' << FormatReal(p.accuracy) << '\n';
  }
  WriteFileAtomically((fs::path(dir) / "arc_curve.csv").string(), arc.str());

  if (!shift.empty()) {
    std::ostringstream out;
    WriteShiftCsv(out, shift);
    WriteFileAtomically((fs::path(dir) / "shift_curve.csv").string(), out.str());
  }
}

void WriteFileAtomically(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out << contents;
    if (!out) throw Error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

}  // namespace mcsd
