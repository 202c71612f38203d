/*
 * Copyright 2026 The semloc Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// End-to-end runs shared by the command-line tool and the acceptance tests:
// dataset preparation, training with evaluation, and the full analysis of a
// trained model.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <map>
#include <string>
#include <vector>

#include "semloc/attribution.hpp"
#include "semloc/introspection.hpp"
#include "semloc/report_io.hpp"
#include "semloc/training.hpp"

namespace semloc {

inline constexpr const char* kVersion = "0.1.0";

/// Map, split, ego graphs and (optionally) the class-removed copies.
struct Prepared {
  SceneGraph map;
  DatasetConfig dataset;
  DatasetSplit split;
  DatasetGraphs graphs;
  std::vector<ClassRemoved> removed;
  std::vector<int> skipped_classes;
};

Prepared prepare(const SceneGraph& map, const DatasetConfig& dataset, int hops, bool with_class_removal);

/// Checkpoint metadata: the dataset and training settings needed to rebuild
/// the same split later.
std::string run_meta_json(const DatasetConfig& dataset, const TrainConfig& train, const std::string& scene_sha256);
DatasetConfig dataset_from_meta(const std::string& meta_json);
int hops_from_meta(const std::string& meta_json);

struct TrainedRun {
  int run = 1;
  std::uint64_t seed = 0;
  TrainResult result;
  EvalReport test;
  EvalReport bow;
  double seconds = 0.0;  // training plus evaluation
};

TrainedRun train_and_evaluate(const Prepared& data, const TrainConfig& config, int run = 1,
                              const EpochCallback& on_epoch = {});

struct AnalysisConfig {
  std::string which = "test";
  std::size_t max_pairs = 200;
  std::vector<double> rho_grid = parse_rho_grid("0.05:1.0:0.05");
  double rho_star = 0.2;
  double w_plus = 0.5;
  double w_minus = 0.5;
  ExplainOptions explain;
  std::vector<Explainer> explainers = all_explainers();
  std::size_t random_baselines = 20;
  std::size_t bootstrap = 1000;
  double confidence = 0.95;
  std::uint64_t seed = 0;
  bool class_shift = true;  // JSD under class removal
  bool fidelity = true;
  ExecPolicy policy = ExecPolicy::kParallel;
};

struct ModelAnalysis {
  std::vector<AttributionPair> pairs;
  std::map<Explainer, std::vector<AttributionResult>> attributions;
  std::vector<ClassAblationRow> ablation;
  std::vector<JsdShiftRow> jsd;
  std::vector<FidelityCurve> curves;   // explainers, then "random" (mean of the baselines)
  std::vector<FidelityCurve> randoms;  // individual random baselines
  std::vector<CharactScore> charact;   // every curve at every grid point
  std::vector<RandomComparison> comparisons;
  std::optional<Correlation> correlation;
  std::map<std::string, std::vector<int>> rankings;  // method -> labels, best first
};

/// Class ablation needs `data.removed`; without it only attribution and
/// fidelity run.
ModelAnalysis analyse_model(const Prepared& data, const EncoderParams& params, const AnalysisConfig& config);

/// Element-wise mean of curves on the same grid and pairs.
FidelityCurve mean_curve(const std::string& name, std::span<const FidelityCurve> curves);

/// Methods in table order: ablation, then the explainers.
std::vector<std::string> ranking_methods(const AnalysisConfig& config);

/// Learned and BoW similarity heatmaps (first evaluation variant against the
/// same places) and a floor plan coloured by similarity to the first query.
void write_similarity_figures(const Prepared& data, const EncoderParams& params, const std::string& which,
                              const std::filesystem::path& out, Manifest& manifest,
                              ExecPolicy policy = ExecPolicy::kParallel);

/// Fidelity, characterisation, correlation and object-importance plots.
void write_analysis_figures(const Prepared& data, const ModelAnalysis& analysis, const std::filesystem::path& out,
                            Manifest& manifest);

struct ReportOptions {
  int runs = 3;
  std::uint64_t seed = 0;  // run r trains with seed + r - 1
  TrainConfig train;
  AnalysisConfig analysis;
  std::function<void(const std::string&)> progress;
};

struct ReportResult {
  std::vector<TrainedRun> runs;
  std::vector<ModelAnalysis> analyses;
};

/// Trains `runs` models, analyses each and writes the bundle into `out`,
/// recording every file in `manifest`.
ReportResult run_report(const Prepared& data, const ReportOptions& options, const std::filesystem::path& out,
                        Manifest& manifest);

}  // namespace semloc
