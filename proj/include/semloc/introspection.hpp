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

// Class-level analyses of a trained encoder: leave-one-class-out ablation,
// attribution shift under class removal, fidelity budget curves and the
// characterisation score, class rankings and their correlations.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semloc/attribution.hpp"
#include "semloc/metrics.hpp"
#include "semloc/scene_graph.hpp"

namespace semloc {

// ---------------------------------------------------------------------------
// Class removal

/// The map and every query variant with one class removed, and their ego
/// graphs. Place ids, the split and the positives are unchanged.
struct ClassRemoved {
  int label = 0;
  int count = 0;  // instances of the class in the map
  SceneGraph map;
  DatasetSplit split;
  DatasetGraphs graphs;
};

ClassRemoved without_class(const SceneGraph& map, const DatasetSplit& split, int label, int hops);

/// One entry per taxonomy class with at least one instance in the map, in
/// taxonomy order. Classes without instances are listed in `skipped`.
std::vector<ClassRemoved> without_each_class(const SceneGraph& map, const DatasetSplit& split, int hops,
                                             std::vector<int>* skipped = nullptr);

struct ClassAblationRow {
  int label = 0;
  std::string code;
  int count = 0;
  double pr_auc_with = 0.0;
  double pr_auc_without = 0.0;
  double drop = 0.0;             // signed: with - without
  double normalised_drop = 0.0;  // drop / count
};

/// PR-AUC on `which` with and without each class, with the encoder frozen.
/// An entry with no instances gives a zero drop.
std::vector<ClassAblationRow> class_ablation(const DatasetGraphs& graphs, const DatasetSplit& split,
                                             std::span<const ClassRemoved> removed, const Taxonomy& taxonomy,
                                             const EncoderParams& params, const std::string& which = "test",
                                             ExecPolicy policy = ExecPolicy::kParallel);

/// Convenience form that builds the class-removed datasets itself.
std::vector<ClassAblationRow> class_ablation(const SceneGraph& map, const DatasetSplit& split,
                                             const EncoderParams& params, int hops, const std::string& which = "test",
                                             ExecPolicy policy = ExecPolicy::kParallel);

/// The same (map place, query place, variant) pairs looked up in other
/// graphs; pairs whose query graph has no objects left are dropped.
std::vector<AttributionPair> remap_pairs(std::span<const AttributionPair> pairs, const DatasetGraphs& graphs);

// ---------------------------------------------------------------------------
// Attribution shift

inline constexpr int kJsdBins = 20;
inline constexpr double kJsdEpsilon = 1e-9;

/// Probability histogram of values in [0, 1] over equal-width bins; 1.0
/// falls in the last bin. Throws ValidationError when `values` is empty.
std::vector<double> histogram(std::span<const double> values, int bins = kJsdBins);

/// Normalised node scores of all results, pooled.
std::vector<double> pooled_scores(std::span<const AttributionResult> results);

/// Jensen-Shannon divergence in bits after adding `epsilon` to every bin and
/// renormalising. Lies in [0, 1].
double jsd(std::span<const double> p, std::span<const double> q, double epsilon = kJsdEpsilon);

struct JsdShiftRow {
  Explainer explainer = Explainer::kSaliency;
  int label = 0;
  std::string code;
  int count = 0;
  double jsd = 0.0;
  double normalised = 0.0;  // jsd / count (0 when count is 0)
  std::size_t pre_nodes = 0;
  std::size_t post_nodes = 0;
};

/// Shift of the pooled score histogram when class `label` is removed.
JsdShiftRow jsd_shift(Explainer explainer, int label, int count, std::span<const AttributionResult> pre,
                      std::span<const AttributionResult> post, int bins = kJsdBins);

// ---------------------------------------------------------------------------
// Fidelity

/// "start:stop:step", inclusive of stop within rounding. Every value must be
/// in (0, 1] and the grid strictly increasing.
std::vector<double> parse_rho_grid(const std::string& text);
void validate_rho_grid(std::span<const double> grid);

/// Object nodes kept for budget rho out of n: ceil(rho n), at least 1.
std::size_t budget_count(double rho, std::size_t n);

/// Object ids by descending normalised score, ties by ascending id.
std::vector<int> ranked_objects(const AttributionResult& result);

struct FidelityCurve {
  std::string explainer;
  std::vector<double> rho;
  std::vector<double> s_keep;  // means over pairs
  std::vector<double> s_drop;
  std::vector<double> delta_plus;
  std::vector<double> delta_minus;
  std::size_t pairs = 0;
  std::size_t skipped = 0;  // pairs without object nodes
  // Per-pair deltas, [pair][rho], for resampling.
  std::vector<std::vector<double>> pair_plus;
  std::vector<std::vector<double>> pair_minus;

  /// Index of `rho` in the grid; ConfigError when absent.
  std::size_t index_of(double rho) const;
};

/// `results[i]` must be the attribution of `pairs[i]`.
FidelityCurve fidelity_curve(const std::string& name, std::span<const AttributionResult> results,
                             std::span<const AttributionPair> pairs, const EncoderParams& params,
                             std::span<const double> grid, ExecPolicy policy = ExecPolicy::kParallel);

struct CharactScore {
  std::string explainer;
  double rho = 0.0;
  double w_plus = 0.5;
  double w_minus = 0.5;
  double value = 0.0;
  bool degenerate = false;  // delta+ = 0 or 1 - delta- <= 0
  bool floored = false;     // 1 - delta- was negative
  bool clamped = false;     // value exceeded 1
};

/// Weighted harmonic mean of delta+ and 1 - delta-.
CharactScore charact(double delta_plus, double delta_minus, double w_plus = 0.5, double w_minus = 0.5);
CharactScore charact(const FidelityCurve& curve, double rho_star = 0.2, double w_plus = 0.5, double w_minus = 0.5);
/// charact at every grid point.
std::vector<CharactScore> charact_curve(const FidelityCurve& curve, double w_plus = 0.5, double w_minus = 0.5);

/// Fidelity curves of `count` random rankings with seeds derived from `seed`.
std::vector<FidelityCurve> random_baselines(std::span<const AttributionPair> pairs, const EncoderParams& params,
                                            std::span<const double> grid, std::size_t count, std::uint64_t seed,
                                            ExecPolicy policy = ExecPolicy::kParallel);

struct RandomComparison {
  std::string explainer;
  double rho = 0.0;
  double value = 0.0;        // explainer charact
  double random_mean = 0.0;  // mean charact of the random rankings
  double diff_lower = 0.0;   // one-sided bootstrap lower bound of value - random_mean
  double confidence = 0.95;
  std::size_t resamples = 0;
  bool separated = false;  // diff_lower > 0
};

/// Pair-bootstrap comparison of an explainer's charact against the mean of
/// random baselines evaluated on the same pairs.
RandomComparison compare_with_random(const FidelityCurve& curve, std::span<const FidelityCurve> randoms,
                                     double rho_star = 0.2, double w_plus = 0.5, double w_minus = 0.5,
                                     std::size_t resamples = 1000, double confidence = 0.95,
                                     std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Rankings and correlation

/// Labels by descending score, ties by ascending label.
std::vector<int> rank_classes(const std::map<int, double>& scores);

/// Kendall tau between two orderings of the same labels.
double kendall_tau(std::span<const int> a, std::span<const int> b);

/// Pearson correlation; nullopt when either input is constant or shorter
/// than two.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Mean normalised score per class over the results (classes absent from a
/// result count as 0 for it).
std::map<int, double> mean_class_scores(std::span<const AttributionResult> results);

/// Mean normalised score of every object over the results it appears in.
std::map<int, double> object_importance(std::span<const AttributionResult> results);

struct CorrelationPoint {
  int label = 0;
  double drop = 0.0;  // normalised PR-AUC drop
  double jsd = 0.0;   // normalised attention JSD
};

struct Correlation {
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::vector<CorrelationPoint> points;
};

/// Correlation over the classes present in both tables. Needs at least three
/// classes; `jsd_rows` must all come from the attention explainer.
Correlation attention_performance_correlation(std::span<const ClassAblationRow> ablation,
                                              std::span<const JsdShiftRow> jsd_rows);

}  // namespace semloc
