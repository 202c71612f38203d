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

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semloc/encoder.hpp"
#include "semloc/kernels.hpp"
#include "semloc/losses.hpp"
#include "semloc/metrics.hpp"
#include "semloc/scene_graph.hpp"

namespace semloc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One bias-corrected update of every weight that has a gradient.
  void step(std::map<std::string, Tensor>& weights, const std::map<std::string, Tensor>& grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::map<std::string, Tensor> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  LossKind loss = LossKind::kInfoNCE;
  std::optional<double> margin;  // defaults: contrastive 1.0, triplet 0.2
  double temperature = 0.7;
  AdamConfig adam;
  int epochs = 100;
  int batch_size = 32;  // query graphs per batch
  int negatives = 31;   // per query, drawn from the batch pool
  int pool_size = 16;   // extra map places per batch added to the sampled positives as negative candidates
  int hops = 2;
  std::uint64_t seed = 0;
  double bn_momentum = 0.1;
  EncoderHyper hyper;
  ExecPolicy policy = ExecPolicy::kParallel;

  double effective_margin() const;
  /// Throws ConfigError on the first invalid field.
  void validate() const;
};

struct EpochRow {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  EvalReport val;
};

struct TrainReport {
  std::string variant = "model";
  std::uint64_t seed = 0;
  std::vector<EpochRow> epochs;
  int best_epoch = 0;
  double best_pr_auc = 0.0;
  std::size_t skipped_queries = 0;  // query slots without a usable positive/negative
};

struct TrainResult {
  EncoderParams params;  // best validation checkpoint
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRow&)>;

/// Contrastive training on (query ego graph, map ego graph) pairs. Queries
/// are every (variant, train place); positives come from the radius pairing
/// restricted to train places, negatives are drawn uniformly from a per-batch
/// pool (the batch's sampled positives plus `pool_size` uniform train places)
/// with the query's positives removed.
TrainResult train(const SceneGraph& map, const DatasetSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});
TrainResult train(const DatasetGraphs& graphs, const DatasetSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Up to `count` ids drawn uniformly without replacement from `pool` minus
/// `positives` (sorted ascending), keeping pool order.
std::vector<int> sample_negatives(std::span<const int> pool, const std::vector<int>& positives, std::size_t count,
                                  std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Ablation grid

struct AblationVariant {
  std::string name;
  std::size_t mpnn_layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 3;
  bool use_gat = true;
};

/// The nine rows of the design-choice table, ending with the full model.
std::vector<AblationVariant> standard_ablation_grid();
/// Looks up a variant by name in the standard grid.
AblationVariant ablation_variant(const std::string& name);

struct AblationRun {
  AblationVariant variant;
  std::uint64_t seed = 0;
  EvalReport test;
  TrainReport report;
};

struct AblationSummary {
  AblationVariant variant;
  std::size_t runs = 0;
  double pr_auc_mean = 0.0, pr_auc_std = 0.0;  // sample standard deviation
  double recall1_mean = 0.0, recall1_std = 0.0;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationSummary> summary;  // one row per variant, grid order
};

/// Trains every variant with every seed (the variant's architecture replaces
/// `base.hyper`) and evaluates on the test split.
AblationResult run_ablation_grid(const DatasetGraphs& graphs, const DatasetSplit& split,
                                 const std::vector<AblationVariant>& grid, const std::vector<std::uint64_t>& seeds,
                                 const TrainConfig& base, const std::function<void(const AblationRun&)>& on_run = {});

std::pair<double, double> mean_and_std(const std::vector<double>& values);

}  // namespace semloc
