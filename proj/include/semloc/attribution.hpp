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

// Per-object importance for a (map place P, query place Q) pair. The
// attributed quantity is the cosine similarity of the two embeddings, taken
// as a function of Q.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semloc/encoder.hpp"
#include "semloc/kernels.hpp"
#include "semloc/scene_graph.hpp"

namespace semloc {

enum class Explainer { kSaliency, kIntegratedGradients, kShapley, kAttention, kRandom };

std::string to_string(Explainer e);
/// "saliency", "ig", "shapley", "attention" or "random".
Explainer parse_explainer(const std::string& name);
/// The four attribution methods, without the random baseline.
std::vector<Explainer> all_explainers();

struct NodeScore {
  int node_id = 0;
  int label = 0;
  double raw = 0.0;
  double normalised = 0.0;  // |raw| / sum |raw|
};

struct AttributionResult {
  Explainer explainer = Explainer::kSaliency;
  int query_place = 0;
  int map_place = 0;
  std::vector<NodeScore> nodes;         // object nodes of Q, ascending id
  std::map<int, double> class_scores;   // label -> sum of normalised scores
  double target = 0.0;                  // s_full
  double completeness_residual = 0.0;   // integrated gradients only
};

/// Fills `normalised` and `class_scores` from the raw scores.
void normalise(AttributionResult& result);

/// Dot product of unit embeddings, clamped to [-1, 1]; the same arithmetic
/// as a similarity-matrix entry.
double cosine(const Embedding& a, const Embedding& b);

double target_scalar(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params);
double target_scalar(const Embedding& zp, const EgoGraph& q, const EncoderParams& params);

/// Gradient of the target with respect to Q's one-hot feature rows.
Tensor target_gradient(const Embedding& zp, const EgoGraph& q, const EncoderParams& params, const Tensor& features);

AttributionResult saliency(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params);

struct IgOptions {
  std::size_t steps = 64;
  // Baseline feature rows; empty means object rows zeroed, place rows kept.
  std::optional<Tensor> baseline;
};

AttributionResult integrated_gradients(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                                       const IgOptions& options = {});

/// Gradients of a scalar function at a batch of points.
using BatchGradientFn = std::function<std::vector<Tensor>(std::span<const Tensor> points)>;

/// Coordinate-wise integrated gradients of any differentiable function
/// (midpoint rule over `steps` points between `baseline` and `x`).
Tensor integrated_gradients(const BatchGradientFn& grad, const Tensor& x, const Tensor& baseline, std::size_t steps);

struct ShapleyOptions {
  std::size_t permutations = 200;
  std::uint64_t seed = 0;
};

/// Shapley value sampling where a coalition keeps its object nodes (and
/// their visibility edges) and drops the rest; places are always kept.
AttributionResult shapley_sampling(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                                   const ShapleyOptions& options = {});

/// Exact Shapley values by enumerating every coalition (at most 16 objects).
AttributionResult shapley_exact(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params);

/// Exact Shapley values of an arbitrary characteristic function over n
/// players; `value` receives the coalition as a membership mask.
std::vector<double> shapley_exact(std::size_t n, const std::function<double(const std::vector<bool>&)>& value);

/// Mean over heads of the attention on visibility edges from each object
/// into place nodes, summed over the receiving places.
AttributionResult attention_importance(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params);

/// Uniform random scores, for baseline rankings.
AttributionResult random_attribution(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                                     std::uint64_t seed);

struct ExplainOptions {
  IgOptions ig;
  ShapleyOptions shapley;
  std::uint64_t random_seed = 0;
};

AttributionResult explain(Explainer explainer, const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                          const ExplainOptions& options = {});

/// SmoothGrad: averages the raw scores of a gradient explainer (saliency or
/// IG) over `samples` copies of Q's features with Gaussian noise added.
AttributionResult smooth_grad(Explainer base, const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                              std::size_t samples, double sigma, std::uint64_t seed, const IgOptions& ig = {});

// ---------------------------------------------------------------------------
// Pair sets

struct AttributionPair {
  int map_place = 0;
  int query_place = 0;
  std::size_t variant = 0;
  const EgoGraph* p = nullptr;
  const EgoGraph* q = nullptr;
};

/// (map place, same place in an evaluation variant) for the split's places,
/// keeping pairs whose query graph has at least one object. At most
/// `max_pairs` pairs (0 = all), in ascending place order over variants.
std::vector<AttributionPair> attribution_pairs(const DatasetGraphs& graphs, const DatasetSplit& split,
                                               const std::string& which, std::size_t max_pairs);

/// Runs one explainer over every pair; pairs are processed in parallel and
/// results returned in pair order.
std::vector<AttributionResult> explain_pairs(Explainer explainer, std::span<const AttributionPair> pairs,
                                             const EncoderParams& params, const ExplainOptions& options = {},
                                             ExecPolicy policy = ExecPolicy::kParallel);

}  // namespace semloc
