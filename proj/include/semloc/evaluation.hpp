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

// Split-level evaluation: every query (variant, place) of a split against
// every map place.

#include <string>
#include <vector>

#include "semloc/encoder.hpp"
#include "semloc/kernels.hpp"
#include "semloc/metrics.hpp"
#include "semloc/scene_graph.hpp"

namespace semloc {

struct QuerySet {
  std::vector<const EgoGraph*> graphs;
  std::vector<int> ids;
  std::vector<int> variants;
  std::vector<std::vector<int>> positives;  // map place ids per query
};

/// Rows are ordered by variant, then by ascending place id.
QuerySet make_queries(const DatasetGraphs& graphs, const DatasetSplit& split, const std::string& which);

SimilarityMatrix similarity_matrix(const QuerySet& queries, std::span<const Embedding> query_embeddings,
                                   const DatasetGraphs& graphs, std::span<const Embedding> map_embeddings,
                                   ExecPolicy policy = ExecPolicy::kParallel);
SimilarityMatrix similarity_matrix(const QuerySet& queries, const DatasetGraphs& graphs, const EncoderParams& params,
                                   ExecPolicy policy = ExecPolicy::kParallel);
SimilarityMatrix bow_similarity_matrix(const QuerySet& queries, const DatasetGraphs& graphs,
                                       const Taxonomy& taxonomy);

EvalReport evaluate_split(const DatasetGraphs& graphs, const DatasetSplit& split, const std::string& which,
                          const EncoderParams& params, ExecPolicy policy = ExecPolicy::kParallel);
EvalReport evaluate_bow(const DatasetGraphs& graphs, const DatasetSplit& split, const std::string& which,
                        const Taxonomy& taxonomy);

}  // namespace semloc
