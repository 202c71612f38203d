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

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semloc/tensor.hpp"

namespace semloc {

/// Cosine similarities between query rows and map columns.
struct SimilarityMatrix {
  std::vector<int> query_ids;       // place id of each query row
  std::vector<int> query_variants;  // variant index of each query row
  std::vector<int> map_ids;         // place id of each map column, ascending
  Tensor values;                    // (queries x map)

  std::size_t rows() const noexcept { return query_ids.size(); }
  std::size_t cols() const noexcept { return map_ids.size(); }
  double operator()(std::size_t q, std::size_t m) const { return values.at(q, m); }
};

struct EvalReport {
  double pr_auc = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;  // score threshold maximising F1
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  std::size_t queries = 0;
  std::size_t positives = 0;  // positive (query, map) pairs
  std::size_t pairs = 0;
};

/// Area under the precision-recall curve: descending-score sweep, equal
/// scores grouped, step interpolation. Throws unless both labels occur.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

/// Best F1 over thresholds "score >= t" at every distinct score; on ties the
/// lowest threshold wins. Returns {f1, threshold}.
std::pair<double, double> f1_best(std::span<const double> scores, std::span<const int> labels);

/// Fraction of query rows whose top-n columns (descending similarity, ties
/// by ascending map id) contain a positive. `positives[q]` lists map ids.
double recall_at_n(const SimilarityMatrix& sim, const std::vector<std::vector<int>>& positives, std::size_t n);

/// Flattens the matrix into scores/labels and computes every metric.
EvalReport evaluate(const SimilarityMatrix& sim, const std::vector<std::vector<int>>& positives);

}  // namespace semloc
