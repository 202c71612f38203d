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

#include "semloc/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "semloc/errors.hpp"

namespace semloc {

namespace {

struct Counts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

Counts check_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("metrics: " + std::to_string(scores.size()) + " scores but " +
                          std::to_string(labels.size()) + " labels");
  }
  Counts c;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("metrics: labels must be 0 or 1");
    (l ? c.positives : c.negatives)++;
  }
  if (c.positives == 0 || c.negatives == 0) {
    throw ValidationError("metrics: need at least one positive and one negative label");
  }
  return c;
}

// Calls visit(threshold, tp, fp) once per distinct score, descending.
template <typename Visit>
void sweep(std::span<const double> scores, std::span<const int> labels, Visit&& visit) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? tp : fp)++;
    visit(t, tp, fp);
  }
}

}  // namespace

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = check_labels(scores, labels);
  const auto total_pos = static_cast<double>(c.positives);
  double area = 0.0, prev_recall = 0.0;
  sweep(scores, labels, [&](double, std::size_t tp, std::size_t fp) {
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / total_pos;
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  });
  return area;
}

std::pair<double, double> f1_best(std::span<const double> scores, std::span<const int> labels) {
  const Counts c = check_labels(scores, labels);
  double best = -1.0, best_t = 0.0;
  sweep(scores, labels, [&](double t, std::size_t tp, std::size_t fp) {
    const std::size_t fn = c.positives - tp;
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    if (f1 >= best) {
      best = f1;
      best_t = t;
    }
  });
  return {best, best_t};
}

double recall_at_n(const SimilarityMatrix& sim, const std::vector<std::vector<int>>& positives, std::size_t n) {
  if (n < 1) throw ConfigError("recall_at_n: n must be at least 1");
  if (positives.size() != sim.rows()) throw ValidationError("recall_at_n: one positive list per query required");
  if (sim.rows() == 0) return 0.0;
  const std::size_t m = sim.cols();
  const std::size_t top = std::min(n, m);
  std::size_t hits = 0;
  std::vector<std::size_t> order(m);
  for (std::size_t q = 0; q < sim.rows(); ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (sim(q, a) != sim(q, b)) return sim(q, a) > sim(q, b);
                        return sim.map_ids[a] < sim.map_ids[b];
                      });
    const std::vector<int>& pos = positives[q];
    for (std::size_t k = 0; k < top; ++k) {
      if (std::find(pos.begin(), pos.end(), sim.map_ids[order[k]]) != pos.end()) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

EvalReport evaluate(const SimilarityMatrix& sim, const std::vector<std::vector<int>>& positives) {
  if (positives.size() != sim.rows()) throw ValidationError("evaluate: one positive list per query required");
  std::vector<std::vector<int>> sorted = positives;
  for (auto& p : sorted) std::sort(p.begin(), p.end());
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(sim.rows() * sim.cols());
  labels.reserve(sim.rows() * sim.cols());
  for (std::size_t q = 0; q < sim.rows(); ++q) {
    for (std::size_t m = 0; m < sim.cols(); ++m) {
      scores.push_back(sim(q, m));
      const auto& pos = sorted[q];
      labels.push_back(std::binary_search(pos.begin(), pos.end(), sim.map_ids[m]) ? 1 : 0);
    }
  }
  EvalReport r;
  r.pr_auc = pr_auc(scores, labels);
  std::tie(r.f1, r.threshold) = f1_best(scores, labels);
  r.recall_at_1 = recall_at_n(sim, positives, 1);
  r.recall_at_5 = recall_at_n(sim, positives, 5);
  r.recall_at_10 = recall_at_n(sim, positives, 10);
  r.queries = sim.rows();
  r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.pairs = labels.size();
  return r;
}

}  // namespace semloc
