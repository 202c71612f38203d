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

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "semloc/metrics.hpp"

namespace semloc::testing {

// Brute-force oracles: enumerate every distinct threshold and count by a
// full scan of the data.
struct ThresholdCounts {
  double t;
  std::size_t tp, fp;
};

inline std::vector<ThresholdCounts> enumerate(const std::vector<double>& s, const std::vector<int>& l) {
  const std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  std::vector<ThresholdCounts> out;
  for (double t : thresholds) {
    ThresholdCounts c{t, 0, 0};
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (l[i] ? c.tp : c.fp)++;
    out.push_back(c);
  }
  return out;
}

inline double oracle_pr_auc(const std::vector<double>& s, const std::vector<int>& l) {
  const double pos = static_cast<double>(std::count(l.begin(), l.end(), 1));
  double area = 0.0, prev = 0.0;
  for (const auto& c : enumerate(s, l)) {
    const double recall = static_cast<double>(c.tp) / pos;
    area += (recall - prev) * (static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp));
    prev = recall;
  }
  return area;
}

inline std::pair<double, double> oracle_f1(const std::vector<double>& s, const std::vector<int>& l) {
  const auto pos = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
  auto all = enumerate(s, l);
  std::reverse(all.begin(), all.end());  // ascending threshold: first maximum is the lowest
  double best = -1.0, best_t = 0.0;
  for (const auto& c : all) {
    const double f1 = 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + (pos - c.tp));
    if (f1 > best) {
      best = f1;
      best_t = c.t;
    }
  }
  return {best, best_t};
}

inline double oracle_recall(const SimilarityMatrix& sim, const std::vector<std::vector<int>>& positives, std::size_t n) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < sim.rows(); ++q) {
    // Rank of column m = number of columns strictly ahead of it.
    for (std::size_t m = 0; m < sim.cols(); ++m) {
      std::size_t ahead = 0;
      for (std::size_t k = 0; k < sim.cols(); ++k)
        ahead += sim(q, k) > sim(q, m) || (sim(q, k) == sim(q, m) && sim.map_ids[k] < sim.map_ids[m]);
      const bool positive =
          std::find(positives[q].begin(), positives[q].end(), sim.map_ids[m]) != positives[q].end();
      if (ahead < n && positive) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

// Scored pairs with coarse scores (so ties occur) and ~30% positives.
inline std::pair<std::vector<double>, std::vector<int>> random_instance(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  // Coarse scores so that ties occur.
  std::uniform_int_distribution<int> score(0, 20);
  std::bernoulli_distribution label(0.3);
  std::vector<double> s(n);
  std::vector<int> l(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = score(rng) / 20.0;
    l[i] = label(rng);
  }
  l[0] = 1;
  l[1] = 0;
  return {s, l};
}

// Up to 9 queries against up to 21 map places, coarse scores, ~25% positives.
inline std::pair<SimilarityMatrix, std::vector<std::vector<int>>> random_similarity(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SimilarityMatrix sim;
  const std::size_t q = 1 + seed % 9, m = 2 + seed % 20;
  for (std::size_t j = 0; j < m; ++j) sim.map_ids.push_back(static_cast<int>(10 * j + 3));
  sim.values = Tensor({q, m});
  std::uniform_int_distribution<int> score(-5, 5);
  for (double& v : sim.values.values()) v = score(rng) / 5.0;
  std::vector<std::vector<int>> positives(q);
  for (std::size_t i = 0; i < q; ++i) {
    sim.query_ids.push_back(static_cast<int>(i));
    sim.query_variants.push_back(0);
    for (int id : sim.map_ids)
      if (rng() % 4 == 0) positives[i].push_back(id);
  }
  return {sim, positives};
}

}  // namespace semloc::testing
