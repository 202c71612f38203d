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


#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <set>

#include "semloc/errors.hpp"
#include "semloc/evaluation.hpp"
#include "semloc/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace semloc {
namespace {

using testing::oracle_f1;
using testing::oracle_pr_auc;
using testing::oracle_recall;
using testing::random_instance;

TEST(Metrics, PrAucAndF1MatchOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [s, l] = random_instance(seed, 2 + seed * 4);
    EXPECT_EQ(pr_auc(s, l), oracle_pr_auc(s, l)) << seed;
    EXPECT_EQ(f1_best(s, l), oracle_f1(s, l)) << seed;
  }
}

TEST(Metrics, RecallMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [sim, positives] = testing::random_similarity(seed);
    for (std::size_t n : {1u, 2u, 5u, 10u, 100u})
      EXPECT_EQ(recall_at_n(sim, positives, n), oracle_recall(sim, positives, n)) << seed << " " << n;
  }
}

TEST(Metrics, HandExamples) {
  const std::vector<double> s = {0.9, 0.8, 0.1, 0.05};
  EXPECT_DOUBLE_EQ(pr_auc(s, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(f1_best(s, std::vector<int>{1, 1, 0, 0}), std::make_pair(1.0, 0.8));
  // One positive ranked second: precision 1/2 at recall 1.
  EXPECT_DOUBLE_EQ(pr_auc(s, std::vector<int>{0, 1, 0, 0}), 0.5);
  const std::vector<double> flat(10, 0.3);
  const std::vector<int> half = {1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(f1_best(flat, half).first, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(pr_auc(flat, half), 0.5);
}

TEST(Metrics, DegenerateLabelsThrow) {
  const std::vector<double> s = {0.1, 0.2};
  EXPECT_THROW(pr_auc(s, std::vector<int>{1, 1}), ValidationError);
  EXPECT_THROW(f1_best(s, std::vector<int>{0, 0}), ValidationError);
  EXPECT_THROW(pr_auc(s, std::vector<int>{1}), ValidationError);
}

TEST(Metrics, RandomScoresGivePrevalence) {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(100000);
  std::vector<int> l(100000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    l[i] = i % 10 == 0;
  }
  EXPECT_NEAR(pr_auc(s, l), 0.1, 0.01);
}

TEST(Metrics, MonotoneTransformInvariance) {
  const auto [s, l] = random_instance(7, 150);
  std::vector<double> t(s.size());
  std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3.0 * v) - 2.0; });
  EXPECT_EQ(pr_auc(s, l), pr_auc(t, l));
}

TEST(Metrics, RecallSaturatesAndIsMonotone) {
  SimilarityMatrix sim;
  sim.map_ids = {1, 2, 3};
  sim.query_ids = {0, 1, 2};
  sim.query_variants = {0, 0, 0};
  sim.values = Tensor::matrix(3, 3, {0.9, 0.1, 0.2, 0.3, 0.8, 0.1, 0.5, 0.5, 0.5});
  const std::vector<std::vector<int>> pos = {{1}, {3}, {}};
  double prev = 0.0;
  for (std::size_t n = 1; n <= 5; ++n) {
    const double r = recall_at_n(sim, pos, n);
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_DOUBLE_EQ(recall_at_n(sim, pos, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(recall_at_n(sim, pos, 3), 2.0 / 3.0);
  EXPECT_THROW(recall_at_n(sim, pos, 0), ConfigError);
}

TEST(Evaluation, IdentityQueriesScoreOne) {
  const SceneGraph map = testing::small_scene(2);
  DatasetConfig cfg;
  const DatasetSplit split = make_dataset(map, cfg);
  const DatasetGraphs graphs = build_graphs(map, split, 2);
  const EncoderParams params = testing::perturbed_params(1);
  QuerySet q;
  for (int id : split.test) {
    q.graphs.push_back(&graphs.map_graph(id));
    q.ids.push_back(id);
    q.variants.push_back(0);
    q.positives.push_back({id});
  }
  const SimilarityMatrix sim = similarity_matrix(q, graphs, params);
  ASSERT_EQ(sim.rows(), split.test.size());
  ASSERT_EQ(sim.cols(), map.places.size());
  for (std::size_t i = 0; i < sim.rows(); ++i) {
    const auto col = std::lower_bound(sim.map_ids.begin(), sim.map_ids.end(), q.ids[i]) - sim.map_ids.begin();
    EXPECT_NEAR(sim(i, static_cast<std::size_t>(col)), 1.0, 1e-9);
  }
  for (double v : sim.values.values()) EXPECT_LE(std::abs(v), 1.0);
  const SimilarityMatrix bow = bow_similarity_matrix(q, graphs, map.taxonomy);
  EXPECT_EQ(bow.values.shape(), sim.values.shape());
}

TEST(Evaluation, QueriesOrderedByVariantThenId) {
  const SceneGraph map = testing::small_scene(2);
  DatasetConfig cfg;
  const DatasetSplit split = make_dataset(map, cfg);
  const DatasetGraphs graphs = build_graphs(map, split, 2);
  const QuerySet q = make_queries(graphs, split, "val");
  ASSERT_EQ(q.ids.size(), 2 * split.val.size());
  for (std::size_t i = 0; i < q.ids.size(); ++i) {
    EXPECT_EQ(q.variants[i], static_cast<int>(split.eval_variants[i / split.val.size()]));
    EXPECT_EQ(q.ids[i], split.val[i % split.val.size()]);
    EXPECT_EQ(q.positives[i], split.positives[q.variants[i]].at(q.ids[i]));
  }
  EXPECT_THROW(make_queries(graphs, split, "bogus"), ConfigError);
  const EvalReport r = evaluate_bow(graphs, split, "val", map.taxonomy);
  EXPECT_EQ(r.queries, q.ids.size());
  EXPECT_GT(r.pr_auc, 0.0);
}

}  // namespace
}  // namespace semloc
