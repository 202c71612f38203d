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
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "semloc/errors.hpp"
#include "semloc/kernels.hpp"
#include "test_util.hpp"

namespace semloc {
namespace {

using ad::Tape;
using ad::Var;
using testing::line_graph;
using testing::perturbed_params;
using testing::small_scene;

double norm(const Embedding& e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Embedding& a, const Embedding& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<EgoGraph> scene_graphs(const SceneGraph& scene, int hops = 2) {
  const SceneIndex idx(scene);
  std::vector<EgoGraph> out;
  for (const Place& p : scene.places) out.push_back(idx.ego_graph(p.id, hops));
  return out;
}

TEST(EncoderParams, InitDeterministicAndShaped) {
  const EncoderParams a = init_params(EncoderHyper{}, 3);
  const EncoderParams b = init_params(EncoderHyper{}, 3);
  const EncoderParams c = init_params(EncoderHyper{}, 4);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_NE(a.weights, c.weights);
  EXPECT_NO_THROW(a.validate());
  for (const auto& [name, shape] : a.expected_weight_shapes()) EXPECT_EQ(a.weights.at(name).shape(), shape) << name;
  for (const auto& [name, shape] : a.expected_buffer_shapes()) EXPECT_EQ(a.buffers.at(name).shape(), shape) << name;
}

TEST(EncoderParams, GlorotBounds) {
  const EncoderParams p = init_params(EncoderHyper{}, 1);
  for (const auto& [name, t] : p.weights) {
    if (t.rank() != 2) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(t.shape()[0] + t.shape()[1]));
    for (double v : t.values()) EXPECT_LE(std::abs(v), bound) << name;
  }
}

TEST(EncoderParams, ValidateRejectsBadTensors) {
  EncoderParams p = init_params(EncoderHyper{}, 1);
  auto it = p.weights.begin();
  const std::string name = it->first;
  it->second.values()[0] = std::nan("");
  EXPECT_THROW(p.validate(), ValidationError);
  p.weights.erase(name);
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Features, OneHotRows) {
  const Taxonomy tax = Taxonomy::office();
  const EgoGraph g = line_graph(3, {{1, 5, 0}, {2, 8, 1}});
  const Tensor x = node_features(g, tax);
  ASSERT_EQ(x.shape(), (Shape{5, 7}));
  for (std::size_t r = 0; r < 5; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < 7; ++c) row += x.at(r, c);
    EXPECT_EQ(row, 1.0);
  }
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(x.at(r, 6), 1.0);
  EXPECT_EQ(x.at(3, *tax.index_of(5)), 1.0);  // chair column
  EXPECT_EQ(x.at(4, *tax.index_of(8)), 1.0);
  EXPECT_EQ(node_features(g), x);
}

TEST(Features, UnknownClassThrows) {
  EgoGraph g = line_graph(1, {{1, 5, 0}});
  g.nodes[1].label = 99;
  EXPECT_THROW(node_features(g, Taxonomy::office()), ValidationError);
}

TEST(Encoder, UnitNormAndDimension) {
  const EncoderParams p = perturbed_params(2);
  for (const EgoGraph& g : scene_graphs(small_scene(1))) {
    for (Mode m : {Mode::kInfer, Mode::kTrain}) {
      const Embedding e = embed(g, p, m).embedding;
      ASSERT_EQ(e.size(), 32u);
      EXPECT_NEAR(norm(e), 1.0, 1e-12);
    }
  }
}

TEST(Encoder, InferIsDeterministic) {
  const EncoderParams p = perturbed_params(2);
  const EgoGraph g = scene_graphs(small_scene(1))[5];
  EXPECT_EQ(embed(g, p).embedding, embed(g, p).embedding);
}

TEST(Encoder, EmptyGraphThrows) {
  EgoGraph g;
  g.num_classes = 6;
  EXPECT_THROW(embed(g, perturbed_params(0)), Error);
}

// Random relabelling of a random ego graph leaves the centre embedding
// unchanged, in both modes.
TEST(Encoder, PermutationEquivariance) {
  const EncoderParams p = perturbed_params(5);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SceneGraph scene = small_scene(seed);
    std::mt19937_64 rng(seed);
    const Place& centre = scene.places[rng() % scene.places.size()];
    const EgoGraph g = ego_graph(scene, centre.id, 2);
    std::vector<std::size_t> perm(g.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const EgoGraph h = g.permuted(perm);
    for (Mode m : {Mode::kInfer, Mode::kTrain})
      worst = std::max(worst, max_abs_diff(embed(g, p, m).embedding, embed(h, p, m).embedding));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Encoder, RemoteNodesDoNotMatter) {
  SceneGraph scene = small_scene(3);
  const EncoderParams p = perturbed_params(1);
  const int centre = scene.places.front().id;
  const Embedding before = embed(ego_graph(scene, centre, 2), p).embedding;
  // Attach a new place and object far outside the 2-hop neighbourhood.
  const int far = scene.places.back().id;
  scene.places.push_back({9000, 100.0, 100.0});
  scene.objects.push_back({9001, 100.0, 100.0, 5});
  scene.traversability.emplace_back(far, 9000);
  scene.visibility.emplace_back(9000, 9001);
  scene.validate();
  EXPECT_EQ(embed(ego_graph(scene, centre, 2), p).embedding, before);
}

TEST(Encoder, AttentionIsNormalisedPerTarget) {
  const EncoderParams p = perturbed_params(1);
  const std::vector<EgoGraph> graphs = scene_graphs(small_scene(2));
  for (std::size_t k = 0; k < graphs.size(); k += 5) {
    const EmbedResult r = embed(graphs[k], p, Mode::kInfer, true);
    ASSERT_EQ(r.attention.coefficients.size(), 3u);
    for (const auto& head : r.attention.coefficients) {
      ASSERT_EQ(head.size(), r.attention.edges.size());
      std::map<std::size_t, double> total;
      for (std::size_t e = 0; e < head.size(); ++e) {
        EXPECT_NE(r.attention.edges[e].first, r.attention.edges[e].second);
        total[r.attention.edges[e].second] += head[e];
      }
      for (const auto& [target, s] : total) EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Encoder, AttentionRecordDoesNotChangeEmbedding) {
  const EncoderParams p = perturbed_params(1);
  for (const EgoGraph& g : scene_graphs(small_scene(2))) {
    for (Mode m : {Mode::kInfer, Mode::kTrain})
      EXPECT_EQ(embed(g, p, m, true).embedding, embed(g, p, m, false).embedding);
  }
}

TEST(Encoder, WithoutGat) {
  EncoderHyper h;
  h.use_gat = false;
  const EncoderParams p = init_params(h, 0);
  EXPECT_NO_THROW(p.validate());
  const EgoGraph g = scene_graphs(small_scene(0))[3];
  const EmbedResult r = embed(g, p, Mode::kInfer, true);
  EXPECT_NEAR(norm(r.embedding), 1.0, 1e-12);
  EXPECT_TRUE(r.attention.edges.empty());
}

TEST(Encoder, BatchMatchesSingleInInferMode) {
  const EncoderParams p = perturbed_params(4);
  const std::vector<EgoGraph> graphs = scene_graphs(small_scene(4));
  std::vector<const EgoGraph*> ptrs;
  for (const EgoGraph& g : graphs) ptrs.push_back(&g);
  Tape tape;
  const BoundParams bound = bind_params(tape, p, false);
  const EncodeBatchOutput out = encode_batch(ptrs, bound, tape.constant(node_features(ptrs)), Mode::kInfer);
  const Tensor& z = out.embeddings.value();
  ASSERT_EQ(z.shape(), (Shape{graphs.size(), 32}));
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const Embedding single = embed(graphs[i], p).embedding;
    for (std::size_t c = 0; c < 32; ++c) EXPECT_NEAR(z.at(i, c), single[c], 1e-12);
  }
}

TEST(Encoder, BatchOfOneMatchesSingleInTrainMode) {
  const EncoderParams p = perturbed_params(4);
  const EgoGraph g = scene_graphs(small_scene(4))[7];
  const EgoGraph* ptr = &g;
  Tape tape;
  const BoundParams bound = bind_params(tape, p, false);
  const EncodeBatchOutput out =
      encode_batch(std::span<const EgoGraph* const>(&ptr, 1), bound, tape.constant(node_features(g)), Mode::kTrain);
  const Embedding single = embed(g, p, Mode::kTrain).embedding;
  for (std::size_t c = 0; c < 32; ++c) EXPECT_NEAR(out.embeddings.value().at(0, c), single[c], 1e-12);
}

TEST(Encoder, TrainModeUsesBatchStatistics) {
  const EncoderParams p = perturbed_params(4);
  const std::vector<EgoGraph> graphs = scene_graphs(small_scene(4));
  std::vector<const EgoGraph*> ptrs = {&graphs[0], &graphs[9]};
  Tape tape;
  const BoundParams bound = bind_params(tape, p, false);
  const EncodeBatchOutput out = encode_batch(ptrs, bound, tape.constant(node_features(ptrs)), Mode::kTrain);
  EXPECT_EQ(out.observed.size(), 2u);
  EXPECT_EQ(out.offsets, (std::vector<std::size_t>{0, graphs[0].size()}));
  // Row 0 depends on the other graph through the shared statistics.
  EXPECT_GT(max_abs_diff({out.embeddings.value().values().begin(), out.embeddings.value().values().begin() + 32},
                         embed(graphs[0], p, Mode::kTrain).embedding),
            1e-9);
}

TEST(Kernels, EmbedAllChunkAndPolicyInvariant) {
  const EncoderParams p = perturbed_params(6);
  const std::vector<EgoGraph> graphs = scene_graphs(small_scene(6));
  std::vector<const EgoGraph*> ptrs;
  for (const EgoGraph& g : graphs) ptrs.push_back(&g);
  const auto reference = embed_all(ptrs, p, ExecPolicy::kSerial, 1);
  for (std::size_t chunk : {1u, 5u, 16u, 1000u})
    for (ExecPolicy policy : {ExecPolicy::kSerial, ExecPolicy::kParallel})
      EXPECT_EQ(embed_all(ptrs, p, policy, chunk), reference) << chunk;
  for (std::size_t i = 0; i < graphs.size(); i += 7)
    EXPECT_LE(max_abs_diff(reference[i], embed(graphs[i], p).embedding), 1e-12);
}

TEST(Kernels, CosineMatrixPolicyInvariant) {
  const EncoderParams p = perturbed_params(6);
  const std::vector<EgoGraph> graphs = scene_graphs(small_scene(6));
  const auto z = embed_all(graphs, p, ExecPolicy::kSerial);
  const Tensor s = cosine_matrix(z, z, ExecPolicy::kSerial);
  EXPECT_EQ(cosine_matrix(z, z, ExecPolicy::kParallel), s);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(s.at(i, i), 1.0, 1e-12);
  for (double v : s.values()) EXPECT_LE(std::abs(v), 1.0);
}

TEST(Kernels, BatchGradientPolicyInvariant) {
  const EncoderParams p = perturbed_params(6);
  const std::vector<EgoGraph> graphs = scene_graphs(small_scene(6));
  std::vector<const EgoGraph*> ptrs;
  for (std::size_t i = 0; i < 12; ++i) ptrs.push_back(&graphs[i]);
  const BatchLoss loss = [](Tape&, std::span<const Var> z) {
    Var total = ad::dot(z[0], z[1]);
    for (std::size_t i = 2; i < z.size(); ++i) total = ad::add(total, ad::dot(z[0], z[i]));
    return total;
  };
  const BatchGradient a = batch_gradient(ptrs, p, loss, ExecPolicy::kSerial);
  const BatchGradient b = batch_gradient(ptrs, p, loss, ExecPolicy::kParallel);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grads, b.grads);
  EXPECT_EQ(a.grads.size(), p.weights.size());
}

TEST(Kernels, ForEachIndexRethrowsLowestIndex) {
  try {
    for_each_index(10, ExecPolicy::kParallel, [](std::size_t i) {
      if (i == 3 || i == 7) throw ConfigError("index " + std::to_string(i));
    });
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "index 3");
  }
}

// d(dot of two embeddings) / d(every weight) on small hand-built graphs.
void check_encoder_gradients(Mode mode) {
  const EncoderParams p = perturbed_params(8);
  const EgoGraph g1 = line_graph(3, {{1, 5, 0}, {2, 10, 1}, {3, 18, 2}});
  const EgoGraph g2 = line_graph(3, {{4, 8, 1}, {5, 11, 0}, {6, 5, 2}});
  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (const auto& [name, t] : p.weights) {
    names.push_back(name);
    values.push_back(t);
  }
  const auto f = [&](std::span<const Var> vars) {
    Tape& tape = vars[0].tape();
    BoundParams bound;
    bound.params = &p;
    for (std::size_t i = 0; i < names.size(); ++i) bound.vars.emplace(names[i], vars[i]);
    const Var a = encode(g1, bound, tape.constant(node_features(g1)), mode).embedding;
    const Var b = encode(g2, bound, tape.constant(node_features(g2)), mode).embedding;
    return ad::dot(a, b);
  };
  EXPECT_LT(ad::gradcheck(f, values, 1e-5, 24, 1), 1e-4);
}

TEST(Encoder, GradcheckInferMode) { check_encoder_gradients(Mode::kInfer); }
TEST(Encoder, GradcheckTrainMode) { check_encoder_gradients(Mode::kTrain); }

TEST(Encoder, RunningStatsUpdate) {
  EncoderParams p = perturbed_params(0);
  const EgoGraph g = scene_graphs(small_scene(0))[4];
  const EgoGraph* ptr = &g;
  Tape tape;
  const BoundParams bound = bind_params(tape, p, false);
  const auto out =
      encode_batch(std::span<const EgoGraph* const>(&ptr, 1), bound, tape.constant(node_features(g)), Mode::kTrain);
  const EncoderParams before = p;
  const std::vector<std::vector<ad::BatchNormStats>> observed = {out.observed};
  update_running_stats(p, observed, 0.25);
  std::size_t checked = 0;
  for (const auto& [name, t] : p.buffers) {
    const std::size_t layer = static_cast<std::size_t>(name[name.find_first_of("0123456789")] - '0');
    const bool is_var = name.find("var") != std::string::npos;
    const Tensor& obs = is_var ? out.observed[layer].var : out.observed[layer].mean;
    for (std::size_t i = 0; i < t.size(); ++i) {
      EXPECT_NEAR(t[i], 0.75 * before.buffers.at(name)[i] + 0.25 * obs[i], 1e-15);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(Bow, CountsAndNormalisation) {
  const Taxonomy tax = Taxonomy::office();
  const EgoGraph g = line_graph(3, {{1, 5, 0}, {2, 5, 1}, {3, 8, 2}});
  const auto b = bow_embed(g, tax);
  ASSERT_EQ(b.size(), 6u);
  EXPECT_NEAR(b[0], 2.0 / std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(b[1], 1.0 / std::sqrt(5.0), 1e-15);
  for (std::size_t i = 2; i < 6; ++i) EXPECT_EQ(b[i], 0.0);
  EXPECT_EQ(bow_embed(line_graph(2, {}), tax), std::vector<double>(6, 0.0));
  // Same histogram, different layout.
  EXPECT_EQ(bow_embed(line_graph(5, {{9, 8, 4}, {7, 5, 0}, {6, 5, 3}}), tax), b);
}

TEST(Checkpoint, RoundTrip) {
  Checkpoint c{perturbed_params(3), R"({"note":"x"})"};
  const auto path = std::filesystem::temp_directory_path() / "semloc_ckpt_test.json";
  save_checkpoint(c, path);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.params.hyper, c.params.hyper);
  EXPECT_EQ(back.params.weights, c.params.weights);
  EXPECT_EQ(back.params.buffers, c.params.buffers);
  EXPECT_EQ(back.meta_json, c.meta_json);
}

TEST(Checkpoint, RejectsForeignFiles) {
  EXPECT_THROW(checkpoint_from_json(R"({"weights": {}})"), ParseError);
  EXPECT_THROW(checkpoint_from_json("not json"), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), ParseError);
}

}  // namespace
}  // namespace semloc
