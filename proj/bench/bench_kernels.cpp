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

// Serial reference kernels against their OpenMP counterparts. Both policies
// produce bit-identical results; only the wall time differs.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "semloc/attribution.hpp"
#include "semloc/autodiff.hpp"
#include "semloc/kernels.hpp"
#include "semloc/scene_graph.hpp"

namespace {

using namespace semloc;

struct Fixture {
  SceneGraph scene;
  std::vector<EgoGraph> graphs;
  std::vector<const EgoGraph*> ptrs;
  EncoderParams params;

  Fixture() {
    SyntheticConfig c;
    c.rooms_x = 3;
    c.rooms_y = 2;
    scene = generate_synthetic(c, 0);
    const SceneIndex index(scene);
    for (const Place& p : scene.places) graphs.push_back(index.ego_graph(p.id, 2));
    for (const EgoGraph& g : graphs) ptrs.push_back(&g);
    params = init_params(EncoderHyper{}, 0);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

ExecPolicy policy_of(const benchmark::State& state) {
  return state.range(0) == 0 ? ExecPolicy::kSerial : ExecPolicy::kParallel;
}

void BM_EmbedAll(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(embed_all(f.ptrs, f.params, policy_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.graphs.size()));
}

void BM_CosineMatrix(benchmark::State& state) {
  const Fixture& f = fixture();
  static const std::vector<Embedding> z = embed_all(f.ptrs, f.params);
  for (auto _ : state) benchmark::DoNotOptimize(cosine_matrix(z, z, policy_of(state)));
}

void BM_BatchGradient(benchmark::State& state) {
  const Fixture& f = fixture();
  const std::vector<const EgoGraph*> batch(f.ptrs.begin(), f.ptrs.begin() + 64);
  const BatchLoss loss = [](ad::Tape&, std::span<const ad::Var> z) {
    ad::Var total = ad::dot(z[0], z[1]);
    for (std::size_t i = 2; i < z.size(); ++i) total = ad::add(total, ad::dot(z[i - 1], z[i]));
    return total;
  };
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradient(batch, f.params, loss, policy_of(state)));
}

void BM_MatmulBackward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor a({512, 64}), b({64, 192});
  for (double& v : a.values()) v = u(rng);
  for (double& v : b.values()) v = u(rng);
  for (auto _ : state) {
    ad::Tape tape;
    tape.set_parallel(state.range(0) != 0);
    const ad::Var x = tape.parameter(a), w = tape.parameter(b);
    benchmark::DoNotOptimize(tape.backward(ad::sum(ad::matmul(x, w))));
  }
}

void BM_ExplainPairsIg(benchmark::State& state) {
  const Fixture& f = fixture();
  std::vector<AttributionPair> pairs;
  for (std::size_t i = 0; i < f.graphs.size() && pairs.size() < 16; i += 7)
    if (f.graphs[i].num_objects() > 0) pairs.push_back({f.graphs[i].centre_id, f.graphs[i].centre_id, 0, &f.graphs[i], &f.graphs[i]});
  ExplainOptions options;
  options.ig.steps = 32;
  for (auto _ : state)
    benchmark::DoNotOptimize(explain_pairs(Explainer::kIntegratedGradients, pairs, f.params, options, policy_of(state)));
}

}  // namespace

// Argument 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_EmbedAll)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CosineMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatmulBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ExplainPairsIg)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
