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

#include <random>

#include "semloc/encoder.hpp"
#include "semloc/scene_graph.hpp"
#include "semloc/tensor.hpp"

namespace semloc::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// 2x2 rooms of 4x4 places with 24 objects.
inline SceneGraph small_scene(std::uint64_t seed = 0) {
  SyntheticConfig c;
  c.rooms_x = 2;
  c.rooms_y = 2;
  c.room_cells = 4;
  c.num_objects = 24;
  return generate_synthetic(c, seed);
}

// Hand-built ego graph: places 0-1-2 in a line (centre 1), objects as given,
// each seen from the listed place. Office taxonomy feature columns.
struct ObjectSpec {
  int id;
  int label;
  std::size_t seen_from;  // local place index 0..places-1
};

inline EgoGraph line_graph(std::size_t places, const std::vector<ObjectSpec>& objects) {
  const Taxonomy tax = Taxonomy::office();
  EgoGraph g;
  g.num_classes = tax.size();
  g.centre = places / 2;
  g.centre_id = static_cast<int>(100 + g.centre);
  for (std::size_t i = 0; i < places; ++i) {
    g.nodes.push_back({static_cast<int>(100 + i), NodeKind::kPlace, -1, tax.size()});
    if (i > 0) g.traversability.emplace_back(i - 1, i);
  }
  for (const ObjectSpec& o : objects) {
    g.visibility.emplace_back(o.seen_from, g.nodes.size());
    g.nodes.push_back({o.id, NodeKind::kObject, o.label, *tax.index_of(o.label)});
  }
  g.validate();
  return g;
}

inline EncoderParams default_params(std::uint64_t seed = 0) { return init_params(EncoderHyper{}, seed); }

// Params with non-trivial batch-norm running statistics so that inference
// exercises the buffers.
inline EncoderParams perturbed_params(std::uint64_t seed = 0) {
  EncoderParams p = default_params(seed);
  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (auto& [name, t] : p.buffers) {
    for (double& v : t.values()) v = name.find("var") != std::string::npos ? u(rng) : u(rng) - 1.0;
  }
  return p;
}

}  // namespace semloc::testing
