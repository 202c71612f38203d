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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semloc/autodiff.hpp"
#include "semloc/encoder.hpp"
#include "semloc/losses.hpp"
#include "test_util.hpp"

namespace semloc::testing {

// Scalar projection with fixed random weights so every output coordinate
// reaches the gradient.
inline ad::Var project(ad::Var out, std::uint64_t seed) {
  ad::Tape& tape = out.tape();
  return ad::sum(ad::mul(out, tape.constant(random_tensor(out.shape(), seed + 1000))));
}

// Random values bounded away from zero (for kinked activations).
inline Tensor off_zero(Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed, 0.1, 1.0);
  std::mt19937_64 rng(seed ^ 0x5a5a);
  for (double& v : t.values())
    if (rng() & 1U) v = -v;
  return t;
}

// One primitive: relative finite-difference error for a given seed.
struct GradCase {
  std::string name;
  std::function<double(std::uint64_t)> error;
};

inline GradCase unary_case(std::string name, std::function<ad::Var(ad::Var)> op,
                           std::function<Tensor(std::uint64_t)> input) {
  return {std::move(name), [op, input](std::uint64_t seed) {
            return ad::gradcheck([&](ad::Var x) { return project(op(x), seed); }, input(seed));
          }};
}

inline GradCase multi_case(std::string name, std::function<ad::Var(std::span<const ad::Var>)> op,
                           std::function<std::vector<Tensor>(std::uint64_t)> inputs) {
  return {std::move(name), [op, inputs](std::uint64_t seed) {
            const auto xs = inputs(seed);
            return ad::gradcheck([&](std::span<const ad::Var> v) { return project(op(v), seed); }, xs);
          }};
}

inline std::vector<GradCase> primitive_cases() {
  using ad::Var;
  using V = std::span<const Var>;
  auto mat = [](std::uint64_t s) { return random_tensor({3, 4}, s); };
  auto kinked = [](std::uint64_t s) { return off_zero({3, 4}, s); };
  auto vec = [](std::uint64_t s) { return random_tensor({6}, s, -2, 2); };
  auto pair = [](Shape a, Shape b) {
    return [a, b](std::uint64_t s) { return std::vector{random_tensor(a, s), random_tensor(b, s + 50)}; };
  };
  static const std::vector<std::size_t> rows{2, 0, 0, 3, 1};
  static const std::vector<std::size_t> seg{0, 1, 1, 2, 0, 2};

  std::vector<GradCase> c;
  c.push_back(unary_case("elu", ad::elu, mat));
  c.push_back(unary_case("tanh", ad::tanh, mat));
  c.push_back(unary_case("leaky_relu", [](Var x) { return ad::leaky_relu(x, 0.2); }, kinked));
  c.push_back(unary_case("relu", ad::relu, kinked));
  c.push_back(unary_case("exp", ad::exp, mat));
  c.push_back(unary_case("log", ad::log, [](std::uint64_t s) { return random_tensor({3, 4}, s, 0.5, 2.0); }));
  c.push_back(unary_case("scale", [](Var x) { return ad::scale(x, -1.7); }, mat));
  c.push_back(unary_case("reshape", [](Var x) { return ad::reshape(x, {12}); }, mat));

  c.push_back(multi_case("add", [](V v) { return ad::add(v[0], v[1]); }, pair({3, 4}, {3, 4})));
  c.push_back(multi_case("sub", [](V v) { return ad::sub(v[0], v[1]); }, pair({3, 4}, {3, 4})));
  c.push_back(multi_case("mul", [](V v) { return ad::mul(v[0], v[1]); }, pair({3, 4}, {3, 4})));
  c.push_back(multi_case("add_row", [](V v) { return ad::add(v[0], v[1]); }, pair({3, 4}, {4})));
  c.push_back(multi_case("matmul", [](V v) { return ad::matmul(v[0], v[1]); }, pair({3, 4}, {4, 2})));
  c.push_back(multi_case("matvec", [](V v) { return ad::matmul(v[0], v[1]); }, pair({3, 4}, {4})));
  c.push_back(multi_case("concat", [](V v) { return ad::concat(v); }, pair({3, 2}, {3, 5})));
  c.push_back(multi_case("scale_rows", [](V v) { return ad::scale_rows(v[0], v[1]); }, pair({5, 3}, {5})));

  c.push_back(unary_case("sum", ad::sum, vec));
  c.push_back(unary_case("logsumexp", ad::logsumexp, vec));
  c.push_back(unary_case("l2_norm", ad::l2_norm, vec));
  c.push_back(unary_case("l2_normalize", ad::l2_normalize, vec));
  c.push_back(unary_case("l2_normalize_rows", ad::l2_normalize, mat));
  c.push_back(multi_case("dot", [](V v) { return ad::dot(v[0], v[1]); }, pair({6}, {6})));
  // l2_normalize followed by dot, the similarity used throughout.
  c.push_back(multi_case("cosine", [](V v) { return ad::dot(ad::l2_normalize(v[0]), ad::l2_normalize(v[1])); },
                         pair({8}, {8})));

  c.push_back(unary_case("gather_rows", [](Var x) { return ad::gather_rows(x, rows); },
                         [](std::uint64_t s) { return random_tensor({4, 3}, s); }));
  c.push_back(unary_case("sum_segments", [](Var x) { return ad::sum_segments(x, seg, 3); },
                         [](std::uint64_t s) { return random_tensor({6, 2}, s); }));
  c.push_back(unary_case("softmax_over_segments", [](Var x) { return ad::softmax_over_segments(x, seg, 3); },
                         [](std::uint64_t s) { return random_tensor({6}, s, -2, 2); }));

  static const ad::BatchNormStats running{random_tensor({4}, 90), random_tensor({4}, 91, 0.5, 1.5)};
  for (bool training : {true, false}) {
    c.push_back(multi_case(
        training ? "batch_norm/train" : "batch_norm/infer",
        [training](V v) { return ad::batch_norm(v[0], v[1], v[2], running, training); },
        [](std::uint64_t s) {
          return std::vector{random_tensor({6, 4}, s), random_tensor({4}, s + 50, 0.5, 1.5), random_tensor({4}, s + 60)};
        }));
  }
  return c;
}

// Random labels on a line of places; each object seen from a random place.
inline EgoGraph random_line_graph(std::mt19937_64& rng, int first_id) {
  const Taxonomy tax = Taxonomy::office();
  const std::size_t places = 2 + rng() % 3, objects = 1 + rng() % 4;
  std::vector<ObjectSpec> specs;
  for (std::size_t i = 0; i < objects; ++i)
    specs.push_back({first_id + static_cast<int>(i), tax.classes()[rng() % tax.size()].label, rng() % places});
  return line_graph(places, specs);
}

// d(InfoNCE of one query against a positive and two negatives) / d(every
// weight), probing 24 coordinates per weight tensor.
inline double encoder_infonce_error(std::uint64_t seed, Mode mode) {
  const EncoderParams p = perturbed_params(seed);
  std::mt19937_64 rng(seed);
  std::vector<EgoGraph> graphs;
  for (int i = 0; i < 4; ++i) graphs.push_back(random_line_graph(rng, 10 * i + 1));
  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (const auto& [name, t] : p.weights) {
    names.push_back(name);
    values.push_back(t);
  }
  const auto f = [&](std::span<const ad::Var> vars) {
    ad::Tape& tape = vars[0].tape();
    BoundParams bound;
    bound.params = &p;
    for (std::size_t i = 0; i < names.size(); ++i) bound.vars.emplace(names[i], vars[i]);
    std::vector<ad::Var> z;
    for (const EgoGraph& g : graphs) z.push_back(encode(g, bound, tape.constant(node_features(g)), mode).embedding);
    const std::vector<ad::Var> negatives{z[2], z[3]};
    return infonce_loss(z[0], z[1], negatives, 0.7);
  };
  return ad::gradcheck(f, values, 1e-5, 24, static_cast<unsigned>(seed));
}

}  // namespace semloc::testing
