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

// Batch kernels. Every kernel has a serial path and an OpenMP path (threads
// over graph chunks or matrix rows); both perform the same arithmetic in the
// same order, so their results are bit-identical.

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "semloc/encoder.hpp"

namespace semloc {

enum class ExecPolicy { kSerial, kParallel };

/// Infer-mode embeddings, computed in chunks of graphs per tape. Rows are
/// independent in infer mode, so the result does not depend on chunking.
std::vector<Embedding> embed_all(std::span<const EgoGraph* const> graphs, const EncoderParams& params,
                                 ExecPolicy policy = ExecPolicy::kParallel, std::size_t chunk = 16);
std::vector<Embedding> embed_all(std::span<const EgoGraph> graphs, const EncoderParams& params,
                                 ExecPolicy policy = ExecPolicy::kParallel);
std::vector<Embedding> bow_all(std::span<const EgoGraph> graphs, const Taxonomy& taxonomy);

/// (rows x cols) dot products clamped to [-1, 1].
Tensor cosine_matrix(std::span<const Embedding> rows, std::span<const Embedding> cols,
                     ExecPolicy policy = ExecPolicy::kParallel);

/// Loss over the embedding rows of a training batch, on the batch's tape.
using BatchLoss = std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> embeddings)>;

struct BatchGradient {
  double loss = 0.0;
  std::vector<Embedding> embeddings;
  std::map<std::string, Tensor> grads;
  std::vector<ad::BatchNormStats> observed;  // batch statistics per layer
};

/// Train-mode forward pass over the disjoint union of `graphs`, the loss on
/// their embeddings, and the gradient of every weight.
BatchGradient batch_gradient(std::span<const EgoGraph* const> graphs, const EncoderParams& params,
                             const BatchLoss& loss, ExecPolicy policy = ExecPolicy::kParallel);

/// Runs body(i) for i in [0, n), in parallel when asked. The first exception
/// thrown (lowest index) is rethrown after the loop.
void for_each_index(std::size_t n, ExecPolicy policy, const std::function<void(std::size_t)>& body);

}  // namespace semloc
