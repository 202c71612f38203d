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

// Graph encoder: one-hot class features -> linear + ELU -> sum-aggregation
// message passing (tanh + batch norm) -> multi-head GATv2 -> linear ->
// unit-length place embedding read at the ego graph's centre.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semloc/autodiff.hpp"
#include "semloc/scene_graph.hpp"
#include "semloc/tensor.hpp"

namespace semloc {

struct EncoderHyper {
  std::size_t num_classes = 6;
  std::size_t hidden = 64;
  std::size_t mpnn_layers = 2;
  std::size_t heads = 3;  // per-head width is `hidden`; heads are concatenated
  bool use_gat = true;
  std::size_t embed_dim = 32;

  friend bool operator==(const EncoderHyper&, const EncoderHyper&) = default;
};

enum class Mode { kTrain, kInfer };

using Embedding = std::vector<double>;

struct EncoderParams {
  EncoderHyper hyper;
  std::map<std::string, Tensor> weights;  // learnable
  std::map<std::string, Tensor> buffers;  // batch-norm running statistics

  std::map<std::string, Shape> expected_weight_shapes() const;
  std::map<std::string, Shape> expected_buffer_shapes() const;
  /// Throws ValidationError when a tensor is missing, misshapen or non-finite.
  void validate() const;
  std::size_t num_weights() const;
};

/// Glorot-uniform weights, zero biases, batch-norm scale 1 / shift 0.
EncoderParams init_params(const EncoderHyper& hyper, std::uint64_t seed);

/// Per-head GATv2 coefficients for every directed edge (local node ids).
struct AttentionRecord {
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (source, target)
  std::vector<std::vector<double>> coefficients;           // [head][edge]
};

/// One-hot rows: object -> its class column, place -> the trailing column.
Tensor node_features(const EgoGraph& graph, const Taxonomy& taxonomy);
Tensor node_features(const EgoGraph& graph);

// ---------------------------------------------------------------------------
// Tape-level interface used by training and attribution.

struct BoundParams {
  const EncoderParams* params = nullptr;
  std::map<std::string, ad::Var> vars;

  ad::Var operator[](const std::string& name) const;
};

/// Places every weight on `tape`, as parameter leaves when `trainable`.
BoundParams bind_params(ad::Tape& tape, const EncoderParams& params, bool trainable);

struct EncodeOutput {
  ad::Var embedding;  // shape {embed_dim}, unit norm
  AttentionRecord attention;  // empty unless requested
  std::vector<ad::BatchNormStats> observed;  // batch statistics per layer (train mode)
};

/// With `record_attention` the attention heads run on every node so that all
/// coefficients can be reported; the embedding is identical either way.
EncodeOutput encode(const EgoGraph& graph, const BoundParams& params, ad::Var features, Mode mode,
                    bool record_attention = false);

/// Stacked one-hot rows of several graphs, in order.
Tensor node_features(std::span<const EgoGraph* const> graphs);

struct EncodeBatchOutput {
  ad::Var embeddings;                // (graphs x embed_dim), unit rows
  std::vector<std::size_t> offsets;  // first union row of each graph
  AttentionRecord attention;         // edges in union node ids
  std::vector<ad::BatchNormStats> observed;
};

/// Encodes the disjoint union of `graphs`. In train mode batch normalisation
/// uses statistics over every node of the batch; in infer mode each row is
/// independent of the rest of the batch.
EncodeBatchOutput encode_batch(std::span<const EgoGraph* const> graphs, const BoundParams& params,
                               ad::Var features, Mode mode, bool record_attention = false);

// ---------------------------------------------------------------------------
// Value-level interface.

struct EmbedResult {
  Embedding embedding;
  AttentionRecord attention;
};

EmbedResult embed(const EgoGraph& graph, const EncoderParams& params, Mode mode = Mode::kInfer,
                  bool record_attention = false);

/// running = (1 - momentum) * running + momentum * observed, applied in order.
void update_running_stats(EncoderParams& params, std::span<const std::vector<ad::BatchNormStats>> observed,
                          double momentum = 0.1);

/// l2-normalised class histogram of the graph's objects (zero if none).
std::vector<double> bow_embed(const EgoGraph& graph, const Taxonomy& taxonomy);

// ---------------------------------------------------------------------------
// Checkpoints: JSON container with a format tag, the hyperparameter block,
// named tensors and an opaque metadata object.

struct Checkpoint {
  EncoderParams params;
  std::string meta_json = "{}";
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);

}  // namespace semloc
