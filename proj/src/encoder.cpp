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

#include "semloc/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "semloc/errors.hpp"

namespace semloc {

namespace {

std::string layer_name(const char* prefix, std::size_t i, const char* suffix) {
  return std::string(prefix) + std::to_string(i) + suffix;
}

}  // namespace

std::map<std::string, Shape> EncoderParams::expected_weight_shapes() const {
  const std::size_t h = hyper.hidden;
  std::map<std::string, Shape> shapes;
  shapes["input.weight"] = {hyper.num_classes + 1, h};
  shapes["input.bias"] = {h};
  for (std::size_t l = 0; l < hyper.mpnn_layers; ++l) {
    shapes[layer_name("mpnn", l, ".self.weight")] = {h, h};
    shapes[layer_name("mpnn", l, ".self.bias")] = {h};
    shapes[layer_name("mpnn", l, ".trav.weight")] = {h, h};
    shapes[layer_name("mpnn", l, ".vis.weight")] = {h, h};
    shapes[layer_name("bn", l, ".gamma")] = {h};
    shapes[layer_name("bn", l, ".beta")] = {h};
  }
  std::size_t out_in = h;
  if (hyper.use_gat) {
    for (std::size_t k = 0; k < hyper.heads; ++k) {
      shapes[layer_name("gat.head", k, ".src.weight")] = {h, h};
      shapes[layer_name("gat.head", k, ".dst.weight")] = {h, h};
      shapes[layer_name("gat.head", k, ".att")] = {h};
      shapes[layer_name("gat.head", k, ".bias")] = {h};
    }
    out_in = h * hyper.heads;
  }
  shapes["output.weight"] = {out_in, hyper.embed_dim};
  shapes["output.bias"] = {hyper.embed_dim};
  return shapes;
}

std::map<std::string, Shape> EncoderParams::expected_buffer_shapes() const {
  std::map<std::string, Shape> shapes;
  for (std::size_t l = 0; l < hyper.mpnn_layers; ++l) {
    shapes[layer_name("bn", l, ".running_mean")] = {hyper.hidden};
    shapes[layer_name("bn", l, ".running_var")] = {hyper.hidden};
  }
  return shapes;
}

void EncoderParams::validate() const {
  if (hyper.num_classes < 1 || hyper.hidden < 1 || hyper.embed_dim < 1 || (hyper.use_gat && hyper.heads < 1)) {
    throw ValidationError("encoder: hyperparameters must be positive");
  }
  auto check = [](const std::map<std::string, Tensor>& have, const std::map<std::string, Shape>& want,
                  const char* what) {
    if (have.size() != want.size()) {
      throw ValidationError(std::string("encoder: expected ") + std::to_string(want.size()) + " " + what +
                            ", found " + std::to_string(have.size()));
    }
    for (const auto& [name, shape] : want) {
      auto it = have.find(name);
      if (it == have.end()) throw ValidationError(std::string("encoder: missing ") + what + " '" + name + "'");
      if (it->second.shape() != shape) {
        throw ValidationError("encoder: '" + name + "' has shape " + shape_string(it->second.shape()) +
                              ", expected " + shape_string(shape));
      }
      if (!it->second.all_finite()) throw ValidationError("encoder: '" + name + "' is not finite");
    }
  };
  check(weights, expected_weight_shapes(), "weights");
  check(buffers, expected_buffer_shapes(), "buffers");
}

std::size_t EncoderParams::num_weights() const {
  std::size_t n = 0;
  for (const auto& [_, t] : weights) n += t.size();
  return n;
}

EncoderParams init_params(const EncoderHyper& hyper, std::uint64_t seed) {
  EncoderParams params;
  params.hyper = hyper;
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : params.expected_weight_shapes()) {
    Tensor t(shape);
    const bool is_bias = name.ends_with(".bias") || name.ends_with(".beta");
    if (name.ends_with(".gamma")) {
      t.fill(1.0);
    } else if (!is_bias) {
      // Vectors (attention) are treated as (hidden x 1) maps.
      const double fan_in = static_cast<double>(shape[0]);
      const double fan_out = shape.size() == 2 ? static_cast<double>(shape[1]) : 1.0;
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.values()) v = dist(rng);
    }
    params.weights.emplace(name, std::move(t));
  }
  for (const auto& [name, shape] : params.expected_buffer_shapes()) {
    Tensor t(shape);
    if (name.ends_with("running_var")) t.fill(1.0);
    params.buffers.emplace(name, std::move(t));
  }
  return params;
}

Tensor node_features(const EgoGraph& graph) {
  const std::size_t width = graph.num_classes + 1;
  Tensor x({graph.size(), width});
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (graph.nodes[i].feature >= width) {
      throw ValidationError("node_features: node " + std::to_string(graph.nodes[i].id) + " has feature " +
                            std::to_string(graph.nodes[i].feature) + " outside width " + std::to_string(width));
    }
    x.at(i, graph.nodes[i].feature) = 1.0;
  }
  return x;
}

Tensor node_features(const EgoGraph& graph, const Taxonomy& taxonomy) {
  const std::size_t width = taxonomy.size() + 1;
  Tensor x({graph.size(), width});
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const EgoNode& n = graph.nodes[i];
    if (n.kind == NodeKind::kPlace) {
      x.at(i, taxonomy.size()) = 1.0;
      continue;
    }
    const auto col = taxonomy.index_of(n.label);
    if (!col) {
      throw ValidationError("node_features: object " + std::to_string(n.id) + " has unknown class label " +
                            std::to_string(n.label));
    }
    x.at(i, *col) = 1.0;
  }
  return x;
}

// ---------------------------------------------------------------------------

ad::Var BoundParams::operator[](const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw ValidationError("encoder: no parameter named '" + name + "'");
  return it->second;
}

BoundParams bind_params(ad::Tape& tape, const EncoderParams& params, bool trainable) {
  BoundParams bound;
  bound.params = &params;
  for (const auto& [name, t] : params.weights) {
    bound.vars.emplace(name, trainable ? tape.parameter(t) : tape.constant(t));
  }
  return bound;
}

Tensor node_features(std::span<const EgoGraph* const> graphs) {
  if (graphs.empty()) throw ValidationError("node_features: no graphs");
  const std::size_t width = graphs.front()->num_classes + 1;
  std::size_t rows = 0;
  for (const EgoGraph* g : graphs) {
    if (g->num_classes + 1 != width) throw ValidationError("node_features: graphs disagree on the class count");
    rows += g->size();
  }
  Tensor x({rows, width});
  std::size_t offset = 0;
  for (const EgoGraph* g : graphs) {
    const Tensor part = node_features(*g);
    std::copy(part.values().begin(), part.values().end(), x.values().begin() + static_cast<std::ptrdiff_t>(offset * width));
    offset += g->size();
  }
  return x;
}

EncodeBatchOutput encode_batch(std::span<const EgoGraph* const> graphs, const BoundParams& p, ad::Var features,
                               Mode mode, bool record_attention) {
  const EncoderParams& params = *p.params;
  const EncoderHyper& hy = params.hyper;
  if (graphs.empty()) throw ValidationError("encoder: no graphs");
  const std::size_t num_graphs = graphs.size();

  // Disjoint union: node offsets, centres and directed edge lists per relation.
  EncodeBatchOutput out;
  std::vector<std::size_t> centres;
  std::vector<std::size_t> trav_src, trav_dst, vis_src, vis_dst;
  std::size_t n = 0;
  for (const EgoGraph* g : graphs) {
    if (g->size() == 0) throw ValidationError("encoder: empty graph");
    if (g->centre >= g->size()) throw ValidationError("encoder: centre index out of range");
    out.offsets.push_back(n);
    centres.push_back(n + g->centre);
    for (const auto& [a, b] : g->traversability) {
      trav_src.push_back(n + a), trav_dst.push_back(n + b);
      trav_src.push_back(n + b), trav_dst.push_back(n + a);
    }
    for (const auto& [place, object] : g->visibility) {
      vis_src.push_back(n + object), vis_dst.push_back(n + place);
      vis_src.push_back(n + place), vis_dst.push_back(n + object);
    }
    n += g->size();
  }
  if (features.shape() != Shape{n, hy.num_classes + 1}) {
    throw ShapeError("encoder: features have shape " + shape_string(features.shape()) + ", expected " +
                     shape_string({n, hy.num_classes + 1}));
  }
  const bool training = mode == Mode::kTrain;

  ad::Var h = ad::elu(ad::add(ad::matmul(features, p["input.weight"]), p["input.bias"]));

  for (std::size_t l = 0; l < hy.mpnn_layers; ++l) {
    ad::Var acc = ad::add(ad::matmul(h, p[layer_name("mpnn", l, ".self.weight")]),
                          p[layer_name("mpnn", l, ".self.bias")]);
    if (!trav_src.empty()) {
      const ad::Var msg = ad::matmul(h, p[layer_name("mpnn", l, ".trav.weight")]);
      acc = ad::add(acc, ad::sum_segments(ad::gather_rows(msg, trav_src), trav_dst, n));
    }
    if (!vis_src.empty()) {
      const ad::Var msg = ad::matmul(h, p[layer_name("mpnn", l, ".vis.weight")]);
      acc = ad::add(acc, ad::sum_segments(ad::gather_rows(msg, vis_src), vis_dst, n));
    }
    const ad::BatchNormStats running{params.buffers.at(layer_name("bn", l, ".running_mean")),
                                     params.buffers.at(layer_name("bn", l, ".running_var"))};
    ad::BatchNormStats observed;
    h = ad::batch_norm(ad::tanh(acc), p[layer_name("bn", l, ".gamma")], p[layer_name("bn", l, ".beta")],
                       running, training, training ? &observed : nullptr);
    if (training) out.observed.push_back(std::move(observed));
  }

  ad::Var rows;
  if (!hy.use_gat) {
    rows = ad::gather_rows(h, centres);
  } else {
    std::vector<std::size_t> src(trav_src), dst(trav_dst);
    src.insert(src.end(), vis_src.begin(), vis_src.end());
    dst.insert(dst.end(), vis_dst.begin(), vis_dst.end());
    // Only centre rows are read out, so without a full attention record the
    // heads are evaluated on the centres' incoming edges alone, one segment
    // per graph. Per-row arithmetic is the same either way.
    std::size_t segments = n;
    ad::Var hd = h;
    if (!record_attention) {
      std::vector<std::size_t> centre_of(n, num_graphs);
      for (std::size_t g = 0; g < num_graphs; ++g) centre_of[centres[g]] = g;
      // Edge order within each segment matches the full path.
      std::vector<std::vector<std::size_t>> incoming(num_graphs);
      for (std::size_t e = 0; e < src.size(); ++e) {
        if (centre_of[dst[e]] < num_graphs) incoming[centre_of[dst[e]]].push_back(src[e]);
      }
      std::vector<std::size_t> keep_src, keep_dst;
      for (std::size_t g = 0; g < num_graphs; ++g) {
        keep_src.insert(keep_src.end(), incoming[g].begin(), incoming[g].end());
        keep_dst.insert(keep_dst.end(), incoming[g].size(), g);
      }
      src = std::move(keep_src);
      dst = std::move(keep_dst);
      segments = num_graphs;
      hd = ad::gather_rows(h, centres);
    } else {
      for (std::size_t e = 0; e < src.size(); ++e) out.attention.edges.emplace_back(src[e], dst[e]);
    }

    std::vector<ad::Var> heads;
    for (std::size_t k = 0; k < hy.heads; ++k) {
      const ad::Var bias = p[layer_name("gat.head", k, ".bias")];
      if (src.empty()) {
        heads.push_back(ad::add(h.tape().constant(Tensor({segments, hy.hidden})), bias));
        if (record_attention) out.attention.coefficients.emplace_back();
        continue;
      }
      ad::Var src_rows, dst_rows;
      if (record_attention) {
        src_rows = ad::gather_rows(ad::matmul(h, p[layer_name("gat.head", k, ".src.weight")]), src);
        dst_rows = ad::gather_rows(ad::matmul(h, p[layer_name("gat.head", k, ".dst.weight")]), dst);
      } else {
        src_rows = ad::matmul(ad::gather_rows(h, src), p[layer_name("gat.head", k, ".src.weight")]);
        dst_rows = ad::gather_rows(ad::matmul(hd, p[layer_name("gat.head", k, ".dst.weight")]), dst);
      }
      const ad::Var pre = ad::leaky_relu(ad::add(src_rows, dst_rows), 0.2);
      const ad::Var scores = ad::matmul(pre, p[layer_name("gat.head", k, ".att")]);
      const ad::Var alpha = ad::softmax_over_segments(scores, dst, segments);
      if (record_attention) out.attention.coefficients.emplace_back(alpha.value().storage());
      heads.push_back(ad::add(ad::sum_segments(ad::scale_rows(src_rows, alpha), dst, segments), bias));
    }
    const ad::Var readout = heads.size() == 1 ? heads.front() : ad::concat(heads);
    rows = record_attention ? ad::gather_rows(readout, centres) : readout;
  }

  out.embeddings = ad::l2_normalize(ad::add(ad::matmul(rows, p["output.weight"]), p["output.bias"]));
  return out;
}

EncodeOutput encode(const EgoGraph& graph, const BoundParams& p, ad::Var features, Mode mode,
                    bool record_attention) {
  const EgoGraph* graphs[] = {&graph};
  EncodeBatchOutput batch = encode_batch(graphs, p, features, mode, record_attention);
  EncodeOutput out;
  out.embedding = ad::reshape(batch.embeddings, {p.params->hyper.embed_dim});
  out.attention = std::move(batch.attention);
  out.observed = std::move(batch.observed);
  return out;
}

EmbedResult embed(const EgoGraph& graph, const EncoderParams& params, Mode mode, bool record_attention) {
  ad::Tape tape;
  const BoundParams bound = bind_params(tape, params, false);
  const ad::Var x = tape.constant(node_features(graph));
  EncodeOutput out = encode(graph, bound, x, mode, record_attention);
  return {out.embedding.value().storage(), std::move(out.attention)};
}

void update_running_stats(EncoderParams& params, std::span<const std::vector<ad::BatchNormStats>> observed,
                          double momentum) {
  for (const auto& per_graph : observed) {
    for (std::size_t l = 0; l < per_graph.size(); ++l) {
      Tensor& mean = params.buffers.at(layer_name("bn", l, ".running_mean"));
      Tensor& var = params.buffers.at(layer_name("bn", l, ".running_var"));
      for (std::size_t c = 0; c < mean.size(); ++c) {
        mean[c] = (1.0 - momentum) * mean[c] + momentum * per_graph[l].mean[c];
        var[c] = (1.0 - momentum) * var[c] + momentum * per_graph[l].var[c];
      }
    }
  }
}

std::vector<double> bow_embed(const EgoGraph& graph, const Taxonomy& taxonomy) {
  std::vector<double> counts(taxonomy.size(), 0.0);
  for (const EgoNode& n : graph.nodes) {
    if (n.kind != NodeKind::kObject) continue;
    if (auto i = taxonomy.index_of(n.label)) counts[*i] += 1.0;
  }
  double norm = 0.0;
  for (double c : counts) norm += c * c;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& c : counts) c /= norm;
  return counts;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kFormat = "semloc-checkpoint";
constexpr int kVersion = 1;

nlohmann::json tensors_to_json(const std::map<std::string, Tensor>& tensors) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, t] : tensors) out[name] = {{"shape", t.shape()}, {"values", t.storage()}};
  return out;
}

std::map<std::string, Tensor> tensors_from_json(const nlohmann::json& j) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : j.items()) {
    out.emplace(name, Tensor(v.at("shape").get<Shape>(), v.at("values").get<std::vector<double>>()));
  }
  return out;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ck) {
  const EncoderHyper& h = ck.params.hyper;
  nlohmann::json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["hyper"] = {{"num_classes", h.num_classes}, {"hidden", h.hidden},     {"mpnn_layers", h.mpnn_layers},
                  {"heads", h.heads},             {"use_gat", h.use_gat},   {"embed_dim", h.embed_dim}};
  doc["weights"] = tensors_to_json(ck.params.weights);
  doc["buffers"] = tensors_to_json(ck.params.buffers);
  doc["meta"] = nlohmann::json::parse(ck.meta_json);
  return doc.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  Checkpoint ck;
  try {
    const nlohmann::json doc = nlohmann::json::parse(text);
    if (doc.value("format", "") != kFormat) throw ParseError("checkpoint: missing format tag");
    if (doc.at("version").get<int>() != kVersion) {
      throw ParseError("checkpoint: unsupported version " + doc.at("version").dump());
    }
    const auto& h = doc.at("hyper");
    ck.params.hyper.num_classes = h.at("num_classes").get<std::size_t>();
    ck.params.hyper.hidden = h.at("hidden").get<std::size_t>();
    ck.params.hyper.mpnn_layers = h.at("mpnn_layers").get<std::size_t>();
    ck.params.hyper.heads = h.at("heads").get<std::size_t>();
    ck.params.hyper.use_gat = h.at("use_gat").get<bool>();
    ck.params.hyper.embed_dim = h.at("embed_dim").get<std::size_t>();
    ck.params.weights = tensors_from_json(doc.at("weights"));
    ck.params.buffers = tensors_from_json(doc.at("buffers"));
    ck.meta_json = doc.contains("meta") ? doc.at("meta").dump() : "{}";
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  ck.params.validate();
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot write " + path.string());
  out << checkpoint_to_json(checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace semloc
