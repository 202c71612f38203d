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

#include "semloc/kernels.hpp"

#include <algorithm>
#include <exception>

#include "semloc/errors.hpp"

namespace semloc {

void for_each_index(std::size_t n, ExecPolicy policy, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
  if (policy == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<Embedding> embed_all(std::span<const EgoGraph* const> graphs, const EncoderParams& params,
                                 ExecPolicy policy, std::size_t chunk) {
  if (chunk == 0) throw ConfigError("embed_all: chunk size must be positive");
  std::vector<Embedding> out(graphs.size());
  const std::size_t chunks = (graphs.size() + chunk - 1) / chunk;
  for_each_index(chunks, policy, [&](std::size_t c) {
    const auto part = graphs.subspan(c * chunk, std::min(chunk, graphs.size() - c * chunk));
    ad::Tape tape;
    const BoundParams bound = bind_params(tape, params, false);
    const ad::Var x = tape.constant(node_features(part));
    const Tensor& z = encode_batch(part, bound, x, Mode::kInfer).embeddings.value();
    for (std::size_t i = 0; i < part.size(); ++i) {
      out[c * chunk + i].assign(z.values().begin() + static_cast<std::ptrdiff_t>(i * z.cols()),
                                z.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * z.cols()));
    }
  });
  return out;
}

std::vector<Embedding> embed_all(std::span<const EgoGraph> graphs, const EncoderParams& params, ExecPolicy policy) {
  std::vector<const EgoGraph*> ptrs;
  for (const EgoGraph& g : graphs) ptrs.push_back(&g);
  return embed_all(ptrs, params, policy);
}

std::vector<Embedding> bow_all(std::span<const EgoGraph> graphs, const Taxonomy& taxonomy) {
  std::vector<Embedding> out;
  for (const EgoGraph& g : graphs) out.push_back(bow_embed(g, taxonomy));
  return out;
}

Tensor cosine_matrix(std::span<const Embedding> rows, std::span<const Embedding> cols, ExecPolicy policy) {
  Tensor m({rows.size(), cols.size()});
  for (const Embedding& c : cols) {
    if (!rows.empty() && c.size() != rows.front().size()) throw ShapeError("cosine_matrix: embedding widths differ");
  }
  for_each_index(rows.size(), policy, [&](std::size_t i) {
    const Embedding& a = rows[i];
    if (a.size() != (cols.empty() ? a.size() : cols.front().size())) {
      throw ShapeError("cosine_matrix: embedding widths differ");
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) d += a[k] * cols[j][k];
      m.at(i, j) = std::clamp(d, -1.0, 1.0);
    }
  });
  return m;
}

BatchGradient batch_gradient(std::span<const EgoGraph* const> graphs, const EncoderParams& params,
                             const BatchLoss& loss, ExecPolicy policy) {
  ad::Tape tape;
  tape.set_parallel(policy == ExecPolicy::kParallel);
  const BoundParams bound = bind_params(tape, params, true);
  const ad::Var x = tape.constant(node_features(graphs));
  EncodeBatchOutput enc = encode_batch(graphs, bound, x, Mode::kTrain);

  BatchGradient out;
  const std::size_t width = enc.embeddings.value().cols();
  std::vector<ad::Var> rows;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const std::size_t r[] = {i};
    rows.push_back(ad::reshape(ad::gather_rows(enc.embeddings, r), {width}));
    out.embeddings.push_back(rows.back().value().storage());
  }
  const ad::Var l = loss(tape, rows);
  out.loss = l.value().item();
  const ad::Gradients grads = tape.backward(l);
  for (const auto& [name, var] : bound.vars) out.grads.emplace(name, grads[var]);
  out.observed = std::move(enc.observed);
  return out;
}

}  // namespace semloc
