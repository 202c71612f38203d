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

#include "semloc/evaluation.hpp"

#include "semloc/errors.hpp"

namespace semloc {

QuerySet make_queries(const DatasetGraphs& graphs, const DatasetSplit& split, const std::string& which) {
  if (graphs.queries.size() != split.query_variants.size()) {
    throw ValidationError("evaluation: graphs were built for a different dataset");
  }
  QuerySet q;
  for (std::size_t v : split.variants(which)) {
    for (int id : split.ids(which)) {
      q.graphs.push_back(&graphs.query_graph(v, id));
      q.ids.push_back(id);
      q.variants.push_back(static_cast<int>(v));
      q.positives.push_back(split.positives[v].at(id));
    }
  }
  return q;
}

SimilarityMatrix similarity_matrix(const QuerySet& queries, std::span<const Embedding> query_embeddings,
                                   const DatasetGraphs& graphs, std::span<const Embedding> map_embeddings,
                                   ExecPolicy policy) {
  if (query_embeddings.size() != queries.ids.size() || map_embeddings.size() != graphs.place_ids.size()) {
    throw ShapeError("similarity_matrix: embedding counts do not match the id lists");
  }
  SimilarityMatrix sim;
  sim.query_ids = queries.ids;
  sim.query_variants = queries.variants;
  sim.map_ids = graphs.place_ids;
  sim.values = cosine_matrix(query_embeddings, map_embeddings, policy);
  return sim;
}

SimilarityMatrix similarity_matrix(const QuerySet& queries, const DatasetGraphs& graphs, const EncoderParams& params,
                                   ExecPolicy policy) {
  const auto qz = embed_all(queries.graphs, params, policy);
  const auto mz = embed_all(graphs.map, params, policy);
  return similarity_matrix(queries, qz, graphs, mz, policy);
}

SimilarityMatrix bow_similarity_matrix(const QuerySet& queries, const DatasetGraphs& graphs,
                                       const Taxonomy& taxonomy) {
  std::vector<Embedding> qz;
  for (const EgoGraph* g : queries.graphs) qz.push_back(bow_embed(*g, taxonomy));
  return similarity_matrix(queries, qz, graphs, bow_all(graphs.map, taxonomy), ExecPolicy::kSerial);
}

EvalReport evaluate_split(const DatasetGraphs& graphs, const DatasetSplit& split, const std::string& which,
                          const EncoderParams& params, ExecPolicy policy) {
  const QuerySet q = make_queries(graphs, split, which);
  return evaluate(similarity_matrix(q, graphs, params, policy), q.positives);
}

EvalReport evaluate_bow(const DatasetGraphs& graphs, const DatasetSplit& split, const std::string& which,
                        const Taxonomy& taxonomy) {
  const QuerySet q = make_queries(graphs, split, which);
  return evaluate(bow_similarity_matrix(q, graphs, taxonomy), q.positives);
}

}  // namespace semloc
