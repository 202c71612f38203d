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

#include <algorithm>
#include <deque>
#include <set>

#include "semloc/errors.hpp"
#include "semloc/scene_graph.hpp"

namespace semloc {

void EgoGraph::validate() const {
  if (nodes.empty()) throw ValidationError("ego graph: no nodes");
  if (centre >= nodes.size() || nodes[centre].kind != NodeKind::kPlace || nodes[centre].id != centre_id) {
    throw ValidationError("ego graph: centre " + std::to_string(centre_id) + " is not a contained place");
  }
  for (const EgoNode& n : nodes) {
    const bool place = n.kind == NodeKind::kPlace;
    if (n.feature > num_classes || (place != (n.feature == num_classes))) {
      throw ValidationError("ego graph: node " + std::to_string(n.id) + " has an invalid feature index");
    }
  }
  for (const auto& [a, b] : traversability) {
    if (a >= nodes.size() || b >= nodes.size() || nodes[a].kind != NodeKind::kPlace ||
        nodes[b].kind != NodeKind::kPlace || a == b) {
      throw ValidationError("ego graph: malformed traversability edge");
    }
  }
  for (const auto& [p, o] : visibility) {
    if (p >= nodes.size() || o >= nodes.size() || nodes[p].kind != NodeKind::kPlace ||
        nodes[o].kind != NodeKind::kObject) {
      throw ValidationError("ego graph: malformed visibility edge");
    }
  }
}

std::vector<int> EgoGraph::place_ids() const {
  std::vector<int> ids;
  for (const EgoNode& n : nodes)
    if (n.kind == NodeKind::kPlace) ids.push_back(n.id);
  return ids;
}

std::vector<int> EgoGraph::object_ids() const {
  std::vector<int> ids;
  for (const EgoNode& n : nodes)
    if (n.kind == NodeKind::kObject) ids.push_back(n.id);
  return ids;
}

std::size_t EgoGraph::num_objects() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const EgoNode& n) { return n.kind == NodeKind::kObject; }));
}

EgoGraph EgoGraph::with_objects(std::span<const int> keep) const {
  std::set<int> kept(keep.begin(), keep.end());
  EgoGraph out;
  out.centre_id = centre_id;
  out.num_classes = num_classes;
  std::vector<std::size_t> remap(nodes.size(), SIZE_MAX);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].kind == NodeKind::kObject && !kept.count(nodes[i].id)) continue;
    remap[i] = out.nodes.size();
    out.nodes.push_back(nodes[i]);
  }
  out.centre = remap[centre];
  out.traversability.reserve(traversability.size());
  for (const auto& [a, b] : traversability) out.traversability.emplace_back(remap[a], remap[b]);
  for (const auto& [p, o] : visibility) {
    if (remap[o] != SIZE_MAX) out.visibility.emplace_back(remap[p], remap[o]);
  }
  return out;
}

EgoGraph EgoGraph::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != nodes.size()) throw ValidationError("ego graph: permutation has wrong length");
  std::vector<std::size_t> inverse(nodes.size(), SIZE_MAX);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= nodes.size() || inverse[perm[i]] != SIZE_MAX) {
      throw ValidationError("ego graph: not a permutation");
    }
    inverse[perm[i]] = i;
  }
  EgoGraph out = *this;
  for (std::size_t i = 0; i < perm.size(); ++i) out.nodes[i] = nodes[perm[i]];
  out.centre = inverse[centre];
  for (auto& [a, b] : out.traversability) {
    a = inverse[a];
    b = inverse[b];
  }
  for (auto& [p, o] : out.visibility) {
    p = inverse[p];
    o = inverse[o];
  }
  return out;
}

// ---------------------------------------------------------------------------

SceneIndex::SceneIndex(const SceneGraph& scene) : scene_(&scene) {
  for (std::size_t i = 0; i < scene.places.size(); ++i) place_index_[scene.places[i].id] = i;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) object_index_[scene.objects[i].id] = i;
  place_adj_.resize(scene.places.size());
  place_seen_.resize(scene.places.size());
  for (const auto& [a, b] : scene.traversability) {
    const std::size_t ia = place_index_.at(a), ib = place_index_.at(b);
    place_adj_[ia].push_back(ib);
    place_adj_[ib].push_back(ia);
  }
  for (const auto& [p, o] : scene.visibility) place_seen_[place_index_.at(p)].push_back(object_index_.at(o));
  for (auto& v : place_adj_) std::sort(v.begin(), v.end());
  for (auto& v : place_seen_) std::sort(v.begin(), v.end());
}

EgoGraph SceneIndex::ego_graph(int place, int hops) const {
  auto it = place_index_.find(place);
  if (it == place_index_.end()) throw ValidationError("ego graph: unknown place id " + std::to_string(place));
  if (hops < 0) throw ConfigError("ego graph: hops must be non-negative");
  const SceneGraph& scene = *scene_;

  // Breadth-first search over traversability edges.
  std::vector<int> depth(scene.places.size(), -1);
  std::deque<std::size_t> frontier{it->second};
  depth[it->second] = 0;
  std::vector<std::size_t> places;
  while (!frontier.empty()) {
    const std::size_t p = frontier.front();
    frontier.pop_front();
    places.push_back(p);
    if (depth[p] == hops) continue;
    for (std::size_t q : place_adj_[p]) {
      if (depth[q] < 0) {
        depth[q] = depth[p] + 1;
        frontier.push_back(q);
      }
    }
  }
  std::set<std::size_t> objects;
  for (std::size_t p : places) objects.insert(place_seen_[p].begin(), place_seen_[p].end());

  // Places first, then objects, each ascending by id.
  std::sort(places.begin(), places.end(),
            [&](std::size_t a, std::size_t b) { return scene.places[a].id < scene.places[b].id; });
  std::vector<std::size_t> object_list(objects.begin(), objects.end());
  std::sort(object_list.begin(), object_list.end(),
            [&](std::size_t a, std::size_t b) { return scene.objects[a].id < scene.objects[b].id; });

  EgoGraph g;
  g.centre_id = place;
  g.num_classes = scene.taxonomy.size();
  std::vector<std::size_t> place_local(scene.places.size(), SIZE_MAX);
  std::vector<std::size_t> object_local(scene.objects.size(), SIZE_MAX);
  for (std::size_t p : places) {
    place_local[p] = g.nodes.size();
    if (scene.places[p].id == place) g.centre = g.nodes.size();
    g.nodes.push_back({scene.places[p].id, NodeKind::kPlace, -1, g.num_classes});
  }
  for (std::size_t o : object_list) {
    object_local[o] = g.nodes.size();
    const Object& obj = scene.objects[o];
    const auto feature = scene.taxonomy.index_of(obj.label);
    if (!feature) throw ValidationError("ego graph: object " + std::to_string(obj.id) + " has unknown class");
    g.nodes.push_back({obj.id, NodeKind::kObject, obj.label, *feature});
  }
  for (std::size_t p : places) {
    for (std::size_t q : place_adj_[p]) {
      if (p < q && place_local[q] != SIZE_MAX) g.traversability.emplace_back(place_local[p], place_local[q]);
    }
    for (std::size_t o : place_seen_[p]) g.visibility.emplace_back(place_local[p], object_local[o]);
  }
  return g;
}

EgoGraph ego_graph(const SceneGraph& scene, int place, int hops) {
  return SceneIndex(scene).ego_graph(place, hops);
}

std::size_t DatasetGraphs::row(int place_id) const {
  auto it = std::lower_bound(place_ids.begin(), place_ids.end(), place_id);
  if (it == place_ids.end() || *it != place_id) throw ValidationError("unknown place id " + std::to_string(place_id));
  return static_cast<std::size_t>(it - place_ids.begin());
}

DatasetGraphs build_graphs(const SceneGraph& map, const DatasetSplit& split, int hops) {
  DatasetGraphs g;
  g.hops = hops;
  for (const Place& p : map.places) g.place_ids.push_back(p.id);
  std::sort(g.place_ids.begin(), g.place_ids.end());
  const SceneIndex index(map);
  for (int id : g.place_ids) g.map.push_back(index.ego_graph(id, hops));
  for (const SceneGraph& variant : split.query_variants) {
    const SceneIndex vindex(variant);
    auto& rows = g.queries.emplace_back();
    for (int id : g.place_ids) rows.push_back(vindex.ego_graph(id, hops));
  }
  return g;
}

}  // namespace semloc
