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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace semloc {

struct SemanticClass {
  int label = 0;
  std::string name;
  std::string code;  // short code such as "CH"

  friend bool operator==(const SemanticClass&, const SemanticClass&) = default;
};

/// Ordered set of semantic classes. The position of a class is its feature
/// column in the encoder input.
class Taxonomy {
 public:
  Taxonomy() = default;
  explicit Taxonomy(std::vector<SemanticClass> classes);

  /// Chair, couch, computer, plant, painting, trash can with their office
  /// scene label ids.
  static Taxonomy office();

  std::size_t size() const noexcept { return classes_.size(); }
  bool empty() const noexcept { return classes_.empty(); }
  const std::vector<SemanticClass>& classes() const noexcept { return classes_; }
  const SemanticClass& operator[](std::size_t i) const { return classes_[i]; }

  std::optional<std::size_t> index_of(int label) const;
  /// Throws ValidationError for unknown labels / codes.
  const SemanticClass& by_label(int label) const;
  const SemanticClass& by_code(const std::string& code) const;

  friend bool operator==(const Taxonomy&, const Taxonomy&) = default;

 private:
  std::vector<SemanticClass> classes_;
};

struct Place {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Place&, const Place&) = default;
};

struct Object {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  int label = 0;
  friend bool operator==(const Object&, const Object&) = default;
};

using Edge = std::pair<int, int>;

/// Places and objects with traversability (place-place) and visibility
/// (place-object) edges.
struct SceneGraph {
  Taxonomy taxonomy;
  std::vector<Place> places;
  std::vector<Object> objects;
  std::vector<Edge> traversability;
  std::vector<Edge> visibility;  // (place id, object id)

  /// Throws ValidationError naming the offending id.
  void validate() const;
  /// label -> number of objects, for every class of the taxonomy.
  std::map<int, int> class_histogram() const;
  const Place& place(int id) const;

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

SceneGraph scene_from_json(const std::string& text);
std::string scene_to_json(const SceneGraph& scene);
SceneGraph load_scene(const std::filesystem::path& path);
void save_scene(const SceneGraph& scene, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SyntheticConfig {
  int rooms_x = 6;
  int rooms_y = 4;
  int room_cells = 6;          // places per room side
  double place_spacing = 1.0;  // metres between neighbouring places
  double jitter = 0.1;         // uniform jitter of place positions (metres)
  double visibility_range = 3.0;
  int num_objects = 110;
  Taxonomy taxonomy = Taxonomy::office();
  // Relative class frequencies aligned with `taxonomy`; defaults to the
  // office instance counts.
  std::vector<double> frequencies = {28, 11, 35, 13, 8, 15};
};

/// Rooms on a grid joined by one-place-wide corridors, one door per room.
/// Deterministic for a fixed seed.
SceneGraph generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// Exact per-class counts for `total` objects (largest-remainder rounding).
std::vector<int> apportion_counts(std::span<const double> frequencies, int total);

/// Rebuilds visibility edges: every object is linked to all places within
/// `range` metres.
SceneGraph relink_visibility(const SceneGraph& scene, double range);

struct MobilityProfile {
  std::map<int, double> sigma;  // label -> displacement scale (metres)

  /// TC 0.5, CH 0.5, PL 0.3, CP 0.2, CO 0.05, PA 0.05; other classes 0.
  static MobilityProfile defaults(const Taxonomy& taxonomy);
};

/// Displaces each object by an isotropic Gaussian offset with its class
/// scale. Places and edges are untouched.
SceneGraph perturb(const SceneGraph& scene, const MobilityProfile& profile, std::uint64_t seed);

/// Drops every object of class `label` and its visibility edges.
SceneGraph remove_class(const SceneGraph& scene, int label);

// ---------------------------------------------------------------------------
// Dataset split

struct SplitRatios {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<int> train;  // map place ids, ascending
  std::vector<int> val;
  std::vector<int> test;
  std::vector<SceneGraph> query_variants;
  // Variant indices used for training queries and for val/test queries.
  // Both default to every variant.
  std::vector<std::size_t> train_variants;
  std::vector<std::size_t> eval_variants;
  // positives[v][place] = map places within the radius of that query place
  // in variant v, ascending.
  std::vector<std::map<int, std::vector<int>>> positives;
  double radius = 4.0;

  const std::vector<int>& ids(const std::string& split) const;
  /// Variants queried for `split`: train_variants for "train", else eval_variants.
  const std::vector<std::size_t>& variants(const std::string& split) const;
};

/// Place ids are shuffled with `seed` and cut by `ratios`; positives are all
/// map places within `radius` of the query place's location.
DatasetSplit split_dataset(const SceneGraph& map, std::vector<SceneGraph> query_variants,
                           SplitRatios ratios, double radius, std::uint64_t seed);

/// Query variants are perturbed copies of the map; their visibility edges
/// are rebuilt from the displaced positions unless `relink` is off. Val and
/// test queries use `eval_variants` further perturbations with held-out
/// seeds; with `heldout_eval` off they reuse the training variants.
struct DatasetConfig {
  int variants = 2;
  int eval_variants = 2;
  bool heldout_eval = true;
  double radius = 4.0;
  SplitRatios ratios;
  bool relink = true;
  double visibility_range = 3.0;
  std::uint64_t seed = 0;
};

/// Perturbs the query variants (each with a seed derived from `config.seed`
/// and its index) and splits the place ids.
DatasetSplit make_dataset(const SceneGraph& map, const DatasetConfig& config, const MobilityProfile& profile);
DatasetSplit make_dataset(const SceneGraph& map, const DatasetConfig& config);

// ---------------------------------------------------------------------------
// Ego graphs

enum class NodeKind { kPlace, kObject };

struct EgoNode {
  int id = 0;
  NodeKind kind = NodeKind::kPlace;
  int label = -1;           // object class label, -1 for places
  std::size_t feature = 0;  // one-hot column of the encoder input
  friend bool operator==(const EgoNode&, const EgoNode&) = default;
};

/// Local subgraph around one place; node indices are local.
struct EgoGraph {
  int centre_id = 0;
  std::size_t centre = 0;
  std::size_t num_classes = 0;  // feature width is num_classes + 1
  std::vector<EgoNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> traversability;  // undirected, listed once
  std::vector<std::pair<std::size_t, std::size_t>> visibility;      // (place, object)

  void validate() const;
  std::size_t size() const noexcept { return nodes.size(); }
  std::vector<int> place_ids() const;
  std::vector<int> object_ids() const;
  std::size_t num_objects() const;

  /// Same graph with only the listed objects kept (places always kept).
  EgoGraph with_objects(std::span<const int> keep) const;
  /// Same graph with the local nodes reordered: new node i is old perm[i].
  EgoGraph permuted(std::span<const std::size_t> perm) const;

  friend bool operator==(const EgoGraph&, const EgoGraph&) = default;
};

/// Adjacency index over a scene for repeated ego-graph extraction.
class SceneIndex {
 public:
  explicit SceneIndex(const SceneGraph& scene);

  /// All places within `hops` traversability hops of `place`, the objects
  /// they see, and the induced edges.
  EgoGraph ego_graph(int place, int hops) const;
  const SceneGraph& scene() const noexcept { return *scene_; }

 private:
  const SceneGraph* scene_;
  std::unordered_map<int, std::size_t> place_index_;
  std::unordered_map<int, std::size_t> object_index_;
  std::vector<std::vector<std::size_t>> place_adj_;    // place -> places
  std::vector<std::vector<std::size_t>> place_seen_;   // place -> objects
};

EgoGraph ego_graph(const SceneGraph& scene, int place, int hops);

/// Ego graphs of every place of the map and of each query variant.
struct DatasetGraphs {
  int hops = 2;
  std::vector<int> place_ids;  // ascending; row order of `map` and `queries[v]`
  std::vector<EgoGraph> map;
  std::vector<std::vector<EgoGraph>> queries;  // [variant][place row]

  std::size_t row(int place_id) const;
  const EgoGraph& map_graph(int place_id) const { return map[row(place_id)]; }
  const EgoGraph& query_graph(std::size_t variant, int place_id) const { return queries.at(variant)[row(place_id)]; }
};

DatasetGraphs build_graphs(const SceneGraph& map, const DatasetSplit& split, int hops);

}  // namespace semloc
