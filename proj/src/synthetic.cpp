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
#include <cmath>
#include <numeric>
#include <random>

#include "semloc/errors.hpp"
#include "semloc/scene_graph.hpp"

namespace semloc {

std::vector<int> apportion_counts(std::span<const double> frequencies, int total) {
  const double weight = std::accumulate(frequencies.begin(), frequencies.end(), 0.0);
  for (double f : frequencies) {
    if (!(f >= 0.0)) throw ConfigError("class frequencies must be non-negative");
  }
  if (!(weight > 0.0)) throw ConfigError("class frequency profile is all zero");
  if (total < 0) throw ConfigError("object count must be non-negative");

  std::vector<int> counts(frequencies.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    const double exact = total * frequencies[i] / weight;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  // Largest remainder first, lower class index on ties.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[remainders[k].second];
  return counts;
}

SceneGraph generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.rooms_x < 1 || cfg.rooms_y < 1 || cfg.room_cells < 1) {
    throw ConfigError("synthetic: room grid extents must be positive");
  }
  if (!(cfg.place_spacing > 0.0) || cfg.jitter < 0.0 || !(cfg.visibility_range > 0.0)) {
    throw ConfigError("synthetic: spacing and visibility range must be positive, jitter non-negative");
  }
  if (cfg.taxonomy.empty() || cfg.frequencies.size() != cfg.taxonomy.size()) {
    throw ConfigError("synthetic: one frequency per taxonomy class is required");
  }
  const int rooms = cfg.rooms_x * cfg.rooms_y;
  const int interior = rooms * cfg.room_cells * cfg.room_cells;
  if (cfg.num_objects > interior) {
    throw ConfigError("synthetic: " + std::to_string(cfg.num_objects) + " objects do not fit in " +
                      std::to_string(interior) + " room cells");
  }
  const std::vector<int> counts = apportion_counts(cfg.frequencies, cfg.num_objects);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  SceneGraph scene;
  scene.taxonomy = cfg.taxonomy;

  // Grid points (i, j); corridors run along multiples of `period`.
  const int period = cfg.room_cells + 1;
  const int nx = cfg.rooms_x * period + 1;
  const int ny = cfg.rooms_y * period + 1;
  auto place_id = [nx](int i, int j) { return j * nx + i; };
  auto is_corridor = [period](int i, int j) { return i % period == 0 || j % period == 0; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      scene.places.push_back({place_id(i, j), i * cfg.place_spacing + cfg.jitter * unit(rng),
                              j * cfg.place_spacing + cfg.jitter * unit(rng)});
    }
  }
  // A corridor/room edge only exists at a room's door (middle of its lower wall).
  auto is_door = [&](int i, int j_corridor, int j_room) {
    return j_corridor % period == 0 && j_room == j_corridor + 1 && i % period == 1 + cfg.room_cells / 2;
  };
  auto linked = [&](int i0, int j0, int i1, int j1) {
    const bool c0 = is_corridor(i0, j0), c1 = is_corridor(i1, j1);
    if (c0 == c1) return true;
    if (i0 != i1) return false;
    return c0 ? is_door(i0, j0, j1) : is_door(i1, j1, j0);
  };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (i + 1 < nx && linked(i, j, i + 1, j)) scene.traversability.emplace_back(place_id(i, j), place_id(i + 1, j));
      if (j + 1 < ny && linked(i, j, i, j + 1)) scene.traversability.emplace_back(place_id(i, j), place_id(i, j + 1));
    }
  }

  std::vector<int> labels;
  for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], cfg.taxonomy[c].label);
  std::shuffle(labels.begin(), labels.end(), rng);
  std::uniform_int_distribution<int> pick_room(0, rooms - 1);
  std::uniform_real_distribution<double> in_room(0.5, cfg.room_cells + 0.5);
  int next_id = nx * ny;
  for (int label : labels) {
    const int room = pick_room(rng);
    const double x0 = (room % cfg.rooms_x) * period;
    const double y0 = (room / cfg.rooms_x) * period;
    const double x = (x0 + in_room(rng)) * cfg.place_spacing;
    const double y = (y0 + in_room(rng)) * cfg.place_spacing;
    scene.objects.push_back({next_id++, x, y, label});
  }
  scene = relink_visibility(scene, cfg.visibility_range);
  scene.validate();
  return scene;
}

SceneGraph relink_visibility(const SceneGraph& scene, double range) {
  if (!(range > 0.0)) throw ConfigError("visibility range must be positive");
  SceneGraph out = scene;
  out.visibility.clear();
  const double r2 = range * range;
  for (const Object& o : scene.objects) {
    for (const Place& p : scene.places) {
      const double dx = p.x - o.x, dy = p.y - o.y;
      if (dx * dx + dy * dy <= r2) out.visibility.emplace_back(p.id, o.id);
    }
  }
  return out;
}

MobilityProfile MobilityProfile::defaults(const Taxonomy& taxonomy) {
  static const std::map<std::string, double> by_code = {{"TC", 0.5}, {"CH", 0.5}, {"PL", 0.3},
                                                         {"CP", 0.2}, {"CO", 0.05}, {"PA", 0.05}};
  MobilityProfile profile;
  for (const SemanticClass& c : taxonomy.classes()) {
    auto it = by_code.find(c.code);
    profile.sigma[c.label] = it == by_code.end() ? 0.0 : it->second;
  }
  return profile;
}

SceneGraph perturb(const SceneGraph& scene, const MobilityProfile& profile, std::uint64_t seed) {
  for (const auto& [label, s] : profile.sigma) {
    if (!(s >= 0.0)) throw ConfigError("mobility scale for class " + std::to_string(label) + " is negative");
  }
  for (const SemanticClass& c : scene.taxonomy.classes()) {
    if (!profile.sigma.count(c.label)) {
      throw ConfigError("mobility profile is missing class " + c.code + " (label " +
                        std::to_string(c.label) + ")");
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SceneGraph out = scene;
  for (Object& o : out.objects) {
    const double s = profile.sigma.at(o.label);
    const double dx = normal(rng);
    const double dy = normal(rng);
    o.x += s * dx;
    o.y += s * dy;
  }
  return out;
}

SceneGraph remove_class(const SceneGraph& scene, int label) {
  SceneGraph out;
  out.taxonomy = scene.taxonomy;
  out.places = scene.places;
  out.traversability = scene.traversability;
  std::vector<int> removed;
  for (const Object& o : scene.objects) {
    if (o.label == label) {
      removed.push_back(o.id);
    } else {
      out.objects.push_back(o);
    }
  }
  std::sort(removed.begin(), removed.end());
  for (const Edge& e : scene.visibility) {
    if (!std::binary_search(removed.begin(), removed.end(), e.second)) out.visibility.push_back(e);
  }
  return out;
}

}  // namespace semloc
