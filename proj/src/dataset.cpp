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
#include <random>
#include <set>

#include "semloc/errors.hpp"
#include "semloc/random.hpp"
#include "semloc/scene_graph.hpp"

namespace semloc {

const std::vector<int>& DatasetSplit::ids(const std::string& split) const {
  if (split == "train") return train;
  if (split == "val") return val;
  if (split == "test") return test;
  throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
}

const std::vector<std::size_t>& DatasetSplit::variants(const std::string& split) const {
  ids(split);
  return split == "train" ? train_variants : eval_variants;
}

DatasetSplit split_dataset(const SceneGraph& map, std::vector<SceneGraph> query_variants,
                           SplitRatios ratios, double radius, std::uint64_t seed) {
  if (!(radius > 0.0)) throw ConfigError("matching radius must be positive");
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  std::vector<int> ids;
  for (const Place& p : map.places) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  for (std::size_t v = 0; v < query_variants.size(); ++v) {
    std::vector<int> qids;
    for (const Place& p : query_variants[v].places) qids.push_back(p.id);
    std::sort(qids.begin(), qids.end());
    if (qids != ids) {
      throw ValidationError("query variant " + std::to_string(v) + " does not share the map's place ids");
    }
  }

  std::vector<int> shuffled = ids;
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * n));
  const auto n_val = std::min(static_cast<std::size_t>(std::llround(ratios.val * n)), ids.size() - n_train);

  DatasetSplit split;
  split.radius = radius;
  split.train.assign(shuffled.begin(), shuffled.begin() + n_train);
  split.val.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
  split.test.assign(shuffled.begin() + n_train + n_val, shuffled.end());
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());

  const double r2 = radius * radius;
  for (const SceneGraph& variant : query_variants) {
    std::map<int, std::vector<int>> positives;
    for (const Place& q : variant.places) {
      std::vector<int>& pos = positives[q.id];
      for (const Place& m : map.places) {
        const double dx = m.x - q.x, dy = m.y - q.y;
        if (dx * dx + dy * dy <= r2) pos.push_back(m.id);
      }
      std::sort(pos.begin(), pos.end());
    }
    split.positives.push_back(std::move(positives));
  }
  for (std::size_t v = 0; v < query_variants.size(); ++v) {
    split.train_variants.push_back(v);
    split.eval_variants.push_back(v);
  }
  split.query_variants = std::move(query_variants);
  return split;
}

DatasetSplit make_dataset(const SceneGraph& map, const DatasetConfig& config, const MobilityProfile& profile) {
  if (config.variants < 1) throw ConfigError("dataset: need at least one query variant");
  if (config.heldout_eval && config.eval_variants < 1) throw ConfigError("dataset: need at least one evaluation variant");
  if (config.relink && !(config.visibility_range > 0.0)) throw ConfigError("dataset: visibility range must be positive");
  const int total = config.variants + (config.heldout_eval ? config.eval_variants : 0);
  std::vector<SceneGraph> variants;
  for (int v = 0; v < total; ++v) {
    SceneGraph q = perturb(map, profile, derive_seed(config.seed, {0x7661, static_cast<std::uint64_t>(v)}));
    if (config.relink) q = relink_visibility(q, config.visibility_range);
    variants.push_back(std::move(q));
  }
  DatasetSplit split = split_dataset(map, std::move(variants), config.ratios, config.radius, config.seed);
  if (config.heldout_eval) {
    const auto n_train = static_cast<std::size_t>(config.variants);
    split.train_variants.resize(n_train);
    split.eval_variants.erase(split.eval_variants.begin(), split.eval_variants.begin() + static_cast<std::ptrdiff_t>(n_train));
  }
  return split;
}

DatasetSplit make_dataset(const SceneGraph& map, const DatasetConfig& config) {
  return make_dataset(map, config, MobilityProfile::defaults(map.taxonomy));
}

}  // namespace semloc
