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

#include "semloc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "semloc/errors.hpp"
#include "semloc/evaluation.hpp"
#include "semloc/random.hpp"

namespace semloc {

void Adam::step(std::map<std::string, Tensor>& weights, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, w] : weights) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (g.shape() != w.shape()) throw ShapeError("adam: gradient for '" + name + "' has the wrong shape");
    Tensor& m = m_.try_emplace(name, Tensor::zeros_like(w)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros_like(w)).first->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      w[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

double TrainConfig::effective_margin() const {
  if (margin) return *margin;
  return loss == LossKind::kTriplet ? 0.2 : 1.0;
}

void TrainConfig::validate() const {
  if (!(effective_margin() > 0.0)) throw ConfigError("margin must be positive");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (negatives < 1) throw ConfigError("negatives must be at least 1");
  if (pool_size < 1) throw ConfigError("pool size must be at least 1");
  if (hops < 0) throw ConfigError("ego hops must be non-negative");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("batch-norm momentum must lie in (0, 1]");
}

namespace {

struct Query {
  std::size_t variant;
  int place;
};

struct BatchItem {
  std::size_t query;                  // graph index of the query
  std::size_t positive;               // graph index of the sampled positive
  std::vector<std::size_t> negatives;  // sampled negatives
  std::vector<std::size_t> all_positives, all_negatives;  // every map graph in the batch, split
};

struct BatchPlan {
  std::vector<const EgoGraph*> graphs;
  std::vector<BatchItem> items;
};

bool contains(const std::vector<int>& sorted, int id) { return std::binary_search(sorted.begin(), sorted.end(), id); }

BatchPlan plan_batch(std::span<const Query> queries, const DatasetGraphs& graphs, const DatasetSplit& split,
                     const TrainConfig& cfg, std::mt19937_64& rng, std::size_t& skipped) {
  BatchPlan plan;
  std::unordered_map<int, std::size_t> map_slot;
  auto map_graph = [&](int id) {
    auto [it, fresh] = map_slot.try_emplace(id, 0);
    if (fresh) {
      it->second = plan.graphs.size();
      plan.graphs.push_back(&graphs.map_graph(id));
    }
    return it->second;
  };

  // Negative candidates: every sampled positive of the batch plus extra
  // uniform train places.
  std::vector<int> extra;
  std::sample(split.train.begin(), split.train.end(), std::back_inserter(extra),
              static_cast<std::size_t>(cfg.pool_size), rng);

  struct Draft {
    const Query* query;
    int positive;
    std::vector<int> negatives;
    const std::vector<int>* positives;
  };
  std::vector<Draft> drafts;
  for (const Query& q : queries) {
    const std::vector<int>& pos = split.positives[q.variant].at(q.place);
    std::vector<int> train_pos;
    std::copy_if(pos.begin(), pos.end(), std::back_inserter(train_pos), [&](int id) { return contains(split.train, id); });
    if (train_pos.empty()) {
      ++skipped;
      continue;
    }
    Draft d;
    d.query = &q;
    d.positives = &pos;
    d.positive = train_pos[std::uniform_int_distribution<std::size_t>(0, train_pos.size() - 1)(rng)];
    drafts.push_back(std::move(d));
  }
  std::vector<int> pool = extra;
  for (const Draft& d : drafts) pool.push_back(d.positive);
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  std::vector<Draft> usable;
  for (Draft& d : drafts) {
    d.negatives = sample_negatives(pool, *d.positives, static_cast<std::size_t>(cfg.negatives), rng);
    if (d.negatives.empty()) {
      ++skipped;
      continue;
    }
    usable.push_back(std::move(d));
  }
  drafts = std::move(usable);
  std::vector<std::size_t> query_graphs;
  for (const Draft& d : drafts) {
    query_graphs.push_back(plan.graphs.size());
    plan.graphs.push_back(&graphs.query_graph(d.query->variant, d.query->place));
  }

  for (std::size_t i = 0; i < drafts.size(); ++i) {
    const Draft& d = drafts[i];
    BatchItem item;
    item.query = query_graphs[i];
    item.positive = map_graph(d.positive);
    for (int id : d.negatives) item.negatives.push_back(map_graph(id));
    plan.items.push_back(std::move(item));
  }
  if (cfg.loss == LossKind::kTriplet) {
    for (int id : extra) map_graph(id);
    for (std::size_t i = 0; i < drafts.size(); ++i) {
      for (const auto& [id, slot] : map_slot) {
        (contains(*drafts[i].positives, id) ? plan.items[i].all_positives : plan.items[i].all_negatives).push_back(slot);
      }
      std::sort(plan.items[i].all_positives.begin(), plan.items[i].all_positives.end());
      std::sort(plan.items[i].all_negatives.begin(), plan.items[i].all_negatives.end());
    }
  }
  return plan;
}

ad::Var batch_loss(const BatchPlan& plan, const TrainConfig& cfg, ad::Tape& tape, std::span<const ad::Var> leaves) {
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<ad::Var> out;
    for (std::size_t i : idx) out.push_back(leaves[i]);
    return out;
  };

  ad::Var total;
  auto accumulate = [&](ad::Var term) { total = total.valid() ? ad::add(total, term) : term; };
  const double margin = cfg.effective_margin();
  switch (cfg.loss) {
    case LossKind::kInfoNCE:
      for (const BatchItem& it : plan.items) {
        const auto negs = pick(it.negatives);
        accumulate(infonce_loss(leaves[it.query], leaves[it.positive], negs, cfg.temperature));
      }
      break;
    case LossKind::kContrastive:
      for (const BatchItem& it : plan.items) {
        ad::Var neg_sum;
        for (std::size_t n : it.negatives) {
          const ad::Var l = contrastive_loss(leaves[it.query], leaves[n], false, margin);
          neg_sum = neg_sum.valid() ? ad::add(neg_sum, l) : l;
        }
        accumulate(ad::add(contrastive_loss(leaves[it.query], leaves[it.positive], true, margin),
                           ad::scale(neg_sum, 1.0 / static_cast<double>(it.negatives.size()))));
      }
      break;
    case LossKind::kTriplet: {
      std::vector<ad::Var> anchors;
      std::vector<std::vector<ad::Var>> pos, neg;
      for (const BatchItem& it : plan.items) {
        anchors.push_back(leaves[it.query]);
        pos.push_back(pick(it.all_positives));
        neg.push_back(pick(it.all_negatives));
      }
      total = triplet_batch_hard(tape, anchors, pos, neg, margin).loss;
      break;
    }
  }
  if (!total.valid()) total = tape.constant(Tensor::scalar(0.0));
  if (cfg.loss != LossKind::kTriplet && !plan.items.empty()) {
    total = ad::scale(total, 1.0 / static_cast<double>(plan.items.size()));
  }
  return total;
}

}  // namespace

std::vector<int> sample_negatives(std::span<const int> pool, const std::vector<int>& positives, std::size_t count,
                                  std::mt19937_64& rng) {
  std::vector<int> candidates, out;
  std::copy_if(pool.begin(), pool.end(), std::back_inserter(candidates),
               [&](int id) { return !contains(positives, id); });
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(out), count, rng);
  return out;
}

TrainResult train(const SceneGraph& map, const DatasetSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  return train(build_graphs(map, split, config.hops), split, config, on_epoch);
}

TrainResult train(const DatasetGraphs& graphs, const DatasetSplit& split, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (split.train.empty() || split.val.empty()) throw ValidationError("train: the train and val splits must be non-empty");
  if (graphs.hops != cfg.hops) throw ConfigError("train: ego graphs were built with a different hop count");

  EncoderParams params = init_params(cfg.hyper, derive_seed(cfg.seed, {0x696e6974}));
  Adam adam(cfg.adam);
  std::mt19937_64 rng(derive_seed(cfg.seed, {0x73616d70}));

  std::vector<Query> queries;
  for (std::size_t v : split.train_variants)
    for (int id : split.train) queries.push_back({v, id});

  TrainResult result;
  result.report.seed = cfg.seed;
  result.params = params;
  bool have_best = false;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(queries.begin(), queries.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < queries.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(queries.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const BatchPlan plan = plan_batch(std::span(queries).subspan(start, end - start), graphs, split, cfg, rng,
                                        result.report.skipped_queries);
      if (plan.items.empty()) continue;
      BatchGradient bg;
      try {
        bg = batch_gradient(
            plan.graphs, params,
            [&](ad::Tape& tape, std::span<const ad::Var> z) { return batch_loss(plan, cfg, tape, z); },
            cfg.policy);
      } catch (const NumericFault& e) {
        throw NumericFault("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1) + ": " + e.what());
      }
      if (!std::isfinite(bg.loss)) {
        throw NumericFault("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1) + ": loss is " + std::to_string(bg.loss));
      }
      adam.step(params.weights, bg.grads);
      update_running_stats(params, std::span(&bg.observed, 1), cfg.bn_momentum);
      loss_sum += bg.loss;
      ++batches;
    }
    EpochRow row;
    row.epoch = epoch;
    row.loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    row.val = evaluate_split(graphs, split, "val", params, cfg.policy);
    if (!have_best || row.val.pr_auc > result.report.best_pr_auc) {
      have_best = true;
      result.report.best_pr_auc = row.val.pr_auc;
      result.report.best_epoch = epoch;
      result.params = params;
    }
    result.report.epochs.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<AblationVariant> standard_ablation_grid() {
  return {
      {"layers-1", 1, 64, 3, true},   {"layers-3", 3, 64, 3, true}, {"hidden-32", 2, 32, 3, true},
      {"hidden-128", 2, 128, 3, true}, {"heads-1", 2, 64, 1, true},  {"heads-2", 2, 64, 2, true},
      {"no-gat-2", 2, 64, 0, false},   {"no-gat-3", 3, 64, 0, false}, {"model", 2, 64, 3, true},
  };
}

AblationVariant ablation_variant(const std::string& name) {
  for (const AblationVariant& v : standard_ablation_grid())
    if (v.name == name) return v;
  std::string known;
  for (const AblationVariant& v : standard_ablation_grid()) known += (known.empty() ? "" : ", ") + v.name;
  throw ConfigError("unknown ablation variant '" + name + "' (known: " + known + ")");
}

std::pair<double, double> mean_and_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

AblationResult run_ablation_grid(const DatasetGraphs& graphs, const DatasetSplit& split,
                                 const std::vector<AblationVariant>& grid, const std::vector<std::uint64_t>& seeds,
                                 const TrainConfig& base, const std::function<void(const AblationRun&)>& on_run) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  AblationResult result;
  for (const AblationVariant& variant : grid) {
    TrainConfig cfg = base;
    cfg.hyper.mpnn_layers = variant.mpnn_layers;
    cfg.hyper.hidden = variant.hidden;
    cfg.hyper.heads = variant.use_gat ? variant.heads : 0;
    cfg.hyper.use_gat = variant.use_gat;
    std::vector<double> pr, r1;
    for (std::uint64_t seed : seeds) {
      cfg.seed = seed;
      TrainResult tr = train(graphs, split, cfg);
      AblationRun run;
      run.variant = variant;
      run.seed = seed;
      run.test = evaluate_split(graphs, split, "test", tr.params, cfg.policy);
      run.report = std::move(tr.report);
      run.report.variant = variant.name;
      pr.push_back(run.test.pr_auc);
      r1.push_back(run.test.recall_at_1);
      if (on_run) on_run(run);
      result.runs.push_back(std::move(run));
    }
    AblationSummary s;
    s.variant = variant;
    s.runs = seeds.size();
    std::tie(s.pr_auc_mean, s.pr_auc_std) = mean_and_std(pr);
    std::tie(s.recall1_mean, s.recall1_std) = mean_and_std(r1);
    result.summary.push_back(s);
  }
  return result;
}

}  // namespace semloc
