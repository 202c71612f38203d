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

#include "semloc/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "semloc/errors.hpp"
#include "semloc/random.hpp"

namespace semloc {

std::string to_string(Explainer e) {
  switch (e) {
    case Explainer::kSaliency:
      return "saliency";
    case Explainer::kIntegratedGradients:
      return "ig";
    case Explainer::kShapley:
      return "shapley";
    case Explainer::kAttention:
      return "attention";
    case Explainer::kRandom:
      return "random";
  }
  return "?";
}

Explainer parse_explainer(const std::string& name) {
  for (Explainer e : {Explainer::kSaliency, Explainer::kIntegratedGradients, Explainer::kShapley,
                      Explainer::kAttention, Explainer::kRandom}) {
    if (to_string(e) == name) return e;
  }
  throw ConfigError("unknown explainer '" + name + "' (expected saliency, ig, shapley, attention or random)");
}

std::vector<Explainer> all_explainers() {
  return {Explainer::kSaliency, Explainer::kIntegratedGradients, Explainer::kShapley, Explainer::kAttention};
}

void normalise(AttributionResult& result) {
  double total = 0.0;
  for (const NodeScore& n : result.nodes) {
    if (!std::isfinite(n.raw)) throw NumericFault("attribution: non-finite raw score for node " + std::to_string(n.node_id));
    total += std::abs(n.raw);
  }
  result.class_scores.clear();
  for (NodeScore& n : result.nodes) {
    n.normalised = total > 0.0 ? std::abs(n.raw) / total : 0.0;
    result.class_scores[n.label] += n.normalised;
  }
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: embedding widths differ");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += a[k] * b[k];
  return std::clamp(d, -1.0, 1.0);
}

double target_scalar(const Embedding& zp, const EgoGraph& q, const EncoderParams& params) {
  return cosine(embed(q, params).embedding, zp);
}

double target_scalar(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params) {
  return target_scalar(embed(p, params).embedding, q, params);
}

Tensor target_gradient(const Embedding& zp, const EgoGraph& q, const EncoderParams& params, const Tensor& features) {
  ad::Tape tape;
  const BoundParams bound = bind_params(tape, params, false);
  const ad::Var x = tape.parameter(features);
  const ad::Var z = encode(q, bound, x, Mode::kInfer).embedding;
  const ad::Var s = ad::dot(z, tape.constant(Tensor::vector(zp)));
  return tape.backward(s)[x];
}

namespace {

AttributionResult object_skeleton(Explainer e, const EgoGraph& p, const EgoGraph& q) {
  AttributionResult r;
  r.explainer = e;
  r.map_place = p.centre_id;
  r.query_place = q.centre_id;
  for (const EgoNode& n : q.nodes) {
    if (n.kind == NodeKind::kObject) r.nodes.push_back({n.id, n.label, 0.0, 0.0});
  }
  std::sort(r.nodes.begin(), r.nodes.end(), [](const NodeScore& a, const NodeScore& b) { return a.node_id < b.node_id; });
  return r;
}

// Local row of each object node, in the skeleton's order.
std::vector<std::size_t> object_rows(const EgoGraph& q, const AttributionResult& r) {
  std::vector<std::size_t> rows;
  for (const NodeScore& s : r.nodes) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (q.nodes[i].kind == NodeKind::kObject && q.nodes[i].id == s.node_id) {
        rows.push_back(i);
        break;
      }
    }
  }
  return rows;
}

Tensor object_free_baseline(const EgoGraph& q, const Tensor& x) {
  Tensor b = x;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q.nodes[i].kind != NodeKind::kObject) continue;
    for (std::size_t c = 0; c < x.cols(); ++c) b.at(i, c) = 0.0;
  }
  return b;
}

// Batched gradient of the target over several feature matrices of Q.
BatchGradientFn encoder_gradients(const Embedding& zp, const EgoGraph& q, const EncoderParams& params) {
  return [&zp, &q, &params](std::span<const Tensor> points) {
    constexpr std::size_t kChunk = 16;
    std::vector<Tensor> grads;
    for (std::size_t start = 0; start < points.size(); start += kChunk) {
      const std::size_t count = std::min(kChunk, points.size() - start);
      const std::size_t n = q.size(), w = q.num_classes + 1;
      Tensor stacked({count * n, w});
      for (std::size_t i = 0; i < count; ++i) {
        if (points[start + i].shape() != Shape{n, w}) throw ShapeError("integrated gradients: point has the wrong shape");
        std::copy(points[start + i].values().begin(), points[start + i].values().end(),
                  stacked.values().begin() + static_cast<std::ptrdiff_t>(i * n * w));
      }
      std::vector<const EgoGraph*> copies(count, &q);
      ad::Tape tape;
      const BoundParams bound = bind_params(tape, params, false);
      const ad::Var x = tape.parameter(std::move(stacked));
      const ad::Var z = encode_batch(copies, bound, x, Mode::kInfer).embeddings;
      const ad::Var s = ad::sum(ad::matmul(z, tape.constant(Tensor::vector(zp))));
      const Tensor g = tape.backward(s)[x];
      for (std::size_t i = 0; i < count; ++i) {
        grads.emplace_back(Shape{n, w}, std::vector<double>(g.values().begin() + static_cast<std::ptrdiff_t>(i * n * w),
                                                            g.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * n * w)));
      }
    }
    return grads;
  };
}

double feature_target(const Embedding& zp, const EgoGraph& q, const EncoderParams& params, const Tensor& features) {
  ad::Tape tape;
  const BoundParams bound = bind_params(tape, params, false);
  const ad::Var z = encode(q, bound, tape.constant(features), Mode::kInfer).embedding;
  double d = 0.0;
  for (std::size_t k = 0; k < zp.size(); ++k) d += z.value()[k] * zp[k];
  return d;
}

}  // namespace

AttributionResult saliency(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params) {
  AttributionResult r = object_skeleton(Explainer::kSaliency, p, q);
  const Embedding zp = embed(p, params).embedding;
  r.target = target_scalar(zp, q, params);
  const Tensor g = target_gradient(zp, q, params, node_features(q));
  const auto rows = object_rows(q, r);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < g.cols(); ++c) s += g.at(rows[j], c) * g.at(rows[j], c);
    r.nodes[j].raw = std::sqrt(s);
  }
  normalise(r);
  return r;
}

Tensor integrated_gradients(const BatchGradientFn& grad, const Tensor& x, const Tensor& baseline, std::size_t steps) {
  if (steps < 1) throw ConfigError("integrated gradients: steps must be at least 1");
  if (x.shape() != baseline.shape()) throw ShapeError("integrated gradients: baseline shape differs from input");
  std::vector<Tensor> points;
  for (std::size_t i = 0; i < steps; ++i) {
    const double alpha = (static_cast<double>(i) + 0.5) / static_cast<double>(steps);
    Tensor pt(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) pt[k] = baseline[k] + alpha * (x[k] - baseline[k]);
    points.push_back(std::move(pt));
  }
  const std::vector<Tensor> grads = grad(points);
  if (grads.size() != steps) throw ShapeError("integrated gradients: gradient count differs from step count");
  Tensor mean(x.shape());
  for (const Tensor& g : grads) mean.add_inplace(g);
  Tensor attr(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) attr[k] = (x[k] - baseline[k]) * mean[k] / static_cast<double>(steps);
  return attr;
}

AttributionResult integrated_gradients(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                                       const IgOptions& options) {
  AttributionResult r = object_skeleton(Explainer::kIntegratedGradients, p, q);
  const Embedding zp = embed(p, params).embedding;
  r.target = target_scalar(zp, q, params);
  const Tensor x = node_features(q);
  const Tensor x0 = options.baseline ? *options.baseline : object_free_baseline(q, x);
  const Tensor attr = integrated_gradients(encoder_gradients(zp, q, params), x, x0, options.steps);
  const auto rows = object_rows(q, r);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < attr.cols(); ++c) s += attr.at(rows[j], c);
    r.nodes[j].raw = s;
  }
  double total = 0.0;
  for (double a : attr.values()) total += a;
  r.completeness_residual = total - (feature_target(zp, q, params, x) - feature_target(zp, q, params, x0));
  normalise(r);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

// Characteristic function v(S) over Q's object nodes with memoisation.
class Coalitions {
 public:
  Coalitions(const Embedding& zp, const EgoGraph& q, const EncoderParams& params, std::vector<int> objects)
      : zp_(zp), q_(q), params_(params), objects_(std::move(objects)) {}

  // Evaluates every requested coalition not seen before in one batch.
  void prefetch(const std::vector<std::vector<bool>>& masks) {
    std::vector<std::vector<bool>> fresh;
    for (const auto& m : masks)
      if (!memo_.count(m) && std::find(fresh.begin(), fresh.end(), m) == fresh.end()) fresh.push_back(m);
    std::vector<EgoGraph> graphs;
    for (const auto& m : fresh) graphs.push_back(restrict(m));
    const auto z = embed_all(graphs, params_, ExecPolicy::kSerial);
    for (std::size_t i = 0; i < fresh.size(); ++i) memo_.emplace(fresh[i], cosine(z[i], zp_));
  }

  double value(const std::vector<bool>& mask) {
    auto it = memo_.find(mask);
    if (it != memo_.end()) return it->second;
    const double v = cosine(embed(restrict(mask), params_).embedding, zp_);
    memo_.emplace(mask, v);
    return v;
  }

  std::size_t evaluations() const { return memo_.size(); }

 private:
  EgoGraph restrict(const std::vector<bool>& mask) const {
    std::vector<int> keep;
    for (std::size_t j = 0; j < objects_.size(); ++j)
      if (mask[j]) keep.push_back(objects_[j]);
    return q_.with_objects(keep);
  }

  const Embedding& zp_;
  const EgoGraph& q_;
  const EncoderParams& params_;
  std::vector<int> objects_;
  std::map<std::vector<bool>, double> memo_;
};

std::vector<int> ids_of(const AttributionResult& r) {
  std::vector<int> ids;
  for (const NodeScore& n : r.nodes) ids.push_back(n.node_id);
  return ids;
}

}  // namespace

AttributionResult shapley_sampling(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                                   const ShapleyOptions& options) {
  if (options.permutations < 1) throw ConfigError("shapley: permutations must be at least 1");
  AttributionResult r = object_skeleton(Explainer::kShapley, p, q);
  const Embedding zp = embed(p, params).embedding;
  r.target = target_scalar(zp, q, params);
  const std::size_t n = r.nodes.size();
  if (n == 0) return r;
  Coalitions v(zp, q, params, ids_of(r));

  std::mt19937_64 rng(options.seed);
  std::vector<std::vector<std::size_t>> perms(options.permutations);
  std::vector<std::vector<bool>> masks{std::vector<bool>(n, false)};
  for (auto& perm : perms) {
    perm.resize(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<bool> mask(n, false);
    for (std::size_t j : perm) {
      mask[j] = true;
      masks.push_back(mask);
    }
  }
  v.prefetch(masks);

  std::vector<double> phi(n, 0.0);
  for (const auto& perm : perms) {
    std::vector<bool> mask(n, false);
    double prev = v.value(mask);
    for (std::size_t j : perm) {
      mask[j] = true;
      const double cur = v.value(mask);
      phi[j] += cur - prev;
      prev = cur;
    }
  }
  for (std::size_t j = 0; j < n; ++j) r.nodes[j].raw = phi[j] / static_cast<double>(options.permutations);
  normalise(r);
  return r;
}

std::vector<double> shapley_exact(std::size_t n, const std::function<double(const std::vector<bool>&)>& value) {
  if (n > 20) throw ConfigError("shapley_exact: at most 20 players");
  const std::size_t count = std::size_t{1} << n;
  std::vector<double> v(count);
  std::vector<bool> mask(n);
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t j = 0; j < n; ++j) mask[j] = (s >> j) & 1U;
    v[s] = value(mask);
  }
  // weight[k] = k! (n-k-1)! / n!
  std::vector<double> weight(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    weight[k] = std::exp(std::lgamma(static_cast<double>(k) + 1) + std::lgamma(static_cast<double>(n - k)) -
                         std::lgamma(static_cast<double>(n) + 1));
  }
  std::vector<double> phi(n, 0.0);
  for (std::size_t s = 0; s < count; ++s) {
    const auto k = static_cast<std::size_t>(__builtin_popcountll(s));
    for (std::size_t j = 0; j < n; ++j) {
      if ((s >> j) & 1U) continue;
      phi[j] += weight[k] * (v[s | (std::size_t{1} << j)] - v[s]);
    }
  }
  return phi;
}

AttributionResult shapley_exact(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params) {
  AttributionResult r = object_skeleton(Explainer::kShapley, p, q);
  const Embedding zp = embed(p, params).embedding;
  r.target = target_scalar(zp, q, params);
  const std::size_t n = r.nodes.size();
  if (n > 16) throw ConfigError("shapley_exact: " + std::to_string(n) + " objects is too many to enumerate");
  if (n == 0) return r;
  Coalitions v(zp, q, params, ids_of(r));
  std::vector<std::vector<bool>> masks;
  for (std::size_t s = 0; s < (std::size_t{1} << n); ++s) {
    std::vector<bool> m(n);
    for (std::size_t j = 0; j < n; ++j) m[j] = (s >> j) & 1U;
    masks.push_back(std::move(m));
  }
  v.prefetch(masks);
  const auto phi = shapley_exact(n, [&](const std::vector<bool>& m) { return v.value(m); });
  for (std::size_t j = 0; j < n; ++j) r.nodes[j].raw = phi[j];
  normalise(r);
  return r;
}

AttributionResult attention_importance(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params) {
  if (!params.hyper.use_gat) throw ValidationError("attention importance: the encoder has no attention layer");
  AttributionResult r = object_skeleton(Explainer::kAttention, p, q);
  const Embedding zp = embed(p, params).embedding;
  const EmbedResult e = embed(q, params, Mode::kInfer, true);
  r.target = cosine(e.embedding, zp);
  const auto rows = object_rows(q, r);
  const AttentionRecord& att = e.attention;
  const std::size_t heads = att.coefficients.size();
  for (std::size_t j = 0; j < rows.size(); ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < att.edges.size(); ++k) {
      const auto [src, dst] = att.edges[k];
      if (src != rows[j] || q.nodes[dst].kind != NodeKind::kPlace) continue;
      double mean = 0.0;
      for (std::size_t h = 0; h < heads; ++h) mean += att.coefficients[h][k];
      s += mean / static_cast<double>(heads);
    }
    r.nodes[j].raw = s;
  }
  normalise(r);
  return r;
}

AttributionResult random_attribution(const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                                     std::uint64_t seed) {
  AttributionResult r = object_skeleton(Explainer::kRandom, p, q);
  r.target = target_scalar(p, q, params);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (NodeScore& n : r.nodes) n.raw = u(rng);
  normalise(r);
  return r;
}

AttributionResult explain(Explainer explainer, const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                          const ExplainOptions& options) {
  switch (explainer) {
    case Explainer::kSaliency:
      return saliency(p, q, params);
    case Explainer::kIntegratedGradients:
      return integrated_gradients(p, q, params, options.ig);
    case Explainer::kShapley:
      return shapley_sampling(p, q, params, options.shapley);
    case Explainer::kAttention:
      return attention_importance(p, q, params);
    case Explainer::kRandom:
      return random_attribution(p, q, params, options.random_seed);
  }
  throw ConfigError("unknown explainer");
}

AttributionResult smooth_grad(Explainer base, const EgoGraph& p, const EgoGraph& q, const EncoderParams& params,
                              std::size_t samples, double sigma, std::uint64_t seed, const IgOptions& ig) {
  if (base != Explainer::kSaliency && base != Explainer::kIntegratedGradients) {
    throw ConfigError("smooth_grad: only saliency and integrated gradients are gradient explainers");
  }
  if (samples < 1) throw ConfigError("smooth_grad: samples must be at least 1");
  if (!(sigma >= 0.0)) throw ConfigError("smooth_grad: sigma must be non-negative");
  AttributionResult r = object_skeleton(base, p, q);
  const Embedding zp = embed(p, params).embedding;
  r.target = target_scalar(zp, q, params);
  const auto rows = object_rows(q, r);
  const Tensor x = node_features(q);
  const Tensor x0 = ig.baseline ? *ig.baseline : object_free_baseline(q, x);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> sum(rows.size(), 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    Tensor xn = x;
    for (double& v : xn.values()) v += noise(rng);
    if (base == Explainer::kSaliency) {
      const Tensor g = target_gradient(zp, q, params, xn);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        double n2 = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) n2 += g.at(rows[j], c) * g.at(rows[j], c);
        sum[j] += std::sqrt(n2);
      }
    } else {
      const Tensor attr = integrated_gradients(encoder_gradients(zp, q, params), xn, x0, ig.steps);
      for (std::size_t j = 0; j < rows.size(); ++j)
        for (std::size_t c = 0; c < attr.cols(); ++c) sum[j] += attr.at(rows[j], c);
    }
  }
  for (std::size_t j = 0; j < rows.size(); ++j) r.nodes[j].raw = sum[j] / static_cast<double>(samples);
  normalise(r);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<AttributionPair> attribution_pairs(const DatasetGraphs& graphs, const DatasetSplit& split,
                                               const std::string& which, std::size_t max_pairs) {
  std::vector<AttributionPair> all;
  for (std::size_t v : split.variants(which)) {
    for (int id : split.ids(which)) {
      const EgoGraph& q = graphs.query_graph(v, id);
      if (q.num_objects() == 0) continue;
      all.push_back({id, id, v, &graphs.map_graph(id), &q});
    }
  }
  if (max_pairs == 0 || all.size() <= max_pairs) return all;
  // Evenly spaced subset so every variant and region is represented.
  std::vector<AttributionPair> picked;
  for (std::size_t i = 0; i < max_pairs; ++i) picked.push_back(all[i * all.size() / max_pairs]);
  return picked;
}

std::vector<AttributionResult> explain_pairs(Explainer explainer, std::span<const AttributionPair> pairs,
                                             const EncoderParams& params, const ExplainOptions& options,
                                             ExecPolicy policy) {
  std::vector<AttributionResult> out(pairs.size());
  for_each_index(pairs.size(), policy, [&](std::size_t i) {
    ExplainOptions opt = options;
    opt.random_seed = derive_seed(options.random_seed, {i});
    opt.shapley.seed = derive_seed(options.shapley.seed, {i});
    out[i] = explain(explainer, *pairs[i].p, *pairs[i].q, params, opt);
  });
  return out;
}

}  // namespace semloc
