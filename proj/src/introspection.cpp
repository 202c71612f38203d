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

#include "semloc/introspection.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "semloc/errors.hpp"
#include "semloc/evaluation.hpp"
#include "semloc/log.hpp"
#include "semloc/random.hpp"

namespace semloc {

ClassRemoved without_class(const SceneGraph& map, const DatasetSplit& split, int label, int hops) {
  ClassRemoved r;
  r.label = label;
  const auto hist = map.class_histogram();
  const auto it = hist.find(label);
  r.count = it == hist.end() ? 0 : it->second;
  r.map = remove_class(map, label);
  r.split = split;
  for (SceneGraph& v : r.split.query_variants) v = remove_class(v, label);
  r.graphs = build_graphs(r.map, r.split, hops);
  return r;
}

std::vector<ClassRemoved> without_each_class(const SceneGraph& map, const DatasetSplit& split, int hops,
                                             std::vector<int>* skipped) {
  std::vector<ClassRemoved> out;
  const auto hist = map.class_histogram();
  for (const SemanticClass& c : map.taxonomy.classes()) {
    const auto it = hist.find(c.label);
    if (it == hist.end() || it->second == 0) {
      log_info(fmt::format("class {} has no instances; skipped", c.code));
      if (skipped) skipped->push_back(c.label);
      continue;
    }
    out.push_back(without_class(map, split, c.label, hops));
  }
  return out;
}

std::vector<ClassAblationRow> class_ablation(const DatasetGraphs& graphs, const DatasetSplit& split,
                                             std::span<const ClassRemoved> removed, const Taxonomy& taxonomy,
                                             const EncoderParams& params, const std::string& which,
                                             ExecPolicy policy) {
  const double with = evaluate_split(graphs, split, which, params, policy).pr_auc;
  std::vector<ClassAblationRow> rows;
  for (const ClassRemoved& r : removed) {
    ClassAblationRow row;
    row.label = r.label;
    row.code = taxonomy.by_label(r.label).code;
    row.count = r.count;
    row.pr_auc_with = with;
    // Removing an absent class leaves every graph as it was.
    row.pr_auc_without = r.count == 0 ? with : evaluate_split(r.graphs, r.split, which, params, policy).pr_auc;
    row.drop = row.pr_auc_with - row.pr_auc_without;
    row.normalised_drop = r.count == 0 ? 0.0 : row.drop / r.count;
    rows.push_back(row);
  }
  return rows;
}

std::vector<ClassAblationRow> class_ablation(const SceneGraph& map, const DatasetSplit& split,
                                             const EncoderParams& params, int hops, const std::string& which,
                                             ExecPolicy policy) {
  const DatasetGraphs graphs = build_graphs(map, split, hops);
  const auto removed = without_each_class(map, split, hops);
  return class_ablation(graphs, split, removed, map.taxonomy, params, which, policy);
}

std::vector<AttributionPair> remap_pairs(std::span<const AttributionPair> pairs, const DatasetGraphs& graphs) {
  std::vector<AttributionPair> out;
  for (const AttributionPair& pair : pairs) {
    AttributionPair r = pair;
    r.p = &graphs.map_graph(pair.map_place);
    r.q = &graphs.query_graph(pair.variant, pair.query_place);
    if (r.q->num_objects() > 0) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> histogram(std::span<const double> values, int bins) {
  if (bins < 1) throw ConfigError("histogram: bins must be at least 1");
  if (values.empty()) throw ValidationError("histogram: no values");
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(fmt::format("histogram: value {} outside [0, 1]", v));
    const auto b = std::min(static_cast<std::size_t>(v * bins), h.size() - 1);
    h[b] += 1.0;
  }
  for (double& x : h) x /= static_cast<double>(values.size());
  return h;
}

std::vector<double> pooled_scores(std::span<const AttributionResult> results) {
  std::vector<double> s;
  for (const AttributionResult& r : results)
    for (const NodeScore& n : r.nodes) s.push_back(n.normalised);
  return s;
}

double jsd(std::span<const double> p, std::span<const double> q, double epsilon) {
  if (p.size() != q.size() || p.empty()) throw ShapeError("jsd: histograms differ in length or are empty");
  auto smooth = [epsilon](std::span<const double> h) {
    std::vector<double> out(h.begin(), h.end());
    double total = 0.0;
    for (double& x : out) {
      if (!(x >= 0.0)) throw ValidationError("jsd: negative or non-finite bin");
      x += epsilon;
      total += x;
    }
    for (double& x : out) x /= total;
    return out;
  };
  const auto ps = smooth(p), qs = smooth(q);
  double d = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double m = 0.5 * (ps[i] + qs[i]);
    d += 0.5 * ps[i] * std::log2(ps[i] / m) + 0.5 * qs[i] * std::log2(qs[i] / m);
  }
  return std::clamp(d, 0.0, 1.0);
}

JsdShiftRow jsd_shift(Explainer explainer, int label, int count, std::span<const AttributionResult> pre,
                      std::span<const AttributionResult> post, int bins) {
  const auto a = pooled_scores(pre), b = pooled_scores(post);
  if (a.empty() || b.empty()) {
    throw ValidationError(fmt::format("jsd_shift: empty attribution set for {} (class {})", to_string(explainer), label));
  }
  JsdShiftRow row;
  row.explainer = explainer;
  row.label = label;
  row.count = count;
  row.jsd = jsd(histogram(a, bins), histogram(b, bins));
  row.normalised = count > 0 ? row.jsd / count : 0.0;
  row.pre_nodes = a.size();
  row.post_nodes = b.size();
  return row;
}

// ---------------------------------------------------------------------------

void validate_rho_grid(std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("rho grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] <= 1.0)) throw ConfigError(fmt::format("rho {} outside (0, 1]", grid[i]));
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("rho grid must be strictly increasing");
  }
}

std::vector<double> parse_rho_grid(const std::string& text) {
  auto number = [&text](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad rho grid '" + text + "'");
    }
  };
  auto tidy = [](double v) { return std::round(v * 1e12) / 1e12; };
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw ConfigError("rho grid '" + text + "' is not start:stop:step");
    const double start = number(parts[0]), stop = number(parts[1]), step = number(parts[2]);
    if (!(step > 0.0)) throw ConfigError("rho grid step must be positive");
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= n; ++i) grid.push_back(tidy(start + static_cast<double>(i) * step));
  } else {
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) grid.push_back(tidy(number(part)));
  }
  validate_rho_grid(grid);
  return grid;
}

std::size_t budget_count(double rho, std::size_t n) {
  if (n == 0) return 0;
  const auto k = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<int> ranked_objects(const AttributionResult& result) {
  std::vector<NodeScore> nodes = result.nodes;
  std::sort(nodes.begin(), nodes.end(), [](const NodeScore& a, const NodeScore& b) {
    if (a.normalised != b.normalised) return a.normalised > b.normalised;
    return a.node_id < b.node_id;
  });
  std::vector<int> ids;
  for (const NodeScore& n : nodes) ids.push_back(n.node_id);
  return ids;
}

std::size_t FidelityCurve::index_of(double value) const {
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (std::abs(rho[i] - value) < 1e-9) return i;
  throw ConfigError(fmt::format("rho {} is not on the fidelity grid", value));
}

FidelityCurve fidelity_curve(const std::string& name, std::span<const AttributionResult> results,
                             std::span<const AttributionPair> pairs, const EncoderParams& params,
                             std::span<const double> grid, ExecPolicy policy) {
  if (results.size() != pairs.size()) throw ShapeError("fidelity: one attribution per pair is required");
  validate_rho_grid(grid);
  const std::size_t g = grid.size();
  std::vector<std::vector<double>> keep(pairs.size()), drop(pairs.size()), full(pairs.size());
  std::vector<char> used(pairs.size(), 0);

  for_each_index(pairs.size(), policy, [&](std::size_t i) {
    const EgoGraph& q = *pairs[i].q;
    const std::size_t n = q.num_objects();
    if (n == 0) return;
    const std::vector<int> ranked = ranked_objects(results[i]);
    if (ranked.size() != n) throw ValidationError("fidelity: attribution does not cover the query's objects");

    // Distinct budgets; k = n keeps Q itself.
    std::vector<std::size_t> ks;
    for (double rho : grid) ks.push_back(budget_count(rho, n));
    std::vector<std::size_t> distinct(ks.begin(), ks.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<EgoGraph> batch{*pairs[i].p, q};
    for (std::size_t k : distinct) {
      batch.push_back(q.with_objects(std::span(ranked).first(k)));
      batch.push_back(q.with_objects(std::span(ranked).subspan(k)));
    }
    const auto z = embed_all(batch, params, ExecPolicy::kSerial);
    const double s_full = cosine(z[1], z[0]);
    std::map<std::size_t, std::pair<double, double>> sims;  // k -> (keep, drop)
    for (std::size_t j = 0; j < distinct.size(); ++j) {
      const std::size_t k = distinct[j];
      const double s_keep = k == n ? s_full : cosine(z[2 + 2 * j], z[0]);
      sims[k] = {s_keep, cosine(z[3 + 2 * j], z[0])};
    }
    keep[i].resize(g);
    drop[i].resize(g);
    for (std::size_t r = 0; r < g; ++r) std::tie(keep[i][r], drop[i][r]) = sims[ks[r]];
    full[i] = {s_full};
    used[i] = 1;
  });

  FidelityCurve c;
  c.explainer = name;
  c.rho.assign(grid.begin(), grid.end());
  c.s_keep.assign(g, 0.0);
  c.s_drop.assign(g, 0.0);
  c.delta_plus.assign(g, 0.0);
  c.delta_minus.assign(g, 0.0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!used[i]) {
      ++c.skipped;
      continue;
    }
    std::vector<double> plus(g), minus(g);
    for (std::size_t r = 0; r < g; ++r) {
      plus[r] = std::abs(drop[i][r] - full[i][0]);
      minus[r] = std::abs(full[i][0] - keep[i][r]);
      c.s_keep[r] += keep[i][r];
      c.s_drop[r] += drop[i][r];
      c.delta_plus[r] += plus[r];
      c.delta_minus[r] += minus[r];
    }
    c.pair_plus.push_back(std::move(plus));
    c.pair_minus.push_back(std::move(minus));
  }
  c.pairs = c.pair_plus.size();
  if (c.skipped) log_info(fmt::format("fidelity ({}): {} pairs without objects skipped", name, c.skipped));
  if (c.pairs > 0) {
    const double n = static_cast<double>(c.pairs);
    for (std::size_t r = 0; r < g; ++r) {
      c.s_keep[r] /= n;
      c.s_drop[r] /= n;
      c.delta_plus[r] /= n;
      c.delta_minus[r] /= n;
    }
  }
  return c;
}

CharactScore charact(double delta_plus, double delta_minus, double w_plus, double w_minus) {
  if (!(w_plus >= 0.0 && w_plus <= 1.0 && w_minus >= 0.0 && w_minus <= 1.0) ||
      std::abs(w_plus + w_minus - 1.0) > 1e-12) {
    throw ConfigError(fmt::format("charact weights must lie in [0, 1] and sum to 1 (got {}, {})", w_plus, w_minus));
  }
  CharactScore s;
  s.w_plus = w_plus;
  s.w_minus = w_minus;
  double sufficiency = 1.0 - delta_minus;
  if (sufficiency < 0.0) {
    s.floored = true;
    sufficiency = 0.0;
  }
  if ((w_plus > 0.0 && !(delta_plus > 0.0)) || (w_minus > 0.0 && !(sufficiency > 0.0))) {
    s.degenerate = true;
    s.value = 0.0;
    return s;
  }
  double denom = 0.0;
  if (w_plus > 0.0) denom += w_plus / delta_plus;
  if (w_minus > 0.0) denom += w_minus / sufficiency;
  s.value = (w_plus + w_minus) / denom;
  if (s.value > 1.0) {
    s.clamped = true;
    s.value = 1.0;
  }
  return s;
}

namespace {

CharactScore charact_at(const FidelityCurve& curve, std::size_t i, double w_plus, double w_minus) {
  CharactScore s = charact(curve.delta_plus[i], curve.delta_minus[i], w_plus, w_minus);
  s.explainer = curve.explainer;
  s.rho = curve.rho[i];
  if (s.floored) log_warn(fmt::format("charact ({}, rho {}): 1 - delta- below 0, floored", s.explainer, s.rho));
  if (s.clamped) log_warn(fmt::format("charact ({}, rho {}): value above 1, clamped", s.explainer, s.rho));
  return s;
}

double mean_at(const std::vector<std::vector<double>>& per_pair, std::span<const std::size_t> sample, std::size_t r) {
  double s = 0.0;
  for (std::size_t i : sample) s += per_pair[i][r];
  return s / static_cast<double>(sample.size());
}

}  // namespace

CharactScore charact(const FidelityCurve& curve, double rho_star, double w_plus, double w_minus) {
  return charact_at(curve, curve.index_of(rho_star), w_plus, w_minus);
}

std::vector<CharactScore> charact_curve(const FidelityCurve& curve, double w_plus, double w_minus) {
  std::vector<CharactScore> out;
  for (std::size_t i = 0; i < curve.rho.size(); ++i) out.push_back(charact_at(curve, i, w_plus, w_minus));
  return out;
}

std::vector<FidelityCurve> random_baselines(std::span<const AttributionPair> pairs, const EncoderParams& params,
                                            std::span<const double> grid, std::size_t count, std::uint64_t seed,
                                            ExecPolicy policy) {
  std::vector<FidelityCurve> out;
  for (std::size_t c = 0; c < count; ++c) {
    ExplainOptions options;
    options.random_seed = derive_seed(seed, {0x726e64, c});
    const auto results = explain_pairs(Explainer::kRandom, pairs, params, options, policy);
    out.push_back(fidelity_curve(fmt::format("random-{}", c), results, pairs, params, grid, policy));
  }
  return out;
}

RandomComparison compare_with_random(const FidelityCurve& curve, std::span<const FidelityCurve> randoms,
                                     double rho_star, double w_plus, double w_minus, std::size_t resamples,
                                     double confidence, std::uint64_t seed) {
  if (randoms.empty()) throw ConfigError("compare_with_random: no random baselines");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  if (resamples < 1) throw ConfigError("resamples must be at least 1");
  const std::size_t n = curve.pairs;
  if (n == 0) throw ValidationError("compare_with_random: the curve has no pairs");
  const std::size_t r = curve.index_of(rho_star);
  std::vector<std::size_t> ri;
  for (const FidelityCurve& c : randoms) {
    if (c.pairs != n) throw ValidationError("compare_with_random: baselines were run on different pairs");
    ri.push_back(c.index_of(rho_star));
  }

  auto difference = [&](std::span<const std::size_t> sample, double* value, double* random_mean) {
    const double v = charact(mean_at(curve.pair_plus, sample, r), mean_at(curve.pair_minus, sample, r), w_plus, w_minus).value;
    double m = 0.0;
    for (std::size_t k = 0; k < randoms.size(); ++k) {
      m += charact(mean_at(randoms[k].pair_plus, sample, ri[k]), mean_at(randoms[k].pair_minus, sample, ri[k]), w_plus,
                   w_minus).value;
    }
    m /= static_cast<double>(randoms.size());
    if (value) *value = v;
    if (random_mean) *random_mean = m;
    return v - m;
  };

  RandomComparison out;
  out.explainer = curve.explainer;
  out.rho = curve.rho[r];
  out.confidence = confidence;
  out.resamples = resamples;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  difference(all, &out.value, &out.random_mean);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> diffs(resamples);
  std::vector<std::size_t> sample(n);
  for (double& d : diffs) {
    for (std::size_t& s : sample) s = pick(rng);
    d = difference(sample, nullptr, nullptr);
  }
  std::sort(diffs.begin(), diffs.end());
  const auto lo = static_cast<std::size_t>(std::floor((1.0 - confidence) * static_cast<double>(resamples)));
  out.diff_lower = diffs[std::min(lo, resamples - 1)];
  out.separated = out.diff_lower > 0.0;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<int> rank_classes(const std::map<int, double>& scores) {
  std::vector<std::pair<int, double>> v(scores.begin(), scores.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<int> out;
  for (const auto& [label, score] : v) out.push_back(label);
  return out;
}

double kendall_tau(std::span<const int> a, std::span<const int> b) {
  std::vector<int> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa != sb || std::adjacent_find(sa.begin(), sa.end()) != sa.end()) {
    throw ValidationError("kendall_tau: rankings must order the same distinct labels");
  }
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<int, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos[b[i]] = i;
  long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) (pos[a[i]] < pos[a[j]] ? concordant : discordant) += 1;
  return static_cast<double>(concordant - discordant) / static_cast<double>(n * (n - 1) / 2);
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: inputs differ in length");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman: inputs differ in length");
  return pearson(average_ranks(x), average_ranks(y));
}

std::map<int, double> mean_class_scores(std::span<const AttributionResult> results) {
  std::map<int, double> out;
  for (const AttributionResult& r : results)
    for (const auto& [label, s] : r.class_scores) out[label] += s;
  for (auto& [label, s] : out) s /= static_cast<double>(results.size());
  return out;
}

std::map<int, double> object_importance(std::span<const AttributionResult> results) {
  std::map<int, std::pair<double, int>> acc;
  for (const AttributionResult& r : results) {
    for (const NodeScore& n : r.nodes) {
      acc[n.node_id].first += n.normalised;
      acc[n.node_id].second += 1;
    }
  }
  std::map<int, double> out;
  for (const auto& [id, a] : acc) out[id] = a.first / a.second;
  return out;
}

Correlation attention_performance_correlation(std::span<const ClassAblationRow> ablation,
                                              std::span<const JsdShiftRow> jsd_rows) {
  std::map<int, double> jsd_by_label;
  for (const JsdShiftRow& row : jsd_rows) {
    if (row.explainer != Explainer::kAttention) {
      throw ValidationError("attention_performance_correlation: JSD rows must come from the attention explainer");
    }
    jsd_by_label[row.label] = row.normalised;
  }
  Correlation c;
  for (const ClassAblationRow& row : ablation) {
    const auto it = jsd_by_label.find(row.label);
    if (it != jsd_by_label.end()) c.points.push_back({row.label, row.normalised_drop, it->second});
  }
  std::sort(c.points.begin(), c.points.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
  if (c.points.size() < 3) throw ValidationError("attention_performance_correlation: needs at least three classes");
  std::vector<double> x, y;
  for (const auto& p : c.points) {
    x.push_back(p.drop);
    y.push_back(p.jsd);
  }
  c.pearson = pearson(x, y);
  c.spearman = spearman(x, y);
  return c;
}

}  // namespace semloc
