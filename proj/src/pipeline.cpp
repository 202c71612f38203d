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

#include "semloc/pipeline.hpp"

#include <fmt/core.h>

#include <chrono>

#include <json.hpp>

#include "semloc/errors.hpp"
#include "semloc/evaluation.hpp"
#include "semloc/log.hpp"
#include "semloc/random.hpp"

namespace semloc {

Prepared prepare(const SceneGraph& map, const DatasetConfig& dataset, int hops, bool with_class_removal) {
  Prepared d;
  d.map = map;
  d.dataset = dataset;
  d.split = make_dataset(map, dataset);
  d.graphs = build_graphs(map, d.split, hops);
  if (with_class_removal) d.removed = without_each_class(map, d.split, hops, &d.skipped_classes);
  return d;
}

std::string run_meta_json(const DatasetConfig& dataset, const TrainConfig& train, const std::string& scene_sha256) {
  nlohmann::json j;
  j["dataset"] = {{"variants", dataset.variants},
                  {"eval_variants", dataset.eval_variants},
                  {"heldout_eval", dataset.heldout_eval},
                  {"radius", dataset.radius},
                  {"ratios", {dataset.ratios.train, dataset.ratios.val, dataset.ratios.test}},
                  {"relink", dataset.relink},
                  {"visibility_range", dataset.visibility_range},
                  {"seed", dataset.seed}};
  j["train"] = {{"loss", to_string(train.loss)},
                {"temperature", train.temperature},
                {"margin", train.effective_margin()},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"negatives", train.negatives},
                {"pool_size", train.pool_size},
                {"hops", train.hops},
                {"lr", train.adam.lr},
                {"seed", train.seed}};
  j["scene_sha256"] = scene_sha256;
  return j.dump();
}

DatasetConfig dataset_from_meta(const std::string& meta_json) {
  DatasetConfig c;
  try {
    const auto j = nlohmann::json::parse(meta_json);
    if (!j.contains("dataset")) return c;
    const auto& d = j.at("dataset");
    c.variants = d.value("variants", c.variants);
    c.eval_variants = d.value("eval_variants", c.eval_variants);
    c.heldout_eval = d.value("heldout_eval", c.heldout_eval);
    c.radius = d.value("radius", c.radius);
    if (d.contains("ratios")) {
      c.ratios.train = d.at("ratios").at(0).get<double>();
      c.ratios.val = d.at("ratios").at(1).get<double>();
      c.ratios.test = d.at("ratios").at(2).get<double>();
    }
    c.relink = d.value("relink", c.relink);
    c.visibility_range = d.value("visibility_range", c.visibility_range);
    c.seed = d.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  return c;
}

int hops_from_meta(const std::string& meta_json) {
  try {
    const auto j = nlohmann::json::parse(meta_json);
    if (j.contains("train")) return j.at("train").value("hops", 2);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  return 2;
}

TrainedRun train_and_evaluate(const Prepared& data, const TrainConfig& config, int run, const EpochCallback& on_epoch) {
  if (config.hops != data.graphs.hops) {
    throw ConfigError(fmt::format("training hops {} differ from the prepared graphs ({})", config.hops, data.graphs.hops));
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainedRun r;
  r.run = run;
  r.seed = config.seed;
  r.result = train(data.graphs, data.split, config, on_epoch);
  r.test = evaluate_split(data.graphs, data.split, "test", r.result.params, config.policy);
  r.bow = evaluate_bow(data.graphs, data.split, "test", data.map.taxonomy);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

FidelityCurve mean_curve(const std::string& name, std::span<const FidelityCurve> curves) {
  if (curves.empty()) throw ValidationError("mean_curve: no curves");
  FidelityCurve m = curves[0];
  m.explainer = name;
  for (std::size_t k = 1; k < curves.size(); ++k) {
    const FidelityCurve& c = curves[k];
    if (c.rho != m.rho || c.pairs != m.pairs) throw ValidationError("mean_curve: curves differ in grid or pairs");
    for (std::size_t r = 0; r < m.rho.size(); ++r) {
      m.s_keep[r] += c.s_keep[r];
      m.s_drop[r] += c.s_drop[r];
      m.delta_plus[r] += c.delta_plus[r];
      m.delta_minus[r] += c.delta_minus[r];
      for (std::size_t i = 0; i < m.pairs; ++i) {
        m.pair_plus[i][r] += c.pair_plus[i][r];
        m.pair_minus[i][r] += c.pair_minus[i][r];
      }
    }
  }
  const double n = static_cast<double>(curves.size());
  for (std::size_t r = 0; r < m.rho.size(); ++r) {
    m.s_keep[r] /= n;
    m.s_drop[r] /= n;
    m.delta_plus[r] /= n;
    m.delta_minus[r] /= n;
    for (std::size_t i = 0; i < m.pairs; ++i) {
      m.pair_plus[i][r] /= n;
      m.pair_minus[i][r] /= n;
    }
  }
  return m;
}

std::vector<std::string> ranking_methods(const AnalysisConfig& config) {
  std::vector<std::string> out{"ablation"};
  for (Explainer e : config.explainers) out.push_back(to_string(e));
  return out;
}

ModelAnalysis analyse_model(const Prepared& data, const EncoderParams& params, const AnalysisConfig& config) {
  ModelAnalysis a;
  std::vector<Explainer> explainers;
  for (Explainer e : config.explainers) {
    if (e == Explainer::kAttention && !params.hyper.use_gat) {
      log_warn("encoder has no attention layer; attention explainer skipped");
      continue;
    }
    explainers.push_back(e);
  }
  ExplainOptions options = config.explain;
  options.random_seed = derive_seed(config.seed, {0x72616e64});
  options.shapley.seed = derive_seed(config.seed, {0x73686170});

  a.pairs = attribution_pairs(data.graphs, data.split, config.which, config.max_pairs);
  if (a.pairs.empty()) throw ValidationError("analysis: no place-query pairs with objects");
  for (Explainer e : explainers) a.attributions[e] = explain_pairs(e, a.pairs, params, options, config.policy);

  if (!data.removed.empty()) {
    a.ablation = class_ablation(data.graphs, data.split, data.removed, data.map.taxonomy, params, config.which,
                                config.policy);
    if (config.class_shift) {
      for (const ClassRemoved& r : data.removed) {
        const auto post_pairs = remap_pairs(a.pairs, r.graphs);
        for (Explainer e : explainers) {
          const auto post = explain_pairs(e, post_pairs, params, options, config.policy);
          JsdShiftRow row = jsd_shift(e, r.label, r.count, a.attributions[e], post);
          row.code = data.map.taxonomy.by_label(r.label).code;
          a.jsd.push_back(row);
        }
      }
    }
  }

  if (config.fidelity) {
    for (Explainer e : explainers) {
      a.curves.push_back(fidelity_curve(to_string(e), a.attributions[e], a.pairs, params, config.rho_grid, config.policy));
    }
    if (config.random_baselines > 0) {
      a.randoms = random_baselines(a.pairs, params, config.rho_grid, config.random_baselines,
                                   derive_seed(config.seed, {0x6669}), config.policy);
      a.curves.push_back(mean_curve("random", a.randoms));
    }
    for (const FidelityCurve& c : a.curves) {
      const auto scores = charact_curve(c, config.w_plus, config.w_minus);
      a.charact.insert(a.charact.end(), scores.begin(), scores.end());
    }
    if (!a.randoms.empty()) {
      for (std::size_t k = 0; k < explainers.size(); ++k) {
        a.comparisons.push_back(compare_with_random(a.curves[k], a.randoms, config.rho_star, config.w_plus,
                                                    config.w_minus, config.bootstrap, config.confidence,
                                                    derive_seed(config.seed, {0x626f6f74, k})));
      }
    }
  }

  // Rankings: normalised PR-AUC drop for the ablation, normalised JSD for
  // the explainers.
  if (!a.ablation.empty()) {
    std::map<int, double> drop;
    for (const ClassAblationRow& r : a.ablation) drop[r.label] = r.normalised_drop;
    a.rankings["ablation"] = rank_classes(drop);
  }
  for (Explainer e : explainers) {
    std::map<int, double> s;
    for (const JsdShiftRow& r : a.jsd)
      if (r.explainer == e) s[r.label] = r.normalised;
    if (!s.empty()) a.rankings[to_string(e)] = rank_classes(s);
  }

  std::vector<JsdShiftRow> attention_rows;
  for (const JsdShiftRow& r : a.jsd)
    if (r.explainer == Explainer::kAttention) attention_rows.push_back(r);
  if (!attention_rows.empty()) {
    try {
      a.correlation = attention_performance_correlation(a.ablation, attention_rows);
    } catch (const ValidationError& e) {
      log_warn(std::string("attention-performance correlation not computed: ") + e.what());
    }
  }
  return a;
}

// ---------------------------------------------------------------------------

namespace {

// Query rows of the first evaluation variant against the map columns of the
// same places, in the same order.
Tensor square_block(const SimilarityMatrix& sim) {
  if (sim.rows() == 0) return Tensor({0, 0});
  const int variant = sim.query_variants[0];
  std::vector<std::size_t> rows, cols;
  for (std::size_t r = 0; r < sim.rows(); ++r) {
    if (sim.query_variants[r] != variant) continue;
    const auto it = std::lower_bound(sim.map_ids.begin(), sim.map_ids.end(), sim.query_ids[r]);
    if (it == sim.map_ids.end() || *it != sim.query_ids[r]) continue;
    rows.push_back(r);
    cols.push_back(static_cast<std::size_t>(it - sim.map_ids.begin()));
  }
  Tensor block({rows.size(), cols.size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) block.at(i, j) = sim(rows[i], cols[j]);
  return block;
}

}  // namespace

void write_similarity_figures(const Prepared& data, const EncoderParams& params, const std::string& which,
                              const std::filesystem::path& out, Manifest& manifest, ExecPolicy policy) {
  const QuerySet queries = make_queries(data.graphs, data.split, which);
  const SimilarityMatrix model = similarity_matrix(queries, data.graphs, params, policy);
  const SimilarityMatrix bow = bow_similarity_matrix(queries, data.graphs, data.map.taxonomy);
  manifest.output(out, "similarity_model.svg", svg_heatmap("Learned similarity (" + which + ")", square_block(model), -1.0, 1.0));
  manifest.output(out, "similarity_bow.svg", svg_heatmap("BoW similarity (" + which + ")", square_block(bow), 0.0, 1.0));
  if (model.rows() > 0) {
    std::map<int, double> values;
    for (std::size_t c = 0; c < model.cols(); ++c) values[model.map_ids[c]] = model(0, c);
    manifest.output(out, "floor_plan.svg",
                    svg_floor_plan(fmt::format("Similarity to query place {}", model.query_ids[0]), data.map, values,
                                   model.query_ids[0]));
  }
}

void write_analysis_figures(const Prepared& data, const ModelAnalysis& a, const std::filesystem::path& out,
                            Manifest& manifest) {
  if (!a.curves.empty()) {
    std::vector<Series> plus, minus, ch;
    for (const FidelityCurve& c : a.curves) {
      plus.push_back({c.explainer, c.rho, c.delta_plus});
      minus.push_back({c.explainer, c.rho, c.delta_minus});
      Series s{c.explainer, c.rho, {}};
      for (const CharactScore& score : a.charact)
        if (score.explainer == c.explainer) s.y.push_back(score.value);
      ch.push_back(s);
    }
    manifest.output(out, "fidelity_plus.svg", svg_line_chart("Fidelity+ (necessity)", "rho", "delta+", plus));
    manifest.output(out, "fidelity_minus.svg", svg_line_chart("Fidelity- (sufficiency)", "rho", "delta-", minus));
    manifest.output(out, "charact.svg", svg_line_chart("Characterisation score", "rho", "charact", ch));
  }
  if (a.correlation) {
    std::vector<ScatterPoint> pts;
    for (const CorrelationPoint& p : a.correlation->points)
      pts.push_back({p.jsd, p.drop, data.map.taxonomy.by_label(p.label).code});
    const std::string r = a.correlation->pearson ? fmt::format("{:.3f}", *a.correlation->pearson) : "undefined";
    manifest.output(out, "correlation.svg",
                    svg_scatter("Attention JSD vs PR-AUC drop (r = " + r + ")", "normalised attention JSD",
                                "normalised PR-AUC drop", pts));
  }
  if (!a.attributions.empty()) {
    std::map<int, int> labels;
    for (const Object& o : data.map.objects) labels[o.id] = o.label;
    std::map<int, std::size_t> column;
    for (const auto& [e, results] : a.attributions)
      for (const auto& [id, s] : object_importance(results)) column.emplace(id, 0);
    std::vector<std::string> categories;
    for (auto& [id, c] : column) {
      c = categories.size();
      const auto it = labels.find(id);
      categories.push_back(fmt::format("{}{}", it == labels.end() ? "" : data.map.taxonomy.by_label(it->second).code, id));
    }
    std::vector<Series> series;
    for (const auto& [e, results] : a.attributions) {
      Series s{to_string(e), {}, std::vector<double>(categories.size(), 0.0)};
      for (const auto& [id, v] : object_importance(results)) s.y[column[id]] = v;
      series.push_back(s);
    }
    manifest.output(out, "object_importance.svg", svg_bars("Object importance", categories, series));
  }
}

ReportResult run_report(const Prepared& data, const ReportOptions& options, const std::filesystem::path& out,
                        Manifest& manifest) {
  if (options.runs < 1) throw ConfigError("report: runs must be at least 1");
  if (data.removed.empty()) throw ConfigError("report: the prepared data lacks class-removed copies");
  auto progress = [&](const std::string& s) {
    if (options.progress) options.progress(s);
  };
  ReportResult result;
  std::vector<std::pair<RunTag, std::vector<ClassAblationRow>>> ablation;
  std::vector<std::pair<RunTag, std::vector<JsdShiftRow>>> jsd;
  std::vector<std::pair<RunTag, std::vector<FidelityCurve>>> fidelity;
  std::vector<std::pair<RunTag, std::vector<CharactScore>>> charact;
  std::vector<std::pair<RunTag, std::vector<RandomComparison>>> comparisons;
  std::vector<std::pair<RunTag, Correlation>> correlations;
  std::vector<RankingRow> rankings;
  CsvWriter eval({"run", "seed", "method", "pr_auc", "f1", "threshold", "recall_at_1", "recall_at_5", "recall_at_10",
                  "queries", "positives", "pairs"});

  for (int run = 1; run <= options.runs; ++run) {
    TrainConfig tc = options.train;
    tc.seed = options.seed + static_cast<std::uint64_t>(run - 1);
    const RunTag tag{run, tc.seed};
    progress(fmt::format("run {}: training with seed {}", run, tc.seed));
    TrainedRun tr = train_and_evaluate(data, tc, run, [&](const EpochRow& e) {
      if (e.epoch % 10 == 0) progress(fmt::format("run {}: epoch {} val PR-AUC {:.4f}", run, e.epoch, e.val.pr_auc));
    });
    for (const auto& [method, r] : {std::pair{"model", tr.test}, std::pair{"bow", tr.bow}}) {
      eval.row({std::to_string(run), std::to_string(tc.seed), method, csv_number(r.pr_auc), csv_number(r.f1),
                csv_number(r.threshold), csv_number(r.recall_at_1), csv_number(r.recall_at_5),
                csv_number(r.recall_at_10), std::to_string(r.queries), std::to_string(r.positives),
                std::to_string(r.pairs)});
    }
    manifest.output(out, fmt::format("train_run{}.csv", run), train_csv(tr.result.report.epochs));
    manifest.output(out, fmt::format("checkpoint_run{}.json", run),
                    checkpoint_to_json({tr.result.params, run_meta_json(data.dataset, tc, "")}));

    progress(fmt::format("run {}: analysing", run));
    AnalysisConfig ac = options.analysis;
    ac.seed = derive_seed(options.analysis.seed, {tc.seed});
    ModelAnalysis a = analyse_model(data, tr.result.params, ac);

    std::string attributions;
    for (const auto& [e, results] : a.attributions) {
      std::string block = attribution_csv(results, a.pairs, data.map.taxonomy);
      attributions += attributions.empty() ? block : block.substr(block.find('\n') + 1);
    }
    manifest.output(out, fmt::format("attributions_run{}.csv", run), attributions);

    ablation.emplace_back(tag, a.ablation);
    jsd.emplace_back(tag, a.jsd);
    fidelity.emplace_back(tag, a.curves);
    charact.emplace_back(tag, a.charact);
    comparisons.emplace_back(tag, a.comparisons);
    if (a.correlation) correlations.emplace_back(tag, *a.correlation);
    if (run == 1) {
      std::map<std::string, std::map<int, double>> importance;
      for (const auto& [e, results] : a.attributions) importance[to_string(e)] = object_importance(results);
      std::map<int, int> labels;
      for (const Object& o : data.map.objects) labels[o.id] = o.label;
      manifest.output(out, "object_importance.csv", object_importance_csv(importance, labels, data.map.taxonomy));
      write_analysis_figures(data, a, out, manifest);
      write_similarity_figures(data, tr.result.params, ac.which, out, manifest, ac.policy);
    }
    result.runs.push_back(std::move(tr));
    result.analyses.push_back(std::move(a));
  }
  for (const std::string& method : ranking_methods(options.analysis)) {
    for (std::size_t i = 0; i < result.analyses.size(); ++i) {
      const auto it = result.analyses[i].rankings.find(method);
      if (it != result.analyses[i].rankings.end()) rankings.push_back({method, static_cast<int>(i) + 1, it->second});
    }
  }

  manifest.output(out, "eval.csv", eval.str());
  manifest.output(out, "ablation.csv", ablation_csv(ablation));
  manifest.output(out, "jsd.csv", jsd_csv(jsd, data.map.taxonomy));
  manifest.output(out, "fidelity.csv", fidelity_csv(fidelity));
  manifest.output(out, "charact.csv", charact_csv(charact));
  manifest.output(out, "random_comparison.csv", comparison_csv(comparisons));
  manifest.output(out, "correlation.csv", correlation_csv(correlations, data.map.taxonomy));
  manifest.output(out, "rankings.csv", rankings_csv(rankings, data.map.taxonomy));
  return result;
}

}  // namespace semloc
