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

// semloc: generate scenes, train and evaluate the place encoder, and run the
// attribution and class-importance analyses.

#include <fmt/core.h>
#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semloc/errors.hpp"
#include "semloc/evaluation.hpp"
#include "semloc/log.hpp"
#include "semloc/pipeline.hpp"
#include "semloc/random.hpp"

namespace fs = std::filesystem;
using namespace semloc;

namespace {

struct Global {
  std::string log_level = "warn";
  int threads = 0;
  bool serial = false;

  ExecPolicy policy() const { return serial ? ExecPolicy::kSerial : ExecPolicy::kParallel; }
};

struct DataOpts {
  std::string scene;
  DatasetConfig dataset;
  bool no_relink = false;
  bool variants_set = false;

  void add(CLI::App* app, bool scene_required) {
    auto* s = app->add_option("--scene", scene, "Scene graph JSON file");
    if (scene_required) s->required();
    s->check(CLI::ExistingFile);
    app->add_option("--variants", dataset.variants, "Perturbed query variants used for training")->check(CLI::PositiveNumber);
    app->add_option("--eval-variants", dataset.eval_variants, "Held-out variants used for val/test queries")
        ->check(CLI::PositiveNumber);
    app->add_option("--radius", dataset.radius, "Positive matching radius (metres)")->check(CLI::PositiveNumber);
    app->add_option("--dataset-seed", dataset.seed, "Seed of the perturbations and the split");
    app->add_flag("--no-relink", no_relink, "Keep map visibility edges in query variants");
  }

  DatasetConfig resolve() const {
    DatasetConfig c = dataset;
    if (no_relink) c.relink = false;
    return c;
  }
};

struct TrainOpts {
  std::string loss = "infonce";
  double temperature = 0.7;
  std::optional<double> margin;
  int epochs = 100;
  int batch_size = 32;
  int negatives = 31;
  int pool_size = 16;
  double lr = 1e-3;
  int hops = 2;
  std::uint64_t seed = 0;
  std::string variant = "model";

  void add(CLI::App* app) {
    app->add_option("--loss", loss, "infonce, contrastive or triplet")
        ->check(CLI::IsMember({"infonce", "contrastive", "triplet"}));
    app->add_option("--temp", temperature, "InfoNCE temperature")->check(CLI::PositiveNumber);
    app->add_option("--margin", margin, "Contrastive/triplet margin (defaults 1 and 0.2)");
    app->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
    app->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
    app->add_option("--negatives", negatives, "Negatives per query")->check(CLI::PositiveNumber);
    app->add_option("--pool-size", pool_size, "Extra negative candidates per batch")->check(CLI::NonNegativeNumber);
    app->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    app->add_option("--hops", hops, "Ego-graph radius in traversability hops")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--variant", variant, "Architecture from the ablation grid (e.g. layers-3, no-gat-2)");
  }

  TrainConfig resolve(const Global& g) const {
    TrainConfig c;
    c.loss = parse_loss_kind(loss);
    c.temperature = temperature;
    c.margin = margin;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.negatives = negatives;
    c.pool_size = pool_size;
    c.adam.lr = lr;
    c.hops = hops;
    c.seed = seed;
    c.policy = g.policy();
    const AblationVariant v = ablation_variant(variant);
    c.hyper.mpnn_layers = v.mpnn_layers;
    c.hyper.hidden = v.hidden;
    c.hyper.heads = v.heads;
    c.hyper.use_gat = v.use_gat;
    c.validate();
    return c;
  }
};

struct AnalysisOpts {
  std::string split = "test";
  std::size_t max_pairs = 200;
  std::vector<std::string> methods;
  std::size_t steps = 64;
  std::size_t permutations = 200;
  std::uint64_t seed = 0;
  std::string rho_grid = "0.05:1.0:0.05";
  double rho_star = 0.2;
  double w_plus = 0.5;
  double w_minus = 0.5;
  std::size_t random_baselines = 20;
  std::size_t bootstrap = 1000;

  void add_common(CLI::App* app) {
    app->add_option("--split", split, "Split whose places are analysed")->check(CLI::IsMember({"train", "val", "test"}));
    app->add_option("--max-pairs", max_pairs, "Place-query pairs analysed (0 = all)");
    app->add_option("--methods", methods, "Explainers (saliency, ig, shapley, attention)")->delimiter(',');
    app->add_option("--steps", steps, "Integrated-gradients steps")->check(CLI::PositiveNumber);
    app->add_option("--permutations", permutations, "Shapley permutations")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Analysis seed");
  }
  void add_fidelity(CLI::App* app) {
    app->add_option("--rho-grid", rho_grid, "Budget grid start:stop:step or a comma list");
    app->add_option("--rho-star", rho_star, "Budget of the characterisation score");
    app->add_option("--w-plus", w_plus, "Weight of necessity");
    app->add_option("--w-minus", w_minus, "Weight of sufficiency");
    app->add_option("--random-baselines", random_baselines, "Random rankings compared against");
    app->add_option("--bootstrap", bootstrap, "Bootstrap resamples")->check(CLI::PositiveNumber);
  }

  AnalysisConfig resolve(const Global& g) const {
    AnalysisConfig c;
    c.which = split;
    c.max_pairs = max_pairs;
    if (!methods.empty()) {
      c.explainers.clear();
      for (const std::string& m : methods) {
        const Explainer e = parse_explainer(m);
        if (e == Explainer::kRandom) throw ConfigError("'random' is the baseline, not a method");
        c.explainers.push_back(e);
      }
    }
    c.explain.ig.steps = steps;
    c.explain.shapley.permutations = permutations;
    c.seed = seed;
    c.rho_grid = parse_rho_grid(rho_grid);
    c.rho_star = rho_star;
    c.w_plus = w_plus;
    c.w_minus = w_minus;
    c.random_baselines = random_baselines;
    c.bootstrap = bootstrap;
    c.policy = g.policy();
    return c;
  }
};

fs::path output_dir(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  if (const char* root = std::getenv("SEMLOC_OUTPUT_ROOT"); root && *root) return fs::path(root) / command;
  return fs::path("semloc-out") / command;
}

// Records every option of a subcommand, resolved, in the manifest.
void record_options(const CLI::App* app, Manifest& m) {
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      for (const std::string& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    m.option(opt->get_name(), value);
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw ValidationError("checkpoint '" + path + "' does not exist");
  return load_checkpoint(path);
}

SceneGraph read_scene(const std::string& path) { return load_scene(path); }

void finish(Manifest& manifest, const fs::path& out) {
  manifest.write(out);
  fmt::print("wrote {} files to {}\n", manifest.outputs().size() + 1, out.string());
}

// ---------------------------------------------------------------------------

struct GenerateOpts {
  std::string out;
  std::uint64_t seed = 0;
  SyntheticConfig scene;
};

int cmd_generate(const GenerateOpts& o, const CLI::App* app) {
  if (o.scene.num_objects == 0) log_warn("generating a scene without objects");
  const SceneGraph s = generate_synthetic(o.scene, o.seed);
  const fs::path out = output_dir(o.out, "generate");
  Manifest m("generate", kVersion);
  record_options(app, m);
  m.seed("scene", o.seed);
  m.output(out, "scene.json", scene_to_json(s));
  // Round trip guard.
  if (!(load_scene(out / "scene.json") == s)) throw ValidationError("scene did not round-trip");
  finish(m, out);
  fmt::print("{} places, {} objects\n", s.places.size(), s.objects.size());
  return 0;
}

struct CommonOut {
  std::string out;
  std::string checkpoint;
};

int cmd_train(const Global& g, const DataOpts& d, const TrainOpts& t, const CommonOut& c, const CLI::App* app) {
  const TrainConfig tc = t.resolve(g);
  const SceneGraph map = read_scene(d.scene);
  const Prepared data = prepare(map, d.resolve(), tc.hops, false);
  const fs::path out = output_dir(c.out, "train");
  Manifest m("train", kVersion);
  record_options(app, m);
  m.input(d.scene);
  m.seed("train", tc.seed);
  m.seed("dataset", data.dataset.seed);
  const TrainedRun r = train_and_evaluate(data, tc, 1, [](const EpochRow& e) {
    log_info(fmt::format("epoch {} loss {:.4f} val PR-AUC {:.4f} R@1 {:.3f}", e.epoch, e.loss, e.val.pr_auc,
                         e.val.recall_at_1));
  });
  m.output(out, "checkpoint.json",
           checkpoint_to_json({r.result.params, run_meta_json(data.dataset, tc, file_sha256(d.scene))}));
  m.output(out, "train_report.csv", train_csv(r.result.report.epochs));
  m.output(out, "eval.csv", eval_csv({{t.variant, r.test}, {"bow", r.bow}}));
  finish(m, out);
  fmt::print("best epoch {} val PR-AUC {:.4f}; test PR-AUC {:.4f} R@1 {:.4f} R@10 {:.4f}\n", r.result.report.best_epoch,
             r.result.report.best_pr_auc, r.test.pr_auc, r.test.recall_at_1, r.test.recall_at_10);
  fmt::print("BoW baseline: test PR-AUC {:.4f} R@1 {:.4f} R@10 {:.4f}\n", r.bow.pr_auc, r.bow.recall_at_1,
             r.bow.recall_at_10);
  return 0;
}

// Rebuilds the dataset a checkpoint was trained on; explicit flags win.
Prepared prepare_for(const DataOpts& d, const CLI::App* app, const Checkpoint& ck, bool class_removal) {
  DatasetConfig dc = dataset_from_meta(ck.meta_json);
  const DatasetConfig flags = d.resolve();
  if (app->count("--variants")) dc.variants = flags.variants;
  if (app->count("--eval-variants")) dc.eval_variants = flags.eval_variants;
  if (app->count("--radius")) dc.radius = flags.radius;
  if (app->count("--dataset-seed")) dc.seed = flags.seed;
  if (d.no_relink) dc.relink = false;
  return prepare(read_scene(d.scene), dc, hops_from_meta(ck.meta_json), class_removal);
}

struct EvalOpts {
  std::string split = "test";
  std::string baseline;
};

int cmd_eval(const Global& g, const DataOpts& d, const CommonOut& c, const EvalOpts& e, const CLI::App* app) {
  const Checkpoint ck = read_checkpoint(c.checkpoint);
  const Prepared data = prepare_for(d, app, ck, false);
  const fs::path out = output_dir(c.out, "eval");
  Manifest m("eval", kVersion);
  record_options(app, m);
  m.input(d.scene);
  m.input(c.checkpoint);
  std::vector<std::pair<std::string, EvalReport>> rows{
      {"model", evaluate_split(data.graphs, data.split, e.split, ck.params, g.policy())}};
  if (e.baseline == "bow") rows.emplace_back("bow", evaluate_bow(data.graphs, data.split, e.split, data.map.taxonomy));
  m.output(out, "eval.csv", eval_csv(rows));
  write_similarity_figures(data, ck.params, e.split, out, m, g.policy());
  finish(m, out);
  for (const auto& [name, r] : rows) {
    fmt::print("{:6} PR-AUC {:.4f} F1 {:.4f} R@1 {:.4f} R@5 {:.4f} R@10 {:.4f}\n", name, r.pr_auc, r.f1, r.recall_at_1,
               r.recall_at_5, r.recall_at_10);
  }
  return 0;
}

struct ExplainOpts {
  std::string method = "all";
  std::size_t smoothgrad_samples = 0;
  double smoothgrad_sigma = 0.1;
};

int cmd_explain(const Global& g, const DataOpts& d, const CommonOut& c, const AnalysisOpts& a, const ExplainOpts& x,
                const CLI::App* app) {
  const Checkpoint ck = read_checkpoint(c.checkpoint);
  AnalysisOpts ao = a;
  ao.methods.clear();
  std::vector<Explainer> methods;
  if (x.method == "all") {
    methods = all_explainers();
    if (!ck.params.hyper.use_gat) std::erase(methods, Explainer::kAttention);
  } else {
    methods.push_back(parse_explainer(x.method));
  }
  const AnalysisConfig ac = ao.resolve(g);
  const Prepared data = prepare_for(d, app, ck, false);
  const fs::path out = output_dir(c.out, "explain");
  Manifest m("explain", kVersion);
  record_options(app, m);
  m.input(d.scene);
  m.input(c.checkpoint);
  m.seed("analysis", a.seed);

  const auto pairs = attribution_pairs(data.graphs, data.split, ac.which, ac.max_pairs);
  if (pairs.empty()) throw ValidationError("no place-query pairs with objects in split '" + ac.which + "'");
  ExplainOptions options = ac.explain;
  options.random_seed = a.seed;
  options.shapley.seed = a.seed;

  std::string table;
  std::map<std::string, std::map<int, double>> importance;
  CsvWriter classes({"explainer", "label", "class", "mean_score"});
  for (Explainer e : methods) {
    std::vector<AttributionResult> results;
    if (x.smoothgrad_samples > 0) {
      results.resize(pairs.size());
      for_each_index(pairs.size(), g.policy(), [&](std::size_t i) {
        results[i] = smooth_grad(e, *pairs[i].p, *pairs[i].q, ck.params, x.smoothgrad_samples, x.smoothgrad_sigma,
                                 derive_seed(a.seed, {i}), options.ig);
      });
    } else {
      results = explain_pairs(e, pairs, ck.params, options, g.policy());
    }
    const std::string block = attribution_csv(results, pairs, data.map.taxonomy);
    table += table.empty() ? block : block.substr(block.find('\n') + 1);
    importance[to_string(e)] = object_importance(results);
    for (const auto& [label, s] : mean_class_scores(results)) {
      classes.row({to_string(e), std::to_string(label), data.map.taxonomy.by_label(label).code, csv_number(s)});
    }
  }
  std::map<int, int> labels;
  for (const Object& o : data.map.objects) labels[o.id] = o.label;
  m.output(out, "attributions.csv", table);
  m.output(out, "object_importance.csv", object_importance_csv(importance, labels, data.map.taxonomy));
  m.output(out, "class_scores.csv", classes.str());
  std::vector<Series> series;
  std::vector<std::string> categories;
  std::map<int, std::size_t> column;
  for (const auto& [name, scores] : importance)
    for (const auto& [id, s] : scores) column.emplace(id, 0);
  for (auto& [id, col] : column) {
    col = categories.size();
    categories.push_back(fmt::format("{}{}", data.map.taxonomy.by_label(labels.at(id)).code, id));
  }
  for (const auto& [name, scores] : importance) {
    Series s{name, {}, std::vector<double>(categories.size(), 0.0)};
    for (const auto& [id, v] : scores) s.y[column[id]] = v;
    series.push_back(s);
  }
  m.output(out, "object_importance.svg", svg_bars("Object importance", categories, series));
  finish(m, out);
  fmt::print("{} pairs explained with {} method(s)\n", pairs.size(), methods.size());
  return 0;
}

struct AblateOpts {
  bool no_jsd = false;
  bool architectures = false;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

int cmd_ablate(const Global& g, const DataOpts& d, const CommonOut& c, const AnalysisOpts& a, const AblateOpts& b,
               const TrainOpts& t, const CLI::App* app) {
  const fs::path out = output_dir(c.out, "ablate");
  Manifest m("ablate", kVersion);
  record_options(app, m);
  m.input(d.scene);

  if (b.architectures) {
    // Design-choice grid: every architecture retrained with every seed.
    const TrainConfig tc = t.resolve(g);
    const Prepared data = prepare(read_scene(d.scene), d.resolve(), tc.hops, false);
    const AblationResult r = run_ablation_grid(data.graphs, data.split, standard_ablation_grid(), b.seeds, tc,
                                               [](const AblationRun& run) {
                                                 log_info(fmt::format("{} seed {}: PR-AUC {:.4f}", run.variant.name,
                                                                      run.seed, run.test.pr_auc));
                                               });
    CsvWriter w({"variant", "runs", "pr_auc_mean", "pr_auc_std", "recall_at_1_mean", "recall_at_1_std"});
    for (const AblationSummary& s : r.summary) {
      w.row({s.variant.name, std::to_string(s.runs), csv_number(s.pr_auc_mean), csv_number(s.pr_auc_std),
             csv_number(s.recall1_mean), csv_number(s.recall1_std)});
    }
    m.output(out, "architecture_ablation.csv", w.str());
    finish(m, out);
    return 0;
  }

  const Checkpoint ck = read_checkpoint(c.checkpoint);
  m.input(c.checkpoint);
  AnalysisConfig ac = a.resolve(g);
  ac.fidelity = false;
  ac.class_shift = !b.no_jsd;
  const Prepared data = prepare_for(d, app, ck, true);
  const ModelAnalysis r = analyse_model(data, ck.params, ac);
  const RunTag tag{1, a.seed};
  m.output(out, "ablation.csv", ablation_csv({{tag, r.ablation}}));
  if (!b.no_jsd) {
    m.output(out, "jsd.csv", jsd_csv({{tag, r.jsd}}, data.map.taxonomy));
    std::vector<RankingRow> rows;
    for (const std::string& method : ranking_methods(ac)) {
      const auto it = r.rankings.find(method);
      if (it != r.rankings.end()) rows.push_back({method, 1, it->second});
    }
    m.output(out, "rankings.csv", rankings_csv(rows, data.map.taxonomy));
    if (r.correlation) {
      m.output(out, "correlation.csv", correlation_csv({{tag, *r.correlation}}, data.map.taxonomy));
      ModelAnalysis figures;
      figures.correlation = r.correlation;
      write_analysis_figures(data, figures, out, m);
    }
  }
  for (int skipped : data.skipped_classes) log_warn(fmt::format("class {} has no instances; skipped", skipped));
  finish(m, out);
  for (const ClassAblationRow& row : r.ablation) {
    fmt::print("{:3} count {:3} PR-AUC {:.4f} -> {:.4f} normalised drop {:+.5f}\n", row.code, row.count,
               row.pr_auc_with, row.pr_auc_without, row.normalised_drop);
  }
  return 0;
}

int cmd_fidelity(const Global& g, const DataOpts& d, const CommonOut& c, const AnalysisOpts& a, const CLI::App* app) {
  const Checkpoint ck = read_checkpoint(c.checkpoint);
  AnalysisConfig ac = a.resolve(g);
  ac.class_shift = false;
  const Prepared data = prepare_for(d, app, ck, false);
  const fs::path out = output_dir(c.out, "fidelity");
  Manifest m("fidelity", kVersion);
  record_options(app, m);
  m.input(d.scene);
  m.input(c.checkpoint);
  m.seed("analysis", a.seed);
  const ModelAnalysis r = analyse_model(data, ck.params, ac);
  const RunTag tag{1, a.seed};
  m.output(out, "fidelity.csv", fidelity_csv({{tag, r.curves}}));
  m.output(out, "charact.csv", charact_csv({{tag, r.charact}}));
  if (!r.comparisons.empty()) m.output(out, "random_comparison.csv", comparison_csv({{tag, r.comparisons}}));
  ModelAnalysis figures;
  figures.curves = r.curves;
  figures.charact = r.charact;
  write_analysis_figures(data, figures, out, m);
  finish(m, out);
  for (const RandomComparison& cmp : r.comparisons) {
    fmt::print("{:9} charact({}) {:.4f} random {:.4f} lower bound {:+.4f}{}\n", cmp.explainer, cmp.rho, cmp.value,
               cmp.random_mean, cmp.diff_lower, cmp.separated ? "" : " (not separated)");
  }
  return 0;
}

struct ReportOpts {
  int runs = 3;
  GenerateOpts scene;
};

int cmd_report(const Global& g, const DataOpts& d, const CommonOut& c, const AnalysisOpts& a, const TrainOpts& t,
               const ReportOpts& r, const CLI::App* app) {
  const fs::path out = output_dir(c.out, "report");
  Manifest m("report", kVersion);
  record_options(app, m);
  SceneGraph map;
  if (!d.scene.empty()) {
    map = read_scene(d.scene);
    m.input(d.scene);
  } else {
    map = generate_synthetic(r.scene.scene, r.scene.seed);
    m.seed("scene", r.scene.seed);
    m.output(out, "scene.json", scene_to_json(map));
  }
  ReportOptions options;
  options.runs = r.runs;
  // One base seed: run r trains with seed + r - 1, and each run's analysis
  // seed is derived from it.
  options.seed = a.seed;
  options.train = t.resolve(g);
  options.analysis = a.resolve(g);
  options.progress = [](const std::string& s) { log_info(s); };
  m.seed("seed", a.seed);
  const Prepared data = prepare(map, d.resolve(), options.train.hops, true);
  const ReportResult result = run_report(data, options, out, m);
  finish(m, out);
  for (const TrainedRun& run : result.runs) {
    fmt::print("run {} (seed {}): PR-AUC {:.4f} vs BoW {:.4f}; R@10 {:.4f} vs {:.4f}\n", run.run, run.seed,
               run.test.pr_auc, run.bow.pr_auc, run.test.recall_at_10, run.bow.recall_at_10);
  }
  return 0;
}

void add_scene_options(CLI::App* app, GenerateOpts& o) {
  app->add_option("--rooms-x", o.scene.rooms_x, "Rooms along x")->check(CLI::PositiveNumber);
  app->add_option("--rooms-y", o.scene.rooms_y, "Rooms along y")->check(CLI::PositiveNumber);
  app->add_option("--cells", o.scene.room_cells, "Places per room side")->check(CLI::PositiveNumber);
  app->add_option("--objects", o.scene.num_objects, "Number of objects")->check(CLI::NonNegativeNumber);
  app->add_option("--spacing", o.scene.place_spacing, "Place spacing (metres)")->check(CLI::PositiveNumber);
  app->add_option("--visibility", o.scene.visibility_range, "Visibility range (metres)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic localisation on scene graphs: training, evaluation and class-importance analysis"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; flags override it");
  Global g;
  app.add_option("--log-level", g.log_level, "quiet, warn, info or debug")
      ->check(CLI::IsMember({"quiet", "warn", "info", "debug"}));
  app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--serial", g.serial, "Use the serial reference kernels");

  GenerateOpts gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic office scene");
  generate->add_option("--out", gen.out, "Output directory");
  generate->add_option("--seed", gen.seed, "Scene seed");
  add_scene_options(generate, gen);

  DataOpts data;
  TrainOpts train_opts;
  CommonOut common;
  auto* train = app.add_subcommand("train", "Train the encoder and write a checkpoint");
  data.add(train, true);
  train_opts.add(train);
  train->add_option("--out", common.out, "Output directory");

  EvalOpts eval_opts;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  data.add(eval, true);
  eval->add_option("--checkpoint", common.checkpoint, "Checkpoint JSON")->required();
  eval->add_option("--split", eval_opts.split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--baseline", eval_opts.baseline, "Also report a baseline")->check(CLI::IsMember({"bow"}));
  eval->add_option("--out", common.out, "Output directory");

  AnalysisOpts analysis;
  ExplainOpts explain_opts;
  auto* explain = app.add_subcommand("explain", "Per-object attributions for place-query pairs");
  data.add(explain, true);
  explain->add_option("--checkpoint", common.checkpoint, "Checkpoint JSON")->required();
  explain->add_option("--method", explain_opts.method, "saliency, ig, shapley, attention, random or all")
      ->check(CLI::IsMember({"saliency", "ig", "shapley", "attention", "random", "all"}));
  explain->add_option("--smoothgrad-samples", explain_opts.smoothgrad_samples, "Average gradient explainers over noisy copies");
  explain->add_option("--smoothgrad-sigma", explain_opts.smoothgrad_sigma, "SmoothGrad noise scale");
  analysis.add_common(explain);
  explain->add_option("--out", common.out, "Output directory");

  AblateOpts ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "Leave-one-class-out ablation and attribution shift");
  data.add(ablate, true);
  ablate->add_option("--checkpoint", common.checkpoint, "Checkpoint JSON");
  ablate->add_flag("--no-jsd", ablate_opts.no_jsd, "Skip the attribution-shift analysis");
  ablate->add_flag("--architectures", ablate_opts.architectures, "Retrain the design-choice grid instead");
  ablate->add_option("--seeds", ablate_opts.seeds, "Seeds for --architectures")->delimiter(',');
  analysis.add_common(ablate);
  ablate->add_option("--out", common.out, "Output directory");
  TrainOpts ablate_train;
  // Only the training flags that make sense for the grid.
  ablate->add_option("--epochs", ablate_train.epochs, "Epochs for --architectures")->check(CLI::PositiveNumber);

  auto* fidelity = app.add_subcommand("fidelity", "Fidelity curves and characterisation scores");
  data.add(fidelity, true);
  fidelity->add_option("--checkpoint", common.checkpoint, "Checkpoint JSON")->required();
  analysis.add_common(fidelity);
  analysis.add_fidelity(fidelity);
  fidelity->add_option("--out", common.out, "Output directory");

  ReportOpts report_opts;
  auto* report = app.add_subcommand("report", "Train several runs and write the full analysis bundle");
  data.add(report, false);
  report->add_option("--runs", report_opts.runs, "Independent training runs")->check(CLI::PositiveNumber);
  report->add_option("--scene-seed", report_opts.scene.seed, "Seed of the generated scene (without --scene)");
  add_scene_options(report, report_opts.scene);
  analysis.add_common(report);
  analysis.add_fidelity(report);
  report->get_option("--seed")->description("Base seed: run r trains with seed + r - 1");
  // --seed belongs to the training runs here; the analysis seed follows it.
  TrainOpts& report_train = train_opts;
  report->add_option("--loss", report_train.loss)->check(CLI::IsMember({"infonce", "contrastive", "triplet"}));
  report->add_option("--temp", report_train.temperature)->check(CLI::PositiveNumber);
  report->add_option("--margin", report_train.margin);
  report->add_option("--epochs", report_train.epochs)->check(CLI::PositiveNumber);
  report->add_option("--lr", report_train.lr)->check(CLI::PositiveNumber);
  report->add_option("--out", common.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  set_log_level(g.log_level == "quiet"  ? LogLevel::kQuiet
                : g.log_level == "info" ? LogLevel::kInfo
                : g.log_level == "debug" ? LogLevel::kDebug
                                         : LogLevel::kWarn);
  if (g.threads > 0) omp_set_num_threads(g.threads);

  try {
    if (*generate) return cmd_generate(gen, generate);
    if (*train) return cmd_train(g, data, train_opts, common, train);
    if (*eval) return cmd_eval(g, data, common, eval_opts, eval);
    if (*explain) return cmd_explain(g, data, common, analysis, explain_opts, explain);
    if (*ablate) {
      TrainOpts t;
      t.epochs = ablate_train.epochs;
      t.seed = analysis.seed;
      if (!ablate_opts.architectures && common.checkpoint.empty()) throw ConfigError("ablate: --checkpoint is required");
      return cmd_ablate(g, data, common, analysis, ablate_opts, t, ablate);
    }
    if (*fidelity) return cmd_fidelity(g, data, common, analysis, fidelity);
    if (*report) {
      train_opts.seed = analysis.seed;
      return cmd_report(g, data, common, analysis, train_opts, report_opts, report);
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}
