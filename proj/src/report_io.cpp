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

#include "semloc/report_io.hpp"

#include <fmt/core.h>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "semloc/errors.hpp"

namespace semloc {

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

CsvWriter& CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) {
    throw ShapeError(fmt::format("csv: row has {} fields, header has {}", fields.size(), columns_));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) text_ += ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n") == std::string::npos) {
      text_ += f;
    } else {
      text_ += '"';
      for (char c : f) {
        if (c == '"') text_ += '"';
        text_ += c;
      }
      text_ += '"';
    }
  }
  text_ += '\n';
  return *this;
}

std::string csv_number(double v) {
  if (v == 0.0) return "0";  // no "-0"
  return fmt::format("{:.12g}", v);
}

namespace {

std::string str(std::size_t v) { return std::to_string(v); }
std::string str(int v) { return std::to_string(v); }
std::string flag(bool b) { return b ? "1" : "0"; }

std::string code_of(const Taxonomy& taxonomy, int label) {
  if (const auto i = taxonomy.index_of(label)) return taxonomy[*i].code;
  return std::to_string(label);
}

std::vector<std::string> run_fields(const RunTag& tag) { return {str(tag.run), std::to_string(tag.seed)}; }

std::vector<std::string> join(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

std::string eval_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  CsvWriter w({"method", "pr_auc", "f1", "threshold", "recall_at_1", "recall_at_5", "recall_at_10", "queries",
               "positives", "pairs"});
  for (const auto& [name, r] : rows) {
    w.row({name, csv_number(r.pr_auc), csv_number(r.f1), csv_number(r.threshold), csv_number(r.recall_at_1),
           csv_number(r.recall_at_5), csv_number(r.recall_at_10), str(r.queries), str(r.positives), str(r.pairs)});
  }
  return w.str();
}

std::string train_csv(const std::vector<EpochRow>& rows) {
  CsvWriter w({"epoch", "loss", "val_pr_auc", "val_f1", "val_recall_at_1", "val_recall_at_5", "val_recall_at_10"});
  for (const EpochRow& r : rows) {
    w.row({str(r.epoch), csv_number(r.loss), csv_number(r.val.pr_auc), csv_number(r.val.f1),
           csv_number(r.val.recall_at_1), csv_number(r.val.recall_at_5), csv_number(r.val.recall_at_10)});
  }
  return w.str();
}

std::string attribution_csv(const std::vector<AttributionResult>& results, const std::vector<AttributionPair>& pairs,
                            const Taxonomy& taxonomy) {
  if (results.size() != pairs.size()) throw ShapeError("attribution_csv: one result per pair is required");
  CsvWriter w({"pair", "query_place", "map_place", "variant", "explainer", "node_id", "class", "raw", "normalised"});
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (const NodeScore& n : results[i].nodes) {
      w.row({str(i), str(pairs[i].query_place), str(pairs[i].map_place), str(pairs[i].variant),
             to_string(results[i].explainer), str(n.node_id), code_of(taxonomy, n.label), csv_number(n.raw),
             csv_number(n.normalised)});
    }
  }
  return w.str();
}

std::string ablation_csv(const std::vector<std::pair<RunTag, std::vector<ClassAblationRow>>>& runs) {
  CsvWriter w({"run", "seed", "label", "class", "count", "pr_auc_with", "pr_auc_without", "drop", "normalised_drop"});
  for (const auto& [tag, rows] : runs) {
    for (const ClassAblationRow& r : rows) {
      w.row(join(run_fields(tag), {str(r.label), r.code, str(r.count), csv_number(r.pr_auc_with),
                                   csv_number(r.pr_auc_without), csv_number(r.drop), csv_number(r.normalised_drop)}));
    }
  }
  return w.str();
}

std::string jsd_csv(const std::vector<std::pair<RunTag, std::vector<JsdShiftRow>>>& runs, const Taxonomy& taxonomy) {
  CsvWriter w({"run", "seed", "explainer", "label", "class", "count", "jsd", "normalised_jsd", "pre_nodes",
               "post_nodes"});
  for (const auto& [tag, rows] : runs) {
    for (const JsdShiftRow& r : rows) {
      w.row(join(run_fields(tag), {to_string(r.explainer), str(r.label), code_of(taxonomy, r.label), str(r.count),
                                   csv_number(r.jsd), csv_number(r.normalised), str(r.pre_nodes),
                                   str(r.post_nodes)}));
    }
  }
  return w.str();
}

std::string fidelity_csv(const std::vector<std::pair<RunTag, std::vector<FidelityCurve>>>& runs) {
  CsvWriter w({"run", "seed", "explainer", "rho", "s_keep", "s_drop", "delta_plus", "delta_minus", "pairs",
               "skipped"});
  for (const auto& [tag, curves] : runs) {
    for (const FidelityCurve& c : curves) {
      for (std::size_t i = 0; i < c.rho.size(); ++i) {
        w.row(join(run_fields(tag), {c.explainer, csv_number(c.rho[i]), csv_number(c.s_keep[i]),
                                     csv_number(c.s_drop[i]), csv_number(c.delta_plus[i]),
                                     csv_number(c.delta_minus[i]), str(c.pairs), str(c.skipped)}));
      }
    }
  }
  return w.str();
}

std::string charact_csv(const std::vector<std::pair<RunTag, std::vector<CharactScore>>>& runs) {
  CsvWriter w({"run", "seed", "explainer", "rho", "w_plus", "w_minus", "charact", "degenerate", "floored",
               "clamped"});
  for (const auto& [tag, scores] : runs) {
    for (const CharactScore& s : scores) {
      w.row(join(run_fields(tag), {s.explainer, csv_number(s.rho), csv_number(s.w_plus), csv_number(s.w_minus),
                                   csv_number(s.value), flag(s.degenerate), flag(s.floored), flag(s.clamped)}));
    }
  }
  return w.str();
}

std::string comparison_csv(const std::vector<std::pair<RunTag, std::vector<RandomComparison>>>& runs) {
  CsvWriter w({"run", "seed", "explainer", "rho", "charact", "random_mean", "diff_lower", "confidence", "resamples",
               "separated"});
  for (const auto& [tag, rows] : runs) {
    for (const RandomComparison& c : rows) {
      w.row(join(run_fields(tag), {c.explainer, csv_number(c.rho), csv_number(c.value), csv_number(c.random_mean),
                                   csv_number(c.diff_lower), csv_number(c.confidence), str(c.resamples),
                                   flag(c.separated)}));
    }
  }
  return w.str();
}

std::string correlation_csv(const std::vector<std::pair<RunTag, Correlation>>& runs, const Taxonomy& taxonomy) {
  CsvWriter w({"run", "seed", "label", "class", "normalised_drop", "normalised_attention_jsd", "pearson", "spearman"});
  auto opt = [](const std::optional<double>& v) { return v ? csv_number(*v) : std::string("undefined"); };
  for (const auto& [tag, c] : runs) {
    for (const CorrelationPoint& p : c.points) {
      w.row(join(run_fields(tag), {str(p.label), code_of(taxonomy, p.label), csv_number(p.drop), csv_number(p.jsd),
                                   opt(c.pearson), opt(c.spearman)}));
    }
  }
  return w.str();
}

std::string rankings_csv(const std::vector<RankingRow>& rows, const Taxonomy& taxonomy) {
  std::size_t width = taxonomy.size();
  for (const RankingRow& r : rows) width = std::max(width, r.labels.size());
  std::vector<std::string> header{"method", "run"};
  for (std::size_t i = 1; i <= width; ++i) {
    const char* suffix = i % 10 == 1 && i % 100 != 11 ? "st" : i % 10 == 2 && i % 100 != 12 ? "nd"
                       : i % 10 == 3 && i % 100 != 13 ? "rd" : "th";
    header.push_back(fmt::format("{}{}", i, suffix));
  }
  CsvWriter w(header);
  for (const RankingRow& r : rows) {
    std::vector<std::string> fields{r.method, str(r.run)};
    for (int label : r.labels) fields.push_back(code_of(taxonomy, label));
    fields.resize(width + 2);
    w.row(fields);
  }
  return w.str();
}

std::string object_importance_csv(const std::map<std::string, std::map<int, double>>& by_explainer,
                                  const std::map<int, int>& object_labels, const Taxonomy& taxonomy) {
  CsvWriter w({"explainer", "node_id", "class", "importance"});
  for (const auto& [name, scores] : by_explainer) {
    for (const auto& [id, s] : scores) {
      const auto it = object_labels.find(id);
      w.row({name, str(id), it == object_labels.end() ? "" : code_of(taxonomy, it->second), csv_number(s)});
    }
  }
  return w.str();
}

std::size_t validate_csv(const std::string& text) {
  if (text.empty() || text.back() != '\n') throw ValidationError("csv: empty or unterminated");
  std::size_t expected = 0, rows = 0;
  bool quoted = false;
  std::size_t fields = 1;
  for (char c : text) {
    if (c == '"') quoted = !quoted;
    if (quoted) continue;
    if (c == ',') ++fields;
    if (c == '\n') {
      if (rows == 0) expected = fields;
      else if (fields != expected) throw ValidationError(fmt::format("csv: row {} has {} fields, expected {}", rows, fields, expected));
      ++rows;
      fields = 1;
    }
  }
  if (quoted) throw ValidationError("csv: unterminated quote");
  return rows - 1;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;
constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }

std::string header(double w, double h) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      num(w), num(h));
}

std::string text(double x, double y, const std::string& s, const std::string& anchor = "middle", int size = 12,
                 const std::string& extra = "") {
  return fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"{}\" font-size=\"{}\"{}>{}</text>\n", num(x), num(y),
                     anchor, size, extra, escape(s));
}

// Rounded tick positions covering [lo, hi].
std::vector<double> ticks(double lo, double hi, int target = 5) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (span / step <= target) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) out.push_back(std::abs(t) < 1e-12 ? 0.0 : t);
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Frame frame_for(std::vector<double> xs, std::vector<double> ys) {
  auto range = [](const std::vector<double>& v, double& lo, double& hi) {
    lo = 0.0;
    hi = 1.0;
    if (v.empty()) return;
    lo = *std::min_element(v.begin(), v.end());
    hi = *std::max_element(v.begin(), v.end());
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  };
  Frame f{};
  range(xs, f.x0, f.x1);
  range(ys, f.y0, f.y1);
  return f;
}

std::string axes(const Frame& f, const std::string& title, const std::string& x_label, const std::string& y_label) {
  std::string s;
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", num(left),
                   num(top), num(right - left), num(bottom - top));
  for (double t : ticks(f.x0, f.x1)) {
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333\"/>\n", num(f.px(t)), num(bottom),
                     num(bottom + 5));
    s += text(f.px(t), bottom + 18, fmt::format("{:g}", t));
  }
  for (double t : ticks(f.y0, f.y1)) {
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#ddd\"/>\n", num(left), num(f.py(t)),
                     num(right));
    s += text(left - 6, f.py(t) + 4, fmt::format("{:g}", t), "end");
  }
  s += text((left + right) / 2, 22, title, "middle", 14);
  s += text((left + right) / 2, kHeight - 14, x_label);
  s += text(18, (top + bottom) / 2, y_label, "middle", 12,
            fmt::format(" transform=\"rotate(-90 18 {})\"", num((top + bottom) / 2)));
  return s;
}

std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 18 * static_cast<double>(i);
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", num(kWidth - kRight + 12),
                     num(y - 10), kPalette[i % kPalette.size()]);
    s += text(kWidth - kRight + 30, y, names[i], "start");
  }
  return s;
}

// Viridis-like ramp on t in [0, 1].
std::string ramp(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops = {
      {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * (stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<int, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  return fmt::format("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]);
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
  std::vector<double> xs, ys;
  std::vector<std::string> names;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("svg_line_chart: series '" + s.name + "' has unequal x and y");
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
    names.push_back(s.name);
  }
  const Frame f = frame_for(xs, ys);
  std::string out = header(kWidth, kHeight) + axes(f, title, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::string pts;
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      if (i) pts += ' ';
      pts += num(f.px(series[k].x[i])) + "," + num(f.py(series[k].y[i]));
    }
    out += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", pts,
                       kPalette[k % kPalette.size()]);
  }
  return out + legend(names) + "</svg>\n";
}

std::string svg_scatter(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<ScatterPoint>& points) {
  std::vector<double> xs, ys;
  for (const ScatterPoint& p : points) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  const Frame f = frame_for(xs, ys);
  std::string out = header(kWidth, kHeight) + axes(f, title, x_label, y_label);
  for (const ScatterPoint& p : points) {
    out += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"{}\"/>\n", num(f.px(p.x)), num(f.py(p.y)), kPalette[0]);
    out += text(f.px(p.x) + 8, f.py(p.y) - 6, p.label, "start");
  }
  return out + "</svg>\n";
}

std::string svg_bars(const std::string& title, const std::vector<std::string>& categories,
                     const std::vector<Series>& series) {
  double hi = 0.0;
  std::vector<std::string> names;
  for (const Series& s : series) {
    if (s.y.size() != categories.size()) throw ShapeError("svg_bars: series '" + s.name + "' has the wrong length");
    for (double v : s.y) hi = std::max(hi, v);
    names.push_back(s.name);
  }
  if (hi <= 0.0) hi = 1.0;
  Frame f{-0.5, static_cast<double>(categories.size()) - 0.5, 0.0, hi * 1.05};
  std::string out = header(kWidth, kHeight);
  // Category axis is labelled by name, so only the value axis gets ticks.
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", num(left),
                     num(top), num(right - left), num(bottom - top));
  for (double t : ticks(f.y0, f.y1)) {
    out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#ddd\"/>\n", num(left), num(f.py(t)),
                       num(right));
    out += text(left - 6, f.py(t) + 4, fmt::format("{:g}", t), "end");
  }
  out += text((left + right) / 2, 22, title, "middle", 14);
  const double slot = (right - left) / std::max<double>(1.0, static_cast<double>(categories.size()));
  const double bar = slot * 0.8 / std::max<double>(1.0, static_cast<double>(series.size()));
  const std::size_t label_every = std::max<std::size_t>(1, categories.size() / 30);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    for (std::size_t k = 0; k < series.size(); ++k) {
      const double x = left + slot * (static_cast<double>(c) + 0.1) + bar * static_cast<double>(k);
      const double y = f.py(series[k].y[c]);
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", num(x), num(y),
                         num(std::max(bar, 0.5)), num(bottom - y), kPalette[k % kPalette.size()]);
    }
    if (c % label_every == 0) {
      const double x = left + slot * (static_cast<double>(c) + 0.5);
      out += text(x, bottom + 14, categories[c], "end", 9, fmt::format(" transform=\"rotate(-60 {} {})\"", num(x), num(bottom + 14)));
    }
  }
  return out + legend(names) + "</svg>\n";
}

std::string svg_heatmap(const std::string& title, const Tensor& values, double lo, double hi) {
  if (values.rank() != 2) throw ShapeError("svg_heatmap: matrix expected");
  const std::size_t rows = values.rows(), cols = values.cols();
  const double cell = std::max(1.0, std::min(600.0 / std::max<std::size_t>(cols, 1), 600.0 / std::max<std::size_t>(rows, 1)));
  const double w = 40 + cell * static_cast<double>(cols) + 20, h = 50 + cell * static_cast<double>(rows) + 20;
  std::string out = header(w, h);
  out += text(w / 2, 24, title, "middle", 14);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                         num(40 + cell * static_cast<double>(c)), num(50 + cell * static_cast<double>(r)), num(cell),
                         num(cell), ramp((values.at(r, c) - lo) / (hi - lo)));
    }
  }
  return out + "</svg>\n";
}

std::string svg_floor_plan(const std::string& title, const SceneGraph& scene, const std::map<int, double>& value,
                           int highlight) {
  if (scene.places.empty()) throw ValidationError("svg_floor_plan: scene has no places");
  double x0 = scene.places[0].x, x1 = x0, y0 = scene.places[0].y, y1 = y0;
  for (const Place& p : scene.places) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  double lo = 0.0, hi = 1.0;
  if (!value.empty()) {
    lo = hi = value.begin()->second;
    for (const auto& [id, v] : value) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
  }
  const double scale = 600.0 / std::max(x1 - x0, y1 - y0 + 1e-9);
  const double w = (x1 - x0) * scale + 60, h = (y1 - y0) * scale + 90;
  auto px = [&](double x) { return 30 + (x - x0) * scale; };
  auto py = [&](double y) { return h - 30 - (y - y0) * scale; };
  std::string out = header(w, h);
  out += text(w / 2, 24, title, "middle", 14);
  for (const Place& p : scene.places) {
    const auto it = value.find(p.id);
    const std::string fill = it == value.end() ? "#cccccc" : ramp((it->second - lo) / (hi - lo));
    out += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>\n", num(px(p.x)), num(py(p.y)),
                       num(std::max(1.0, 0.35 * scale)), fill);
  }
  for (const Object& o : scene.objects) {
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"4\" height=\"4\" fill=\"black\"/>\n", num(px(o.x) - 2),
                       num(py(o.y) - 2));
  }
  for (const Place& p : scene.places) {
    if (p.id != highlight) continue;
    out += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"red\" stroke-width=\"2\"/>\n",
                       num(px(p.x)), num(py(p.y)), num(std::max(4.0, 0.8 * scale)));
  }
  return out + "</svg>\n";
}

// ---------------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

Manifest::Manifest(std::string command, std::string version)
    : command_(std::move(command)), version_(std::move(version)) {}

void Manifest::option(const std::string& key, const std::string& value) { options_[key] = value; }
void Manifest::seed(const std::string& key, std::uint64_t value) { seeds_[key] = value; }

void Manifest::input(const std::filesystem::path& path) { inputs_.emplace_back(path.string(), file_sha256(path)); }

void Manifest::output(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
  if (std::filesystem::path(name).extension() == ".csv") validate_csv(text);
  const auto path = dir / name;
  write_text_file(path, text);
  if (read_text_file(path) != text) throw ValidationError("output '" + path.string() + "' did not read back intact");
  outputs_.emplace_back(name, sha256_hex(text));
  output_names_.push_back(name);
}

std::string Manifest::json() const {
  nlohmann::json j;
  j["tool"] = "semloc";
  j["version"] = version_;
  j["command"] = command_;
  j["options"] = options_;
  j["seeds"] = seeds_;
  j["inputs"] = nlohmann::json::array();
  for (const auto& [path, digest] : inputs_) j["inputs"].push_back({{"path", path}, {"sha256", digest}});
  j["outputs"] = nlohmann::json::array();
  for (const auto& [name, digest] : outputs_) j["outputs"].push_back({{"file", name}, {"sha256", digest}});
  return j.dump(2) + "\n";
}

void Manifest::write(const std::filesystem::path& dir) const { write_text_file(dir / "manifest.json", json()); }

}  // namespace semloc
