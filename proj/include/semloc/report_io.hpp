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

// CSV tables, SVG plots and output manifests. CSV is the machine-readable
// record; numbers are printed with 12 significant digits.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "semloc/attribution.hpp"
#include "semloc/introspection.hpp"
#include "semloc/metrics.hpp"
#include "semloc/training.hpp"

namespace semloc {

// ---------------------------------------------------------------------------
// CSV

/// Minimal CSV builder; fields containing commas or quotes are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& row(const std::vector<std::string>& fields);
  const std::string& str() const noexcept { return text_; }
  std::size_t columns() const noexcept { return columns_; }

 private:
  std::size_t columns_;
  std::string text_;
};

std::string csv_number(double v);

std::string eval_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string train_csv(const std::vector<EpochRow>& rows);

struct RunTag {
  int run = 1;
  std::uint64_t seed = 0;
};

std::string attribution_csv(const std::vector<AttributionResult>& results, const std::vector<AttributionPair>& pairs,
                            const Taxonomy& taxonomy);

// The tables below take one block per run and prefix every row with it.
std::string ablation_csv(const std::vector<std::pair<RunTag, std::vector<ClassAblationRow>>>& runs);
std::string jsd_csv(const std::vector<std::pair<RunTag, std::vector<JsdShiftRow>>>& runs, const Taxonomy& taxonomy);
std::string fidelity_csv(const std::vector<std::pair<RunTag, std::vector<FidelityCurve>>>& runs);
std::string charact_csv(const std::vector<std::pair<RunTag, std::vector<CharactScore>>>& runs);
std::string comparison_csv(const std::vector<std::pair<RunTag, std::vector<RandomComparison>>>& runs);
std::string correlation_csv(const std::vector<std::pair<RunTag, Correlation>>& runs, const Taxonomy& taxonomy);

/// method, run, then one column per rank position holding class codes.
struct RankingRow {
  std::string method;
  int run = 1;
  std::vector<int> labels;
};
std::string rankings_csv(const std::vector<RankingRow>& rows, const Taxonomy& taxonomy);

std::string object_importance_csv(const std::map<std::string, std::map<int, double>>& by_explainer,
                                  const std::map<int, int>& object_labels, const Taxonomy& taxonomy);

/// Checks that `text` is a rectangular CSV with a header; returns the number
/// of data rows. Throws ValidationError otherwise.
std::size_t validate_csv(const std::string& text);

// ---------------------------------------------------------------------------
// SVG

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
};
std::string svg_scatter(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<ScatterPoint>& points);

/// Grouped bars: one group per category, one bar per series.
std::string svg_bars(const std::string& title, const std::vector<std::string>& categories,
                     const std::vector<Series>& series);

/// Matrix rendered as coloured cells on [lo, hi].
std::string svg_heatmap(const std::string& title, const Tensor& values, double lo, double hi);

/// Places as dots coloured by `value` (missing places grey), objects as small
/// squares, `highlight` circled.
std::string svg_floor_plan(const std::string& title, const SceneGraph& scene, const std::map<int, double>& value,
                           int highlight);

// ---------------------------------------------------------------------------
// Files and manifest

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

/// Records what produced an output directory. Outputs are listed with their
/// digests, relative to the directory.
class Manifest {
 public:
  Manifest(std::string command, std::string version);

  void option(const std::string& key, const std::string& value);
  void seed(const std::string& key, std::uint64_t value);
  void input(const std::filesystem::path& path);
  /// Writes `text` under `dir` and records it. CSV files are validated.
  void output(const std::filesystem::path& dir, const std::string& name, const std::string& text);

  const std::vector<std::string>& outputs() const noexcept { return output_names_; }
  std::string json() const;
  void write(const std::filesystem::path& dir) const;

 private:
  std::string command_;
  std::string version_;
  std::map<std::string, std::string> options_;
  std::map<std::string, std::uint64_t> seeds_;
  std::vector<std::pair<std::string, std::string>> inputs_;   // (path, sha256)
  std::vector<std::pair<std::string, std::string>> outputs_;  // (name, sha256)
  std::vector<std::string> output_names_;
};

}  // namespace semloc
