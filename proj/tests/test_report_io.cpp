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


#include <gtest/gtest.h>

#include <filesystem>

#include "json.hpp"
#include "semloc/errors.hpp"
#include "semloc/report_io.hpp"
#include "test_util.hpp"

namespace semloc {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("semloc_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TEST(Csv, QuotingAndShape) {
  CsvWriter w({"a", "b"});
  w.row({"plain", "has,comma"}).row({"say \"hi\"", ""});
  EXPECT_EQ(w.str(), "a,b\nplain,\"has,comma\"\n\"say \"\"hi\"\"\",\n");
  EXPECT_EQ(validate_csv(w.str()), 2u);
  EXPECT_THROW(w.row({"one"}), ShapeError);
}

TEST(Csv, Validation) {
  EXPECT_EQ(validate_csv("x,y\n1,2\n3,4\n"), 2u);
  EXPECT_EQ(validate_csv("x\n"), 0u);
  EXPECT_THROW(validate_csv(""), ValidationError);
  EXPECT_THROW(validate_csv("x,y\n1\n"), ValidationError);
  EXPECT_THROW(validate_csv("x,y\n\"open,2\n"), ValidationError);
}

TEST(Csv, Numbers) {
  EXPECT_EQ(csv_number(0.0), "0");
  EXPECT_EQ(csv_number(-0.0), "0");
  EXPECT_EQ(csv_number(0.5), "0.5");
  EXPECT_EQ(csv_number(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(csv_number(1e-20), "1e-20");
}

TEST(Csv, TablesAreRectangular) {
  const Taxonomy tax = Taxonomy::office();
  EvalReport e;
  e.pr_auc = 0.4;
  EXPECT_EQ(validate_csv(eval_csv({{"model", e}, {"bow", e}})), 2u);
  EXPECT_EQ(validate_csv(train_csv({{1, 0.5, e}, {2, 0.4, e}})), 2u);

  ClassAblationRow a{5, "CH", 28, 0.5, 0.4, 0.1, 0.1 / 28};
  EXPECT_EQ(validate_csv(ablation_csv({{RunTag{1, 0}, {a, a}}, {RunTag{2, 1}, {a}}})), 3u);

  FidelityCurve c;
  c.explainer = "ig";
  c.rho = {0.5, 1.0};
  c.s_keep = c.s_drop = c.delta_plus = c.delta_minus = {0.1, 0.2};
  EXPECT_EQ(validate_csv(fidelity_csv({{RunTag{}, {c}}})), 2u);
  EXPECT_EQ(validate_csv(charact_csv({{RunTag{}, charact_curve(c)}})), 2u);

  const std::string ranks = rankings_csv({{"attention", 1, {8, 11, 18, 12, 5, 10}}}, tax);
  EXPECT_EQ(ranks, "method,run,1st,2nd,3rd,4th,5th,6th\nattention,1,CO,PL,TC,PA,CH,CP\n");

  AttributionResult r;
  r.explainer = Explainer::kShapley;
  r.query_place = 3;
  r.map_place = 3;
  r.nodes = {{7, 5, 0.2, 1.0}};
  AttributionPair p;
  p.map_place = p.query_place = 3;
  EXPECT_EQ(validate_csv(attribution_csv({r}, {p}, tax)), 1u);
}

TEST(Sha256, KnownAnswers) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Svg, WellFormedAndEscaped) {
  const std::vector<std::string> docs = {
      svg_line_chart("a<b & c", "x", "y", {{"s", {0, 1, 2}, {0.1, 0.5, 0.2}}}),
      svg_scatter("t", "x", "y", {{0.1, 0.2, "CH"}, {0.3, -0.1, "CO"}}),
      svg_bars("t", {"CH", "CO"}, {{"ig", {}, {0.3, 0.7}}}),
      svg_heatmap("t", Tensor::matrix(2, 2, {0, 0.5, 1, -1}), -1, 1),
      svg_floor_plan("t", testing::small_scene(0), {}, -1)};
  for (const std::string& d : docs) {
    EXPECT_EQ(d.rfind("<svg", 0), 0u);
    EXPECT_NE(d.find("</svg>"), std::string::npos);
    EXPECT_EQ(d.find("nan"), std::string::npos);
  }
  EXPECT_NE(docs[0].find("a&lt;b &amp; c"), std::string::npos);
  // Empty inputs still render.
  EXPECT_NE(svg_line_chart("t", "x", "y", {}).find("</svg>"), std::string::npos);
  EXPECT_NE(svg_scatter("t", "x", "y", {}).find("</svg>"), std::string::npos);
}

TEST(Manifest, RecordsDigestsDeterministically) {
  const fs::path dir = scratch_dir("manifest");
  write_text_file(dir / "in.txt", "abc");
  auto build = [&] {
    Manifest m("train", "0.1.0");
    m.option("epochs", "3");
    m.seed("seed", 7);
    m.input(dir / "in.txt");
    m.output(dir, "table.csv", "x,y\n1,2\n");
    m.output(dir, "note.txt", "hello");
    return m;
  };
  const Manifest m = build();
  EXPECT_EQ(m.outputs(), (std::vector<std::string>{"table.csv", "note.txt"}));
  EXPECT_EQ(read_text_file(dir / "table.csv"), "x,y\n1,2\n");
  const auto j = nlohmann::json::parse(m.json());
  EXPECT_EQ(j.at("command"), "train");
  EXPECT_EQ(j.at("seeds").at("seed"), 7);
  EXPECT_EQ(j.at("inputs")[0].at("sha256"), sha256_hex("abc"));
  EXPECT_EQ(j.at("outputs")[1].at("sha256"), sha256_hex("hello"));
  EXPECT_EQ(build().json(), m.json());
  m.write(dir);
  EXPECT_EQ(read_text_file(dir / "manifest.json"), m.json());
  EXPECT_EQ(file_sha256(dir / "note.txt"), sha256_hex("hello"));

  Manifest bad("x", "0");
  EXPECT_THROW(bad.output(dir, "broken.csv", "a,b\n1\n"), ValidationError);
  EXPECT_THROW(read_text_file(dir / "missing.txt"), Error);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace semloc
