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

#include "semloc/scene_graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "semloc/errors.hpp"

namespace semloc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Taxonomy

Taxonomy::Taxonomy(std::vector<SemanticClass> classes) : classes_(std::move(classes)) {
  std::set<int> seen;
  for (const SemanticClass& c : classes_) {
    if (!seen.insert(c.label).second) {
      throw ValidationError("taxonomy: duplicate label id " + std::to_string(c.label));
    }
  }
}

Taxonomy Taxonomy::office() {
  return Taxonomy({{5, "chair", "CH"},
                   {8, "couch", "CO"},
                   {10, "computer", "CP"},
                   {11, "plant", "PL"},
                   {12, "painting", "PA"},
                   {18, "trash can", "TC"}});
}

std::optional<std::size_t> Taxonomy::index_of(int label) const {
  for (std::size_t i = 0; i < classes_.size(); ++i)
    if (classes_[i].label == label) return i;
  return std::nullopt;
}

const SemanticClass& Taxonomy::by_label(int label) const {
  if (auto i = index_of(label)) return classes_[*i];
  throw ValidationError("taxonomy: unknown class label " + std::to_string(label));
}

const SemanticClass& Taxonomy::by_code(const std::string& code) const {
  for (const SemanticClass& c : classes_)
    if (c.code == code) return c;
  throw ValidationError("taxonomy: unknown class code '" + code + "'");
}

// ---------------------------------------------------------------------------
// SceneGraph

void SceneGraph::validate() const {
  if (taxonomy.empty()) throw ValidationError("scene: taxonomy has no classes");
  std::unordered_set<int> place_ids, object_ids;
  for (const Place& p : places) {
    if (!place_ids.insert(p.id).second) throw ValidationError("scene: duplicate id " + std::to_string(p.id));
  }
  for (const Object& o : objects) {
    if (place_ids.count(o.id) || !object_ids.insert(o.id).second) {
      throw ValidationError("scene: duplicate id " + std::to_string(o.id));
    }
    if (!taxonomy.index_of(o.label)) {
      throw ValidationError("scene: object " + std::to_string(o.id) + " has unknown class label " +
                            std::to_string(o.label));
    }
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& [a, b] : traversability) {
    for (int id : {a, b}) {
      if (!place_ids.count(id)) {
        throw ValidationError("scene: traversability edge references missing place id " +
                              std::to_string(id));
      }
    }
    if (a == b) throw ValidationError("scene: self-loop on place " + std::to_string(a));
    if (!seen.insert(std::minmax(a, b)).second) {
      throw ValidationError("scene: duplicate traversability edge " + std::to_string(a) + "-" +
                            std::to_string(b));
    }
  }
  seen.clear();
  for (const auto& [p, o] : visibility) {
    if (!place_ids.count(p)) {
      throw ValidationError("scene: visibility edge references missing place id " + std::to_string(p));
    }
    if (!object_ids.count(o)) {
      throw ValidationError("scene: visibility edge references missing object id " + std::to_string(o));
    }
    if (!seen.insert({p, o}).second) {
      throw ValidationError("scene: duplicate visibility edge " + std::to_string(p) + "-" +
                            std::to_string(o));
    }
  }
}

std::map<int, int> SceneGraph::class_histogram() const {
  std::map<int, int> hist;
  for (const SemanticClass& c : taxonomy.classes()) hist[c.label] = 0;
  for (const Object& o : objects) ++hist[o.label];
  return hist;
}

const Place& SceneGraph::place(int id) const {
  for (const Place& p : places)
    if (p.id == id) return p;
  throw ValidationError("scene: unknown place id " + std::to_string(id));
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

const json& field(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.is_object()) throw ParseError("scene: " + ctx + " must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("scene: missing field '" + std::string(key) + "' in " + ctx);
  return *it;
}

const json& array_field(const json& obj, const char* key) {
  const json& v = field(obj, key, "top-level object");
  if (!v.is_array()) throw ParseError("scene: field '" + std::string(key) + "' must be an array");
  return v;
}

int as_int(const json& v, const std::string& ctx) {
  if (!v.is_number_integer()) throw ParseError("scene: " + ctx + " must be an integer");
  return v.get<int>();
}

double as_double(const json& v, const std::string& ctx) {
  if (!v.is_number()) throw ParseError("scene: " + ctx + " must be a number");
  return v.get<double>();
}

std::string as_string(const json& v, const std::string& ctx) {
  if (!v.is_string()) throw ParseError("scene: " + ctx + " must be a string");
  return v.get<std::string>();
}

std::vector<Edge> parse_edges(const json& arr, const char* key) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ctx = std::string(key) + "[" + std::to_string(i) + "]";
    const json& e = arr[i];
    if (!e.is_array() || e.size() != 2) throw ParseError("scene: " + ctx + " must be a pair of ids");
    edges.emplace_back(as_int(e[0], ctx + "[0]"), as_int(e[1], ctx + "[1]"));
  }
  return edges;
}

}  // namespace

SceneGraph scene_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("scene: malformed JSON at " + line_col(text, e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("scene: top level must be an object");

  SceneGraph scene;
  std::vector<SemanticClass> classes;
  const json& tax = array_field(doc, "taxonomy");
  for (std::size_t i = 0; i < tax.size(); ++i) {
    const std::string ctx = "taxonomy[" + std::to_string(i) + "]";
    classes.push_back({as_int(field(tax[i], "label", ctx), ctx + ".label"),
                       as_string(field(tax[i], "name", ctx), ctx + ".name"),
                       as_string(field(tax[i], "code", ctx), ctx + ".code")});
  }
  scene.taxonomy = Taxonomy(std::move(classes));

  const json& places = array_field(doc, "places");
  for (std::size_t i = 0; i < places.size(); ++i) {
    const std::string ctx = "places[" + std::to_string(i) + "]";
    scene.places.push_back({as_int(field(places[i], "id", ctx), ctx + ".id"),
                            as_double(field(places[i], "x", ctx), ctx + ".x"),
                            as_double(field(places[i], "y", ctx), ctx + ".y")});
  }
  const json& objects = array_field(doc, "objects");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string ctx = "objects[" + std::to_string(i) + "]";
    scene.objects.push_back({as_int(field(objects[i], "id", ctx), ctx + ".id"),
                             as_double(field(objects[i], "x", ctx), ctx + ".x"),
                             as_double(field(objects[i], "y", ctx), ctx + ".y"),
                             as_int(field(objects[i], "label", ctx), ctx + ".label")});
  }
  scene.traversability = parse_edges(array_field(doc, "edges_traversability"), "edges_traversability");
  scene.visibility = parse_edges(array_field(doc, "edges_visibility"), "edges_visibility");
  scene.validate();
  return scene;
}

std::string scene_to_json(const SceneGraph& scene) {
  json doc;
  doc["taxonomy"] = json::array();
  for (const SemanticClass& c : scene.taxonomy.classes()) {
    doc["taxonomy"].push_back({{"label", c.label}, {"name", c.name}, {"code", c.code}});
  }
  doc["places"] = json::array();
  for (const Place& p : scene.places) doc["places"].push_back({{"id", p.id}, {"x", p.x}, {"y", p.y}});
  doc["objects"] = json::array();
  for (const Object& o : scene.objects) {
    doc["objects"].push_back({{"id", o.id}, {"x", o.x}, {"y", o.y}, {"label", o.label}});
  }
  doc["edges_traversability"] = json::array();
  for (const auto& [a, b] : scene.traversability) doc["edges_traversability"].push_back({a, b});
  doc["edges_visibility"] = json::array();
  for (const auto& [a, b] : scene.visibility) doc["edges_visibility"].push_back({a, b});
  return doc.dump(1) + "\n";
}

SceneGraph load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("scene: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return scene_from_json(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_scene(const SceneGraph& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("scene: cannot write " + path.string());
  out << scene_to_json(scene);
  if (!out) throw Error("scene: write failed for " + path.string());
}

}  // namespace semloc
