// Copyright 2026 The pvawb Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pvawb/json_io.hpp"

#include <fstream>
#include <sstream>

namespace pvawb {

using nlohmann::json;

json shape_to_json(const TensorShape& s) {
  return json{{"h", s.h}, {"w", s.w}, {"c", s.c}};
}

TensorShape shape_from_json(const json& j) {
  check(j.is_object() && j.contains("h") && j.contains("w") && j.contains("c"),
        ErrorCode::parse_error, "shape must be an object with h, w, c");
  return {j.at("h").get<int>(), j.at("w").get<int>(), j.at("c").get<int>()};
}

json graph_to_json(const NetworkGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json jn;
    jn["name"] = n.name;
    jn["kind"] = kind_name(n.kind);
    if (n.kernel_h != 1 || n.kernel_w != 1)
      jn["kernel"] = json::array({n.kernel_h, n.kernel_w});
    if (n.stride != 1) jn["stride"] = n.stride;
    if (n.pad != 0) jn["pad"] = n.pad;
    if (n.out_channels != 0) jn["out_channels"] = n.out_channels;
    if (n.groups != 1) jn["groups"] = n.groups;
    if (!n.inputs.empty()) jn["inputs"] = n.inputs;
    nodes.push_back(std::move(jn));
  }
  return json{{"name", g.name},
              {"input", shape_to_json(g.input_shape)},
              {"nodes", std::move(nodes)}};
}

NetworkGraph graph_from_json(const json& j) {
  check(j.is_object(), ErrorCode::parse_error, "graph must be a JSON object");
  NetworkGraph g;
  g.name = j.value("name", std::string{});
  check(j.contains("input"), ErrorCode::parse_error,
        "graph is missing the 'input' shape");
  g.input_shape = shape_from_json(j.at("input"));
  check(j.contains("nodes") && j.at("nodes").is_array(),
        ErrorCode::parse_error, "graph is missing the 'nodes' array");
  for (const auto& jn : j.at("nodes")) {
    check(jn.is_object() && jn.contains("name") && jn.contains("kind"),
          ErrorCode::parse_error, "every node needs 'name' and 'kind'");
    LayerNode n;
    n.name = jn.at("name").get<std::string>();
    n.kind = kind_from_name(jn.at("kind").get<std::string>());
    if (jn.contains("kernel")) {
      const auto& k = jn.at("kernel");
      if (k.is_array()) {
        check(k.size() == 2, ErrorCode::parse_error,
              "node '" + n.name + "': kernel must be [kh, kw] or a number");
        n.kernel_h = k.at(0).get<int>();
        n.kernel_w = k.at(1).get<int>();
      } else {
        n.kernel_h = n.kernel_w = k.get<int>();
      }
    }
    n.stride = jn.value("stride", 1);
    n.pad = jn.value("pad", 0);
    n.out_channels = jn.value("out_channels", 0);
    n.groups = jn.value("groups", 1);
    if (jn.contains("inputs"))
      n.inputs = jn.at("inputs").get<std::vector<std::string>>();
    g.nodes.push_back(std::move(n));
  }
  return g;
}

NetworkGraph graph_from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  check(!j.is_discarded(), ErrorCode::parse_error, "malformed JSON");
  return graph_from_json(j);
}

NetworkGraph graph_from_file(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), ErrorCode::io_error, "cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return graph_from_json_text(text);
}

void graph_to_file(const NetworkGraph& g, const std::string& path) {
  std::ofstream f(path);
  check(f.good(), ErrorCode::io_error, "cannot write '" + path + "'");
  f << graph_to_json(g).dump(2) << "\n";
}

json diagnostics_to_json(const std::vector<Diagnostic>& ds) {
  json out = json::array();
  for (const auto& d : ds)
    out.push_back(json{{"kind", diagnostic_kind_name(d.kind)},
                       {"node", d.node},
                       {"message", d.message}});
  return out;
}

TensorShape shape_from_text(const std::string& text) {
  TensorShape s;
  char x1 = 0, x2 = 0;
  std::istringstream is(text);
  is >> s.h >> x1 >> s.w >> x2 >> s.c;
  check(is && x1 == 'x' && x2 == 'x' && is.eof() && s.h > 0 && s.w > 0 &&
            s.c > 0,
        ErrorCode::invalid_argument,
        "expected HxWxC with positive dims, got '" + text + "'");
  return s;
}

}  // namespace pvawb
