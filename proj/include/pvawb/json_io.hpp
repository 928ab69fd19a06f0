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

#pragma once

#include <string>

#include <json.hpp>

#include "pvawb/graph.hpp"

namespace pvawb {

// Round-trippable graph form:
//   { "name": ..., "input": {"h":..,"w":..,"c":..},
//     "nodes": [ {"name":..,"kind":..,"kernel":[kh,kw],"stride":..,
//                 "pad":..,"out_channels":..,"groups":..,"inputs":[..]} ] }
// Attributes at their defaults are omitted on write and filled on read, so
// hand-written graphs stay short.
nlohmann::json graph_to_json(const NetworkGraph& g);
NetworkGraph graph_from_json(const nlohmann::json& j);

NetworkGraph graph_from_json_text(const std::string& text);
NetworkGraph graph_from_file(const std::string& path);
void graph_to_file(const NetworkGraph& g, const std::string& path);

nlohmann::json shape_to_json(const TensorShape& s);
TensorShape shape_from_json(const nlohmann::json& j);

nlohmann::json diagnostics_to_json(const std::vector<Diagnostic>& ds);

// "HxWxC" (e.g. "1056x640x3"), as accepted on the command line.
TensorShape shape_from_text(const std::string& text);

}  // namespace pvawb
