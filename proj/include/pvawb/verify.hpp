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

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvawb/cost.hpp"

namespace pvawb {

// Reference table the generated model is checked against: per-block output
// size, parameter and MAC cells (table rounding), overall totals, and the
// detection-time GMAC split for the standard and compressed classifier.
struct TableFixture {
  struct Row {
    std::string name, output, params, mac;  // empty cell = cost-free row
  };
  TensorShape input;
  std::vector<Row> rows;
  std::string total_params, total_mac;
  int gmac_proposals = 200;
  // shared, rpn, classifier, total
  std::array<std::string, 4> gmac_standard;
  std::array<std::string, 4> gmac_compressed;
};

TableFixture fixture_from_json(const nlohmann::json& j);
// The table compiled into the library (same content as the checked-in
// fixture file).
const TableFixture& default_fixture();

struct VerifyResult {
  int checked = 0;
  int mismatches = 0;
  std::string report;  // one line per comparison
  bool ok() const { return mismatches == 0; }
};

// Rebuilds the feature extractor and heads, recomputes every cost cell and
// the GMAC split, and diffs them against the fixture.
VerifyResult verify_structure_table(const TableFixture& fixture);

}  // namespace pvawb
