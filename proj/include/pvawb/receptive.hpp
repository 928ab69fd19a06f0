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

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pvawb/graph.hpp"

namespace pvawb {

// Receptive-field extent and grid spacing (both in input pixels) seen from
// one point of a feature map.
struct RfState {
  long long rf = 1;
  long long jump = 1;
  bool operator==(const RfState&) const = default;
};

// Chain rule for a linear stack of (kernel, stride) layers:
//   rf += (kernel - 1) * jump;  jump *= stride.
RfState path_rf(const std::vector<std::pair<int, int>>& kernel_stride);

// In a multi-branch graph each input-to-node path can have its own extent.
// counts[rf] is the number of distinct paths whose extent is rf.
struct RfDistribution {
  std::map<long long, unsigned long long> counts;
  unsigned long long total_paths() const;
  long long min_rf() const;
  long long max_rf() const;
  double mean_rf() const;  // path-weighted
};

// Dynamic programme over the DAG: per node a set of (rf, jump) states with
// path multiplicities, merged at concat/add joins. Square kernels only.
// Transposed convolutions must divide both their kernel and the incoming
// spacing by the stride. Throws path_explosion when the number of paths to
// `node` exceeds max_paths (the count itself stays exact up to the cap).
RfDistribution rf_distribution(const NetworkGraph& g, const std::string& node,
                               unsigned long long max_paths = 1000000);

// Brute-force check: probe every input pixel with a positive delta under
// surrogate all-ones weights and record which ones reach the given output
// position. Only practical for small inputs.
struct EmpiricalRf {
  int extent_h = 0;
  int extent_w = 0;
  long long support = 0;  // number of contributing input pixels
};
EmpiricalRf empirical_rf(const NetworkGraph& g, const std::string& node,
                         int out_y, int out_x, const TensorShape& input);

std::string rf_histogram_text(const RfDistribution& d, int bins = 16,
                              int bar_width = 50);
nlohmann::json rf_to_json(const RfDistribution& d);

}  // namespace pvawb
