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
#include <vector>

#include <json.hpp>

#include "pvawb/graph.hpp"

namespace pvawb {

// Multiply-accumulate and parameter counts. Only Conv, Deconv and
// FullyConnected carry weights; normalisation, scaling, pooling, negation,
// concat and elementwise adds are free. Biases and normalisation statistics
// are deliberately excluded from the parameter count.
struct NodeCost {
  long long params = 0;
  long long macs = 0;
  NodeCost& operator+=(const NodeCost& o) {
    params += o.params;
    macs += o.macs;
    return *this;
  }
  bool operator==(const NodeCost&) const = default;
};

// Conv/Deconv: params = kh*kw*(c_in/groups)*c_out, macs = params*out_h*out_w
// (a transposed convolution is costed over its output grid, matching an
// execution that gathers from the zero-stuffed input). FullyConnected:
// params = in_h*in_w*in_c*out_c, macs = params, counted once per sample.
NodeCost layer_cost(const LayerNode& n, const std::vector<TensorShape>& in,
                    const TensorShape& out);

struct CostReport {
  std::vector<std::pair<std::string, NodeCost>> per_node;  // graph order
  NodeCost total;
};

CostReport graph_cost(const NetworkGraph& g, const TensorShape& input);

// One printable row per block. Nodes named "B/..." aggregate under "B";
// nodes without a slash stand alone. The row's output shape is that of the
// group's last node.
struct BlockRow {
  std::string name;
  std::string type;    // best-effort: "7x7 mCReLU", "Inception", ...
  int stride = 1;      // largest stride inside the group
  TensorShape output;
  long long params = 0;
  long long macs = 0;
};

std::vector<BlockRow> block_rows(const NetworkGraph& g,
                                 const TensorShape& input);

// Table rounding, chosen to reproduce the published structure table:
//  - params under 10K are shown in units of 0.1K rounded up ("2.4K");
//    10K and above round half-up to whole K ("11K");
//  - macs round half-up to whole M;
//  - table totals accumulate the rounded row values, not the raw counts.
enum class Rounding { exact, table };

std::string params_text(long long params);
std::string mac_text(long long macs);
long long params_tenth_k(long long params);  // row value in 0.1K units
long long mac_m(long long macs);             // row value in M units

std::string cost_table_text(const NetworkGraph& g, const TensorShape& input,
                            Rounding r);
nlohmann::json cost_report_json(const NetworkGraph& g,
                                const TensorShape& input, Rounding r);

// Whole-detector cost split: shared trunk + proposal head + per-roi
// classifier scaled by the proposal count. Tenths-of-GMAC round half-up per
// component; the total sums the rounded components.
struct GmacBreakdown {
  long long shared_macs = 0;
  long long rpn_macs = 0;
  long long classifier_per_roi_macs = 0;
  int proposals = 0;
  long long shared_tenths() const;
  long long rpn_tenths() const;
  long long classifier_tenths() const;
  long long total_tenths() const;
};

GmacBreakdown detection_cost(const CostReport& feature_cost,
                             const NetworkGraph& rpn,
                             const NetworkGraph& classifier, int proposals);

std::string gmac_text(long long tenths);  // 278 -> "27.8"
std::string gmac_breakdown_text(const GmacBreakdown& b);
nlohmann::json gmac_breakdown_json(const GmacBreakdown& b);

}  // namespace pvawb
