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

#include "pvawb/cost.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace pvawb {

using nlohmann::json;

NodeCost layer_cost(const LayerNode& n, const std::vector<TensorShape>& in,
                    const TensorShape& out) {
  NodeCost c;
  switch (n.kind) {
    case LayerKind::Conv:
    case LayerKind::Deconv: {
      check(in.size() == 1, ErrorCode::invalid_argument,
            "conv cost needs exactly one input shape");
      long long per_pos = 1LL * n.kernel_h * n.kernel_w *
                          (in[0].c / n.groups) * n.out_channels;
      c.params = per_pos;
      c.macs = per_pos * out.h * out.w;
      return c;
    }
    case LayerKind::FullyConnected: {
      check(in.size() == 1, ErrorCode::invalid_argument,
            "fc cost needs exactly one input shape");
      long long p = 1LL * in[0].h * in[0].w * in[0].c * n.out_channels;
      c.params = p;
      c.macs = p;
      return c;
    }
    default:
      return c;
  }
}

CostReport graph_cost(const NetworkGraph& g, const TensorShape& input) {
  CostReport r;
  auto shapes = infer_shapes(g, input);
  for (const auto& n : g.nodes) {
    std::vector<TensorShape> in;
    for (const auto& ref : n.inputs) in.push_back(shapes.at(ref));
    NodeCost c = layer_cost(n, in, shapes.at(n.name));
    r.total += c;
    r.per_node.emplace_back(n.name, c);
  }
  return r;
}

namespace {

std::string block_prefix(const std::string& node_name) {
  auto slash = node_name.find('/');
  return slash == std::string::npos ? node_name : node_name.substr(0, slash);
}

std::string guess_row_type(const NetworkGraph& g,
                           const std::vector<const LayerNode*>& group) {
  bool has_neg = false, has_concat = false, has_deconv = false;
  int convs = 0, big_kernel = 1;
  const LayerNode* only = group.size() == 1 ? group[0] : nullptr;
  for (const LayerNode* n : group) {
    if (n->kind == LayerKind::Negate) has_neg = true;
    if (n->kind == LayerKind::Concat) has_concat = true;
    if (n->kind == LayerKind::Deconv) has_deconv = true;
    if (n->kind == LayerKind::Conv) {
      ++convs;
      big_kernel = std::max(big_kernel, n->kernel_h);
    }
  }
  auto kxk = [](int k) {
    return std::to_string(k) + "x" + std::to_string(k);
  };
  if (only) {
    switch (only->kind) {
      case LayerKind::MaxPool: return kxk(only->kernel_h) + " max-pool";
      case LayerKind::Deconv: return kxk(only->kernel_h) + " deconv";
      case LayerKind::Concat: return "concat";
      case LayerKind::Conv: return kxk(only->kernel_h) + " conv";
      case LayerKind::FullyConnected: return "fc";
      case LayerKind::RoiPool: return "roi pool";
      case LayerKind::Input: return "input";
      default: return "";
    }
  }
  (void)g;
  if (has_deconv) return "deconv";
  if (has_neg && has_concat) return kxk(big_kernel) + " mCReLU";
  if (has_concat && convs > 2) return "Inception";
  if (convs >= 1) return kxk(big_kernel) + " conv";
  return "";
}

}  // namespace

std::vector<BlockRow> block_rows(const NetworkGraph& g,
                                 const TensorShape& input) {
  auto shapes = infer_shapes(g, input);
  CostReport cost = graph_cost(g, input);

  std::vector<BlockRow> rows;
  std::vector<std::vector<const LayerNode*>> groups;
  std::map<std::string, size_t> row_of;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    if (n.kind == LayerKind::Input) continue;
    std::string prefix = block_prefix(n.name);
    auto it = row_of.find(prefix);
    if (it == row_of.end()) {
      it = row_of.emplace(prefix, rows.size()).first;
      rows.push_back(BlockRow{prefix, "", 1, {}, 0, 0});
      groups.emplace_back();
    }
    BlockRow& row = rows[it->second];
    row.stride = std::max(row.stride, n.stride);
    row.output = shapes.at(n.name);  // last node in graph order wins
    row.params += cost.per_node[i].second.params;
    row.macs += cost.per_node[i].second.macs;
    groups[it->second].push_back(&n);
  }
  for (size_t i = 0; i < rows.size(); ++i)
    rows[i].type = guess_row_type(g, groups[i]);
  return rows;
}

long long params_tenth_k(long long params) {
  if (params < 10000) return (params + 99) / 100;  // round up to 0.1K
  return ((params + 500) / 1000) * 10;             // half-up to 1K
}

std::string params_text(long long params) {
  long long tenths = params_tenth_k(params);
  std::ostringstream os;
  if (params < 10000)
    os << tenths / 10 << "." << tenths % 10 << "K";
  else
    os << tenths / 10 << "K";
  return os.str();
}

long long mac_m(long long macs) { return (macs + 500000) / 1000000; }

std::string mac_text(long long macs) {
  return std::to_string(mac_m(macs)) + "M";
}

namespace {

std::string shape_text(const TensorShape& s) {
  std::ostringstream os;
  os << s.h << "x" << s.w << "x" << s.c;
  return os.str();
}

struct TableTotals {
  long long raw_params = 0, raw_macs = 0;
  long long tenth_k = 0, m = 0;
};

TableTotals totals_of(const std::vector<BlockRow>& rows) {
  TableTotals t;
  for (const auto& r : rows) {
    if (r.params == 0 && r.macs == 0) continue;
    t.raw_params += r.params;
    t.raw_macs += r.macs;
    t.tenth_k += params_tenth_k(r.params);
    t.m += mac_m(r.macs);
  }
  return t;
}

}  // namespace

std::string cost_table_text(const NetworkGraph& g, const TensorShape& input,
                            Rounding r) {
  auto rows = block_rows(g, input);
  TableTotals t = totals_of(rows);

  std::ostringstream os;
  os << std::left << std::setw(12) << "name" << std::setw(14) << "type"
     << std::setw(8) << "stride" << std::setw(13) << "output" << std::right
     << std::setw(12) << "params" << std::setw(16) << "MAC" << "\n";
  os << std::string(75, '-') << "\n";
  for (const auto& row : rows) {
    os << std::left << std::setw(12) << row.name << std::setw(14) << row.type
       << std::setw(8) << (row.stride > 1 ? std::to_string(row.stride) : "")
       << std::setw(13) << shape_text(row.output) << std::right;
    if (row.params == 0 && row.macs == 0) {
      os << std::setw(12) << "" << std::setw(16) << "";
    } else if (r == Rounding::table) {
      os << std::setw(12) << params_text(row.params) << std::setw(16)
         << mac_text(row.macs);
    } else {
      os << std::setw(12) << row.params << std::setw(16) << row.macs;
    }
    os << "\n";
  }
  os << std::string(75, '-') << "\n";
  os << std::left << std::setw(47) << "total" << std::right;
  if (r == Rounding::table) {
    // Totals re-round the accumulated row values.
    os << std::setw(12) << params_text(t.tenth_k * 100) << std::setw(16)
       << (std::to_string(t.m) + "M");
  } else {
    os << std::setw(12) << t.raw_params << std::setw(16) << t.raw_macs;
  }
  os << "\n";
  return os.str();
}

json cost_report_json(const NetworkGraph& g, const TensorShape& input,
                      Rounding r) {
  auto rows = block_rows(g, input);
  TableTotals t = totals_of(rows);
  json jrows = json::array();
  for (const auto& row : rows) {
    json jr{{"name", row.name},
            {"type", row.type},
            {"stride", row.stride},
            {"output", shape_text(row.output)}};
    if (row.params == 0 && row.macs == 0) {
      jr["params"] = nullptr;
      jr["mac"] = nullptr;
    } else if (r == Rounding::table) {
      jr["params"] = params_text(row.params);
      jr["mac"] = mac_text(row.macs);
    } else {
      jr["params"] = row.params;
      jr["mac"] = row.macs;
    }
    jrows.push_back(std::move(jr));
  }
  json out{{"graph", g.name},
           {"input", shape_text(input)},
           {"rounding", r == Rounding::table ? "table" : "exact"},
           {"rows", std::move(jrows)}};
  if (r == Rounding::table)
    out["totals"] = {{"params", params_text(t.tenth_k * 100)},
                     {"mac", std::to_string(t.m) + "M"}};
  else
    out["totals"] = {{"params", t.raw_params}, {"mac", t.raw_macs}};
  return out;
}

namespace {
long long gmac_tenths(long long macs) {
  return (macs + 50000000LL) / 100000000LL;
}
}  // namespace

long long GmacBreakdown::shared_tenths() const {
  return gmac_tenths(shared_macs);
}
long long GmacBreakdown::rpn_tenths() const { return gmac_tenths(rpn_macs); }
long long GmacBreakdown::classifier_tenths() const {
  return gmac_tenths(classifier_per_roi_macs * proposals);
}
long long GmacBreakdown::total_tenths() const {
  return shared_tenths() + rpn_tenths() + classifier_tenths();
}

GmacBreakdown detection_cost(const CostReport& feature_cost,
                             const NetworkGraph& rpn,
                             const NetworkGraph& classifier, int proposals) {
  check(proposals > 0, ErrorCode::invalid_argument,
        "proposal count must be positive");
  GmacBreakdown b;
  b.shared_macs = feature_cost.total.macs;
  b.rpn_macs = graph_cost(rpn, rpn.input_shape).total.macs;
  b.classifier_per_roi_macs =
      graph_cost(classifier, classifier.input_shape).total.macs;
  b.proposals = proposals;
  return b;
}

std::string gmac_text(long long tenths) {
  std::ostringstream os;
  os << tenths / 10 << "." << tenths % 10;
  return os.str();
}

std::string gmac_breakdown_text(const GmacBreakdown& b) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "component" << std::right
     << std::setw(8) << "GMAC" << "\n";
  os << std::string(32, '-') << "\n";
  os << std::left << std::setw(24) << "shared trunk" << std::right
     << std::setw(8) << gmac_text(b.shared_tenths()) << "\n";
  os << std::left << std::setw(24) << "proposal head" << std::right
     << std::setw(8) << gmac_text(b.rpn_tenths()) << "\n";
  std::string cls = "classifier (" + std::to_string(b.proposals) + " rois)";
  os << std::left << std::setw(24) << cls << std::right << std::setw(8)
     << gmac_text(b.classifier_tenths()) << "\n";
  os << std::string(32, '-') << "\n";
  os << std::left << std::setw(24) << "total" << std::right << std::setw(8)
     << gmac_text(b.total_tenths()) << "\n";
  return os.str();
}

json gmac_breakdown_json(const GmacBreakdown& b) {
  return json{{"proposals", b.proposals},
              {"shared", gmac_text(b.shared_tenths())},
              {"rpn", gmac_text(b.rpn_tenths())},
              {"classifier", gmac_text(b.classifier_tenths())},
              {"total", gmac_text(b.total_tenths())},
              {"exact_macs",
               {{"shared", b.shared_macs},
                {"rpn", b.rpn_macs},
                {"classifier_per_roi", b.classifier_per_roi_macs}}}};
}

}  // namespace pvawb
