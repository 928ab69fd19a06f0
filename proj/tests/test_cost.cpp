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

#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "pvawb/builders.hpp"
#include "pvawb/cost.hpp"
#include "pvawb/verify.hpp"

using namespace pvawb;

namespace {

NetworkGraph single_node_graph(LayerNode n, TensorShape input) {
  NetworkGraph g;
  g.name = "one";
  g.input_shape = input;
  LayerNode in;
  in.name = "input";
  in.kind = LayerKind::Input;
  g.nodes.push_back(in);
  n.inputs = {"input"};
  g.nodes.push_back(std::move(n));
  return g;
}

NodeCost cost_of(LayerNode n, TensorShape input) {
  auto g = single_node_graph(std::move(n), input);
  return graph_cost(g, input).per_node.back().second;
}

}  // namespace

TEST_CASE("convolution cost formula") {
  LayerNode c;
  c.name = "c";
  c.kind = LayerKind::Conv;
  c.kernel_h = c.kernel_w = 3;
  c.stride = 1;
  c.pad = 1;
  c.out_channels = 16;
  c.groups = 2;
  NodeCost got = cost_of(c, {8, 8, 4});
  CHECK(got.params == 3 * 3 * (4 / 2) * 16);
  CHECK(got.macs == got.params * 8 * 8);

  c.stride = 2;  // fewer output positions, same weights
  NodeCost strided = cost_of(c, {8, 8, 4});
  CHECK(strided.params == got.params);
  CHECK(strided.macs == got.params * 4 * 4);
}

TEST_CASE("transposed convolution is costed over its output grid") {
  LayerNode d;
  d.name = "d";
  d.kind = LayerKind::Deconv;
  d.kernel_h = d.kernel_w = 4;
  d.stride = 2;
  d.pad = 1;
  d.out_channels = 3;
  NodeCost got = cost_of(d, {5, 5, 2});
  CHECK(got.params == 4 * 4 * 2 * 3);
  CHECK(got.macs == got.params * 10 * 10);

  // grouped: the upscale layer of the feature extractor
  LayerNode up;
  up.name = "up";
  up.kind = LayerKind::Deconv;
  up.kernel_h = up.kernel_w = 4;
  up.stride = 2;
  up.pad = 1;
  up.out_channels = 384;
  up.groups = 384;
  NodeCost upscale = cost_of(up, {33, 20, 384});
  CHECK(upscale.params == 4 * 4 * 1 * 384);  // 6144
  CHECK(upscale.macs == 6144LL * 66 * 40);   // 16,220,160
}

TEST_CASE("fully connected layers cost once per sample") {
  LayerNode f;
  f.name = "f";
  f.kind = LayerKind::FullyConnected;
  f.out_channels = 10;
  NodeCost got = cost_of(f, {6, 6, 32});
  CHECK(got.params == 6 * 6 * 32 * 10);
  CHECK(got.macs == got.params);
}

TEST_CASE("activation, pooling and bookkeeping layers are free") {
  for (LayerKind k :
       {LayerKind::MaxPool, LayerKind::ReLU, LayerKind::BatchNorm,
        LayerKind::Negate, LayerKind::ScaleBias}) {
    LayerNode n;
    n.name = "n";
    n.kind = k;
    n.kernel_h = n.kernel_w = (k == LayerKind::MaxPool ? 2 : 1);
    n.stride = (k == LayerKind::MaxPool ? 2 : 1);
    NodeCost got = cost_of(n, {8, 8, 4});
    CHECK(got == NodeCost{});
  }
}

TEST_CASE("table rounding reproduces the published convention") {
  // below 10K: ceil to 0.1K
  CHECK(params_text(2352) == "2.4K");
  CHECK(params_text(9792) == "9.8K");
  CHECK(params_text(6144) == "6.2K");
  CHECK(params_text(2400) == "2.4K");
  CHECK(params_text(9999) == "10.0K");
  // 10K and above: half-up to 1K
  CHECK(params_text(10000) == "10K");
  CHECK(params_text(10499) == "10K");
  CHECK(params_text(10500) == "11K");
  CHECK(params_text(11072) == "11K");
  CHECK(params_text(417792) == "418K");
  // MAC cells: half-up to 1M
  CHECK(mac_text(467681280) == "468M");
  CHECK(mac_text(413614080) == "414M");
  CHECK(mac_text(16220160) == "16M");
  CHECK(mac_text(1038090240) == "1038M");
  CHECK(mac_text(499999) == "0M");
  CHECK(mac_text(500000) == "1M");
  // GMAC tenths render with one decimal
  CHECK(gmac_text(278) == "27.8");
  CHECK(gmac_text(125) == "12.5");
  CHECK(gmac_text(9) == "0.9");
  CHECK(gmac_text(30) == "3.0");
}

TEST_CASE("feature extractor raw totals") {
  NetworkGraph g = build_pvanet_feature_extractor();
  CostReport r = graph_cost(g, {1056, 640, 3});
  CHECK(r.total.params == 3283696);
  CHECK(r.total.macs == 7938416640LL);
}

TEST_CASE("block rows aggregate by name prefix") {
  NetworkGraph g = build_pvanet_feature_extractor();
  auto rows = block_rows(g, {1056, 640, 3});
  REQUIRE(rows.size() == 21);

  CHECK(rows[0].name == "conv1_1");
  CHECK(rows[0].type == "7x7 mCReLU");
  CHECK(rows[0].stride == 2);
  CHECK(rows[0].output == TensorShape{528, 320, 32});
  CHECK(rows[0].params == 2352);
  CHECK(rows[0].macs == 2352LL * 528 * 320);  // 397,393,920

  CHECK(rows[1].name == "pool1_1");
  CHECK(rows[1].type == "3x3 max-pool");
  CHECK(rows[1].params == 0);

  CHECK(rows[2].name == "conv2_1");
  CHECK(rows[2].type == "3x3 mCReLU");
  CHECK(rows[2].params == 11072);
  CHECK(rows[2].macs == 467681280LL);

  CHECK(rows[9].name == "conv4_1");
  CHECK(rows[9].type == "Inception");
  CHECK(rows[9].params == 247168);
  CHECK(rows[9].macs == 247168LL * 66 * 40);  // 652,523,520

  CHECK(rows[18].name == "upscale");
  CHECK(rows[18].type == "4x4 deconv");
  CHECK(rows[18].params == 6144);
  CHECK(rows[18].macs == 16220160LL);

  CHECK(rows[20].name == "convf");
  CHECK(rows[20].type == "1x1 conv");
  CHECK(rows[20].params == 393216);
  CHECK(rows[20].macs == 1038090240LL);
}

TEST_CASE("reference table verification is green") {
  VerifyResult r = verify_structure_table(default_fixture());
  INFO(r.report);
  CHECK(r.mismatches == 0);
  CHECK(r.checked >= 90);  // 21 rows x 4 cells + totals + 8 gmac cells
}

TEST_CASE("detection cost split") {
  NetworkGraph feature = build_pvanet_feature_extractor();
  CostReport feat = graph_cost(feature, {1056, 640, 3});

  GmacBreakdown standard =
      detection_cost(feat, build_rpn_head(), build_classifier_head(), 200);
  CHECK(standard.shared_macs == 7938416640LL);
  CHECK(standard.classifier_per_roi_macs == 92704768LL);
  CHECK(standard.shared_tenths() == 79);
  CHECK(standard.rpn_tenths() == 14);
  CHECK(standard.classifier_tenths() == 185);
  CHECK(standard.total_tenths() == 278);

  GmacBreakdown compressed = detection_cost(
      feat, build_rpn_head(), build_classifier_head(true), 200);
  CHECK(compressed.classifier_per_roi_macs == 16158720LL);
  CHECK(compressed.shared_tenths() == 79);
  CHECK(compressed.rpn_tenths() == 14);
  CHECK(compressed.classifier_tenths() == 32);
  CHECK(compressed.total_tenths() == 125);

  // the split scales with the proposal budget
  GmacBreakdown fewer =
      detection_cost(feat, build_rpn_head(), build_classifier_head(), 100);
  CHECK(fewer.classifier_tenths() == 93);  // 9,270,476,800 MAC -> 92.7
}

TEST_CASE("cifar variant arithmetic totals") {
  auto macs = [](AllCnnVariant v) {
    NetworkGraph g = build_allcnn_variant(v);
    return graph_cost(g, g.input_shape).total.macs;
  };
  const long long orig = macs(AllCnnVariant::original);
  const long long half = macs(AllCnnVariant::half);
  const long long crelu = macs(AllCnnVariant::half_crelu);
  const long long mcrelu = macs(AllCnnVariant::half_mcrelu);

  CHECK(orig == 281174016LL);
  CHECK(half == 78127104LL);
  CHECK(crelu == 152444928LL);
  // the learned scale stage is arithmetic-free: identical MAC budgets
  CHECK(mcrelu == crelu);

  // published ballpark: ~270 / ~72 / ~140 MMAC, all within 10%
  CHECK(std::abs(orig / 1e6 - 270) / 270 < 0.10);
  CHECK(std::abs(half / 1e6 - 72) / 72 < 0.10);
  CHECK(std::abs(crelu / 1e6 - 140) / 140 < 0.10);
}

TEST_CASE("rendered tables carry the totals") {
  NetworkGraph g = build_pvanet_feature_extractor();
  std::string text = cost_table_text(g, {1056, 640, 3}, Rounding::table);
  CHECK(text.find("conv4_1") != std::string::npos);
  CHECK(text.find("3282K") != std::string::npos);
  CHECK(text.find("7942M") != std::string::npos);

  auto j = cost_report_json(g, {1056, 640, 3}, Rounding::table);
  CHECK(j.at("totals").at("params") == "3282K");
  CHECK(j.at("totals").at("mac") == "7942M");
  CHECK(j.at("rows").at(0).at("name") == "conv1_1");
  CHECK(j.at("rows").at(1).at("params").is_null());

  auto exact = cost_report_json(g, {1056, 640, 3}, Rounding::exact);
  CHECK(exact.at("totals").at("params") == 3283696);
  CHECK(exact.at("totals").at("mac") == 7938416640LL);
}
