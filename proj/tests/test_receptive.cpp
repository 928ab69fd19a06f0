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

#include "pvawb/receptive.hpp"

#include <random>

#include <doctest.h>

#include "helpers.hpp"
#include "pvawb/builders.hpp"
#include "pvawb/graph.hpp"

using namespace pvawb;

namespace {

LayerNode input_node(const std::string& name) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::Input;
  return n;
}

LayerNode conv_node(const std::string& name, const std::string& in, int k,
                    int stride, int pad, int oc) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::Conv;
  n.kernel_h = n.kernel_w = k;
  n.stride = stride;
  n.pad = pad;
  n.out_channels = oc;
  n.inputs = {in};
  return n;
}

LayerNode pool_node(const std::string& name, const std::string& in, int k,
                    int stride, int pad) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::MaxPool;
  n.kernel_h = n.kernel_w = k;
  n.stride = stride;
  n.pad = pad;
  n.inputs = {in};
  return n;
}

LayerNode join_node(const std::string& name, LayerKind kind,
                    std::vector<std::string> ins) {
  LayerNode n;
  n.name = name;
  n.kind = kind;
  n.inputs = std::move(ins);
  return n;
}

// Independent path counter: paths(input) = 1, paths(n) = sum over inputs.
unsigned long long simple_path_count(const NetworkGraph& g,
                                     const std::string& node) {
  std::map<std::string, unsigned long long> paths;
  int target = g.index_of(node);
  for (int i = 0; i <= target; ++i) {
    const LayerNode& n = g.nodes[i];
    if (n.kind == LayerKind::Input) {
      paths[n.name] = 1;
      continue;
    }
    unsigned long long t = 0;
    for (const auto& in : n.inputs) t += paths.at(in);
    paths[n.name] = t;
  }
  return paths.at(node);
}

}  // namespace

TEST_CASE("chain rule composes kernel/stride pairs") {
  CHECK(path_rf({}) == RfState{1, 1});
  CHECK(path_rf({{3, 1}}) == RfState{3, 1});
  CHECK(path_rf({{7, 2}, {3, 2}}) == RfState{11, 4});
  CHECK(path_rf({{7, 2}, {3, 2}, {3, 1}, {3, 1}}) == RfState{27, 4});
  CHECK_THROWS_AS(path_rf({{0, 1}}), Error);
  CHECK(testutil::thrown_code([] { path_rf({{3, 0}}); }) ==
        ErrorCode::invalid_argument);
}

TEST_CASE("pointwise layers never change the extent") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(1, 10);
  std::uniform_int_distribution<int> kernel(1, 7);
  std::uniform_int_distribution<int> stride(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<int, int>> path(len(rng));
    for (auto& [k, s] : path) {
      k = kernel(rng);
      s = stride(rng);
    }
    RfState base = path_rf(path);
    // Sprinkle 1x1/stride-1 layers at random positions.
    auto padded = path;
    std::uniform_int_distribution<size_t> where(0, padded.size());
    for (int extra = 0; extra < 4; ++extra)
      padded.insert(padded.begin() + where(rng), {1, 1});
    CHECK(path_rf(padded) == base);
  }
}

TEST_CASE("branches contribute one path each") {
  NetworkGraph g;
  g.name = "branchy";
  g.input_shape = {32, 32, 4};
  g.nodes.push_back(input_node("in"));
  g.nodes.push_back(conv_node("stem", "in", 3, 1, 1, 4));
  g.nodes.push_back(conv_node("narrow", "stem", 1, 1, 0, 4));
  g.nodes.push_back(conv_node("wide", "stem", 3, 1, 1, 4));
  g.nodes.push_back(join_node("cat", LayerKind::Concat, {"narrow", "wide"}));
  REQUIRE(validate(g).empty());

  RfDistribution d = rf_distribution(g, "cat");
  CHECK(d.counts == std::map<long long, unsigned long long>{{3, 1}, {5, 1}});
  CHECK(d.total_paths() == 2);
  CHECK(d.min_rf() == 3);
  CHECK(d.max_rf() == 5);
  CHECK(d.mean_rf() == doctest::Approx(4.0));
}

TEST_CASE("residual joins multiply path counts") {
  NetworkGraph g;
  g.name = "res2";
  g.input_shape = {16, 16, 4};
  g.nodes.push_back(input_node("in"));
  g.nodes.push_back(conv_node("c1", "in", 3, 1, 1, 4));
  g.nodes.push_back(join_node("a1", LayerKind::EltwiseAdd, {"c1", "in"}));
  g.nodes.push_back(conv_node("c2", "a1", 3, 1, 1, 4));
  g.nodes.push_back(join_node("a2", LayerKind::EltwiseAdd, {"c2", "a1"}));
  REQUIRE(validate(g).empty());

  RfDistribution d = rf_distribution(g, "a2");
  CHECK(d.counts == std::map<long long, unsigned long long>{
                        {1, 1}, {3, 2}, {5, 1}});
  CHECK(d.total_paths() == 4);
}

TEST_CASE("transposed convolutions divide the grid spacing") {
  NetworkGraph g;
  g.name = "updown";
  g.input_shape = {16, 16, 2};
  g.nodes.push_back(input_node("in"));
  g.nodes.push_back(conv_node("down", "in", 3, 2, 1, 2));
  LayerNode up;
  up.name = "up";
  up.kind = LayerKind::Deconv;
  up.kernel_h = up.kernel_w = 4;
  up.stride = 2;
  up.pad = 1;
  up.out_channels = 2;
  up.inputs = {"down"};
  g.nodes.push_back(up);
  REQUIRE(validate(g).empty());

  RfDistribution d = rf_distribution(g, "up");
  // down: (rf 3, jump 2); up has kernel/stride = 2 taps -> rf 5, jump 1.
  CHECK(d.counts == std::map<long long, unsigned long long>{{5, 1}});

  SUBCASE("kernel must be a stride multiple") {
    g.nodes[2].kernel_h = g.nodes[2].kernel_w = 3;
    CHECK(testutil::thrown_code([&] { rf_distribution(g, "up"); }) ==
          ErrorCode::unsupported);
  }
  SUBCASE("stride must divide the incoming spacing") {
    g.nodes[1].stride = 1;  // jump stays 1, deconv stride 2 cannot divide it
    CHECK(testutil::thrown_code([&] { rf_distribution(g, "up"); }) ==
          ErrorCode::unsupported);
  }
}

TEST_CASE("layers without a fixed extent are rejected") {
  NetworkGraph g;
  g.name = "fc";
  g.input_shape = {8, 8, 2};
  g.nodes.push_back(input_node("in"));
  LayerNode fc;
  fc.name = "dense";
  fc.kind = LayerKind::FullyConnected;
  fc.out_channels = 10;
  fc.inputs = {"in"};
  g.nodes.push_back(fc);
  CHECK(testutil::thrown_code([&] { rf_distribution(g, "dense"); }) ==
        ErrorCode::unsupported);

  NetworkGraph rect;
  rect.name = "rect";
  rect.input_shape = {8, 8, 2};
  rect.nodes.push_back(input_node("in"));
  LayerNode c = conv_node("c", "in", 3, 1, 1, 2);
  c.kernel_w = 5;
  rect.nodes.push_back(c);
  CHECK(testutil::thrown_code([&] { rf_distribution(rect, "c"); }) ==
        ErrorCode::unsupported);

  CHECK(testutil::thrown_code([&] {
          rf_distribution(build_pvanet_feature_extractor(), "nope");
        }) == ErrorCode::invalid_argument);
}

TEST_CASE("deep residual stacks hit the path cap") {
  NetworkGraph g;
  g.name = "res30";
  g.input_shape = {8, 8, 2};
  g.nodes.push_back(input_node("in"));
  std::string prev = "in";
  for (int i = 0; i < 30; ++i) {
    std::string c = "c" + std::to_string(i);
    std::string a = "a" + std::to_string(i);
    g.nodes.push_back(conv_node(c, prev, 1, 1, 0, 2));
    g.nodes.push_back(join_node(a, LayerKind::EltwiseAdd, {c, prev}));
    prev = a;
  }
  REQUIRE(validate(g).empty());

  CHECK(testutil::thrown_code([&] { rf_distribution(g, prev); }) ==
        ErrorCode::path_explosion);
  RfDistribution d = rf_distribution(g, prev, 1ULL << 30);
  CHECK(d.total_paths() == (1ULL << 30));
  CHECK(d.min_rf() == 1);
  CHECK(d.max_rf() == 1);  // all 1x1, so every path has unit extent
}

TEST_CASE("full detection trunk: minimum extent and exact path count") {
  NetworkGraph g = build_pvanet_feature_extractor();
  RfDistribution d = rf_distribution(g, "convf/conv", 2000000000ULL);
  CHECK(d.min_rf() == 11);  // shortcut chain: 7x7/2 stem, 3x3/2 pool,
                            // then projections and identity shortcuts
  CHECK(d.max_rf() > 500);
  CHECK(d.total_paths() == simple_path_count(g, "convf/conv"));
  CHECK(d.mean_rf() >= d.min_rf());
  CHECK(d.mean_rf() <= d.max_rf());
  CHECK(d.counts.at(11) >= 1);
}

TEST_CASE("probe support matches the analytic extent") {
  // Odd kernels with matching padding keep every path window centred, so a
  // probe sweep must reproduce the analytic maximum exactly.
  NetworkGraph g;
  g.name = "probe";
  g.input_shape = {11, 11, 1};
  g.nodes.push_back(input_node("in"));
  g.nodes.push_back(conv_node("c1", "in", 3, 1, 1, 2));
  g.nodes.push_back(pool_node("p1", "c1", 3, 2, 1));
  g.nodes.push_back(conv_node("c2", "p1", 3, 1, 1, 2));
  REQUIRE(validate(g).empty());

  RfDistribution d = rf_distribution(g, "c2");
  CHECK(d.max_rf() == 9);

  EmpiricalRf e = empirical_rf(g, "c2", 2, 2, g.input_shape);
  CHECK(e.extent_h == 9);
  CHECK(e.extent_w == 9);
  CHECK(e.support == 81);

  SUBCASE("joins widen the union to the widest path") {
    g.nodes.push_back(conv_node("skip", "p1", 1, 1, 0, 2));
    g.nodes.push_back(
        join_node("sum", LayerKind::EltwiseAdd, {"skip", "c2"}));
    REQUIRE(validate(g).empty());
    EmpiricalRf joined = empirical_rf(g, "sum", 2, 2, g.input_shape);
    CHECK(joined.extent_h == 9);
    CHECK(joined.extent_w == 9);
  }

  SUBCASE("position checks") {
    CHECK(testutil::thrown_code([&] {
            empirical_rf(g, "c2", 99, 0, g.input_shape);
          }) == ErrorCode::invalid_argument);
  }
}

TEST_CASE("distribution renderings") {
  NetworkGraph g;
  g.name = "branchy";
  g.input_shape = {32, 32, 4};
  g.nodes.push_back(input_node("in"));
  g.nodes.push_back(conv_node("narrow", "in", 1, 1, 0, 4));
  g.nodes.push_back(conv_node("wide", "in", 5, 1, 2, 4));
  g.nodes.push_back(join_node("cat", LayerKind::Concat, {"narrow", "wide"}));
  RfDistribution d = rf_distribution(g, "cat");

  nlohmann::json j = rf_to_json(d);
  CHECK(j["paths"] == 2);
  CHECK(j["min"] == 1);
  CHECK(j["max"] == 5);
  CHECK(j["mean"] == doctest::Approx(3.0));
  CHECK(j["counts"]["1"] == 1);
  CHECK(j["counts"]["5"] == 1);

  std::string text = rf_histogram_text(d);
  CHECK(text.find("paths: 2") != std::string::npos);
  CHECK(text.find("extent 1..5") != std::string::npos);
  CHECK(text.find('#') != std::string::npos);

  RfDistribution single;
  single.counts[7] = 3;
  std::string one = rf_histogram_text(single);
  CHECK(one.find("paths: 3") != std::string::npos);
  CHECK(one.find("100.0%") != std::string::npos);
  CHECK_THROWS_AS(rf_histogram_text(single, 0), Error);
  CHECK_THROWS_AS(RfDistribution{}.min_rf(), Error);
}
