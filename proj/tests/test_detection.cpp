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

#include "pvawb/detection.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "helpers.hpp"

using namespace pvawb;

namespace {

// Quadratic reference: explicit pairwise suppression over the sorted list.
std::vector<Detection> reference_nms(const std::vector<Detection>& dets,
                                     double thr) {
  std::vector<size_t> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::vector<bool> dead(dets.size(), false);
  std::vector<Detection> kept;
  for (size_t oi = 0; oi < order.size(); ++oi) {
    if (dead[order[oi]]) continue;
    kept.push_back(dets[order[oi]]);
    for (size_t oj = oi + 1; oj < order.size(); ++oj)
      if (!dead[order[oj]] &&
          iou(dets[order[oi]].box, dets[order[oj]].box) > thr)
        dead[order[oj]] = true;
  }
  return kept;
}

std::vector<Detection> random_clustered(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> centre(10, 90);
  std::uniform_real_distribution<double> size(5, 30);
  std::uniform_real_distribution<double> jitter(-6, 6);
  std::uniform_real_distribution<double> score(0, 1);
  std::uniform_int_distribution<int> pick(0, 3);
  double cx[4], cy[4];
  for (int i = 0; i < 4; ++i) {
    cx[i] = centre(rng);
    cy[i] = centre(rng);
  }
  std::vector<Detection> dets(n);
  for (auto& d : dets) {
    const int c = pick(rng);
    const double w = size(rng), h = size(rng);
    const double x = cx[c] + jitter(rng), y = cy[c] + jitter(rng);
    d.box = {x - w / 2, y - h / 2, x + w / 2, y + h / 2};
    d.score = score(rng);
  }
  return dets;
}

bool same_detections(const std::vector<Detection>& a,
                     const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!(a[i].box == b[i].box) || a[i].score != b[i].score) return false;
  return true;
}

}  // namespace

TEST_CASE("anchors tile the grid with 42 equal-area shapes per cell") {
  const auto& scales = default_anchor_scales();
  const auto& ratios = default_anchor_ratios();
  REQUIRE(scales.size() == 6);
  REQUIRE(ratios.size() == 7);

  auto anchors = gen_anchors(scales, ratios, 16, 40, 66);
  CHECK(anchors.size() == 42u * 40 * 66);

  // Cells are row-major; within a cell, scale-major then ratio.
  const size_t cell = (static_cast<size_t>(1) * 66 + 2) * 42;  // y=1, x=2
  for (int k = 0; k < 42; ++k) {
    const Anchor& a = anchors[cell + k];
    CHECK(a.scale_index == k / 7);
    CHECK(a.ratio_index == k % 7);
    CHECK(a.box.cx() == doctest::Approx(2.5 * 16).epsilon(1e-12));
    CHECK(a.box.cy() == doctest::Approx(1.5 * 16).epsilon(1e-12));
    const double s = scales[a.scale_index], r = ratios[a.ratio_index];
    CHECK(a.box.area() == doctest::Approx(s * s).epsilon(1e-9));
    CHECK(a.box.width() / a.box.height() == doctest::Approx(r).epsilon(1e-9));
  }

  CHECK(testutil::thrown_code([] {
          gen_anchors({}, {1.0}, 16, 4, 4);
        }) == ErrorCode::invalid_argument);
  CHECK(testutil::thrown_code([] {
          gen_anchors({32}, {1.0}, 0, 4, 4);
        }) == ErrorCode::invalid_argument);
}

TEST_CASE("box regression encodes and decodes losslessly") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> pos(50, 900);
  std::uniform_real_distribution<double> ext(8, 120);
  for (int trial = 0; trial < 200; ++trial) {
    const double acx = pos(rng), acy = pos(rng), aw = ext(rng), ah = ext(rng);
    const double tcx = pos(rng), tcy = pos(rng), tw = ext(rng), th = ext(rng);
    Box anchor{acx - aw / 2, acy - ah / 2, acx + aw / 2, acy + ah / 2};
    Box target{tcx - tw / 2, tcy - th / 2, tcx + tw / 2, tcy + th / 2};
    Box back = decode_box(anchor, encode_box(anchor, target), 2000, 2000);
    CHECK(std::abs(back.x1 - target.x1) < 1e-8);
    CHECK(std::abs(back.y1 - target.y1) < 1e-8);
    CHECK(std::abs(back.x2 - target.x2) < 1e-8);
    CHECK(std::abs(back.y2 - target.y2) < 1e-8);
  }

  SUBCASE("decoded boxes clip to the image") {
    Box anchor{0, 0, 100, 100};
    Box b = decode_box(anchor, BoxDelta{-1.0, 0, 0, 0}, 640, 480);
    CHECK(b.x1 == 0.0);
    CHECK(b.x2 == doctest::Approx(0.0));  // shifted fully out: clamps flat
    b = decode_box(anchor, BoxDelta{0, 0, 1.0, 0}, 120, 480);
    CHECK(b.x2 == 120.0);
  }
  SUBCASE("exponent guard") {
    Box anchor{0, 0, 10, 10};
    CHECK_NOTHROW(decode_box(anchor, BoxDelta{0, 0, 50, 0}, 1e9, 1e9));
    CHECK(testutil::thrown_code([&] {
            decode_box(anchor, BoxDelta{0, 0, 50.5, 0}, 1e9, 1e9);
          }) == ErrorCode::overflow_guard);
    CHECK(testutil::thrown_code([&] {
            encode_box(anchor, Box{5, 5, 5, 9});
          }) == ErrorCode::invalid_argument);
  }
}

TEST_CASE("greedy suppression keeps cluster leaders") {
  std::vector<Detection> dets = {
      {{0, 0, 10, 10}, 0.9, 0},   // leader of cluster 1
      {{1, 1, 11, 11}, 0.8, 0},   // iou 81/119 with the leader
      {{20, 20, 30, 30}, 0.7, 0}  // isolated
  };
  auto kept = nms(dets, 0.5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].box == dets[0].box);
  CHECK(kept[1].box == dets[2].box);

  SUBCASE("ties keep the earlier candidate") {
    std::vector<Detection> twin = {{{0, 0, 4, 4}, 0.5, 1},
                                   {{0, 0, 4, 4}, 0.5, 2}};
    auto k = nms(twin, 0.5);
    REQUIRE(k.size() == 1);
    CHECK(k[0].class_id == 1);
  }
  SUBCASE("overlap exactly at the threshold is not suppressed") {
    Box a{0, 0, 10, 10}, b{0, 5, 10, 15};
    const double exact = iou(a, b);  // 1/3
    auto k = nms({{a, 0.9, 0}, {b, 0.8, 0}}, exact);
    CHECK(k.size() == 2);
    auto k2 = nms({{a, 0.9, 0}, {b, 0.8, 0}},
                  std::nextafter(exact, 0.0));
    CHECK(k2.size() == 1);
  }
  SUBCASE("pre-truncation drops low scores before suppression") {
    auto k = nms(dets, 0.5, /*pre_top_k=*/2);
    REQUIRE(k.size() == 1);  // the isolated 0.7 box never enters
    CHECK(k[0].box == dets[0].box);
  }
  SUBCASE("post cap stops early") {
    auto k = nms(dets, 0.99, 0, 2);
    CHECK(k.size() == 2);
  }
  SUBCASE("threshold range is validated") {
    CHECK(testutil::thrown_code([&] { nms(dets, 1.5); }) ==
          ErrorCode::invalid_argument);
  }
}

TEST_CASE("greedy suppression equals the quadratic reference") {
  std::mt19937_64 rng(29);
  const double thresholds[] = {0.3, 0.5, 0.7};
  for (int trial = 0; trial < 60; ++trial) {
    auto dets = random_clustered(rng, 40 + trial % 40);
    const double thr = thresholds[trial % 3];
    CHECK(same_detections(nms(dets, thr), reference_nms(dets, thr)));
  }
}

TEST_CASE("box voting refines by score-weighted support") {
  Detection keptBox{{0, 0, 10, 10}, 0.6, 0};
  std::vector<Detection> pool = {
      {{0, 0, 10, 10}, 0.6, 0},   // itself
      {{1, 1, 11, 11}, 0.2, 0},   // iou ~0.68: in
      {{2, 2, 12, 12}, 0.4, 0},   // iou ~0.47: out at 0.5
  };
  auto voted = bbox_vote({keptBox}, pool, 0.5);
  REQUIRE(voted.size() == 1);
  const double sw = 0.6 + 0.2;
  CHECK(voted[0].box.x1 == doctest::Approx((0.6 * 0 + 0.2 * 1) / sw));
  CHECK(voted[0].box.x2 == doctest::Approx((0.6 * 10 + 0.2 * 11) / sw));
  // two voters against min_support 5 scales the confidence
  CHECK(voted[0].score == doctest::Approx(0.6 * 2 / 5).epsilon(1e-12));

  SUBCASE("rich support keeps the score") {
    auto v = bbox_vote({keptBox}, pool, 0.5, 2);
    CHECK(v[0].score == 0.6);
  }
  SUBCASE("overlap exactly at the threshold still votes") {
    Box b{0, 5, 10, 15};
    const double exact = iou(keptBox.box, b);
    auto v = bbox_vote({keptBox}, {{b, 1.0, 0}}, exact, 1);
    CHECK(v[0].box.y1 == doctest::Approx(5.0));
  }
  SUBCASE("no support leaves the detection untouched") {
    auto v = bbox_vote({keptBox}, {}, 0.5);
    CHECK(v[0].box == keptBox.box);
    CHECK(v[0].score == keptBox.score);
  }
  SUBCASE("zero-score voters are clamped, not dropped") {
    auto v = bbox_vote({keptBox}, {{{1, 1, 11, 11}, 0.0, 0}}, 0.5, 1);
    CHECK(v[0].box.x1 == doctest::Approx(1.0));
  }
  SUBCASE("min_support must be positive") {
    CHECK(testutil::thrown_code([&] {
            bbox_vote({keptBox}, pool, 0.5, 0);
          }) == ErrorCode::invalid_argument);
  }
}

TEST_CASE("proposal pipeline ranks, decodes and suppresses") {
  auto anchors = gen_anchors({16}, {1.0}, 8, 2, 2);
  REQUIRE(anchors.size() == 4);
  Tensor scores(1, 2, 2, 2);
  Tensor deltas(1, 4, 2, 2);
  // fg - bg logit margins per cell: (0,0) strongest, then (1,1).
  const double margin[2][2] = {{4.0, -2.0}, {-3.0, 1.0}};
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      scores.at(0, 0, y, x) = -margin[y][x] / 2;
      scores.at(0, 1, y, x) = margin[y][x] / 2;
    }

  RpnSettings s;
  s.pre_nms_top_n = 0;
  s.nms_threshold = 0.5;
  s.post_nms_top_n = 0;
  auto props = rpn_pipeline(scores, deltas, anchors, 16, 16, s);
  REQUIRE(props.size() == 4);  // neighbours overlap at exactly 0.5
  CHECK(props[0].score == doctest::Approx(1.0 / (1.0 + std::exp(-4.0))));
  CHECK(props[0].box == Box{0, 0, 12, 12});  // anchor at (0,0), clipped
  for (size_t i = 1; i < props.size(); ++i)
    CHECK(props[i - 1].score >= props[i].score);

  SUBCASE("post cap and pre truncation") {
    s.post_nms_top_n = 2;
    CHECK(rpn_pipeline(scores, deltas, anchors, 16, 16, s).size() == 2);
    s.post_nms_top_n = 0;
    s.pre_nms_top_n = 1;
    auto one = rpn_pipeline(scores, deltas, anchors, 16, 16, s);
    REQUIRE(one.size() == 1);
    CHECK(one[0].box == Box{0, 0, 12, 12});
  }
  SUBCASE("channel bookkeeping is enforced") {
    Tensor bad(1, 3, 2, 2);
    CHECK(testutil::thrown_code([&] {
            rpn_pipeline(bad, deltas, anchors, 16, 16, s);
          }) == ErrorCode::invalid_argument);
    auto fewer = gen_anchors({16}, {1.0}, 8, 1, 2);
    CHECK(testutil::thrown_code([&] {
            rpn_pipeline(scores, deltas, fewer, 16, 16, s);
          }) == ErrorCode::invalid_argument);
  }
}

TEST_CASE("detections serialise one json object per line") {
  std::vector<Detection> dets = {{{1, 2, 3, 4}, 0.5, 7},
                                 {{0, 0, 1, 1}, 0.25, 0}};
  std::string text = detections_to_jsonl(dets);
  CHECK(detections_to_jsonl({}).empty());
  std::istringstream is(text);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("x1"));
    CHECK(j.contains("score"));
    CHECK(j.contains("class"));
    ++lines;
  }
  CHECK(lines == 2);
  auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  CHECK(first["x2"] == 3.0);
  CHECK(first["class"] == 7);
}

TEST_CASE("scenes parse with geometry defaults") {
  auto j = nlohmann::json::parse(
      R"({"objects":[{"x1":10,"y1":20,"x2":110,"y2":140}]})");
  SyntheticScene s = scene_from_json(j);
  CHECK(s.img_w == 1056);
  CHECK(s.img_h == 640);
  CHECK(s.feat_h == 40);
  CHECK(s.feat_w == 66);
  CHECK(s.scales.size() * s.ratios.size() == 42);
  REQUIRE(s.objects.size() == 1);
  CHECK(s.objects[0].x2 == 110);

  auto j2 = nlohmann::json::parse(
      R"({"img_w":256,"img_h":128,"feat_stride":16,
          "objects":[{"x1":0,"y1":0,"x2":32,"y2":32}]})");
  SyntheticScene s2 = scene_from_json(j2);
  CHECK(s2.feat_w == 16);
  CHECK(s2.feat_h == 8);

  CHECK(testutil::thrown_code([] {
          scene_from_json(nlohmann::json::parse("[]"));
        }) == ErrorCode::parse_error);
  CHECK(testutil::thrown_code([] {
          scene_from_json(nlohmann::json::parse(R"({"objects":[]})"));
        }) == ErrorCode::parse_error);
  CHECK(testutil::thrown_code([] {
          scene_from_json(nlohmann::json::parse(
              R"({"objects":[{"x1":5,"y1":0,"x2":5,"y2":2}]})"));
        }) == ErrorCode::parse_error);
}

TEST_CASE("planted objects are recovered from synthesised maps") {
  SyntheticScene scene;
  scene.img_w = 256;
  scene.img_h = 256;
  scene.feat_stride = 16;
  scene.feat_h = 16;
  scene.feat_w = 16;
  scene.scales = {32, 64};
  scene.ratios = {0.5, 1.0, 2.0};
  // Both objects sit exactly on anchors (centres on the stride-16 grid,
  // anchor-sized), so a perfectly matched candidate exists.
  scene.objects = {{56, 56, 120, 120}, {152, 24, 184, 56}};
  scene.score_noise = 0.1;

  SceneMaps maps = synthesize_scene_maps(scene, 7);
  CHECK(maps.anchors.size() == 16u * 16 * 6);
  CHECK(maps.scores.c == 12);
  CHECK(maps.deltas.c == 24);

  for (bool vote : {false, true}) {
    auto dets = simulate_detection(scene, 7, RpnSettings{}, vote);
    REQUIRE(!dets.empty());
    CHECK(dets.size() <= 200);
    for (const Box& obj : scene.objects) {
      double best = 0;
      for (const auto& d : dets) best = std::max(best, iou(d.box, obj));
      CHECK(best >= 0.5);  // every planted object is recovered
    }
    CHECK(dets[0].score > 0.9);
  }
}
