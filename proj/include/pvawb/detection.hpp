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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvawb/box.hpp"
#include "pvawb/tensor.hpp"

namespace pvawb {

struct Detection {
  Box box;
  double score = 0;
  int class_id = 0;
};

struct Anchor {
  Box box;
  int scale_index = 0;
  int ratio_index = 0;
};

// Anchor of scale s and ratio r has width s*sqrt(r) and height s/sqrt(r)
// (area s^2 regardless of r), centred on ((x+0.5)*stride, (y+0.5)*stride).
// Order: cells row-major, then scales, then ratios, matching the channel
// layout of the prediction maps.
std::vector<Anchor> gen_anchors(const std::vector<double>& scales,
                                const std::vector<double>& ratios,
                                double feat_stride, int feat_h, int feat_w);

// The 42-anchor configuration used by the 1056x640 detector: scales
// {32,48,80,144,256,512} by ratios {0.333,0.5,0.667,1.0,1.5,2.0,3.0}.
const std::vector<double>& default_anchor_scales();
const std::vector<double>& default_anchor_ratios();

struct BoxDelta {
  double tx = 0, ty = 0, tw = 0, th = 0;
};

// Parameterised regression: centre shifts scale with the anchor size, extent
// is exponential. Deltas whose exponent argument exceeds 50 raise
// overflow_guard rather than produce astronomically sized boxes.
Box decode_box(const Box& anchor, const BoxDelta& d, double img_w,
               double img_h);
BoxDelta encode_box(const Box& anchor, const Box& target);

// Greedy suppression: keep in descending score order (ties keep the earlier
// index) and drop any candidate whose overlap with an already kept box
// exceeds iou_threshold. pre_top_k = 0 means no pre-truncation; post_top_k
// caps the kept list.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold,
                           size_t pre_top_k = 0, size_t post_top_k = 0);

// Refines each kept box by the score-weighted average of all pool boxes
// overlapping it by at least iou_threshold. Boxes backed by fewer than
// min_support voters have their score scaled by support/min_support.
std::vector<Detection> bbox_vote(const std::vector<Detection>& kept,
                                 const std::vector<Detection>& pool,
                                 double iou_threshold, int min_support = 5);

struct RpnSettings {
  int pre_nms_top_n = 12000;
  double nms_threshold = 0.4;
  int post_nms_top_n = 200;
};

// Standard proposal flow over (1, 2A, fh, fw) score and (1, 4A, fh, fw)
// delta maps: foreground probability ranking, decoding, clipping, then NMS.
// Scores hold background logits in channels [0, A) and foreground in
// [A, 2A); deltas pack (tx, ty, tw, th) per anchor.
std::vector<Detection> rpn_pipeline(const Tensor& scores, const Tensor& deltas,
                                    const std::vector<Anchor>& anchors,
                                    double img_w, double img_h,
                                    const RpnSettings& settings);

std::string detections_to_jsonl(const std::vector<Detection>& dets);

// Synthetic single-image scene for end-to-end pipeline runs: planted ground
// truth boxes are turned into noisy score/delta maps as a real proposal
// network would emit them.
struct SyntheticScene {
  double img_w = 1056, img_h = 640;
  double feat_stride = 16;
  int feat_h = 40, feat_w = 66;
  std::vector<double> scales = default_anchor_scales();
  std::vector<double> ratios = default_anchor_ratios();
  std::vector<Box> objects;
  double score_noise = 0.5;
};
SyntheticScene scene_from_json(const nlohmann::json& j);

struct SceneMaps {
  Tensor scores, deltas;
  std::vector<Anchor> anchors;
};
SceneMaps synthesize_scene_maps(const SyntheticScene& scene, uint64_t seed);

// Scene -> maps -> proposals, optionally refined by box voting over the
// pre-suppression pool.
std::vector<Detection> simulate_detection(const SyntheticScene& scene,
                                          uint64_t seed,
                                          const RpnSettings& settings,
                                          bool vote = false,
                                          double vote_iou = 0.5);

}  // namespace pvawb
