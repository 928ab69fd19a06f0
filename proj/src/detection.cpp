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
#include <numeric>
#include <random>
#include <sstream>

#include "pvawb/errors.hpp"

namespace pvawb {

using nlohmann::json;

const std::vector<double>& default_anchor_scales() {
  static const std::vector<double> s = {32, 48, 80, 144, 256, 512};
  return s;
}

const std::vector<double>& default_anchor_ratios() {
  static const std::vector<double> r = {0.333, 0.5, 0.667, 1.0, 1.5, 2.0, 3.0};
  return r;
}

std::vector<Anchor> gen_anchors(const std::vector<double>& scales,
                                const std::vector<double>& ratios,
                                double feat_stride, int feat_h, int feat_w) {
  check(!scales.empty() && !ratios.empty(), ErrorCode::invalid_argument,
        "need at least one scale and one ratio");
  check(feat_stride > 0 && feat_h > 0 && feat_w > 0,
        ErrorCode::invalid_argument, "bad feature grid");
  std::vector<Anchor> out;
  out.reserve(static_cast<size_t>(feat_h) * feat_w * scales.size() *
              ratios.size());
  for (int y = 0; y < feat_h; ++y)
    for (int x = 0; x < feat_w; ++x) {
      const double cx = (x + 0.5) * feat_stride;
      const double cy = (y + 0.5) * feat_stride;
      for (size_t si = 0; si < scales.size(); ++si)
        for (size_t ri = 0; ri < ratios.size(); ++ri) {
          const double w = scales[si] * std::sqrt(ratios[ri]);
          const double h = scales[si] / std::sqrt(ratios[ri]);
          Anchor a;
          a.box = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
          a.scale_index = static_cast<int>(si);
          a.ratio_index = static_cast<int>(ri);
          out.push_back(a);
        }
    }
  return out;
}

Box decode_box(const Box& anchor, const BoxDelta& d, double img_w,
               double img_h) {
  check(std::abs(d.tw) <= 50 && std::abs(d.th) <= 50,
        ErrorCode::overflow_guard,
        "box delta exponent out of range (|t| > 50)");
  const double aw = anchor.width(), ah = anchor.height();
  const double cx = anchor.cx() + d.tx * aw;
  const double cy = anchor.cy() + d.ty * ah;
  const double w = aw * std::exp(d.tw);
  const double h = ah * std::exp(d.th);
  Box b{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
  b.x1 = std::clamp(b.x1, 0.0, img_w);
  b.x2 = std::clamp(b.x2, 0.0, img_w);
  b.y1 = std::clamp(b.y1, 0.0, img_h);
  b.y2 = std::clamp(b.y2, 0.0, img_h);
  return b;
}

BoxDelta encode_box(const Box& anchor, const Box& target) {
  const double aw = anchor.width(), ah = anchor.height();
  check(aw > 0 && ah > 0 && target.width() > 0 && target.height() > 0,
        ErrorCode::invalid_argument, "cannot encode against empty boxes");
  BoxDelta d;
  d.tx = (target.cx() - anchor.cx()) / aw;
  d.ty = (target.cy() - anchor.cy()) / ah;
  d.tw = std::log(target.width() / aw);
  d.th = std::log(target.height() / ah);
  return d;
}

namespace {

// Descending score, earlier index wins ties.
std::vector<size_t> rank_by_score(const std::vector<Detection>& dets) {
  std::vector<size_t> idx(dets.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return dets[a].score > dets[b].score;
  });
  return idx;
}

}  // namespace

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold,
                           size_t pre_top_k, size_t post_top_k) {
  check(iou_threshold >= 0 && iou_threshold <= 1, ErrorCode::invalid_argument,
        "iou threshold must be in [0, 1]");
  auto idx = rank_by_score(dets);
  if (pre_top_k > 0 && idx.size() > pre_top_k) idx.resize(pre_top_k);
  std::vector<Detection> kept;
  for (size_t i : idx) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (iou(dets[i].box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) {
      kept.push_back(dets[i]);
      if (post_top_k > 0 && kept.size() >= post_top_k) break;
    }
  }
  return kept;
}

std::vector<Detection> bbox_vote(const std::vector<Detection>& kept,
                                 const std::vector<Detection>& pool,
                                 double iou_threshold, int min_support) {
  check(min_support > 0, ErrorCode::invalid_argument,
        "min_support must be positive");
  std::vector<Detection> out;
  out.reserve(kept.size());
  for (const auto& det : kept) {
    double sw = 0;
    Box acc{0, 0, 0, 0};
    int support = 0;
    for (const auto& p : pool) {
      if (iou(det.box, p.box) < iou_threshold) continue;
      const double w = std::max(p.score, 1e-12);
      acc.x1 += w * p.box.x1;
      acc.y1 += w * p.box.y1;
      acc.x2 += w * p.box.x2;
      acc.y2 += w * p.box.y2;
      sw += w;
      ++support;
    }
    Detection voted = det;
    if (support > 0) {
      voted.box = {acc.x1 / sw, acc.y1 / sw, acc.x2 / sw, acc.y2 / sw};
      // A box corroborated by few voters is more likely a stray; shrink its
      // confidence linearly with the missing support.
      if (support < min_support)
        voted.score = det.score * support / min_support;
    }
    out.push_back(voted);
  }
  return out;
}

std::vector<Detection> rpn_pipeline(const Tensor& scores, const Tensor& deltas,
                                    const std::vector<Anchor>& anchors,
                                    double img_w, double img_h,
                                    const RpnSettings& settings) {
  check(scores.n == 1 && deltas.n == 1 && scores.h == deltas.h &&
            scores.w == deltas.w,
        ErrorCode::invalid_argument, "score/delta maps disagree");
  const size_t cells = static_cast<size_t>(scores.h) * scores.w;
  check(cells > 0 && anchors.size() % cells == 0, ErrorCode::invalid_argument,
        "anchor list does not tile the feature map");
  const int per_cell = static_cast<int>(anchors.size() / cells);
  check(scores.c == 2 * per_cell && deltas.c == 4 * per_cell,
        ErrorCode::invalid_argument,
        "expected 2 score and 4 delta channels per anchor");

  std::vector<Detection> cands;
  cands.reserve(anchors.size());
  for (int y = 0; y < scores.h; ++y)
    for (int x = 0; x < scores.w; ++x)
      for (int a = 0; a < per_cell; ++a) {
        const size_t ai =
            (static_cast<size_t>(y) * scores.w + x) * per_cell + a;
        const double bg = scores.at(0, a, y, x);
        const double fg = scores.at(0, per_cell + a, y, x);
        BoxDelta d{deltas.at(0, 4 * a + 0, y, x),
                   deltas.at(0, 4 * a + 1, y, x),
                   deltas.at(0, 4 * a + 2, y, x),
                   deltas.at(0, 4 * a + 3, y, x)};
        Detection det;
        det.box = decode_box(anchors[ai].box, d, img_w, img_h);
        // two-way softmax foreground probability
        det.score = 1.0 / (1.0 + std::exp(bg - fg));
        cands.push_back(det);
      }
  return nms(std::move(cands), settings.nms_threshold,
             static_cast<size_t>(std::max(settings.pre_nms_top_n, 0)),
             static_cast<size_t>(std::max(settings.post_nms_top_n, 0)));
}

std::string detections_to_jsonl(const std::vector<Detection>& dets) {
  std::ostringstream os;
  for (const auto& d : dets) {
    json j{{"x1", d.box.x1}, {"y1", d.box.y1}, {"x2", d.box.x2},
           {"y2", d.box.y2}, {"score", d.score}, {"class", d.class_id}};
    os << j.dump() << "\n";
  }
  return os.str();
}

SyntheticScene scene_from_json(const json& j) {
  check(j.is_object(), ErrorCode::parse_error, "scene must be a JSON object");
  SyntheticScene s;
  s.img_w = j.value("img_w", s.img_w);
  s.img_h = j.value("img_h", s.img_h);
  s.feat_stride = j.value("feat_stride", s.feat_stride);
  s.feat_h = j.value("feat_h",
                     static_cast<int>(s.img_h / s.feat_stride));
  s.feat_w = j.value("feat_w",
                     static_cast<int>(s.img_w / s.feat_stride));
  if (j.contains("scales")) s.scales = j.at("scales").get<std::vector<double>>();
  if (j.contains("ratios")) s.ratios = j.at("ratios").get<std::vector<double>>();
  s.score_noise = j.value("score_noise", s.score_noise);
  check(j.contains("objects") && j.at("objects").is_array() &&
            !j.at("objects").empty(),
        ErrorCode::parse_error, "scene needs a non-empty 'objects' array");
  for (const auto& jo : j.at("objects")) {
    Box b{jo.at("x1").get<double>(), jo.at("y1").get<double>(),
          jo.at("x2").get<double>(), jo.at("y2").get<double>()};
    check(b.width() > 0 && b.height() > 0, ErrorCode::parse_error,
          "scene object with non-positive extent");
    s.objects.push_back(b);
  }
  check(s.feat_h > 0 && s.feat_w > 0 && s.feat_stride > 0,
        ErrorCode::parse_error, "bad scene geometry");
  return s;
}

SceneMaps synthesize_scene_maps(const SyntheticScene& scene, uint64_t seed) {
  SceneMaps m;
  m.anchors = gen_anchors(scene.scales, scene.ratios, scene.feat_stride,
                          scene.feat_h, scene.feat_w);
  const int per_cell =
      static_cast<int>(scene.scales.size() * scene.ratios.size());
  m.scores = Tensor(1, 2 * per_cell, scene.feat_h, scene.feat_w);
  m.deltas = Tensor(1, 4 * per_cell, scene.feat_h, scene.feat_w);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, scene.score_noise);

  for (int y = 0; y < scene.feat_h; ++y)
    for (int x = 0; x < scene.feat_w; ++x)
      for (int a = 0; a < per_cell; ++a) {
        const size_t ai =
            (static_cast<size_t>(y) * scene.feat_w + x) * per_cell + a;
        const Box& abox = m.anchors[ai].box;
        double best = 0;
        const Box* target = nullptr;
        for (const auto& obj : scene.objects) {
          const double o = iou(abox, obj);
          if (o > best) {
            best = o;
            target = &obj;
          }
        }
        // Foreground evidence grows with overlap; a well-matched anchor
        // regresses exactly onto its object.
        const double fg_logit = 8.0 * (best - 0.5) + noise(rng);
        m.scores.at(0, a, y, x) = -fg_logit / 2;
        m.scores.at(0, per_cell + a, y, x) = fg_logit / 2;
        if (target && best >= 0.3) {
          const BoxDelta d = encode_box(abox, *target);
          m.deltas.at(0, 4 * a + 0, y, x) = d.tx;
          m.deltas.at(0, 4 * a + 1, y, x) = d.ty;
          m.deltas.at(0, 4 * a + 2, y, x) = d.tw;
          m.deltas.at(0, 4 * a + 3, y, x) = d.th;
        }
      }
  return m;
}

std::vector<Detection> simulate_detection(const SyntheticScene& scene,
                                          uint64_t seed,
                                          const RpnSettings& settings,
                                          bool vote, double vote_iou) {
  SceneMaps maps = synthesize_scene_maps(scene, seed);
  auto kept = rpn_pipeline(maps.scores, maps.deltas, maps.anchors,
                           scene.img_w, scene.img_h, settings);
  if (!vote) return kept;

  // Rebuild the pre-suppression pool for voting support.
  RpnSettings no_nms = settings;
  no_nms.nms_threshold = 1.0;  // nothing suppressed at IoU <= 1
  no_nms.post_nms_top_n = no_nms.pre_nms_top_n;
  auto pool = rpn_pipeline(maps.scores, maps.deltas, maps.anchors,
                           scene.img_w, scene.img_h, no_nms);
  return bbox_vote(kept, pool, vote_iou);
}

}  // namespace pvawb
