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

#include "pvawb.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>
#include <utility>

#include <json.hpp>

#include "pvawb/builders.hpp"
#include "pvawb/cost.hpp"
#include "pvawb/detection.hpp"
#include "pvawb/errors.hpp"
#include "pvawb/graph.hpp"
#include "pvawb/json_io.hpp"
#include "pvawb/lowrank.hpp"
#include "pvawb/receptive.hpp"
#include "pvawb/trainer.hpp"
#include "pvawb/verify.hpp"

struct pvawb_graph {
  pvawb::NetworkGraph g;
};

namespace {

thread_local std::string t_last_error;

int map_code(pvawb::ErrorCode c) {
  using EC = pvawb::ErrorCode;
  switch (c) {
    case EC::invalid_argument:
    case EC::invalid_spec:
    case EC::missing_head:
      return PVAWB_E_INVALID_ARGUMENT;
    case EC::parse_error:
      return PVAWB_E_PARSE;
    case EC::io_error:
      return PVAWB_E_IO;
    case EC::channel_mismatch:
    case EC::negative_dimension:
      return PVAWB_E_GRAPH;
    case EC::unsupported:
      return PVAWB_E_UNSUPPORTED;
    case EC::non_finite:
    case EC::convergence_failure:
    case EC::degenerate_roi:
      return PVAWB_E_NUMERIC;
    case EC::path_explosion:
    case EC::overflow_guard:
      return PVAWB_E_LIMIT;
    case EC::internal:
      return PVAWB_E_INTERNAL;
  }
  return PVAWB_E_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return PVAWB_OK;
  } catch (const pvawb::Error& e) {
    t_last_error = e.what();
    return map_code(e.code());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return PVAWB_E_INTERNAL;
  } catch (...) {
    t_last_error = "unknown failure";
    return PVAWB_E_INTERNAL;
  }
}

int bad_argument(const char* what) {
  t_last_error = what;
  return PVAWB_E_INVALID_ARGUMENT;
}

pvawb::TensorShape shape_of(int h, int w, int c) {
  pvawb::check(h > 0 && w > 0 && c > 0, pvawb::ErrorCode::invalid_argument,
               "input dimensions must be positive");
  return pvawb::TensorShape{h, w, c};
}

}  // namespace

extern "C" {

const char* pvawb_version(void) { return "0.1.0"; }

const char* pvawb_last_error(void) { return t_last_error.c_str(); }

void pvawb_string_free(char* s) { std::free(s); }

int pvawb_graph_from_json(const char* json_text, pvawb_graph** out) {
  if (json_text == nullptr || out == nullptr)
    return bad_argument("json_text and out must not be NULL");
  return guarded([&] {
    auto g = pvawb::graph_from_json_text(json_text);
    *out = new pvawb_graph{std::move(g)};
  });
}

int pvawb_graph_from_file(const char* path, pvawb_graph** out) {
  if (path == nullptr || out == nullptr)
    return bad_argument("path and out must not be NULL");
  return guarded([&] {
    auto g = pvawb::graph_from_file(path);
    *out = new pvawb_graph{std::move(g)};
  });
}

int pvawb_graph_builtin(const char* name, pvawb_graph** out) {
  if (name == nullptr || out == nullptr)
    return bad_argument("name and out must not be NULL");
  return guarded([&] {
    auto g = pvawb::build_builtin(name);
    *out = new pvawb_graph{std::move(g)};
  });
}

void pvawb_graph_free(pvawb_graph* g) { delete g; }

int pvawb_graph_to_json(const pvawb_graph* g, char** json_out) {
  if (g == nullptr || json_out == nullptr)
    return bad_argument("graph and json_out must not be NULL");
  return guarded(
      [&] { *json_out = dup_string(pvawb::graph_to_json(g->g).dump(2)); });
}

int pvawb_graph_name(const pvawb_graph* g, char** name_out) {
  if (g == nullptr || name_out == nullptr)
    return bad_argument("graph and name_out must not be NULL");
  return guarded([&] { *name_out = dup_string(g->g.name); });
}

int pvawb_graph_input_shape(const pvawb_graph* g, int* height, int* width,
                            int* channels) {
  if (g == nullptr || height == nullptr || width == nullptr ||
      channels == nullptr)
    return bad_argument("graph and all three out-parameters required");
  return guarded([&] {
    *height = g->g.input_shape.h;
    *width = g->g.input_shape.w;
    *channels = g->g.input_shape.c;
  });
}

int pvawb_builtin_names(char** json_array_out) {
  if (json_array_out == nullptr)
    return bad_argument("json_array_out must not be NULL");
  return guarded([&] {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& n : pvawb::builtin_names()) arr.push_back(n);
    *json_array_out = dup_string(arr.dump());
  });
}

int pvawb_graph_validate(const pvawb_graph* g, char** diagnostics_out,
                         int* problem_count) {
  if (g == nullptr || diagnostics_out == nullptr || problem_count == nullptr)
    return bad_argument("graph, diagnostics_out and problem_count required");
  return guarded([&] {
    auto diags = pvawb::validate(g->g);
    *problem_count = static_cast<int>(diags.size());
    *diagnostics_out = dup_string(pvawb::diagnostics_to_json(diags).dump(2));
  });
}

int pvawb_infer_shapes(const pvawb_graph* g, int height, int width,
                       int channels, char** json_out) {
  if (g == nullptr || json_out == nullptr)
    return bad_argument("graph and json_out must not be NULL");
  return guarded([&] {
    auto shapes = pvawb::infer_shapes(g->g, shape_of(height, width, channels));
    nlohmann::json obj = nlohmann::json::object();
    for (const auto& node : g->g.nodes) {
      const auto& s = shapes.at(node.name);
      obj[node.name] = std::to_string(s.h) + "x" + std::to_string(s.w) + "x" +
                       std::to_string(s.c);
    }
    *json_out = dup_string(obj.dump(2));
  });
}

int pvawb_cost_report(const pvawb_graph* g, int height, int width,
                      int channels, int table_rounding, int as_json,
                      char** out) {
  if (g == nullptr || out == nullptr)
    return bad_argument("graph and out must not be NULL");
  return guarded([&] {
    auto input = shape_of(height, width, channels);
    auto r = table_rounding != 0 ? pvawb::Rounding::table
                                 : pvawb::Rounding::exact;
    if (as_json != 0)
      *out = dup_string(pvawb::cost_report_json(g->g, input, r).dump(2));
    else
      *out = dup_string(pvawb::cost_table_text(g->g, input, r));
  });
}

int pvawb_detection_gmac(int compressed, int proposals, int as_json,
                         char** out) {
  if (out == nullptr) return bad_argument("out must not be NULL");
  return guarded([&] {
    pvawb::check(proposals > 0, pvawb::ErrorCode::invalid_argument,
                 "proposals must be positive");
    auto feature = pvawb::build_pvanet_feature_extractor();
    auto rpn = pvawb::build_rpn_head();
    auto cls = pvawb::build_classifier_head(compressed != 0);
    auto feature_cost =
        pvawb::graph_cost(feature, pvawb::TensorShape{1056, 640, 3});
    auto b = pvawb::detection_cost(feature_cost, rpn, cls, proposals);
    if (as_json != 0)
      *out = dup_string(pvawb::gmac_breakdown_json(b).dump(2));
    else
      *out = dup_string(pvawb::gmac_breakdown_text(b));
  });
}

int pvawb_verify_table(const char* fixture_json, char** report_out,
                       int* mismatch_count) {
  if (report_out == nullptr || mismatch_count == nullptr)
    return bad_argument("report_out and mismatch_count must not be NULL");
  return guarded([&] {
    pvawb::VerifyResult r;
    if (fixture_json == nullptr) {
      r = pvawb::verify_structure_table(pvawb::default_fixture());
    } else {
      auto j = nlohmann::json::parse(fixture_json, nullptr, false);
      pvawb::check(!j.is_discarded(), pvawb::ErrorCode::parse_error,
                   "fixture is not valid JSON");
      r = pvawb::verify_structure_table(pvawb::fixture_from_json(j));
    }
    *mismatch_count = r.mismatches;
    *report_out = dup_string(r.report);
  });
}

int pvawb_rf_distribution(const pvawb_graph* g, const char* node,
                          uint64_t max_paths, int as_json, char** out) {
  if (g == nullptr || node == nullptr || out == nullptr)
    return bad_argument("graph, node and out must not be NULL");
  return guarded([&] {
    auto d = pvawb::rf_distribution(g->g, node,
                                    max_paths == 0 ? 1000000 : max_paths);
    if (as_json != 0)
      *out = dup_string(pvawb::rf_to_json(d).dump(2));
    else
      *out = dup_string(pvawb::rf_histogram_text(d));
  });
}

int pvawb_train_toy(const char* config_json, char** csv_out,
                    char** summary_out) {
  if (csv_out == nullptr || summary_out == nullptr)
    return bad_argument("csv_out and summary_out must not be NULL");
  return guarded([&] {
    nlohmann::json cfg = nlohmann::json::object();
    if (config_json != nullptr && config_json[0] != '\0') {
      cfg = nlohmann::json::parse(config_json, nullptr, false);
      pvawb::check(!cfg.is_discarded() && cfg.is_object(),
                   pvawb::ErrorCode::parse_error,
                   "config is not a JSON object");
    }
    const std::string net_name = cfg.value("net", std::string("mcrelu"));
    pvawb::TrainConfig tc;
    tc.seed = cfg.value("seed", static_cast<uint64_t>(1));
    tc.max_iters = cfg.value("iterations", 400);
    tc.batch = cfg.value("batch", 16);
    tc.momentum = cfg.value("momentum", 0.9);
    tc.weight_decay = cfg.value("weight_decay", 5e-4);
    tc.sched.base_lr = cfg.value("base_lr", 0.1);
    tc.sched.decay_factor = cfg.value("decay_factor", 0.31622776601683794);
    tc.sched.patience = cfg.value("patience", 100);
    tc.sched.window = cfg.value("window", 50);
    tc.sched.terminate_below = cfg.value("terminate_below", 1e-4);
    const int per_class = cfg.value("per_class", 64);

    auto graph = pvawb::build_toy_classifier(pvawb::toy_net_from_name(net_name));
    auto data = pvawb::make_toy_dataset(per_class, tc.seed + 1);
    auto result = pvawb::train(graph, data, tc);

    nlohmann::json summary{
        {"net", net_name},
        {"iterations", result.iterations},
        {"terminated", result.terminated},
        {"final_loss", result.final_loss},
        {"final_accuracy", result.final_accuracy},
        {"decays", result.history.empty()
                       ? 0
                       : [&] {
                           int n = 0;
                           for (const auto& h : result.history)
                             if (h.decayed) ++n;
                           return n;
                         }()}};
    *csv_out = dup_string(pvawb::history_csv(result.history));
    *summary_out = dup_string(summary.dump(2));
  });
}

int pvawb_detect_sim(const char* scene_json, uint64_t seed, int pre_nms,
                     double nms_iou, int post_nms, int vote,
                     char** jsonl_out) {
  if (scene_json == nullptr || jsonl_out == nullptr)
    return bad_argument("scene_json and jsonl_out must not be NULL");
  return guarded([&] {
    auto j = nlohmann::json::parse(scene_json, nullptr, false);
    pvawb::check(!j.is_discarded(), pvawb::ErrorCode::parse_error,
                 "scene is not valid JSON");
    auto scene = pvawb::scene_from_json(j);
    pvawb::RpnSettings settings;
    if (pre_nms >= 0) settings.pre_nms_top_n = pre_nms;
    if (std::isfinite(nms_iou)) settings.nms_threshold = nms_iou;
    if (post_nms >= 0) settings.post_nms_top_n = post_nms;
    auto dets = pvawb::simulate_detection(scene, seed, settings, vote != 0);
    *jsonl_out = dup_string(pvawb::detections_to_jsonl(dets));
  });
}

int pvawb_compress_report(int rank, int proposals, char** json_out) {
  if (json_out == nullptr) return bad_argument("json_out must not be NULL");
  return guarded([&] {
    pvawb::check(rank > 0 && proposals > 0,
                 pvawb::ErrorCode::invalid_argument,
                 "rank and proposals must be positive");
    auto cls = pvawb::build_classifier_head(false);
    auto rewrite = pvawb::rewrite_classifier(cls, rank);

    auto per_roi = [](const pvawb::NetworkGraph& g) {
      return pvawb::graph_cost(g, g.input_shape).total.macs;
    };
    auto feature = pvawb::build_pvanet_feature_extractor();
    auto rpn = pvawb::build_rpn_head();
    auto feature_cost =
        pvawb::graph_cost(feature, pvawb::TensorShape{1056, 640, 3});
    auto before = pvawb::detection_cost(feature_cost, rpn, cls, proposals);
    auto after =
        pvawb::detection_cost(feature_cost, rpn, rewrite.graph, proposals);

    nlohmann::json out{
        {"rank", rank},
        {"proposals", proposals},
        {"per_roi_mac",
         {{"original", per_roi(cls)}, {"compressed", per_roi(rewrite.graph)}}},
        {"gmac",
         {{"original", pvawb::gmac_breakdown_json(before)},
          {"compressed", pvawb::gmac_breakdown_json(after)}}}};
    if (!rewrite.warning.empty()) out["warning"] = rewrite.warning;
    *json_out = dup_string(out.dump(2));
  });
}

}  // extern "C"
