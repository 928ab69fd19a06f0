/* Copyright 2026 The pvawb Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the pvawb library.
 *
 * Every fallible call returns a pvawb_status; on failure the thread-local
 * message from pvawb_last_error() describes what went wrong.  Strings
 * returned through out-parameters are heap-allocated and must be released
 * with pvawb_string_free().  Graph handles are opaque and must be released
 * with pvawb_graph_free().
 */

#ifndef PVAWB_H_
#define PVAWB_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PVAWB_API __declspec(dllexport)
#else
#define PVAWB_API __attribute__((visibility("default")))
#endif

enum pvawb_status {
  PVAWB_OK = 0,
  PVAWB_E_INVALID_ARGUMENT = 1, /* bad parameter or malformed layer config */
  PVAWB_E_PARSE = 2,            /* text that is not valid JSON / shape syntax */
  PVAWB_E_IO = 3,               /* file could not be read or written */
  PVAWB_E_GRAPH = 4,            /* graph fails validation or shape inference */
  PVAWB_E_UNSUPPORTED = 5,      /* operation not defined for this layer kind */
  PVAWB_E_NUMERIC = 6,          /* NaN/Inf encountered or iteration diverged */
  PVAWB_E_LIMIT = 7,            /* a guard tripped (path count, box decode) */
  PVAWB_E_INTERNAL = 8
};

typedef struct pvawb_graph pvawb_graph;

/* Library version as "major.minor.patch". Static storage; do not free. */
PVAWB_API const char* pvawb_version(void);

/* Message for the most recent failure on the calling thread.  Never NULL;
 * empty string when no failure has occurred.  Static storage; do not free. */
PVAWB_API const char* pvawb_last_error(void);

/* Releases a string returned through any char** out-parameter. */
PVAWB_API void pvawb_string_free(char* s);

/* ---- graph construction and serialization ---- */

PVAWB_API int pvawb_graph_from_json(const char* json_text, pvawb_graph** out);
PVAWB_API int pvawb_graph_from_file(const char* path, pvawb_graph** out);

/* Builds one of the bundled model graphs by name.  pvawb_builtin_names()
 * lists the accepted names as a JSON array. */
PVAWB_API int pvawb_graph_builtin(const char* name, pvawb_graph** out);

PVAWB_API void pvawb_graph_free(pvawb_graph* g);

PVAWB_API int pvawb_graph_to_json(const pvawb_graph* g, char** json_out);
PVAWB_API int pvawb_graph_name(const pvawb_graph* g, char** name_out);

/* The input size recorded in the graph definition (0x0x0 when absent). */
PVAWB_API int pvawb_graph_input_shape(const pvawb_graph* g, int* height,
                                      int* width, int* channels);
PVAWB_API int pvawb_builtin_names(char** json_array_out);

/* ---- analysis ---- */

/* Structural and shape validation.  Always succeeds on a well-formed handle;
 * problems are reported as a JSON array in diagnostics_out and counted in
 * problem_count (0 means the graph is clean). */
PVAWB_API int pvawb_graph_validate(const pvawb_graph* g, char** diagnostics_out,
                                   int* problem_count);

/* Output shape of every node at the given input size, as a JSON object
 * mapping node name to "HxWxC". */
PVAWB_API int pvawb_infer_shapes(const pvawb_graph* g, int height, int width,
                                 int channels, char** json_out);

/* Per-block parameter/MAC table.  table_rounding != 0 applies the published
 * rounding convention; as_json != 0 selects JSON over the aligned text table. */
PVAWB_API int pvawb_cost_report(const pvawb_graph* g, int height, int width,
                                int channels, int table_rounding, int as_json,
                                char** out);

/* Detection-time GMAC split (shared net, proposal head, per-region
 * classifier) for the bundled detector at 1056x640 and the given proposal
 * count.  compressed != 0 uses the low-rank classifier head. */
PVAWB_API int pvawb_detection_gmac(int compressed, int proposals, int as_json,
                                   char** out);

/* Rebuilds the bundled detector and diffs every cell of its cost table
 * against the reference figures (a JSON fixture, or the embedded copy when
 * fixture_json is NULL).  mismatch_count receives the number of differing
 * cells; the human-readable diff lands in report_out. */
PVAWB_API int pvawb_verify_table(const char* fixture_json, char** report_out,
                                 int* mismatch_count);

/* Receptive-field distribution of one node over all input->node paths.
 * max_paths bounds the path count before the walk aborts with
 * PVAWB_E_LIMIT (0 selects the default of 1e6). */
PVAWB_API int pvawb_rf_distribution(const pvawb_graph* g, const char* node,
                                    uint64_t max_paths, int as_json,
                                    char** out);

/* ---- workflows ---- */

/* Trains a small bundled classifier on a synthetic two-class image set.
 * config_json keys (all optional):
 *   net: "plain" | "crelu" | "mcrelu"   (default "mcrelu")
 *   seed, iterations, batch, per_class, momentum, weight_decay,
 *   base_lr, decay_factor, patience, window, terminate_below
 * csv_out receives the per-iteration history; summary_out a JSON summary. */
PVAWB_API int pvawb_train_toy(const char* config_json, char** csv_out,
                              char** summary_out);

/* Runs the proposal pipeline (score anchors, decode, NMS, top-k) on a
 * synthetic scene description and returns detections as JSON lines.
 * Negative pre_nms/post_nms and non-finite nms_iou select the defaults
 * (12000 / 200 / 0.4).  vote != 0 applies box voting to the kept set. */
PVAWB_API int pvawb_detect_sim(const char* scene_json, uint64_t seed,
                               int pre_nms, double nms_iou, int post_nms,
                               int vote, char** jsonl_out);

/* Rewrites the bundled per-region classifier with rank-k factor pairs and
 * reports per-region multiply counts and the detection GMAC split before and
 * after, as JSON. */
PVAWB_API int pvawb_compress_report(int rank, int proposals, char** json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PVAWB_H_ */
