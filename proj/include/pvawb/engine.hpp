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
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvawb/box.hpp"
#include "pvawb/graph.hpp"
#include "pvawb/tensor.hpp"

namespace pvawb {

// Named parameter tensors. Keys are "<node name>.<param>":
//   Conv/FullyConnected   .weight (+ optional .bias)
//   Deconv                .weight, stored (in_c, out_c/groups, kh, kw)
//   ScaleBias             .scale, .bias (per channel)
//   BatchNorm             .gamma, .beta, .running_mean, .running_var
// Conv weights are (out_c, in_c/groups, kh, kw); FullyConnected weights are
// (out_c, in_h*in_w*in_c) over the row-major flattening of the input.
struct WeightStore {
  struct Entry {
    std::vector<int> shape;
    std::vector<double> data;
    long long count() const {
      long long p = 1;
      for (int d : shape) p *= d;
      return p;
    }
  };
  std::map<std::string, Entry> entries;
  nlohmann::json meta;  // free-form annotations, e.g. factorization info

  bool has(const std::string& key) const { return entries.count(key) > 0; }
  const Entry& at(const std::string& key) const;
  Entry& at(const std::string& key);
  Entry& create(const std::string& key, std::vector<int> shape);
};

enum class ExecMode { inference, train };

// Executed multiply-accumulate counts per node. Transposed convolutions run
// over an explicit zero-stuffed buffer, so their executed count equals the
// analytical params*out_h*out_w convention.
struct ExecStats {
  long long macs = 0;
  std::map<std::string, long long> per_node;
};

using ActivationMap = std::map<std::string, Tensor>;

// Runs the whole DAG. `rois` feeds RoiPool nodes (feature-map coordinates,
// batch-1 input only; the output batch equals rois->size()). In train mode
// BatchNorm normalises with batch statistics and updates the running
// averages held in `ws` (momentum 0.9, eps 1e-5). Every node's output is
// checked to be finite. Honours the PVAWB_THREADS environment cap.
ActivationMap forward(const NetworkGraph& g, WeightStore& ws,
                      const Tensor& input, ExecMode mode,
                      ExecStats* stats = nullptr,
                      const std::vector<Box>* rois = nullptr);

// Reverse sweep from one sink. `mode` must match the forward pass (BatchNorm
// recomputes its batch statistics from the recorded activations). Deconv and
// RoiPool are inference-time features and reject gradients.
struct BackwardResult {
  std::map<std::string, WeightStore::Entry> grads;  // keyed like the store
  Tensor input_grad;
};
BackwardResult backward(const NetworkGraph& g, const WeightStore& ws,
                        const ActivationMap& acts, const std::string& sink,
                        const Tensor& sink_grad,
                        ExecMode mode = ExecMode::train);

// Mean cross-entropy over the batch from (N, C, 1, 1) logits, with the
// gradient already divided by N. Numerically stabilised by the max trick.
struct SoftmaxCeResult {
  double loss = 0;
  Tensor dlogits;
  std::vector<int> predicted;
};
SoftmaxCeResult softmax_cross_entropy(const Tensor& logits,
                                      const std::vector<int>& labels);

// Individual kernels, also usable on their own. Weight layouts as above.
Tensor conv2d(const Tensor& x, const WeightStore::Entry& w,
              const std::vector<double>* bias, int stride, int pad,
              int groups = 1, long long* macs = nullptr);
Tensor deconv2d(const Tensor& x, const WeightStore::Entry& w,
                const std::vector<double>* bias, int stride, int pad,
                int groups = 1, long long* macs = nullptr);
Tensor max_pool2d(const Tensor& x, int kernel, int stride, int pad);
// Boxes in feature-map coordinates scaled by spatial_scale; a roi that
// clamps to nothing raises degenerate_roi.
Tensor roi_pool(const Tensor& x, const std::vector<Box>& rois, int out_h,
                int out_w, double spatial_scale = 1.0);
Tensor fully_connected(const Tensor& x, const WeightStore::Entry& w,
                       const std::vector<double>* bias,
                       long long* macs = nullptr);

// He-normal initialisation for conv/fc weights, identity for normalisation
// and scaling stages, bilinear interpolation kernels for deconvolutions.
// Biases (zero) are created for FullyConnected always and for Conv when
// conv_bias is set.
void init_weights(const NetworkGraph& g, WeightStore& ws, uint64_t seed,
                  bool conv_bias = false);

// All-ones weights / identity statistics, for connectivity probing.
WeightStore make_surrogate_weights(const NetworkGraph& g);

// Exact inference-time rewrite: every BatchNorm directly and solely fed by a
// Conv is folded into that conv's weights/bias. Returns the rewritten graph
// and matching store; other BatchNorms are left in place.
std::pair<NetworkGraph, WeightStore> fold_batchnorm(const NetworkGraph& g,
                                                    const WeightStore& ws);

}  // namespace pvawb
