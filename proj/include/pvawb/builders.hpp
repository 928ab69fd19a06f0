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

#include <optional>
#include <string>

#include "pvawb/graph.hpp"

namespace pvawb {

// Incrementally assembles a NetworkGraph. Nodes are appended in topological
// order; helper methods return the new node's name so chains read naturally.
class GraphBuilder {
 public:
  GraphBuilder(std::string graph_name, TensorShape input,
               std::string input_name = "input");

  std::string add(LayerNode n);

  std::string conv(const std::string& name, const std::string& in, int kernel,
                   int stride, int pad, int out_channels, int groups = 1);
  std::string deconv(const std::string& name, const std::string& in,
                     int kernel, int stride, int pad, int out_channels,
                     int groups = 1);
  std::string max_pool(const std::string& name, const std::string& in,
                       int kernel, int stride, int pad = 0);
  std::string relu(const std::string& name, const std::string& in);
  std::string negate(const std::string& name, const std::string& in);
  std::string scale_bias(const std::string& name, const std::string& in);
  std::string batch_norm(const std::string& name, const std::string& in);
  std::string concat(const std::string& name, std::vector<std::string> in);
  std::string add_eltwise(const std::string& name,
                          std::vector<std::string> in);
  std::string fully_connected(const std::string& name, const std::string& in,
                              int out_channels);
  std::string roi_pool(const std::string& name, const std::string& in,
                       int out_h, int out_w);

  const std::string& input_name() const { return input_name_; }
  NetworkGraph take();

 private:
  NetworkGraph g_;
  std::string input_name_;
};

// Bottleneck with modulated concatenated rectification in the middle:
// optional leading 1x1 (c_reduce), a kernel x kernel conv producing c_mid
// channels which are doubled by the negate/concat stage, then per-channel
// scale+shift, ReLU, and an optional trailing 1x1 (c_out). Convolutions are
// preceded by BatchNorm+ReLU except at the very start of a network, and the
// block stride sits on its first convolution.
struct McReluSpec {
  int c_in = 0;
  std::optional<int> c_reduce;  // leading 1x1 when set
  int c_mid = 0;                // channels before doubling
  std::optional<int> c_out;     // trailing 1x1 when set
  int kernel = 3;
  int stride = 1;
  bool residual = false;
};

// Four-way multi-scale block: 1x1, 1x1-3x3, 1x1-3x3-3x3, and (stride-2 only)
// 3x3 max-pool + 1x1, concatenated and fused by a final 1x1. Shares one
// BatchNorm+ReLU pre-activation across branches; residual by default with a
// 1x1 projection whenever the shortcut shape differs.
struct InceptionSpec {
  int c_in = 0;
  int direct = 0;                    // branch a: 1x1
  int reduce3 = 0, out3 = 0;         // branch b: 1x1 -> 3x3
  int reduce5 = 0, mid5 = 0, out5 = 0;  // branch c: 1x1 -> 3x3 -> 3x3
  std::optional<int> pool_proj;      // branch p, stride-2 blocks only
  int c_out = 0;                     // fusing 1x1
  int stride = 1;
  bool residual = true;
};

// Append a block under `block_name` reading from `in`; returns the name of
// the block's output node. `preactivate` gates the BatchNorm+ReLU in front
// of the first convolution (off for the first block of a network).
std::string append_mcrelu_block(GraphBuilder& b, const std::string& block_name,
                                const std::string& in, const McReluSpec& spec,
                                bool preactivate = true);
std::string append_inception_block(GraphBuilder& b,
                                   const std::string& block_name,
                                   const std::string& in,
                                   const InceptionSpec& spec);

// Stand-alone single-block graphs (Input -> block), mostly for inspection
// and cost queries.
NetworkGraph build_mcrelu_block(const McReluSpec& spec, TensorShape input,
                                const std::string& block_name = "block");
NetworkGraph build_inception_block(const InceptionSpec& spec,
                                   TensorShape input,
                                   const std::string& block_name = "block");

// The full shared feature extractor for 1056x640x3 input: 7x7 stem, three
// bottleneck stages, four multi-scale stages, and the three-resolution
// feature fusion ending at convf (66x40x512).
NetworkGraph build_pvanet_feature_extractor();

// Proposal head (reads the first 128 channels of convf, modelled as this
// fragment's 66x40x128 input): 3x3 conv to 384, then 1x1 score (2*42) and
// 1x1 box-delta (4*42) predictors.
NetworkGraph build_rpn_head();

// Region classifier (reads all 512 convf channels): 6x6 roi pooling, two
// 4096-wide hidden layers, and a joint score+box output of 21+84. With
// `compressed` the hidden layers are replaced by rank-512 pairs.
NetworkGraph build_classifier_head(bool compressed = false, int rank = 512);

// 9-conv all-convolutional CIFAR-10 net and its slimmed variants, used to
// compare plain, concatenated-rectification and modulated-rectification
// trade-offs at equal arithmetic cost.
enum class AllCnnVariant { original, half, half_crelu, half_mcrelu };
NetworkGraph build_allcnn_variant(AllCnnVariant v);

// Built-in graphs by name ("pvanet", "rpn", "classifier",
// "classifier-compressed", "allcnn", "allcnn-half", "allcnn-half-crelu",
// "allcnn-half-mcrelu"); throws invalid_argument for unknown names.
NetworkGraph build_builtin(const std::string& name);
std::vector<std::string> builtin_names();

}  // namespace pvawb
