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

#include <map>
#include <string>
#include <vector>

#include "pvawb/errors.hpp"

namespace pvawb {

// Spatial shape of one feature map. Batch is an execution-time concept and
// never part of the static graph.
struct TensorShape {
  int h = 0;
  int w = 0;
  int c = 0;
  bool operator==(const TensorShape&) const = default;
};

enum class LayerKind {
  Input,
  Conv,
  Deconv,
  MaxPool,
  Concat,
  Negate,
  ScaleBias,
  ReLU,
  BatchNorm,
  FullyConnected,
  RoiPool,
  EltwiseAdd,
};

const char* kind_name(LayerKind k);
LayerKind kind_from_name(const std::string& s);  // throws parse_error

struct LayerNode {
  std::string name;
  LayerKind kind = LayerKind::Input;
  // kernel is the window for Conv/Deconv/MaxPool and the output grid for
  // RoiPool; meaningless (1x1) elsewhere.
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
  int out_channels = 0;  // Conv/Deconv/FullyConnected only
  int groups = 1;        // Conv/Deconv only
  std::vector<std::string> inputs;

  bool operator==(const LayerNode&) const = default;
};

// A directed acyclic graph of layers in topological order. Exactly one node
// has kind Input; its shape lives on the graph so fragments stay
// self-describing.
struct NetworkGraph {
  std::string name;
  TensorShape input_shape;
  std::vector<LayerNode> nodes;

  bool operator==(const NetworkGraph&) const = default;

  // -1 when absent.
  int index_of(const std::string& node_name) const;
  const LayerNode* find(const std::string& node_name) const;
  const LayerNode& at(const std::string& node_name) const;  // throws
  const LayerNode& input_node() const;                      // throws
  // Nodes no other node consumes, in graph order.
  std::vector<std::string> sinks() const;
};

struct Diagnostic {
  enum class Kind {
    DuplicateName,
    UnknownInput,
    CycleDetected,       // an input reference pointing at a later node
    MissingInputNode,    // no (or several) Input nodes
    BadAttribute,        // non-positive kernel/stride/out_channels, ...
    ChannelOrSpatialMismatch,
    NegativeDimension,
  };
  Kind kind;
  std::string node;
  std::string message;
};

const char* diagnostic_kind_name(Diagnostic::Kind k);

// Structural and shape checks. Returns every problem found instead of
// stopping at the first; an empty result means infer_shapes will succeed.
std::vector<Diagnostic> validate(const NetworkGraph& g);

// Output shape of every node, keyed by name. `input` overrides the shape of
// the Input node (pass g.input_shape to use the recorded one). Throws Error
// with channel_mismatch / negative_dimension / unsupported on bad graphs.
std::map<std::string, TensorShape> infer_shapes(const NetworkGraph& g,
                                                const TensorShape& input);

// Shape rule for a single node given resolved input shapes. Conv and MaxPool
// use floor((in + 2*pad - kernel) / stride) + 1 per axis; Deconv inverts it
// as (in - 1) * stride - 2*pad + kernel.
TensorShape node_output_shape(const LayerNode& n,
                              const std::vector<TensorShape>& in);

}  // namespace pvawb
