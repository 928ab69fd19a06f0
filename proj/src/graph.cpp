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

#include "pvawb/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace pvawb {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "Input";
    case LayerKind::Conv: return "Conv";
    case LayerKind::Deconv: return "Deconv";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::Concat: return "Concat";
    case LayerKind::Negate: return "Negate";
    case LayerKind::ScaleBias: return "ScaleBias";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::FullyConnected: return "FullyConnected";
    case LayerKind::RoiPool: return "RoiPool";
    case LayerKind::EltwiseAdd: return "EltwiseAdd";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  static const std::map<std::string, LayerKind> table = {
      {"Input", LayerKind::Input},
      {"Conv", LayerKind::Conv},
      {"Deconv", LayerKind::Deconv},
      {"MaxPool", LayerKind::MaxPool},
      {"Concat", LayerKind::Concat},
      {"Negate", LayerKind::Negate},
      {"ScaleBias", LayerKind::ScaleBias},
      {"ReLU", LayerKind::ReLU},
      {"BatchNorm", LayerKind::BatchNorm},
      {"FullyConnected", LayerKind::FullyConnected},
      {"RoiPool", LayerKind::RoiPool},
      {"EltwiseAdd", LayerKind::EltwiseAdd},
  };
  auto it = table.find(s);
  check(it != table.end(), ErrorCode::parse_error,
        "unknown layer kind '" + s + "'");
  return it->second;
}

const char* diagnostic_kind_name(Diagnostic::Kind k) {
  switch (k) {
    case Diagnostic::Kind::DuplicateName: return "DuplicateName";
    case Diagnostic::Kind::UnknownInput: return "UnknownInput";
    case Diagnostic::Kind::CycleDetected: return "CycleDetected";
    case Diagnostic::Kind::MissingInputNode: return "MissingInputNode";
    case Diagnostic::Kind::BadAttribute: return "BadAttribute";
    case Diagnostic::Kind::ChannelOrSpatialMismatch:
      return "ChannelOrSpatialMismatch";
    case Diagnostic::Kind::NegativeDimension: return "NegativeDimension";
  }
  return "?";
}

int NetworkGraph::index_of(const std::string& node_name) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].name == node_name) return static_cast<int>(i);
  return -1;
}

const LayerNode* NetworkGraph::find(const std::string& node_name) const {
  int i = index_of(node_name);
  return i < 0 ? nullptr : &nodes[i];
}

const LayerNode& NetworkGraph::at(const std::string& node_name) const {
  const LayerNode* n = find(node_name);
  check(n != nullptr, ErrorCode::invalid_argument,
        "graph '" + name + "' has no node '" + node_name + "'");
  return *n;
}

const LayerNode& NetworkGraph::input_node() const {
  for (const auto& n : nodes)
    if (n.kind == LayerKind::Input) return n;
  fail(ErrorCode::invalid_argument, "graph '" + name + "' has no Input node");
}

std::vector<std::string> NetworkGraph::sinks() const {
  std::set<std::string> consumed;
  for (const auto& n : nodes)
    for (const auto& in : n.inputs) consumed.insert(in);
  std::vector<std::string> out;
  for (const auto& n : nodes)
    if (!consumed.count(n.name)) out.push_back(n.name);
  return out;
}

namespace {

std::string shape_str(const TensorShape& s) {
  std::ostringstream os;
  os << s.h << "x" << s.w << "x" << s.c;
  return os.str();
}

int conv_out_extent(int in, int pad, int kernel, int stride) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

TensorShape node_output_shape(const LayerNode& n,
                              const std::vector<TensorShape>& in) {
  auto want_arity = [&](size_t k) {
    check(in.size() == k, ErrorCode::invalid_argument,
          "node '" + n.name + "' (" + kind_name(n.kind) + ") expects " +
              std::to_string(k) + " input(s), got " +
              std::to_string(in.size()));
  };
  switch (n.kind) {
    case LayerKind::Input:
      want_arity(0);
      return TensorShape{};  // resolved by infer_shapes
    case LayerKind::Conv:
    case LayerKind::MaxPool: {
      want_arity(1);
      const TensorShape& s = in[0];
      check(s.h + 2 * n.pad >= n.kernel_h && s.w + 2 * n.pad >= n.kernel_w,
            ErrorCode::negative_dimension,
            "node '" + n.name + "': kernel " + std::to_string(n.kernel_h) +
                "x" + std::to_string(n.kernel_w) +
                " exceeds padded input " + shape_str(s));
      int oh = conv_out_extent(s.h, n.pad, n.kernel_h, n.stride);
      int ow = conv_out_extent(s.w, n.pad, n.kernel_w, n.stride);
      if (n.kind == LayerKind::MaxPool) return {oh, ow, s.c};
      check(s.c % n.groups == 0 && n.out_channels % n.groups == 0,
            ErrorCode::channel_mismatch,
            "node '" + n.name + "': groups " + std::to_string(n.groups) +
                " must divide in (" + std::to_string(s.c) + ") and out (" +
                std::to_string(n.out_channels) + ") channels");
      return {oh, ow, n.out_channels};
    }
    case LayerKind::Deconv: {
      want_arity(1);
      const TensorShape& s = in[0];
      int oh = (s.h - 1) * n.stride - 2 * n.pad + n.kernel_h;
      int ow = (s.w - 1) * n.stride - 2 * n.pad + n.kernel_w;
      check(oh > 0 && ow > 0, ErrorCode::negative_dimension,
            "node '" + n.name + "': deconv output collapses to " +
                std::to_string(oh) + "x" + std::to_string(ow));
      check(s.c % n.groups == 0 && n.out_channels % n.groups == 0,
            ErrorCode::channel_mismatch,
            "node '" + n.name + "': groups " + std::to_string(n.groups) +
                " must divide in (" + std::to_string(s.c) + ") and out (" +
                std::to_string(n.out_channels) + ") channels");
      return {oh, ow, n.out_channels};
    }
    case LayerKind::Concat: {
      check(!in.empty(), ErrorCode::invalid_argument,
            "node '" + n.name + "': concat needs at least one input");
      int c = 0;
      for (const auto& s : in) {
        check(s.h == in[0].h && s.w == in[0].w, ErrorCode::channel_mismatch,
              "node '" + n.name + "': concat inputs disagree spatially (" +
                  shape_str(in[0]) + " vs " + shape_str(s) + ")");
        c += s.c;
      }
      return {in[0].h, in[0].w, c};
    }
    case LayerKind::EltwiseAdd: {
      check(in.size() >= 2, ErrorCode::invalid_argument,
            "node '" + n.name + "': eltwise add needs at least two inputs");
      for (const auto& s : in)
        check(s == in[0], ErrorCode::channel_mismatch,
              "node '" + n.name + "': add inputs disagree (" +
                  shape_str(in[0]) + " vs " + shape_str(s) + ")");
      return in[0];
    }
    case LayerKind::Negate:
    case LayerKind::ScaleBias:
    case LayerKind::ReLU:
    case LayerKind::BatchNorm:
      want_arity(1);
      return in[0];
    case LayerKind::FullyConnected:
      want_arity(1);
      return {1, 1, n.out_channels};
    case LayerKind::RoiPool:
      want_arity(1);
      return {n.kernel_h, n.kernel_w, in[0].c};
  }
  fail(ErrorCode::internal, "unhandled layer kind");
}

std::map<std::string, TensorShape> infer_shapes(const NetworkGraph& g,
                                                const TensorShape& input) {
  check(input.h > 0 && input.w > 0 && input.c > 0,
        ErrorCode::invalid_argument, "input shape must be positive");
  std::map<std::string, TensorShape> shapes;
  for (const auto& n : g.nodes) {
    if (n.kind == LayerKind::Input) {
      check(n.inputs.empty(), ErrorCode::invalid_argument,
            "Input node '" + n.name + "' cannot have inputs");
      shapes[n.name] = input;
      continue;
    }
    std::vector<TensorShape> in;
    in.reserve(n.inputs.size());
    for (const auto& ref : n.inputs) {
      auto it = shapes.find(ref);
      check(it != shapes.end(), ErrorCode::invalid_argument,
            "node '" + n.name + "' references '" + ref +
                "' before it is defined");
      in.push_back(it->second);
    }
    shapes[n.name] = node_output_shape(n, in);
  }
  return shapes;
}

std::vector<Diagnostic> validate(const NetworkGraph& g) {
  std::vector<Diagnostic> out;
  auto add = [&](Diagnostic::Kind k, const std::string& node,
                 std::string msg) {
    out.push_back({k, node, std::move(msg)});
  };

  std::map<std::string, int> first_index;
  int input_count = 0;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    auto [it, inserted] = first_index.emplace(n.name, static_cast<int>(i));
    if (!inserted)
      add(Diagnostic::Kind::DuplicateName, n.name,
          "name already used by node #" + std::to_string(it->second));
    if (n.kind == LayerKind::Input) {
      ++input_count;
      if (!n.inputs.empty())
        add(Diagnostic::Kind::BadAttribute, n.name,
            "Input node cannot consume other nodes");
    } else if (n.inputs.empty()) {
      add(Diagnostic::Kind::BadAttribute, n.name, "node has no inputs");
    }
    for (const auto& ref : n.inputs) {
      int j = g.index_of(ref);
      if (j < 0)
        add(Diagnostic::Kind::UnknownInput, n.name,
            "references unknown node '" + ref + "'");
      else if (j >= static_cast<int>(i))
        // Topological order is part of the contract, so any forward or
        // self reference is reported as a cycle.
        add(Diagnostic::Kind::CycleDetected, n.name,
            "references '" + ref + "' which is not defined earlier");
    }
    bool windowed = n.kind == LayerKind::Conv || n.kind == LayerKind::Deconv ||
                    n.kind == LayerKind::MaxPool ||
                    n.kind == LayerKind::RoiPool;
    if (windowed && (n.kernel_h <= 0 || n.kernel_w <= 0))
      add(Diagnostic::Kind::BadAttribute, n.name, "kernel must be positive");
    if (n.stride <= 0)
      add(Diagnostic::Kind::BadAttribute, n.name, "stride must be positive");
    if (n.pad < 0)
      add(Diagnostic::Kind::BadAttribute, n.name, "pad must be >= 0");
    bool channelled = n.kind == LayerKind::Conv ||
                      n.kind == LayerKind::Deconv ||
                      n.kind == LayerKind::FullyConnected;
    if (channelled && n.out_channels <= 0)
      add(Diagnostic::Kind::BadAttribute, n.name,
          "out_channels must be positive");
    if (n.groups <= 0)
      add(Diagnostic::Kind::BadAttribute, n.name, "groups must be positive");
  }
  if (input_count != 1)
    add(Diagnostic::Kind::MissingInputNode, "",
        "graph must contain exactly one Input node, found " +
            std::to_string(input_count));
  if (g.input_shape.h <= 0 || g.input_shape.w <= 0 || g.input_shape.c <= 0)
    add(Diagnostic::Kind::BadAttribute, "",
        "graph input shape must be positive");

  // Shape-level checks only make sense on a structurally sound graph.
  if (!out.empty()) return out;
  try {
    infer_shapes(g, g.input_shape);
  } catch (const Error& e) {
    auto kind = e.code() == ErrorCode::negative_dimension
                    ? Diagnostic::Kind::NegativeDimension
                    : Diagnostic::Kind::ChannelOrSpatialMismatch;
    add(kind, "", e.what());
  }
  return out;
}

}  // namespace pvawb
