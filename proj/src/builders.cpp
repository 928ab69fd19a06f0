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

#include "pvawb/builders.hpp"

#include <utility>

namespace pvawb {

GraphBuilder::GraphBuilder(std::string graph_name, TensorShape input,
                           std::string input_name)
    : input_name_(std::move(input_name)) {
  g_.name = std::move(graph_name);
  g_.input_shape = input;
  LayerNode in;
  in.name = input_name_;
  in.kind = LayerKind::Input;
  g_.nodes.push_back(std::move(in));
}

std::string GraphBuilder::add(LayerNode n) {
  check(g_.index_of(n.name) < 0, ErrorCode::invalid_spec,
        "duplicate node name '" + n.name + "'");
  for (const auto& ref : n.inputs)
    check(g_.index_of(ref) >= 0, ErrorCode::invalid_spec,
          "node '" + n.name + "' references missing '" + ref + "'");
  g_.nodes.push_back(std::move(n));
  return g_.nodes.back().name;
}

std::string GraphBuilder::conv(const std::string& name, const std::string& in,
                               int kernel, int stride, int pad,
                               int out_channels, int groups) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::Conv;
  n.kernel_h = n.kernel_w = kernel;
  n.stride = stride;
  n.pad = pad;
  n.out_channels = out_channels;
  n.groups = groups;
  n.inputs = {in};
  return add(std::move(n));
}

std::string GraphBuilder::deconv(const std::string& name,
                                 const std::string& in, int kernel, int stride,
                                 int pad, int out_channels, int groups) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::Deconv;
  n.kernel_h = n.kernel_w = kernel;
  n.stride = stride;
  n.pad = pad;
  n.out_channels = out_channels;
  n.groups = groups;
  n.inputs = {in};
  return add(std::move(n));
}

std::string GraphBuilder::max_pool(const std::string& name,
                                   const std::string& in, int kernel,
                                   int stride, int pad) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::MaxPool;
  n.kernel_h = n.kernel_w = kernel;
  n.stride = stride;
  n.pad = pad;
  n.inputs = {in};
  return add(std::move(n));
}

namespace {
LayerNode unary(const std::string& name, LayerKind kind,
                const std::string& in) {
  LayerNode n;
  n.name = name;
  n.kind = kind;
  n.inputs = {in};
  return n;
}
}  // namespace

std::string GraphBuilder::relu(const std::string& name,
                               const std::string& in) {
  return add(unary(name, LayerKind::ReLU, in));
}

std::string GraphBuilder::negate(const std::string& name,
                                 const std::string& in) {
  return add(unary(name, LayerKind::Negate, in));
}

std::string GraphBuilder::scale_bias(const std::string& name,
                                     const std::string& in) {
  return add(unary(name, LayerKind::ScaleBias, in));
}

std::string GraphBuilder::batch_norm(const std::string& name,
                                     const std::string& in) {
  return add(unary(name, LayerKind::BatchNorm, in));
}

std::string GraphBuilder::concat(const std::string& name,
                                 std::vector<std::string> in) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::Concat;
  n.inputs = std::move(in);
  return add(std::move(n));
}

std::string GraphBuilder::add_eltwise(const std::string& name,
                                      std::vector<std::string> in) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::EltwiseAdd;
  n.inputs = std::move(in);
  return add(std::move(n));
}

std::string GraphBuilder::fully_connected(const std::string& name,
                                          const std::string& in,
                                          int out_channels) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::FullyConnected;
  n.out_channels = out_channels;
  n.inputs = {in};
  return add(std::move(n));
}

std::string GraphBuilder::roi_pool(const std::string& name,
                                   const std::string& in, int out_h,
                                   int out_w) {
  LayerNode n;
  n.name = name;
  n.kind = LayerKind::RoiPool;
  n.kernel_h = out_h;
  n.kernel_w = out_w;
  n.inputs = {in};
  return add(std::move(n));
}

NetworkGraph GraphBuilder::take() { return std::move(g_); }

namespace {

// BatchNorm + ReLU in front of a convolution (pre-activation ordering).
std::string preact(GraphBuilder& b, const std::string& stage,
                   const std::string& in) {
  std::string x = b.batch_norm(stage + "/bn", in);
  return b.relu(stage + "/relu", x);
}

// The rectification stage shared by the stem and the bottleneck blocks:
// BatchNorm, then concat(x, -x) to double the channels, then a learned
// per-channel scale/shift and ReLU. Folding the negation into the concat
// input keeps both halves on the same statistics.
std::string crelu_stage(GraphBuilder& b, const std::string& stage,
                        const std::string& conv_out) {
  std::string x = b.batch_norm(stage + "/bn", conv_out);
  std::string neg = b.negate(stage + "/neg", x);
  x = b.concat(stage + "/concat", {x, neg});
  x = b.scale_bias(stage + "/scale", x);
  return b.relu(stage + "/relu", x);
}

}  // namespace

std::string append_mcrelu_block(GraphBuilder& b, const std::string& block_name,
                                const std::string& in, const McReluSpec& spec,
                                bool preactivate) {
  check(spec.c_in > 0 && spec.c_mid > 0, ErrorCode::invalid_spec,
        "block '" + block_name + "': c_in and c_mid must be positive");
  check(spec.kernel > 0 && spec.kernel % 2 == 1, ErrorCode::invalid_spec,
        "block '" + block_name + "': kernel must be odd");
  check(spec.stride >= 1, ErrorCode::invalid_spec,
        "block '" + block_name + "': bad stride");
  check(!spec.c_reduce || *spec.c_reduce > 0, ErrorCode::invalid_spec,
        "block '" + block_name + "': c_reduce must be positive");
  check(!spec.c_out || *spec.c_out > 0, ErrorCode::invalid_spec,
        "block '" + block_name + "': c_out must be positive");
  check(!spec.residual || spec.c_out, ErrorCode::invalid_spec,
        "block '" + block_name + "': residual blocks need a trailing 1x1");

  std::string x = in;
  std::string shortcut = in;
  // The block stride always rides on the first convolution.
  if (spec.c_reduce) {
    if (preactivate) {
      x = preact(b, block_name + "/1", x);
      shortcut = x;
    }
    x = b.conv(block_name + "/1/conv", x, 1, spec.stride, 0, *spec.c_reduce);
    x = preact(b, block_name + "/2", x);
    x = b.conv(block_name + "/2/conv", x, spec.kernel, 1, spec.kernel / 2,
               spec.c_mid);
  } else {
    if (preactivate) {
      x = preact(b, block_name + "/2", x);
      shortcut = x;
    }
    x = b.conv(block_name + "/2/conv", x, spec.kernel, spec.stride,
               spec.kernel / 2, spec.c_mid);
  }
  x = crelu_stage(b, block_name + "/3", x);
  if (spec.c_out)
    x = b.conv(block_name + "/3/conv", x, 1, 1, 0, *spec.c_out);
  if (!spec.residual) return x;

  int out_ch = *spec.c_out;
  if (spec.stride != 1 || spec.c_in != out_ch)
    shortcut =
        b.conv(block_name + "/proj", shortcut, 1, spec.stride, 0, out_ch);
  return b.add_eltwise(block_name + "/add", {x, shortcut});
}

std::string append_inception_block(GraphBuilder& b,
                                   const std::string& block_name,
                                   const std::string& in,
                                   const InceptionSpec& spec) {
  check(spec.c_in > 0 && spec.direct > 0 && spec.reduce3 > 0 &&
            spec.out3 > 0 && spec.reduce5 > 0 && spec.mid5 > 0 &&
            spec.out5 > 0 && spec.c_out > 0,
        ErrorCode::invalid_spec,
        "block '" + block_name + "': all branch widths must be positive");
  check(spec.stride == 1 || spec.stride == 2, ErrorCode::invalid_spec,
        "block '" + block_name + "': stride must be 1 or 2");
  check(!spec.pool_proj || spec.stride == 2, ErrorCode::invalid_spec,
        "block '" + block_name + "': pool branch only attaches at stride 2");
  check(!spec.pool_proj || *spec.pool_proj > 0, ErrorCode::invalid_spec,
        "block '" + block_name + "': pool_proj must be positive");

  const int s = spec.stride;
  std::string pre = preact(b, block_name + "/pre", in);

  std::string a = b.conv(block_name + "/a/conv", pre, 1, s, 0, spec.direct);

  std::string bb = b.conv(block_name + "/b/1/conv", pre, 1, s, 0, spec.reduce3);
  bb = preact(b, block_name + "/b/2", bb);
  bb = b.conv(block_name + "/b/2/conv", bb, 3, 1, 1, spec.out3);

  std::string c = b.conv(block_name + "/c/1/conv", pre, 1, s, 0, spec.reduce5);
  c = preact(b, block_name + "/c/2", c);
  c = b.conv(block_name + "/c/2/conv", c, 3, 1, 1, spec.mid5);
  c = preact(b, block_name + "/c/3", c);
  c = b.conv(block_name + "/c/3/conv", c, 3, 1, 1, spec.out5);

  std::vector<std::string> branches = {a, bb, c};
  if (spec.pool_proj) {
    std::string p = b.max_pool(block_name + "/p/pool", pre, 3, 2, 1);
    p = b.conv(block_name + "/p/conv", p, 1, 1, 0, *spec.pool_proj);
    branches.push_back(p);
  }
  std::string x = b.concat(block_name + "/concat", branches);
  x = preact(b, block_name + "/out", x);
  x = b.conv(block_name + "/out/conv", x, 1, 1, 0, spec.c_out);
  if (!spec.residual) return x;

  std::string shortcut = in;
  if (s != 1 || spec.c_in != spec.c_out)
    shortcut = b.conv(block_name + "/proj", pre, 1, s, 0, spec.c_out);
  return b.add_eltwise(block_name + "/add", {x, shortcut});
}

NetworkGraph build_mcrelu_block(const McReluSpec& spec, TensorShape input,
                                const std::string& block_name) {
  check(input.c == spec.c_in, ErrorCode::invalid_spec,
        "input channels disagree with spec.c_in");
  GraphBuilder b("mcrelu", input);
  append_mcrelu_block(b, block_name, b.input_name(), spec);
  return b.take();
}

NetworkGraph build_inception_block(const InceptionSpec& spec,
                                   TensorShape input,
                                   const std::string& block_name) {
  check(input.c == spec.c_in, ErrorCode::invalid_spec,
        "input channels disagree with spec.c_in");
  GraphBuilder b("inception", input);
  append_inception_block(b, block_name, b.input_name(), spec);
  return b.take();
}

NetworkGraph build_pvanet_feature_extractor() {
  GraphBuilder b("pvanet", {1056, 640, 3});

  // Stem: bare 7x7 modulated-rectification conv, no surrounding 1x1s.
  McReluSpec stem;
  stem.c_in = 3;
  stem.c_mid = 16;
  stem.kernel = 7;
  stem.stride = 2;
  std::string x =
      append_mcrelu_block(b, "conv1_1", b.input_name(), stem, false);
  x = b.max_pool("pool1_1", x, 3, 2, 1);

  struct BottleneckRow {
    const char* name;
    int c_in, reduce, mid, out, stride;
  };
  static const BottleneckRow bottlenecks[] = {
      {"conv2_1", 32, 24, 24, 64, 1},  {"conv2_2", 64, 24, 24, 64, 1},
      {"conv2_3", 64, 24, 24, 64, 1},  {"conv3_1", 64, 48, 48, 128, 2},
      {"conv3_2", 128, 48, 48, 128, 1}, {"conv3_3", 128, 48, 48, 128, 1},
      {"conv3_4", 128, 48, 48, 128, 1},
  };
  for (const auto& r : bottlenecks) {
    McReluSpec s;
    s.c_in = r.c_in;
    s.c_reduce = r.reduce;
    s.c_mid = r.mid;
    s.c_out = r.out;
    s.kernel = 3;
    s.stride = r.stride;
    s.residual = true;
    x = append_mcrelu_block(b, r.name, x, s);
  }
  std::string conv3_4 = x;

  struct InceptionRow {
    const char* name;
    int c_in, direct, r3, o3, r5, m5, o5, pool, out, stride;
  };
  static const InceptionRow stages[] = {
      {"conv4_1", 128, 64, 48, 128, 24, 48, 48, 128, 256, 2},
      {"conv4_2", 256, 64, 64, 128, 24, 48, 48, 0, 256, 1},
      {"conv4_3", 256, 64, 64, 128, 24, 48, 48, 0, 256, 1},
      {"conv4_4", 256, 64, 64, 128, 24, 48, 48, 0, 256, 1},
      {"conv5_1", 256, 64, 96, 192, 32, 64, 64, 128, 384, 2},
      {"conv5_2", 384, 64, 96, 192, 32, 64, 64, 0, 384, 1},
      {"conv5_3", 384, 64, 96, 192, 32, 64, 64, 0, 384, 1},
      {"conv5_4", 384, 64, 96, 192, 32, 64, 64, 0, 384, 1},
  };
  std::string conv4_4;
  for (const auto& r : stages) {
    InceptionSpec s;
    s.c_in = r.c_in;
    s.direct = r.direct;
    s.reduce3 = r.r3;
    s.out3 = r.o3;
    s.reduce5 = r.r5;
    s.mid5 = r.m5;
    s.out5 = r.o5;
    if (r.pool) s.pool_proj = r.pool;
    s.c_out = r.out;
    s.stride = r.stride;
    x = append_inception_block(b, r.name, x, s);
    if (std::string(r.name) == "conv4_4") conv4_4 = x;
  }
  std::string conv5_4 = x;

  // Three-resolution fusion at the conv4 scale: pool conv3 down, carry conv4,
  // upsample conv5 with a channel-wise 4x4 deconvolution.
  std::string down = b.max_pool("downscale", conv3_4, 3, 2, 1);
  std::string up = b.deconv("upscale", conv5_4, 4, 2, 1, 384, 384);
  std::string cat = b.concat("concat", {down, conv4_4, up});
  std::string f = preact(b, "convf", cat);
  b.conv("convf/conv", f, 1, 1, 0, 512);
  return b.take();
}

NetworkGraph build_rpn_head() {
  // The proposal network taps only the first 128 channels of convf; the
  // fragment models that slice as its own 66x40x128 input.
  GraphBuilder b("rpn", {66, 40, 128});
  std::string x = b.conv("rpn/conv", b.input_name(), 3, 1, 1, 384);
  x = b.relu("rpn/relu", x);
  b.conv("rpn/score", x, 1, 1, 0, 2 * 42);
  b.conv("rpn/bbox", x, 1, 1, 0, 4 * 42);
  return b.take();
}

NetworkGraph build_classifier_head(bool compressed, int rank) {
  check(rank > 0, ErrorCode::invalid_spec, "rank must be positive");
  GraphBuilder b(compressed ? "classifier-compressed" : "classifier",
                 {66, 40, 512});
  std::string x = b.roi_pool("roi_pool", b.input_name(), 6, 6);
  if (compressed) {
    x = b.fully_connected("fc6_a", x, rank);
    x = b.fully_connected("fc6_b", x, 4096);
  } else {
    x = b.fully_connected("fc6", x, 4096);
  }
  x = b.relu("fc6/relu", x);
  if (compressed) {
    x = b.fully_connected("fc7_a", x, rank);
    x = b.fully_connected("fc7_b", x, 4096);
  } else {
    x = b.fully_connected("fc7", x, 4096);
  }
  x = b.relu("fc7/relu", x);
  b.fully_connected("score", x, 21);
  b.fully_connected("bbox", x, 84);
  return b.take();
}

NetworkGraph build_allcnn_variant(AllCnnVariant v) {
  const bool half = v != AllCnnVariant::original;
  const bool crelu = v == AllCnnVariant::half_crelu ||
                     v == AllCnnVariant::half_mcrelu;
  const bool modulated = v == AllCnnVariant::half_mcrelu;
  const char* names[] = {"allcnn", "allcnn-half", "allcnn-half-crelu",
                         "allcnn-half-mcrelu"};
  GraphBuilder b(names[static_cast<int>(v)], {32, 32, 3});

  struct Row {
    int kernel, channels, stride;
  };
  // The nine convolutions of the all-convolutional CIFAR-10 baseline;
  // stride-2 layers stand in for pooling.
  static const Row rows[] = {{3, 96, 1},  {3, 96, 1},  {3, 96, 2},
                             {3, 192, 1}, {3, 192, 1}, {3, 192, 2},
                             {3, 192, 1}, {1, 192, 1}, {1, 10, 1}};
  std::string x = b.input_name();
  for (int i = 0; i < 9; ++i) {
    const Row& r = rows[i];
    // Only the first six layers shrink; the rectification doubling (when
    // present) restores their effective width.
    int ch = (half && i < 6) ? r.channels / 2 : r.channels;
    std::string name = "conv" + std::to_string(i + 1);
    x = b.conv(name, x, r.kernel, r.stride, r.kernel / 2, ch);
    if (crelu && i < 6) {
      std::string neg = b.negate(name + "/neg", x);
      x = b.concat(name + "/concat", {x, neg});
      if (modulated) x = b.scale_bias(name + "/scale", x);
    }
    x = b.relu(name + "/relu", x);
  }
  b.max_pool("global_pool", x, 8, 1, 0);
  return b.take();
}

NetworkGraph build_builtin(const std::string& name) {
  if (name == "pvanet") return build_pvanet_feature_extractor();
  if (name == "rpn") return build_rpn_head();
  if (name == "classifier") return build_classifier_head(false);
  if (name == "classifier-compressed") return build_classifier_head(true);
  if (name == "allcnn") return build_allcnn_variant(AllCnnVariant::original);
  if (name == "allcnn-half") return build_allcnn_variant(AllCnnVariant::half);
  if (name == "allcnn-half-crelu")
    return build_allcnn_variant(AllCnnVariant::half_crelu);
  if (name == "allcnn-half-mcrelu")
    return build_allcnn_variant(AllCnnVariant::half_mcrelu);
  fail(ErrorCode::invalid_argument, "unknown builtin graph '" + name + "'");
}

std::vector<std::string> builtin_names() {
  return {"pvanet",
          "rpn",
          "classifier",
          "classifier-compressed",
          "allcnn",
          "allcnn-half",
          "allcnn-half-crelu",
          "allcnn-half-mcrelu"};
}

}  // namespace pvawb
