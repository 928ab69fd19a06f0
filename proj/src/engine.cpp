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

#include "pvawb/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <thread>

namespace pvawb {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

int thread_cap() {
  static const int cap = [] {
    unsigned hw = std::thread::hardware_concurrency();
    int n = hw ? static_cast<int>(hw) : 1;
    if (const char* e = std::getenv("PVAWB_THREADS")) {
      int v = std::atoi(e);
      if (v > 0 && v < n) n = v;
    }
    return n;
  }();
  return cap;
}

// Deterministic by construction: tasks write disjoint output slices and
// nothing is accumulated across threads, so scheduling order is irrelevant.
// Bodies must not throw; validation happens before entering here.
void parallel_for(long long begin, long long end,
                  const std::function<void(long long)>& fn) {
  long long total = end - begin;
  int nt = static_cast<int>(std::min<long long>(thread_cap(), total));
  if (nt <= 1) {
    for (long long i = begin; i < end; ++i) fn(i);
    return;
  }
  std::atomic<long long> next(begin);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (long long i; (i = next.fetch_add(1)) < end;) fn(i);
    });
  for (auto& t : pool) t.join();
}

void check_weight_rank(const WeightStore::Entry& w, size_t rank,
                       const char* what) {
  check(w.shape.size() == rank &&
            w.count() == static_cast<long long>(w.data.size()),
        ErrorCode::invalid_argument,
        std::string(what) + " weight has a malformed shape");
}

}  // namespace

const WeightStore::Entry& WeightStore::at(const std::string& key) const {
  auto it = entries.find(key);
  check(it != entries.end(), ErrorCode::invalid_argument,
        "weight store is missing '" + key + "'");
  return it->second;
}

WeightStore::Entry& WeightStore::at(const std::string& key) {
  auto it = entries.find(key);
  check(it != entries.end(), ErrorCode::invalid_argument,
        "weight store is missing '" + key + "'");
  return it->second;
}

WeightStore::Entry& WeightStore::create(const std::string& key,
                                        std::vector<int> shape) {
  Entry e;
  e.shape = std::move(shape);
  long long n = 1;
  for (int d : e.shape) {
    check(d > 0, ErrorCode::invalid_argument,
          "weight '" + key + "' has a non-positive dimension");
    n *= d;
  }
  e.data.assign(static_cast<size_t>(n), 0.0);
  entries[key] = std::move(e);
  return entries[key];
}

Tensor conv2d(const Tensor& x, const WeightStore::Entry& w,
              const std::vector<double>* bias, int stride, int pad,
              int groups, long long* macs) {
  check_weight_rank(w, 4, "conv");
  const int oc = w.shape[0], icg = w.shape[1], kh = w.shape[2],
            kw = w.shape[3];
  check(groups >= 1 && oc % groups == 0 && x.c == icg * groups,
        ErrorCode::channel_mismatch,
        "conv weight (" + std::to_string(oc) + "," + std::to_string(icg) +
            ") does not fit input with " + std::to_string(x.c) +
            " channels at groups=" + std::to_string(groups));
  check(stride >= 1 && pad >= 0, ErrorCode::invalid_argument,
        "bad conv stride/pad");
  check(!bias || static_cast<int>(bias->size()) == oc,
        ErrorCode::invalid_argument, "conv bias size mismatch");
  const int oh = (x.h + 2 * pad - kh) / stride + 1;
  const int ow = (x.w + 2 * pad - kw) / stride + 1;
  check(x.h + 2 * pad >= kh && x.w + 2 * pad >= kw && oh > 0 && ow > 0,
        ErrorCode::negative_dimension, "conv kernel exceeds padded input");

  const int ocg = oc / groups;
  const long long K = 1LL * icg * kh * kw;
  Tensor out(x.n, oc, oh, ow);

  // One task per (sample, group, output row): lower the row to a K x OW
  // patch matrix, then multiply by the group's weight block.
  parallel_for(0, 1LL * x.n * groups * oh, [&](long long task) {
    const int oy = static_cast<int>(task % oh);
    const int g = static_cast<int>((task / oh) % groups);
    const int n = static_cast<int>(task / oh / groups);
    std::vector<double> col(static_cast<size_t>(K) * ow, 0.0);
    for (int ci = 0; ci < icg; ++ci) {
      const int c = g * icg + ci;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= x.h) continue;
        const double* xrow = &x.v[x.index(n, c, iy, 0)];
        for (int kx = 0; kx < kw; ++kx) {
          double* crow = &col[((static_cast<size_t>(ci) * kh + ky) * kw + kx) *
                              ow];
          for (int o = 0; o < ow; ++o) {
            const int ix = o * stride - pad + kx;
            if (ix >= 0 && ix < x.w) crow[o] = xrow[ix];
          }
        }
      }
    }
    for (int oi = 0; oi < ocg; ++oi) {
      const int o = g * ocg + oi;
      double* orow = &out.v[out.index(n, o, oy, 0)];
      const double* wrow = &w.data[static_cast<size_t>(o) * K];
      for (long long k = 0; k < K; ++k) {
        const double wv = wrow[k];
        const double* crow = &col[static_cast<size_t>(k) * ow];
        for (int p = 0; p < ow; ++p) orow[p] += wv * crow[p];
      }
      if (bias) {
        const double b = (*bias)[o];
        for (int p = 0; p < ow; ++p) orow[p] += b;
      }
    }
  });
  if (macs) *macs += 1LL * x.n * oc * K * oh * ow;
  return out;
}

Tensor deconv2d(const Tensor& x, const WeightStore::Entry& w,
                const std::vector<double>* bias, int stride, int pad,
                int groups, long long* macs) {
  check_weight_rank(w, 4, "deconv");
  const int ic = w.shape[0], ocg = w.shape[1], kh = w.shape[2],
            kw = w.shape[3];
  check(groups >= 1 && ic % groups == 0 && x.c == ic,
        ErrorCode::channel_mismatch, "deconv weight does not fit input");
  check(stride >= 1 && pad >= 0 && pad <= kh - 1 && pad <= kw - 1,
        ErrorCode::invalid_argument,
        "deconv requires 0 <= pad <= kernel-1");
  const int icg = ic / groups;

  // Run as a stride-1 convolution over the zero-stuffed input; this way the
  // executed multiply count matches the analytical output-grid convention.
  const int sh = (x.h - 1) * stride + 1 + 2 * (kh - 1 - pad);
  const int sw = (x.w - 1) * stride + 1 + 2 * (kw - 1 - pad);
  Tensor stuffed(x.n, x.c, sh, sw);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
          stuffed.at(n, c, (kh - 1 - pad) + y * stride,
                     (kw - 1 - pad) + xx * stride) = x.at(n, c, y, xx);

  // Reindex (in, out/g, ky, kx) -> (out, in/g, flipped ky, flipped kx).
  WeightStore::Entry flipped;
  flipped.shape = {ocg * groups, icg, kh, kw};
  flipped.data.assign(w.data.size(), 0.0);
  for (int i = 0; i < ic; ++i) {
    const int g = i / icg, ii = i % icg;
    for (int o = 0; o < ocg; ++o)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          const size_t src =
              ((static_cast<size_t>(i) * ocg + o) * kh + ky) * kw + kx;
          const size_t dst =
              ((static_cast<size_t>(g * ocg + o) * icg + ii) * kh +
               (kh - 1 - ky)) *
                  kw +
              (kw - 1 - kx);
          flipped.data[dst] = w.data[src];
        }
  }
  return conv2d(stuffed, flipped, bias, 1, 0, groups, macs);
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int pad) {
  check(kernel >= 1 && stride >= 1 && pad >= 0, ErrorCode::invalid_argument,
        "bad pool kernel/stride/pad");
  check(x.h + 2 * pad >= kernel && x.w + 2 * pad >= kernel,
        ErrorCode::negative_dimension, "pool kernel exceeds padded input");
  const int oh = (x.h + 2 * pad - kernel) / stride + 1;
  const int ow = (x.w + 2 * pad - kernel) / stride + 1;
  Tensor out(x.n, x.c, oh, ow);
  parallel_for(0, 1LL * x.n * x.c, [&](long long task) {
    const int c = static_cast<int>(task % x.c);
    const int n = static_cast<int>(task / x.c);
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double best = 0.0;  // padding-only windows pool to zero
        bool seen = false;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= x.h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= x.w) continue;
            double v = x.at(n, c, iy, ix);
            if (!seen || v > best) best = v, seen = true;
          }
        }
        out.at(n, c, oy, ox) = best;
      }
  });
  return out;
}

Tensor roi_pool(const Tensor& x, const std::vector<Box>& rois, int out_h,
                int out_w, double spatial_scale) {
  check(x.n == 1, ErrorCode::invalid_argument,
        "roi pooling reads a single-sample feature map");
  check(out_h > 0 && out_w > 0 && spatial_scale > 0,
        ErrorCode::invalid_argument, "bad roi-pool output grid");
  check(!rois.empty(), ErrorCode::invalid_argument, "no rois given");
  Tensor out(static_cast<int>(rois.size()), x.c, out_h, out_w);
  for (size_t r = 0; r < rois.size(); ++r) {
    const Box& roi = rois[r];
    int x1 = std::max(0, static_cast<int>(std::floor(roi.x1 * spatial_scale)));
    int y1 = std::max(0, static_cast<int>(std::floor(roi.y1 * spatial_scale)));
    int x2 = std::min(x.w, static_cast<int>(std::ceil(roi.x2 * spatial_scale)));
    int y2 = std::min(x.h, static_cast<int>(std::ceil(roi.y2 * spatial_scale)));
    check(x2 > x1 && y2 > y1, ErrorCode::degenerate_roi,
          "roi #" + std::to_string(r) + " clamps to an empty region");
    const int rw = x2 - x1, rh = y2 - y1;
    for (int c = 0; c < x.c; ++c)
      for (int by = 0; by < out_h; ++by)
        for (int bx = 0; bx < out_w; ++bx) {
          int sy = y1 + by * rh / out_h;
          int ey = y1 + (by + 1) * rh / out_h + ((by + 1) * rh % out_h ? 1 : 0);
          int sx = x1 + bx * rw / out_w;
          int ex = x1 + (bx + 1) * rw / out_w + ((bx + 1) * rw % out_w ? 1 : 0);
          double best = 0.0;
          bool seen = false;
          for (int yy = sy; yy < ey; ++yy)
            for (int xx = sx; xx < ex; ++xx) {
              double v = x.at(0, c, yy, xx);
              if (!seen || v > best) best = v, seen = true;
            }
          out.at(static_cast<int>(r), c, by, bx) = best;
        }
  }
  return out;
}

Tensor fully_connected(const Tensor& x, const WeightStore::Entry& w,
                       const std::vector<double>* bias, long long* macs) {
  check_weight_rank(w, 2, "fc");
  const int out_c = w.shape[0];
  const long long in_flat = w.shape[1];
  check(1LL * x.c * x.h * x.w == in_flat, ErrorCode::channel_mismatch,
        "fc expects " + std::to_string(in_flat) + " inputs, feature map has " +
            std::to_string(1LL * x.c * x.h * x.w));
  check(!bias || static_cast<int>(bias->size()) == out_c,
        ErrorCode::invalid_argument, "fc bias size mismatch");
  Tensor out(x.n, out_c, 1, 1);
  parallel_for(0, 1LL * x.n * out_c, [&](long long task) {
    const int o = static_cast<int>(task % out_c);
    const int n = static_cast<int>(task / out_c);
    const double* xv = &x.v[static_cast<size_t>(n) * in_flat];
    const double* wv = &w.data[static_cast<size_t>(o) * in_flat];
    double acc = bias ? (*bias)[o] : 0.0;
    for (long long i = 0; i < in_flat; ++i) acc += wv[i] * xv[i];
    out.at(n, o, 0, 0) = acc;
  });
  if (macs) *macs += 1LL * x.n * out_c * in_flat;
  return out;
}

namespace {

struct BnStats {
  std::vector<double> mean, var;  // per channel, biased variance
};

BnStats batch_stats(const Tensor& x) {
  BnStats s;
  s.mean.assign(x.c, 0.0);
  s.var.assign(x.c, 0.0);
  const long long m = 1LL * x.n * x.h * x.w;
  for (int c = 0; c < x.c; ++c) {
    double sum = 0, sq = 0;
    for (int n = 0; n < x.n; ++n)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
          double v = x.at(n, c, y, xx);
          sum += v;
          sq += v * v;
        }
    double mean = sum / static_cast<double>(m);
    s.mean[c] = mean;
    s.var[c] = std::max(0.0, sq / static_cast<double>(m) - mean * mean);
  }
  return s;
}

Tensor batch_norm_forward(const LayerNode& node, const Tensor& x,
                          WeightStore& ws, ExecMode mode) {
  const auto& gamma = ws.at(node.name + ".gamma").data;
  const auto& beta = ws.at(node.name + ".beta").data;
  auto& rmean = ws.at(node.name + ".running_mean").data;
  auto& rvar = ws.at(node.name + ".running_var").data;
  check(static_cast<int>(gamma.size()) == x.c, ErrorCode::channel_mismatch,
        "'" + node.name + "' statistics sized for " +
            std::to_string(gamma.size()) + " channels, input has " +
            std::to_string(x.c));
  std::vector<double> mean, var;
  if (mode == ExecMode::train) {
    BnStats s = batch_stats(x);
    mean = s.mean;
    var = s.var;
    for (int c = 0; c < x.c; ++c) {
      rmean[c] = kBnMomentum * rmean[c] + (1 - kBnMomentum) * s.mean[c];
      rvar[c] = kBnMomentum * rvar[c] + (1 - kBnMomentum) * s.var[c];
    }
  } else {
    mean = rmean;
    var = rvar;
  }
  Tensor out(x.n, x.c, x.h, x.w);
  for (int c = 0; c < x.c; ++c) {
    const double inv = 1.0 / std::sqrt(var[c] + kBnEps);
    const double a = gamma[c] * inv;
    const double b = beta[c] - mean[c] * a;
    for (int n = 0; n < x.n; ++n)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
          out.at(n, c, y, xx) = a * x.at(n, c, y, xx) + b;
  }
  return out;
}

const std::vector<double>* opt_bias(const WeightStore& ws,
                                    const std::string& key) {
  auto it = ws.entries.find(key);
  return it == ws.entries.end() ? nullptr : &it->second.data;
}

}  // namespace

ActivationMap forward(const NetworkGraph& g, WeightStore& ws,
                      const Tensor& input, ExecMode mode, ExecStats* stats,
                      const std::vector<Box>* rois) {
  check(input.n >= 1 && input.c >= 1 && input.h >= 1 && input.w >= 1,
        ErrorCode::invalid_argument, "empty input tensor");
  check(input.all_finite(), ErrorCode::non_finite,
        "input tensor contains NaN/Inf");
  ActivationMap acts;
  for (const auto& node : g.nodes) {
    long long node_macs = 0;
    Tensor out;
    auto in = [&](size_t i) -> const Tensor& {
      return acts.at(node.inputs.at(i));
    };
    switch (node.kind) {
      case LayerKind::Input:
        out = input;
        break;
      case LayerKind::Conv:
        out = conv2d(in(0), ws.at(node.name + ".weight"),
                     opt_bias(ws, node.name + ".bias"), node.stride, node.pad,
                     node.groups, &node_macs);
        break;
      case LayerKind::Deconv:
        out = deconv2d(in(0), ws.at(node.name + ".weight"),
                       opt_bias(ws, node.name + ".bias"), node.stride,
                       node.pad, node.groups, &node_macs);
        break;
      case LayerKind::MaxPool:
        out = max_pool2d(in(0), node.kernel_h, node.stride, node.pad);
        break;
      case LayerKind::RoiPool:
        check(rois != nullptr && !rois->empty(), ErrorCode::invalid_argument,
              "graph has roi pooling but no rois were supplied");
        out = roi_pool(in(0), *rois, node.kernel_h, node.kernel_w);
        break;
      case LayerKind::FullyConnected:
        out = fully_connected(in(0), ws.at(node.name + ".weight"),
                              opt_bias(ws, node.name + ".bias"), &node_macs);
        break;
      case LayerKind::ReLU: {
        out = in(0);
        for (double& v : out.v) v = v > 0 ? v : 0.0;
        break;
      }
      case LayerKind::Negate: {
        out = in(0);
        for (double& v : out.v) v = -v;
        break;
      }
      case LayerKind::ScaleBias: {
        const Tensor& x = in(0);
        const auto& scale = ws.at(node.name + ".scale").data;
        const auto& bias = ws.at(node.name + ".bias").data;
        check(static_cast<int>(scale.size()) == x.c,
              ErrorCode::channel_mismatch,
              "'" + node.name + "' scale sized for " +
                  std::to_string(scale.size()) + " channels, input has " +
                  std::to_string(x.c));
        out = Tensor(x.n, x.c, x.h, x.w);
        for (int n = 0; n < x.n; ++n)
          for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < x.h; ++y)
              for (int xx = 0; xx < x.w; ++xx)
                out.at(n, c, y, xx) = scale[c] * x.at(n, c, y, xx) + bias[c];
        break;
      }
      case LayerKind::BatchNorm:
        out = batch_norm_forward(node, in(0), ws, mode);
        break;
      case LayerKind::Concat: {
        const Tensor& first = in(0);
        int total_c = 0;
        for (size_t i = 0; i < node.inputs.size(); ++i) {
          const Tensor& t = in(i);
          check(t.n == first.n && t.h == first.h && t.w == first.w,
                ErrorCode::channel_mismatch,
                "'" + node.name + "': concat inputs disagree spatially");
          total_c += t.c;
        }
        out = Tensor(first.n, total_c, first.h, first.w);
        int off = 0;
        for (size_t i = 0; i < node.inputs.size(); ++i) {
          const Tensor& t = in(i);
          for (int n = 0; n < t.n; ++n)
            std::copy(&t.v[t.index(n, 0, 0, 0)],
                      &t.v[t.index(n, 0, 0, 0)] + 1LL * t.c * t.h * t.w,
                      &out.v[out.index(n, off, 0, 0)]);
          off += t.c;
        }
        break;
      }
      case LayerKind::EltwiseAdd: {
        out = in(0);
        for (size_t i = 1; i < node.inputs.size(); ++i) {
          const Tensor& t = in(i);
          check(t.same_shape(out), ErrorCode::channel_mismatch,
                "'" + node.name + "': add inputs disagree");
          for (size_t k = 0; k < out.v.size(); ++k) out.v[k] += t.v[k];
        }
        break;
      }
    }
    check(out.all_finite(), ErrorCode::non_finite,
          "non-finite activation at node '" + node.name + "'");
    if (stats) {
      stats->macs += node_macs;
      stats->per_node[node.name] = node_macs;
    }
    acts[node.name] = std::move(out);
  }
  return acts;
}

namespace {

void accumulate(std::map<std::string, Tensor>& grads, const std::string& name,
                const Tensor& g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, g);
    return;
  }
  check(it->second.same_shape(g), ErrorCode::internal,
        "gradient shape mismatch at '" + name + "'");
  for (size_t i = 0; i < g.v.size(); ++i) it->second.v[i] += g.v[i];
}

}  // namespace

BackwardResult backward(const NetworkGraph& g, const WeightStore& ws,
                        const ActivationMap& acts, const std::string& sink,
                        const Tensor& sink_grad, ExecMode mode) {
  int sink_idx = g.index_of(sink);
  check(sink_idx >= 0, ErrorCode::invalid_argument,
        "unknown sink '" + sink + "'");
  check(acts.count(sink) && sink_grad.same_shape(acts.at(sink)),
        ErrorCode::invalid_argument,
        "sink gradient shape does not match the recorded activation");

  BackwardResult res;
  std::map<std::string, Tensor> grads;
  grads.emplace(sink, sink_grad);

  for (int i = sink_idx; i >= 0; --i) {
    const LayerNode& node = g.nodes[i];
    auto git = grads.find(node.name);
    if (git == grads.end()) continue;  // off the path to the sink
    const Tensor dy = std::move(git->second);
    grads.erase(git);

    switch (node.kind) {
      case LayerKind::Input:
        res.input_grad = dy;
        break;
      case LayerKind::Conv: {
        check(node.groups == 1, ErrorCode::unsupported,
              "'" + node.name + "': grouped conv backward not implemented");
        const Tensor& x = acts.at(node.inputs[0]);
        const auto& w = ws.at(node.name + ".weight");
        const int oc = w.shape[0], icg = w.shape[1], kh = w.shape[2],
                  kw = w.shape[3];
        WeightStore::Entry dw;
        dw.shape = w.shape;
        dw.data.assign(w.data.size(), 0.0);
        Tensor dx(x.n, x.c, x.h, x.w);
        for (int n = 0; n < x.n; ++n)
          for (int o = 0; o < oc; ++o)
            for (int oy = 0; oy < dy.h; ++oy)
              for (int ox = 0; ox < dy.w; ++ox) {
                const double gv = dy.at(n, o, oy, ox);
                if (gv == 0.0) continue;
                for (int ci = 0; ci < icg; ++ci)
                  for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * node.stride - node.pad + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                      const int ix = ox * node.stride - node.pad + kx;
                      if (ix < 0 || ix >= x.w) continue;
                      const size_t wi =
                          ((static_cast<size_t>(o) * icg + ci) * kh + ky) *
                              kw +
                          kx;
                      dw.data[wi] += gv * x.at(n, ci, iy, ix);
                      dx.at(n, ci, iy, ix) += gv * w.data[wi];
                    }
                  }
              }
        res.grads[node.name + ".weight"] = std::move(dw);
        if (ws.has(node.name + ".bias")) {
          WeightStore::Entry db;
          db.shape = {oc};
          db.data.assign(oc, 0.0);
          for (int n = 0; n < dy.n; ++n)
            for (int o = 0; o < oc; ++o)
              for (int oy = 0; oy < dy.h; ++oy)
                for (int ox = 0; ox < dy.w; ++ox)
                  db.data[o] += dy.at(n, o, oy, ox);
          res.grads[node.name + ".bias"] = std::move(db);
        }
        accumulate(grads, node.inputs[0], dx);
        break;
      }
      case LayerKind::FullyConnected: {
        const Tensor& x = acts.at(node.inputs[0]);
        const auto& w = ws.at(node.name + ".weight");
        const int oc = w.shape[0];
        const long long in_flat = w.shape[1];
        WeightStore::Entry dw;
        dw.shape = w.shape;
        dw.data.assign(w.data.size(), 0.0);
        Tensor dx(x.n, x.c, x.h, x.w);
        for (int n = 0; n < x.n; ++n) {
          const double* xv = &x.v[static_cast<size_t>(n) * in_flat];
          double* dxv = &dx.v[static_cast<size_t>(n) * in_flat];
          for (int o = 0; o < oc; ++o) {
            const double gv = dy.at(n, o, 0, 0);
            if (gv == 0.0) continue;
            const double* wv = &w.data[static_cast<size_t>(o) * in_flat];
            double* dwv = &dw.data[static_cast<size_t>(o) * in_flat];
            for (long long k = 0; k < in_flat; ++k) {
              dwv[k] += gv * xv[k];
              dxv[k] += gv * wv[k];
            }
          }
        }
        res.grads[node.name + ".weight"] = std::move(dw);
        if (ws.has(node.name + ".bias")) {
          WeightStore::Entry db;
          db.shape = {oc};
          db.data.assign(oc, 0.0);
          for (int n = 0; n < dy.n; ++n)
            for (int o = 0; o < oc; ++o) db.data[o] += dy.at(n, o, 0, 0);
          res.grads[node.name + ".bias"] = std::move(db);
        }
        accumulate(grads, node.inputs[0], dx);
        break;
      }
      case LayerKind::ReLU: {
        const Tensor& x = acts.at(node.inputs[0]);
        Tensor dx = dy;
        // Zero subgradient at the kink.
        for (size_t k = 0; k < dx.v.size(); ++k)
          if (x.v[k] <= 0.0) dx.v[k] = 0.0;
        accumulate(grads, node.inputs[0], dx);
        break;
      }
      case LayerKind::Negate: {
        Tensor dx = dy;
        for (double& v : dx.v) v = -v;
        accumulate(grads, node.inputs[0], dx);
        break;
      }
      case LayerKind::ScaleBias: {
        const Tensor& x = acts.at(node.inputs[0]);
        const auto& scale = ws.at(node.name + ".scale").data;
        WeightStore::Entry dscale, dbias;
        dscale.shape = dbias.shape = {x.c};
        dscale.data.assign(x.c, 0.0);
        dbias.data.assign(x.c, 0.0);
        Tensor dx(x.n, x.c, x.h, x.w);
        for (int n = 0; n < x.n; ++n)
          for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < x.h; ++y)
              for (int xx = 0; xx < x.w; ++xx) {
                const double gv = dy.at(n, c, y, xx);
                dscale.data[c] += gv * x.at(n, c, y, xx);
                dbias.data[c] += gv;
                dx.at(n, c, y, xx) = gv * scale[c];
              }
        res.grads[node.name + ".scale"] = std::move(dscale);
        res.grads[node.name + ".bias"] = std::move(dbias);
        accumulate(grads, node.inputs[0], dx);
        break;
      }
      case LayerKind::BatchNorm: {
        const Tensor& x = acts.at(node.inputs[0]);
        const auto& gamma = ws.at(node.name + ".gamma").data;
        std::vector<double> mean, var;
        if (mode == ExecMode::train) {
          BnStats s = batch_stats(x);
          mean = std::move(s.mean);
          var = std::move(s.var);
        } else {
          mean = ws.at(node.name + ".running_mean").data;
          var = ws.at(node.name + ".running_var").data;
        }
        const long long m = 1LL * x.n * x.h * x.w;
        WeightStore::Entry dgamma, dbeta;
        dgamma.shape = dbeta.shape = {x.c};
        dgamma.data.assign(x.c, 0.0);
        dbeta.data.assign(x.c, 0.0);
        Tensor dx(x.n, x.c, x.h, x.w);
        for (int c = 0; c < x.c; ++c) {
          const double inv = 1.0 / std::sqrt(var[c] + kBnEps);
          double sum_dy = 0, sum_dy_xhat = 0;
          for (int n = 0; n < x.n; ++n)
            for (int y = 0; y < x.h; ++y)
              for (int xx = 0; xx < x.w; ++xx) {
                const double gv = dy.at(n, c, y, xx);
                sum_dy += gv;
                sum_dy_xhat += gv * (x.at(n, c, y, xx) - mean[c]) * inv;
              }
          dbeta.data[c] = sum_dy;
          dgamma.data[c] = sum_dy_xhat;
          for (int n = 0; n < x.n; ++n)
            for (int y = 0; y < x.h; ++y)
              for (int xx = 0; xx < x.w; ++xx) {
                const double gv = dy.at(n, c, y, xx);
                const double xhat = (x.at(n, c, y, xx) - mean[c]) * inv;
                if (mode == ExecMode::train)
                  dx.at(n, c, y, xx) =
                      gamma[c] * inv *
                      (gv - sum_dy / static_cast<double>(m) -
                       xhat * sum_dy_xhat / static_cast<double>(m));
                else
                  dx.at(n, c, y, xx) = gamma[c] * inv * gv;
              }
        }
        res.grads[node.name + ".gamma"] = std::move(dgamma);
        res.grads[node.name + ".beta"] = std::move(dbeta);
        accumulate(grads, node.inputs[0], dx);
        break;
      }
      case LayerKind::MaxPool: {
        const Tensor& x = acts.at(node.inputs[0]);
        Tensor dx(x.n, x.c, x.h, x.w);
        const int k = node.kernel_h;
        for (int n = 0; n < dy.n; ++n)
          for (int c = 0; c < dy.c; ++c)
            for (int oy = 0; oy < dy.h; ++oy)
              for (int ox = 0; ox < dy.w; ++ox) {
                // Recompute the argmax; ties go to the first window element.
                int by = -1, bx = -1;
                double best = 0;
                bool seen = false;
                for (int ky = 0; ky < k; ++ky) {
                  const int iy = oy * node.stride - node.pad + ky;
                  if (iy < 0 || iy >= x.h) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * node.stride - node.pad + kx;
                    if (ix < 0 || ix >= x.w) continue;
                    double v = x.at(n, c, iy, ix);
                    if (!seen || v > best) {
                      best = v;
                      by = iy;
                      bx = ix;
                      seen = true;
                    }
                  }
                }
                if (seen) dx.at(n, c, by, bx) += dy.at(n, c, oy, ox);
              }
        accumulate(grads, node.inputs[0], dx);
        break;
      }
      case LayerKind::Concat: {
        int off = 0;
        for (const auto& ref : node.inputs) {
          const Tensor& t = acts.at(ref);
          Tensor slice(t.n, t.c, t.h, t.w);
          for (int n = 0; n < t.n; ++n)
            std::copy(&dy.v[dy.index(n, off, 0, 0)],
                      &dy.v[dy.index(n, off, 0, 0)] + 1LL * t.c * t.h * t.w,
                      &slice.v[slice.index(n, 0, 0, 0)]);
          accumulate(grads, ref, slice);
          off += t.c;
        }
        break;
      }
      case LayerKind::EltwiseAdd:
        for (const auto& ref : node.inputs) accumulate(grads, ref, dy);
        break;
      case LayerKind::Deconv:
      case LayerKind::RoiPool:
        fail(ErrorCode::unsupported,
             "'" + node.name + "' (" + kind_name(node.kind) +
                 ") is inference-only and has no backward pass");
    }
  }
  if (res.input_grad.size() == 0) {
    const Tensor& in_act = acts.at(g.input_node().name);
    res.input_grad = Tensor(in_act.n, in_act.c, in_act.h, in_act.w);
  }
  return res;
}

SoftmaxCeResult softmax_cross_entropy(const Tensor& logits,
                                      const std::vector<int>& labels) {
  check(logits.h == 1 && logits.w == 1, ErrorCode::invalid_argument,
        "logits must be (N, C, 1, 1)");
  check(static_cast<size_t>(logits.n) == labels.size(),
        ErrorCode::invalid_argument, "one label per sample required");
  SoftmaxCeResult r;
  r.dlogits = Tensor(logits.n, logits.c, 1, 1);
  r.predicted.resize(logits.n);
  const int C = logits.c;
  for (int n = 0; n < logits.n; ++n) {
    check(labels[n] >= 0 && labels[n] < C, ErrorCode::invalid_argument,
          "label out of range at sample " + std::to_string(n));
    double mx = logits.at(n, 0, 0, 0);
    int arg = 0;
    for (int c = 1; c < C; ++c)
      if (logits.at(n, c, 0, 0) > mx) mx = logits.at(n, c, 0, 0), arg = c;
    r.predicted[n] = arg;
    double z = 0;
    for (int c = 0; c < C; ++c) z += std::exp(logits.at(n, c, 0, 0) - mx);
    const double logz = std::log(z) + mx;
    r.loss += (logz - logits.at(n, labels[n], 0, 0)) / logits.n;
    for (int c = 0; c < C; ++c) {
      const double p = std::exp(logits.at(n, c, 0, 0) - logz);
      r.dlogits.at(n, c, 0, 0) =
          (p - (c == labels[n] ? 1.0 : 0.0)) / logits.n;
    }
  }
  check(std::isfinite(r.loss), ErrorCode::non_finite, "loss is not finite");
  return r;
}

namespace {

std::vector<double> bilinear_kernel(int k) {
  // Classic interpolation stencil: 1 - |x - c| / f with f = (k+1)/2.
  const double f = (k + 1) / 2;
  const double c = (k - 1) / 2.0;
  std::vector<double> v(k);
  for (int i = 0; i < k; ++i) v[i] = 1.0 - std::abs(i - c) / f;
  return v;
}

}  // namespace

void init_weights(const NetworkGraph& g, WeightStore& ws, uint64_t seed,
                  bool conv_bias) {
  auto shapes = infer_shapes(g, g.input_shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& n : g.nodes) {
    switch (n.kind) {
      case LayerKind::Conv: {
        const int ic = shapes.at(n.inputs[0]).c;
        const int icg = ic / n.groups;
        auto& w = ws.create(n.name + ".weight",
                            {n.out_channels, icg, n.kernel_h, n.kernel_w});
        const double stddev =
            std::sqrt(2.0 / (1.0 * icg * n.kernel_h * n.kernel_w));
        for (double& v : w.data) v = normal(rng) * stddev;
        if (conv_bias) ws.create(n.name + ".bias", {n.out_channels});
        break;
      }
      case LayerKind::Deconv: {
        const int ic = shapes.at(n.inputs[0]).c;
        const int icg = ic / n.groups;
        const int ocg = n.out_channels / n.groups;
        auto& w = ws.create(n.name + ".weight",
                            {ic, ocg, n.kernel_h, n.kernel_w});
        check(n.kernel_h == n.kernel_w, ErrorCode::unsupported,
              "'" + n.name + "': bilinear init expects a square kernel");
        auto ky = bilinear_kernel(n.kernel_h);
        for (int i = 0; i < ic; ++i)
          for (int o = 0; o < ocg; ++o)
            for (int y = 0; y < n.kernel_h; ++y)
              for (int x = 0; x < n.kernel_w; ++x)
                w.data[((static_cast<size_t>(i) * ocg + o) * n.kernel_h + y) *
                           n.kernel_w +
                       x] = ky[y] * ky[x] / icg;
        break;
      }
      case LayerKind::FullyConnected: {
        const TensorShape in = shapes.at(n.inputs[0]);
        const long long flat = 1LL * in.h * in.w * in.c;
        auto& w = ws.create(n.name + ".weight",
                            {n.out_channels, static_cast<int>(flat)});
        const double stddev = std::sqrt(2.0 / static_cast<double>(flat));
        for (double& v : w.data) v = normal(rng) * stddev;
        ws.create(n.name + ".bias", {n.out_channels});
        break;
      }
      case LayerKind::BatchNorm: {
        const int c = shapes.at(n.inputs[0]).c;
        auto& gamma = ws.create(n.name + ".gamma", {c});
        std::fill(gamma.data.begin(), gamma.data.end(), 1.0);
        ws.create(n.name + ".beta", {c});
        ws.create(n.name + ".running_mean", {c});
        auto& rv = ws.create(n.name + ".running_var", {c});
        std::fill(rv.data.begin(), rv.data.end(), 1.0);
        break;
      }
      case LayerKind::ScaleBias: {
        const int c = shapes.at(n.inputs[0]).c;
        auto& s = ws.create(n.name + ".scale", {c});
        std::fill(s.data.begin(), s.data.end(), 1.0);
        ws.create(n.name + ".bias", {c});
        break;
      }
      default:
        break;
    }
  }
}

WeightStore make_surrogate_weights(const NetworkGraph& g) {
  WeightStore ws;
  init_weights(g, ws, 0, false);
  for (auto& [key, entry] : ws.entries) {
    auto dot = key.rfind('.');
    std::string param = key.substr(dot + 1);
    if (param == "weight")
      std::fill(entry.data.begin(), entry.data.end(), 1.0);
    // normalisation/scaling entries already initialise to identity
  }
  return ws;
}

std::pair<NetworkGraph, WeightStore> fold_batchnorm(const NetworkGraph& g,
                                                    const WeightStore& ws) {
  // consumers per node
  std::map<std::string, int> consumers;
  for (const auto& n : g.nodes)
    for (const auto& ref : n.inputs) ++consumers[ref];

  // BN -> producing conv, only when the conv feeds nothing else.
  std::map<std::string, std::string> fold;  // bn name -> conv name
  for (const auto& n : g.nodes) {
    if (n.kind != LayerKind::BatchNorm) continue;
    const LayerNode* src = g.find(n.inputs[0]);
    if (src && src->kind == LayerKind::Conv && consumers[src->name] == 1)
      fold[n.name] = src->name;
  }

  NetworkGraph out;
  out.name = g.name;
  out.input_shape = g.input_shape;
  std::map<std::string, std::string> rename;  // folded bn -> conv
  for (const auto& n : g.nodes) {
    if (fold.count(n.name)) {
      rename[n.name] = fold[n.name];
      continue;
    }
    LayerNode copy = n;
    for (auto& ref : copy.inputs) {
      auto it = rename.find(ref);
      if (it != rename.end()) ref = it->second;
    }
    out.nodes.push_back(std::move(copy));
  }

  WeightStore nws;
  nws.meta = ws.meta;
  std::set<std::string> folded_bn;
  for (const auto& [bn, conv] : fold) folded_bn.insert(bn);
  for (const auto& [key, entry] : ws.entries) {
    auto dot = key.rfind('.');
    if (folded_bn.count(key.substr(0, dot))) continue;
    nws.entries[key] = entry;
  }
  for (const auto& [bn, conv] : fold) {
    const auto& gamma = ws.at(bn + ".gamma").data;
    const auto& beta = ws.at(bn + ".beta").data;
    const auto& mean = ws.at(bn + ".running_mean").data;
    const auto& var = ws.at(bn + ".running_var").data;
    auto& w = nws.at(conv + ".weight");
    const int oc = w.shape[0];
    check(static_cast<int>(gamma.size()) == oc, ErrorCode::channel_mismatch,
          "'" + bn + "' statistics do not match '" + conv + "' output");
    const size_t per_oc = w.data.size() / oc;
    if (!nws.has(conv + ".bias")) nws.create(conv + ".bias", {oc});
    auto& b = nws.at(conv + ".bias").data;
    for (int o = 0; o < oc; ++o) {
      const double inv = 1.0 / std::sqrt(var[o] + kBnEps);
      const double a = gamma[o] * inv;
      for (size_t k = 0; k < per_oc; ++k) w.data[o * per_oc + k] *= a;
      b[o] = (b[o] - mean[o]) * a + beta[o];
    }
  }
  return {std::move(out), std::move(nws)};
}

}  // namespace pvawb
