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

// Shared oracles for the unit and acceptance suites: naive convolution
// loops, linear-probe losses for finite-difference gradient checks, and
// small random-tensor utilities. Everything here is deliberately the
// dumbest possible implementation.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pvawb/engine.hpp"
#include "pvawb/errors.hpp"
#include "pvawb/graph.hpp"
#include "pvawb/tensor.hpp"

namespace testutil {

inline void fill_uniform(pvawb::Tensor& t, std::mt19937_64& rng, double lo,
                         double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.v) v = d(rng);
}

// Random values bounded away from zero, so rectifier kinks sit far from any
// finite-difference step.
inline void fill_away_from_zero(pvawb::Tensor& t, std::mt19937_64& rng,
                                double margin = 5e-2) {
  std::uniform_real_distribution<double> d(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.v) v = sign(rng) ? d(rng) : -d(rng);
}

// A shuffled arithmetic progression: every pairwise gap is at least `step`,
// which keeps max-pool windows free of near-ties.
inline void fill_distinct(pvawb::Tensor& t, std::mt19937_64& rng,
                          double step = 0.01) {
  std::vector<double> vals(t.v.size());
  for (size_t i = 0; i < vals.size(); ++i)
    vals[i] = (static_cast<double>(i) - 0.5 * vals.size()) * step;
  std::shuffle(vals.begin(), vals.end(), rng);
  t.v = vals;
}

inline double max_abs_diff(const pvawb::Tensor& a, const pvawb::Tensor& b) {
  if (a.v.size() != b.v.size()) return HUGE_VAL;
  double m = 0;
  for (size_t i = 0; i < a.v.size(); ++i)
    m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

template <typename Fn>
std::optional<pvawb::ErrorCode> thrown_code(Fn&& fn) {
  try {
    fn();
  } catch (const pvawb::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// ---- reference convolution kernels (plain loops, no tiling, no reuse) ----

inline pvawb::Tensor naive_conv2d(const pvawb::Tensor& x,
                                  const pvawb::WeightStore::Entry& w,
                                  const std::vector<double>* bias, int stride,
                                  int pad, int groups) {
  const int oc = w.shape[0], icg = w.shape[1], kh = w.shape[2],
            kw = w.shape[3];
  const int ocg = oc / groups;
  const int oh = (x.h + 2 * pad - kh) / stride + 1;
  const int ow = (x.w + 2 * pad - kw) / stride + 1;
  pvawb::Tensor out(x.n, oc, oh, ow);
  for (int n = 0; n < x.n; ++n)
    for (int o = 0; o < oc; ++o) {
      const int g = o / ocg;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias != nullptr ? (*bias)[o] : 0.0;
          for (int i = 0; i < icg; ++i)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += x.at(n, g * icg + i, iy, ix) *
                       w.data[((static_cast<size_t>(o) * icg + i) * kh + ky) *
                                  kw +
                              kx];
              }
          out.at(n, o, oy, ox) = acc;
        }
    }
  return out;
}

inline pvawb::Tensor naive_deconv2d(const pvawb::Tensor& x,
                                    const pvawb::WeightStore::Entry& w,
                                    const std::vector<double>* bias,
                                    int stride, int pad, int groups) {
  const int ic = w.shape[0], ocg = w.shape[1], kh = w.shape[2],
            kw = w.shape[3];
  const int icg = ic / groups;
  const int oc = ocg * groups;
  const int oh = (x.h - 1) * stride - 2 * pad + kh;
  const int ow = (x.w - 1) * stride - 2 * pad + kw;
  pvawb::Tensor out(x.n, oc, oh, ow);
  for (int n = 0; n < x.n; ++n) {
    for (int i = 0; i < ic; ++i) {
      const int g = i / icg;
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) {
          const double v = x.at(n, i, iy, ix);
          for (int o = 0; o < ocg; ++o)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int oy = iy * stride - pad + ky;
                const int ox = ix * stride - pad + kx;
                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                out.at(n, g * ocg + o, oy, ox) +=
                    v *
                    w.data[((static_cast<size_t>(i) * ocg + o) * kh + ky) *
                               kw +
                           kx];
              }
        }
    }
    if (bias != nullptr)
      for (int o = 0; o < oc; ++o)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) out.at(n, o, oy, ox) += (*bias)[o];
  }
  return out;
}

// ---- finite-difference gradient checking ----

// Fixed linear functional L(t) = sum_i c_i t_i; its gradient is c itself, so
// any error found downstream belongs to the op under test.
struct LinearProbe {
  std::vector<double> c;
  explicit LinearProbe(size_t n, std::mt19937_64& rng) : c(n) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& v : c) v = d(rng);
  }
  double loss(const pvawb::Tensor& t) const {
    return std::inner_product(t.v.begin(), t.v.end(), c.begin(), 0.0);
  }
  pvawb::Tensor grad(const pvawb::Tensor& t) const {
    pvawb::Tensor g = t;
    g.v = c;
    return g;
  }
};

struct GradCheckResult {
  double max_rel_err = 0;
  std::string worst;  // "<key>[i]" of the worst comparison
  int compared = 0;
};

// Central differences of the probe loss against the analytic backward pass,
// over every stored parameter and every input element.
inline GradCheckResult grad_check(const pvawb::NetworkGraph& g,
                                  pvawb::WeightStore ws, pvawb::Tensor input,
                                  std::mt19937_64& rng,
                                  pvawb::ExecMode mode = pvawb::ExecMode::train,
                                  double h = 1e-5) {
  const std::string sink = g.sinks().at(0);
  auto acts = pvawb::forward(g, ws, input, mode);
  LinearProbe probe(acts.at(sink).v.size(), rng);
  auto back =
      pvawb::backward(g, ws, acts, sink, probe.grad(acts.at(sink)), mode);

  GradCheckResult res;
  auto record = [&](const std::string& where, double analytic,
                    double numeric) {
    const double rel = std::abs(analytic - numeric) /
                       std::max({1.0, std::abs(analytic), std::abs(numeric)});
    ++res.compared;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst = where;
    }
  };
  auto loss_with = [&](pvawb::WeightStore& w, const pvawb::Tensor& in) {
    auto a = pvawb::forward(g, w, in, mode);
    return probe.loss(a.at(sink));
  };

  for (auto& [key, entry] : ws.entries) {
    if (back.grads.find(key) == back.grads.end()) continue;
    const auto& analytic = back.grads.at(key);
    for (size_t i = 0; i < entry.data.size(); ++i) {
      pvawb::WeightStore wplus = ws, wminus = ws;
      wplus.at(key).data[i] += h;
      wminus.at(key).data[i] -= h;
      const double numeric =
          (loss_with(wplus, input) - loss_with(wminus, input)) / (2 * h);
      record(key + "[" + std::to_string(i) + "]", analytic.data[i], numeric);
    }
  }
  for (size_t i = 0; i < input.v.size(); ++i) {
    pvawb::Tensor xplus = input, xminus = input;
    xplus.v[i] += h;
    xminus.v[i] -= h;
    pvawb::WeightStore w1 = ws, w2 = ws;
    const double numeric =
        (loss_with(w1, xplus) - loss_with(w2, xminus)) / (2 * h);
    record("input[" + std::to_string(i) + "]", back.input_grad.v[i], numeric);
  }
  return res;
}

}  // namespace testutil
