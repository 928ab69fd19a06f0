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

#include <cstddef>
#include <vector>

namespace pvawb {

// Dense NCHW double tensor. Plain aggregate on purpose; all the interesting
// behaviour lives in the ops that consume it.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0) {}
  static Tensor filled(int n, int c, int h, int w, double value) {
    Tensor t(n, c, h, w);
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }

  size_t size() const { return v.size(); }
  size_t index(int in, int ic, int iy, int ix) const {
    return ((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix;
  }
  double& at(int in, int ic, int iy, int ix) {
    return v[index(in, ic, iy, ix)];
  }
  double at(int in, int ic, int iy, int ix) const {
    return v[index(in, ic, iy, ix)];
  }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool all_finite() const;
};

}  // namespace pvawb
