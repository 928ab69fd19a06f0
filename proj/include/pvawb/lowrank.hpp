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

#include <string>
#include <vector>

#include "pvawb/engine.hpp"
#include "pvawb/graph.hpp"

namespace pvawb {

struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> a;  // row-major
  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return a[static_cast<size_t>(r) * cols + c];
  }
};

Matrix matmul(const Matrix& x, const Matrix& y);
Matrix transpose(const Matrix& x);

// Thin SVD a = u * diag(sigma) * v^T with sigma descending, u (m x r) and
// v (n x r) orthonormal, r = min(m, n). One-sided Jacobi: cheap, dependency
// free and accurate enough for rank selection. Exceeding the sweep budget
// raises convergence_failure; rank-deficient inputs get their null columns
// completed to an orthonormal basis.
struct SvdResult {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};
SvdResult svd(const Matrix& x, int max_sweeps = 60);

// w (out x in) ~= second * first keeping the top `rank` directions:
// first = V_k^T (rank x in, bias-free), second = U_k * diag(sigma_k)
// (out x rank) carrying the original bias. Splitting one fc layer this way
// cuts its multiplies from out*in to rank*(out+in).
struct FactorizedFc {
  Matrix first;
  Matrix second;
  std::vector<double> bias;
  int rank = 0;
};
FactorizedFc compress_fc(const Matrix& w, const std::vector<double>& bias,
                         int rank);

double reconstruction_error(const Matrix& w, const FactorizedFc& f);

// Replaces the fc6 and fc7 layers of a classifier head with rank-limited
// pairs (fc6_a/fc6_b, fc7_a/fc7_b), rewiring consumers. Throws missing_head
// when those layers are absent. A rank of at least min(in, out) performs no
// compression; the rewrite still happens but `warning` says so.
struct ClassifierRewrite {
  NetworkGraph graph;
  std::string warning;  // empty when the rank actually compresses
};
ClassifierRewrite rewrite_classifier(const NetworkGraph& g, int rank);

// Factorizes the stored weights of one FullyConnected node, replacing
// "<node>.weight/.bias" with "<node>_a.*" / "<node>_b.*" and recording
// {rank, original_shape} in the store metadata.
void compress_fc_weights(WeightStore& ws, const std::string& node, int rank);

}  // namespace pvawb
