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

#include "pvawb/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pvawb {

Matrix matmul(const Matrix& x, const Matrix& y) {
  check(x.cols == y.rows, ErrorCode::invalid_argument,
        "matmul dimension mismatch");
  Matrix out(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const double v = x.at(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) out.at(i, j) += v * y.at(k, j);
    }
  return out;
}

Matrix transpose(const Matrix& x) {
  Matrix out(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
  return out;
}

namespace {

// One-sided Jacobi on a tall matrix (m >= n): rotate column pairs of b until
// they are mutually orthogonal, accumulating the rotations in v.
SvdResult jacobi_tall(Matrix b, int max_sweeps) {
  const int m = b.rows, n = b.cols;
  Matrix v(n, n);
  for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

  const double eps = 1e-14;
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (int i = 0; i < n - 1; ++i)
      for (int j = i + 1; j < n; ++j) {
        double aii = 0, ajj = 0, aij = 0;
        for (int k = 0; k < m; ++k) {
          aii += b.at(k, i) * b.at(k, i);
          ajj += b.at(k, j) * b.at(k, j);
          aij += b.at(k, i) * b.at(k, j);
        }
        if (std::abs(aij) <= eps * std::sqrt(aii * ajj)) continue;
        converged = false;
        const double zeta = (ajj - aii) / (2.0 * aij);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (int k = 0; k < m; ++k) {
          const double bi = b.at(k, i), bj = b.at(k, j);
          b.at(k, i) = cs * bi - sn * bj;
          b.at(k, j) = sn * bi + cs * bj;
        }
        for (int k = 0; k < n; ++k) {
          const double vi = v.at(k, i), vj = v.at(k, j);
          v.at(k, i) = cs * vi - sn * vj;
          v.at(k, j) = sn * vi + cs * vj;
        }
      }
  }
  check(converged, ErrorCode::convergence_failure,
        "svd did not converge within the sweep budget");

  std::vector<double> sigma(n);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int k = 0; k < m; ++k) s += b.at(k, i) * b.at(k, i);
    sigma[i] = std::sqrt(s);
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int bb) { return sigma[a] > sigma[bb]; });

  SvdResult r;
  r.u = Matrix(m, n);
  r.v = Matrix(n, n);
  r.sigma.resize(n);
  // The norm cutoff below which a column counts as null and is replaced by
  // an orthonormal completion vector.
  const double tiny = 1e-12 * (sigma.empty() ? 1.0 : std::max(1.0, sigma[order[0]]));
  int filled = 0;
  for (int c = 0; c < n; ++c) {
    const int src = order[c];
    r.sigma[c] = sigma[src];
    for (int k = 0; k < n; ++k) r.v.at(k, c) = v.at(k, src);
    if (sigma[src] > tiny) {
      for (int k = 0; k < m; ++k) r.u.at(k, c) = b.at(k, src) / sigma[src];
      ++filled;
    }
  }
  // Complete null directions against the columns already in place.
  for (int c = filled; c < n; ++c) {
    r.sigma[c] = 0.0;
    for (int seed = 0; seed < m; ++seed) {
      std::vector<double> cand(m, 0.0);
      cand[seed] = 1.0;
      for (int p = 0; p < c; ++p) {
        double dot = 0;
        for (int k = 0; k < m; ++k) dot += cand[k] * r.u.at(k, p);
        for (int k = 0; k < m; ++k) cand[k] -= dot * r.u.at(k, p);
      }
      double norm = 0;
      for (double x : cand) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 0.5) {
        for (int k = 0; k < m; ++k) r.u.at(k, c) = cand[k] / norm;
        break;
      }
    }
  }
  return r;
}

}  // namespace

SvdResult svd(const Matrix& x, int max_sweeps) {
  check(x.rows > 0 && x.cols > 0, ErrorCode::invalid_argument,
        "empty matrix");
  if (x.rows >= x.cols) return jacobi_tall(x, max_sweeps);
  SvdResult t = jacobi_tall(transpose(x), max_sweeps);
  SvdResult r;
  r.u = std::move(t.v);
  r.v = std::move(t.u);
  r.sigma = std::move(t.sigma);
  return r;
}

FactorizedFc compress_fc(const Matrix& w, const std::vector<double>& bias,
                         int rank) {
  check(rank >= 1 && rank <= std::min(w.rows, w.cols),
        ErrorCode::invalid_argument,
        "rank must lie in [1, min(rows, cols)]");
  check(bias.empty() || static_cast<int>(bias.size()) == w.rows,
        ErrorCode::invalid_argument, "bias size mismatch");
  SvdResult s = svd(w);
  FactorizedFc f;
  f.rank = rank;
  f.first = Matrix(rank, w.cols);
  f.second = Matrix(w.rows, rank);
  for (int i = 0; i < rank; ++i)
    for (int j = 0; j < w.cols; ++j) f.first.at(i, j) = s.v.at(j, i);
  for (int i = 0; i < w.rows; ++i)
    for (int j = 0; j < rank; ++j)
      f.second.at(i, j) = s.u.at(i, j) * s.sigma[j];
  f.bias = bias;
  return f;
}

double reconstruction_error(const Matrix& w, const FactorizedFc& f) {
  Matrix rec = matmul(f.second, f.first);
  check(rec.rows == w.rows && rec.cols == w.cols, ErrorCode::invalid_argument,
        "factor shapes do not match the original");
  double s = 0;
  for (size_t i = 0; i < w.a.size(); ++i) {
    const double d = w.a[i] - rec.a[i];
    s += d * d;
  }
  return std::sqrt(s);
}

ClassifierRewrite rewrite_classifier(const NetworkGraph& g, int rank) {
  check(rank > 0, ErrorCode::invalid_argument, "rank must be positive");
  auto shapes = infer_shapes(g, g.input_shape);
  for (const char* name : {"fc6", "fc7"}) {
    const LayerNode* n = g.find(name);
    check(n != nullptr && n->kind == LayerKind::FullyConnected,
          ErrorCode::missing_head,
          std::string("graph has no fully-connected '") + name +
              "' layer to rewrite");
  }

  ClassifierRewrite out;
  out.graph.name = g.name + "-compressed";
  out.graph.input_shape = g.input_shape;
  std::string warn;
  for (const auto& n : g.nodes) {
    if (n.name == "fc6" || n.name == "fc7") {
      const TensorShape in = shapes.at(n.inputs[0]);
      const int in_flat = in.h * in.w * in.c;
      if (rank >= std::min(in_flat, n.out_channels))
        warn = "rank " + std::to_string(rank) + " does not compress '" +
               n.name + "' (full rank is " +
               std::to_string(std::min(in_flat, n.out_channels)) + ")";
      LayerNode a;
      a.name = n.name + "_a";
      a.kind = LayerKind::FullyConnected;
      a.out_channels = rank;
      a.inputs = n.inputs;
      LayerNode b;
      b.name = n.name + "_b";
      b.kind = LayerKind::FullyConnected;
      b.out_channels = n.out_channels;
      b.inputs = {a.name};
      out.graph.nodes.push_back(std::move(a));
      out.graph.nodes.push_back(std::move(b));
      continue;
    }
    LayerNode copy = n;
    for (auto& ref : copy.inputs)
      if (ref == "fc6" || ref == "fc7") ref += "_b";
    out.graph.nodes.push_back(std::move(copy));
  }
  out.warning = warn;
  return out;
}

void compress_fc_weights(WeightStore& ws, const std::string& node, int rank) {
  const auto& e = ws.at(node + ".weight");
  check(e.shape.size() == 2, ErrorCode::invalid_argument,
        "'" + node + "' is not a fully-connected weight");
  const std::vector<int> original_shape = e.shape;
  Matrix w(e.shape[0], e.shape[1]);
  w.a = e.data;
  std::vector<double> bias;
  if (ws.has(node + ".bias")) bias = ws.at(node + ".bias").data;
  FactorizedFc f = compress_fc(w, bias, rank);

  WeightStore::Entry first;
  first.shape = {f.first.rows, f.first.cols};
  first.data = f.first.a;
  WeightStore::Entry second;
  second.shape = {f.second.rows, f.second.cols};
  second.data = f.second.a;
  ws.entries.erase(node + ".weight");
  ws.entries.erase(node + ".bias");
  ws.entries[node + "_a.weight"] = std::move(first);
  ws.entries[node + "_b.weight"] = std::move(second);
  if (!bias.empty()) {
    WeightStore::Entry be;
    be.shape = {static_cast<int>(bias.size())};
    be.data = bias;
    ws.entries[node + "_b.bias"] = std::move(be);
  }
  if (!ws.meta.is_object()) ws.meta = nlohmann::json::object();
  ws.meta["factorized"][node] = {{"rank", rank},
                                 {"original_shape", original_shape}};
}

}  // namespace pvawb
