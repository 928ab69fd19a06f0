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

#include "pvawb/receptive.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "pvawb/engine.hpp"

namespace pvawb {

RfState path_rf(const std::vector<std::pair<int, int>>& kernel_stride) {
  RfState s;
  for (auto [k, stride] : kernel_stride) {
    check(k >= 1 && stride >= 1, ErrorCode::invalid_argument,
          "kernel and stride must be >= 1");
    s.rf += 1LL * (k - 1) * s.jump;
    s.jump *= stride;
  }
  return s;
}

unsigned long long RfDistribution::total_paths() const {
  unsigned long long t = 0;
  for (const auto& [rf, n] : counts) t += n;
  return t;
}

long long RfDistribution::min_rf() const {
  check(!counts.empty(), ErrorCode::invalid_argument, "empty distribution");
  return counts.begin()->first;
}

long long RfDistribution::max_rf() const {
  check(!counts.empty(), ErrorCode::invalid_argument, "empty distribution");
  return counts.rbegin()->first;
}

double RfDistribution::mean_rf() const {
  double num = 0, den = 0;
  for (const auto& [rf, n] : counts) {
    num += static_cast<double>(rf) * static_cast<double>(n);
    den += static_cast<double>(n);
  }
  check(den > 0, ErrorCode::invalid_argument, "empty distribution");
  return num / den;
}

namespace {

// (rf, jump) -> number of paths seeing that state.
using StateMap = std::map<std::pair<long long, long long>,
                          unsigned long long>;

void merge_into(StateMap& dst, const StateMap& src) {
  for (const auto& [state, n] : src) {
    unsigned long long& slot = dst[state];
    unsigned long long sum = 0;
    check(!__builtin_add_overflow(slot, n, &sum), ErrorCode::path_explosion,
          "path count overflows 64 bits");
    slot = sum;
  }
}

unsigned long long state_total(const StateMap& m) {
  unsigned long long t = 0;
  for (const auto& [state, n] : m) {
    unsigned long long sum = 0;
    check(!__builtin_add_overflow(t, n, &sum), ErrorCode::path_explosion,
          "path count overflows 64 bits");
    t = sum;
  }
  return t;
}

}  // namespace

RfDistribution rf_distribution(const NetworkGraph& g, const std::string& node,
                               unsigned long long max_paths) {
  check(g.find(node) != nullptr, ErrorCode::invalid_argument,
        "graph has no node '" + node + "'");
  int target = g.index_of(node);
  std::map<std::string, StateMap> states;

  for (int i = 0; i <= target; ++i) {
    const LayerNode& n = g.nodes[i];
    StateMap cur;
    switch (n.kind) {
      case LayerKind::Input:
        cur[{1, 1}] = 1;
        break;
      case LayerKind::Conv:
      case LayerKind::MaxPool: {
        check(n.kernel_h == n.kernel_w, ErrorCode::unsupported,
              "node '" + n.name +
                  "': only square kernels have a scalar extent");
        for (const auto& [s, cnt] : states.at(n.inputs[0])) {
          auto [rf, jump] = s;
          cur[{rf + 1LL * (n.kernel_h - 1) * jump, jump * n.stride}] += cnt;
        }
        break;
      }
      case LayerKind::Deconv: {
        check(n.kernel_h == n.kernel_w, ErrorCode::unsupported,
              "node '" + n.name +
                  "': only square kernels have a scalar extent");
        check(n.kernel_h % n.stride == 0, ErrorCode::unsupported,
              "node '" + n.name +
                  "': deconv kernel must be a multiple of its stride");
        int taps = n.kernel_h / n.stride;
        for (const auto& [s, cnt] : states.at(n.inputs[0])) {
          auto [rf, jump] = s;
          check(jump % n.stride == 0, ErrorCode::unsupported,
                "node '" + n.name +
                    "': deconv stride must divide the incoming spacing");
          cur[{rf + 1LL * (taps - 1) * jump, jump / n.stride}] += cnt;
        }
        break;
      }
      case LayerKind::Concat:
      case LayerKind::EltwiseAdd:
        for (const auto& in : n.inputs) merge_into(cur, states.at(in));
        break;
      case LayerKind::Negate:
      case LayerKind::ScaleBias:
      case LayerKind::ReLU:
      case LayerKind::BatchNorm:
        cur = states.at(n.inputs[0]);
        break;
      case LayerKind::FullyConnected:
      case LayerKind::RoiPool:
        fail(ErrorCode::unsupported,
             "node '" + n.name + "' (" + kind_name(n.kind) +
                 ") has no fixed receptive-field extent");
    }
    check(state_total(cur) <= max_paths, ErrorCode::path_explosion,
          "more than " + std::to_string(max_paths) + " paths reach '" +
              n.name + "'; raise the cap to analyse this graph");
    states[n.name] = std::move(cur);
  }

  RfDistribution d;
  for (const auto& [s, cnt] : states.at(node)) d.counts[s.first] += cnt;
  return d;
}

EmpiricalRf empirical_rf(const NetworkGraph& g, const std::string& node,
                         int out_y, int out_x, const TensorShape& input) {
  WeightStore ws = make_surrogate_weights(g);
  EmpiricalRf r;
  int min_y = input.h, max_y = -1, min_x = input.w, max_x = -1;
  for (int y = 0; y < input.h; ++y) {
    for (int x = 0; x < input.w; ++x) {
      Tensor probe(1, input.c, input.h, input.w);
      for (int c = 0; c < input.c; ++c) probe.at(0, c, y, x) = 1.0;
      auto acts = forward(g, ws, probe, ExecMode::inference);
      const Tensor& out = acts.at(node);
      check(out_y >= 0 && out_y < out.h && out_x >= 0 && out_x < out.w,
            ErrorCode::invalid_argument, "output position out of range");
      // Surrogate weights keep every reachable contribution non-negative,
      // so a plain threshold is enough.
      if (out.at(0, 0, out_y, out_x) > 1e-12) {
        ++r.support;
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
      }
    }
  }
  if (r.support > 0) {
    r.extent_h = max_y - min_y + 1;
    r.extent_w = max_x - min_x + 1;
  }
  return r;
}

std::string rf_histogram_text(const RfDistribution& d, int bins,
                              int bar_width) {
  check(bins > 0 && bar_width > 0, ErrorCode::invalid_argument,
        "bins and bar width must be positive");
  long long lo = d.min_rf(), hi = d.max_rf();
  long long span = hi - lo + 1;
  if (span < bins) bins = static_cast<int>(span);
  std::vector<double> weight(bins, 0.0);
  double total = 0;
  for (const auto& [rf, n] : d.counts) {
    int b = static_cast<int>((rf - lo) * bins / span);
    weight[b] += static_cast<double>(n);
    total += static_cast<double>(n);
  }
  double peak = *std::max_element(weight.begin(), weight.end());
  std::ostringstream os;
  os << "paths: " << d.total_paths() << ", extent " << lo << ".." << hi
     << ", mean " << std::llround(d.mean_rf()) << "\n";
  os << std::fixed << std::setprecision(1);
  for (int b = 0; b < bins; ++b) {
    long long from = lo + span * b / bins;
    long long to = lo + span * (b + 1) / bins - 1;
    int bar = peak > 0
                  ? static_cast<int>(std::lround(weight[b] / peak * bar_width))
                  : 0;
    os << std::setw(7) << from << "-" << std::left << std::setw(7) << to
       << std::right << " |" << std::string(bar, '#') << " "
       << (total > 0 ? weight[b] / total * 100.0 : 0.0) << "%\n";
  }
  return os.str();
}

nlohmann::json rf_to_json(const RfDistribution& d) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [rf, n] : d.counts) counts[std::to_string(rf)] = n;
  return nlohmann::json{{"paths", d.total_paths()},
                        {"min", d.min_rf()},
                        {"max", d.max_rf()},
                        {"mean", d.mean_rf()},
                        {"counts", std::move(counts)}};
}

}  // namespace pvawb
