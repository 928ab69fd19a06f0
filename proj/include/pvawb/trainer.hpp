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

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "pvawb/engine.hpp"

namespace pvawb {

// Step policy that decays the learning rate whenever the smoothed loss stops
// improving, and signals termination once the rate falls below a floor.
// The published schedule: base 0.1, factor 1/sqrt(10), stop below 1e-4,
// which allows exactly 7 decays.
struct PlateauSchedulerConfig {
  double base_lr = 0.1;
  double decay_factor = 0.31622776601683794;  // 1/sqrt(10)
  int patience = 100;     // plateau steps tolerated before a decay
  int window = 50;        // moving-average width for smoothing
  double terminate_below = 1e-4;
};

class PlateauScheduler {
 public:
  explicit PlateauScheduler(const PlateauSchedulerConfig& cfg);

  struct Step {
    double lr = 0;        // rate for the next iteration
    double smoothed = 0;  // current moving average
    bool decayed = false;
    bool terminate = false;
  };
  // Feed one raw loss observation. Throws non_finite on NaN/Inf loss.
  Step observe(double loss);

  // lr is always recomputed as base * factor^decays, never by repeated
  // multiplication, so the decay count fully determines it.
  double lr() const;
  int decay_count() const { return decays_; }

 private:
  PlateauSchedulerConfig cfg_;
  std::deque<double> window_;
  double window_sum_ = 0;
  double best_ = 0;
  bool has_best_ = false;
  int since_best_ = 0;
  int decays_ = 0;
};

// Two-class 8x8 single-channel toy set: class 0 lights the top half, class 1
// the bottom, plus Gaussian noise. Linearly separable on purpose; it exists
// to exercise the descent loop, not to be hard.
struct ToyDataset {
  std::vector<Tensor> images;  // each (1, 1, 8, 8)
  std::vector<int> labels;
};
ToyDataset make_toy_dataset(int per_class, uint64_t seed);

// Small classifiers over that set. "plain" is conv-relu-pool-fc; the other
// two rectify with concat(x, -x), optionally adding the learned scale stage.
enum class ToyNet { plain, crelu, mcrelu };
NetworkGraph build_toy_classifier(ToyNet kind);
ToyNet toy_net_from_name(const std::string& name);

struct TrainConfig {
  int batch = 16;
  int max_iters = 400;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  uint64_t seed = 1;
  PlateauSchedulerConfig sched;
};

struct HistoryEntry {
  int iteration = 0;
  double loss = 0;
  double smoothed = 0;
  double lr = 0;       // rate that produced this step
  bool decayed = false;
};

struct TrainResult {
  std::vector<HistoryEntry> history;
  WeightStore weights;
  int iterations = 0;        // actually executed
  bool terminated = false;   // scheduler hit the floor before max_iters
  double final_loss = 0;
  double final_accuracy = 0;  // on the training set
};

// Momentum SGD: v = mu*v - lr*(g + wd*w); w += v. Deterministic for a fixed
// seed and thread-count-independent.
TrainResult train(const NetworkGraph& g, const ToyDataset& data,
                  const TrainConfig& cfg);

std::string history_csv(const std::vector<HistoryEntry>& history);

}  // namespace pvawb
