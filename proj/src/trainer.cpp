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

#include "pvawb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pvawb/builders.hpp"

namespace pvawb {

PlateauScheduler::PlateauScheduler(const PlateauSchedulerConfig& cfg)
    : cfg_(cfg) {
  check(cfg.base_lr > 0 && cfg.decay_factor > 0 && cfg.decay_factor < 1,
        ErrorCode::invalid_argument, "bad scheduler rate/factor");
  check(cfg.patience > 0 && cfg.window > 0, ErrorCode::invalid_argument,
        "patience and window must be positive");
}

double PlateauScheduler::lr() const {
  return cfg_.base_lr * std::pow(cfg_.decay_factor, decays_);
}

PlateauScheduler::Step PlateauScheduler::observe(double loss) {
  check(std::isfinite(loss), ErrorCode::non_finite,
        "training loss is not finite");
  window_.push_back(loss);
  window_sum_ += loss;
  if (static_cast<int>(window_.size()) > cfg_.window) {
    window_sum_ -= window_.front();
    window_.pop_front();
  }
  const double smoothed = window_sum_ / static_cast<double>(window_.size());

  Step st;
  st.smoothed = smoothed;
  if (!has_best_) {
    has_best_ = true;
    best_ = smoothed;
  } else if (smoothed < best_) {
    best_ = smoothed;
    since_best_ = 0;
  } else if (++since_best_ >= cfg_.patience) {
    ++decays_;
    since_best_ = 0;
    st.decayed = true;
  }
  st.lr = lr();
  st.terminate = st.lr < cfg_.terminate_below;
  return st;
}

ToyDataset make_toy_dataset(int per_class, uint64_t seed) {
  check(per_class > 0, ErrorCode::invalid_argument,
        "per_class must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.25);
  ToyDataset d;
  for (int cls = 0; cls < 2; ++cls)
    for (int i = 0; i < per_class; ++i) {
      Tensor img(1, 1, 8, 8);
      for (int y = 0; y < 8; ++y) {
        const bool lit = cls == 0 ? y < 4 : y >= 4;
        for (int x = 0; x < 8; ++x)
          img.at(0, 0, y, x) = (lit ? 1.0 : 0.0) + noise(rng);
      }
      d.images.push_back(std::move(img));
      d.labels.push_back(cls);
    }
  return d;
}

NetworkGraph build_toy_classifier(ToyNet kind) {
  const char* names[] = {"toy-plain", "toy-crelu", "toy-mcrelu"};
  GraphBuilder b(names[static_cast<int>(kind)], {8, 8, 1});
  const bool rectify_pair = kind != ToyNet::plain;
  std::string x = b.conv("conv1", b.input_name(), 3, 1, 1,
                         rectify_pair ? 4 : 8);
  if (rectify_pair) {
    std::string neg = b.negate("conv1/neg", x);
    x = b.concat("conv1/concat", {x, neg});
    if (kind == ToyNet::mcrelu) x = b.scale_bias("conv1/scale", x);
  }
  x = b.relu("conv1/relu", x);
  x = b.max_pool("pool1", x, 2, 2, 0);
  b.fully_connected("fc", x, 2);
  return b.take();
}

ToyNet toy_net_from_name(const std::string& name) {
  if (name == "plain") return ToyNet::plain;
  if (name == "crelu") return ToyNet::crelu;
  if (name == "mcrelu") return ToyNet::mcrelu;
  fail(ErrorCode::invalid_argument, "unknown toy net '" + name + "'");
}

TrainResult train(const NetworkGraph& g, const ToyDataset& data,
                  const TrainConfig& cfg) {
  check(!data.images.empty() && data.images.size() == data.labels.size(),
        ErrorCode::invalid_argument, "empty or inconsistent dataset");
  check(cfg.batch > 0 && cfg.max_iters > 0, ErrorCode::invalid_argument,
        "batch and max_iters must be positive");
  auto sinks = g.sinks();
  check(sinks.size() == 1 && g.at(sinks[0]).kind == LayerKind::FullyConnected,
        ErrorCode::invalid_argument,
        "trainer expects a single fully-connected logits sink");
  const std::string logits_node = sinks[0];
  const TensorShape in_shape = g.input_shape;
  for (const auto& img : data.images)
    check(img.c == in_shape.c && img.h == in_shape.h && img.w == in_shape.w &&
              img.n == 1,
          ErrorCode::invalid_argument, "dataset images do not fit the graph");

  TrainResult res;
  init_weights(g, res.weights, cfg.seed, /*conv_bias=*/true);
  PlateauScheduler sched(cfg.sched);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<size_t> pick(0, data.images.size() - 1);
  std::map<std::string, WeightStore::Entry> velocity;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    Tensor batch(cfg.batch, in_shape.c, in_shape.h, in_shape.w);
    std::vector<int> labels(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      const size_t j = pick(rng);
      std::copy(data.images[j].v.begin(), data.images[j].v.end(),
                batch.v.begin() + static_cast<ptrdiff_t>(b) *
                                      data.images[j].v.size());
      labels[b] = data.labels[j];
    }

    const double lr_used = sched.lr();
    auto acts = forward(g, res.weights, batch, ExecMode::train);
    auto ce = softmax_cross_entropy(acts.at(logits_node), labels);
    auto back = backward(g, res.weights, acts, logits_node, ce.dlogits,
                         ExecMode::train);

    for (auto& [key, grad] : back.grads) {
      auto& w = res.weights.at(key);
      auto vit = velocity.find(key);
      if (vit == velocity.end()) {
        WeightStore::Entry zero;
        zero.shape = grad.shape;
        zero.data.assign(grad.data.size(), 0.0);
        vit = velocity.emplace(key, std::move(zero)).first;
      }
      auto& vel = vit->second.data;
      for (size_t k = 0; k < grad.data.size(); ++k) {
        vel[k] = cfg.momentum * vel[k] -
                 lr_used * (grad.data[k] + cfg.weight_decay * w.data[k]);
        w.data[k] += vel[k];
      }
    }

    auto st = sched.observe(ce.loss);
    res.history.push_back({iter, ce.loss, st.smoothed, lr_used, st.decayed});
    res.iterations = iter + 1;
    res.final_loss = ce.loss;
    if (st.terminate) {
      res.terminated = true;
      break;
    }
  }

  // Training-set accuracy with the final weights.
  int correct = 0;
  Tensor all(static_cast<int>(data.images.size()), in_shape.c, in_shape.h,
             in_shape.w);
  for (size_t j = 0; j < data.images.size(); ++j)
    std::copy(data.images[j].v.begin(), data.images[j].v.end(),
              all.v.begin() + static_cast<ptrdiff_t>(j) *
                                  data.images[j].v.size());
  auto acts = forward(g, res.weights, all, ExecMode::inference);
  auto ce = softmax_cross_entropy(acts.at(logits_node), data.labels);
  for (size_t j = 0; j < data.labels.size(); ++j)
    if (ce.predicted[j] == data.labels[j]) ++correct;
  res.final_accuracy =
      static_cast<double>(correct) / static_cast<double>(data.labels.size());
  return res;
}

std::string history_csv(const std::vector<HistoryEntry>& history) {
  std::ostringstream os;
  os.precision(10);
  os << "iteration,loss,smoothed,lr,decayed\n";
  for (const auto& h : history)
    os << h.iteration << "," << h.loss << "," << h.smoothed << "," << h.lr
       << "," << (h.decayed ? 1 : 0) << "\n";
  return os.str();
}

}  // namespace pvawb
