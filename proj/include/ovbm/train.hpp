/* Copyright 2026 The OVBM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef OVBM_TRAIN_HPP
#define OVBM_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ovbm/cnn.hpp"
#include "ovbm/common.hpp"

namespace ovbm {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double split_fraction = 0.7;

  void validate() const {
    if (!(learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning_rate must be > 0");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
      fail(ErrorCode::InvalidArgument, "split_fraction must lie in (0, 1)");
    }
    if (batch_size == 0) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

/// One Adam update of every tensor named in `grads`; t is the 1-based step.
inline void adam_step(std::map<std::string, Tensor>& weights, const Gradients& grads,
                      AdamState& state, const TrainConfig& cfg, std::size_t t) {
  if (t < 1) fail(ErrorCode::InvalidArgument, "adam step index starts at 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (const auto& [name, g] : grads) {
    Tensor& w = weights.at(name);
    if (w.size() != g.size()) fail(ErrorCode::ShapeMismatch, "gradient shape for " + name);
    Tensor& m = state.m.try_emplace(name, Tensor(w.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(w.shape)).first->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.data[i];
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.data[i] / c1;
      const double vhat = v.data[i] / c2;
      w.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Splits

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class shuffle, then round(fraction * n_c) of each class to train
/// (at least one, and at least one left for test when the class has two).
inline Split stratified_split(const std::vector<std::size_t>& labels, double fraction,
                              std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) {
    fail(ErrorCode::SingleClassDataset, "dataset has " + std::to_string(by_class.size()) +
                                            " class(es); need at least 2");
  }
  Rng rng(sub_seed(seed, "split"));
  Split s;
  for (auto& [label, idx] : by_class) {
    rng.shuffle(idx);
    std::size_t n_train =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() > 1 ? idx.size() - 1 : 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---------------------------------------------------------------------------
// Training

struct LabeledImage {
  MfccImage image;
  std::size_t label = 0;
};

struct TrainResult {
  BiomarkerModel model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> epoch_loss;
  Split split;
};

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<std::string> trainable_tensors(const BiomarkerModel& model) {
  std::vector<std::string> names;
  for (const auto& [name, t] : model.weights) {
    if (model.is_trainable(name.substr(0, name.rfind('.')))) names.push_back(name);
  }
  return names;
}

/// Mini-batch Adam on `split.train`, accuracy on both halves. Inputs to the
/// earliest trainable stage are computed once, since everything below it is
/// frozen.
inline TrainResult train_split(BiomarkerModel model, const std::vector<LabeledImage>& data,
                               const Split& split, const TrainConfig& cfg,
                               const TransferStrategy& strategy) {
  cfg.validate();
  model = apply_transfer_strategy(std::move(model), strategy);
  {
    std::set<std::size_t> classes;
    for (std::size_t i : split.train) classes.insert(data.at(i).label);
    if (classes.size() < 2) {
      fail(ErrorCode::SingleClassDataset, "training split holds a single class");
    }
  }
  for (const auto& d : data) {
    if (d.label >= model.num_classes) fail(ErrorCode::InvalidArgument, "label out of range");
  }
  const std::size_t stage = model.first_trainable_stage();
  std::vector<StageInput> cache(data.size());
  for (std::size_t i : split.train) cache[i] = stage_input(model, data[i].image, stage);
  for (std::size_t i : split.test) cache[i] = stage_input(model, data[i].image, stage);

  const std::vector<std::string> names = trainable_tensors(model);
  AdamState adam;
  Rng shuffle_rng(sub_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order = split.train;
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      Gradients batch;
      for (const auto& n : names) batch.emplace(n, Tensor(model.weights.at(n).shape));
      for (std::size_t k = b0; k < b1; ++k) {
        const std::size_t i = order[k];
        const CnnTape tape = run_from(model, cache[i]);
        loss_sum += layers::cross_entropy(tape.probs, data[i].label);
        const auto dl = layers::softmax_ce_grad(tape.probs, data[i].label);
        const Gradients g = backward_tape(model, tape, &dl, nullptr);
        for (auto& [n, acc] : batch) {
          const auto& src = g.at(n).data;
          for (std::size_t j = 0; j < src.size(); ++j) acc.data[j] += src[j];
        }
      }
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      for (auto& [n, acc] : batch) {
        for (double& x : acc.data) x *= scale;
      }
      adam_step(model.weights, batch, adam, cfg, ++step);
      for (const auto& n : names) {
        for (double& x : model.weights.at(n).data) x = to_f32(x);
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }

  auto accuracy = [&](const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i : idx) hit += argmax(run_from(model, cache[i]).probs) == data[i].label;
    return static_cast<double>(hit) / static_cast<double>(idx.size());
  };
  result.train_accuracy = accuracy(split.train);
  result.test_accuracy = accuracy(split.test);
  result.split = split;
  result.model = std::move(model);
  return result;
}

/// Stratified split by `cfg.split_fraction`, then train_split.
inline TrainResult train(BiomarkerModel model, const std::vector<LabeledImage>& data,
                         const TrainConfig& cfg, const TransferStrategy& strategy) {
  cfg.validate();
  std::vector<std::size_t> labels;
  labels.reserve(data.size());
  for (const auto& d : data) labels.push_back(d.label);
  const Split split = stratified_split(labels, cfg.split_fraction, cfg.seed);
  return train_split(std::move(model), data, split, cfg, strategy);
}

}  // namespace ovbm

#endif  // OVBM_TRAIN_HPP
