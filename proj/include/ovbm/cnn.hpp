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

#ifndef OVBM_CNN_HPP
#define OVBM_CNN_HPP

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ovbm/common.hpp"
#include "ovbm/degradation.hpp"
#include "ovbm/layers.hpp"
#include "ovbm/mfcc.hpp"

namespace ovbm {

/// Residual micro-CNN:
///   input -> avgpool(pool_frames x pool_coeffs) * input_scale
///   -> stem conv3x3 (1 -> C) -> ReLU
///   -> num_blocks x [conv3x3 -> ReLU -> conv3x3 (+ skip) -> ReLU -> avgpool 2x2]
///   -> global average pool -> linear (C -> embedding_dim) -> ReLU  = embedding
///   -> linear head (embedding_dim -> num_classes) -> softmax
struct CnnArch {
  std::size_t input_frames = 399;
  std::size_t input_coeffs = 200;
  std::size_t pool_frames = 4;
  std::size_t pool_coeffs = 4;
  std::size_t stem_channels = 8;
  std::size_t num_blocks = 3;
  std::size_t embedding_dim = 64;
  double input_scale = 0.1;

  std::size_t conv_layers() const { return 1 + 2 * num_blocks; }
  std::size_t embed_stage() const { return num_blocks + 1; }
  std::size_t head_stage() const { return num_blocks + 2; }

  void validate(std::size_t num_classes) const {
    if (num_blocks < 1) fail(ErrorCode::ShapeMismatch, "num_blocks must be >= 1");
    if (stem_channels < 1 || pool_frames < 1 || pool_coeffs < 1) {
      fail(ErrorCode::ShapeMismatch, "channel and pool sizes must be >= 1");
    }
    if (num_classes < 2) fail(ErrorCode::ShapeMismatch, "need at least two classes");
    if (embedding_dim < num_classes) {
      fail(ErrorCode::ShapeMismatch, "embedding_dim must be >= num_classes");
    }
    std::size_t h = input_frames / pool_frames, w = input_coeffs / pool_coeffs;
    for (std::size_t b = 0; b < num_blocks; ++b) {
      h /= 2;
      w /= 2;
    }
    if (h == 0 || w == 0) {
      fail(ErrorCode::ShapeMismatch, "input " + std::to_string(input_frames) + "x" +
                                         std::to_string(input_coeffs) + " collapses before the "
                                         "last block");
    }
    if (!(input_scale > 0.0)) fail(ErrorCode::ShapeMismatch, "input_scale must be positive");
  }

  bool operator==(const CnnArch&) const = default;
};

inline std::string block_layer(std::size_t block, int conv) {
  return "block" + std::to_string(block) + ".conv" + std::to_string(conv);
}

/// All parameterized layers, input side first.
inline std::vector<std::string> layer_names(const CnnArch& arch) {
  std::vector<std::string> names{"stem"};
  for (std::size_t b = 1; b <= arch.num_blocks; ++b) {
    names.push_back(block_layer(b, 1));
    names.push_back(block_layer(b, 2));
  }
  names.push_back("embed");
  names.push_back("head");
  return names;
}

/// Convolutional layers ordered from the output side.
inline std::vector<std::string> conv_layers_from_output(const CnnArch& arch) {
  std::vector<std::string> names;
  for (std::size_t b = arch.num_blocks; b >= 1; --b) {
    names.push_back(block_layer(b, 2));
    names.push_back(block_layer(b, 1));
  }
  names.push_back("stem");
  return names;
}

/// Stage that owns a layer: 0 = stem, b = block b, then embed, then head.
inline std::size_t stage_of(const CnnArch& arch, const std::string& layer) {
  if (layer == "stem") return 0;
  if (layer == "embed") return arch.embed_stage();
  if (layer == "head") return arch.head_stage();
  return static_cast<std::size_t>(std::stoul(layer.substr(5, layer.find('.') - 5)));
}

using Gradients = std::map<std::string, Tensor>;

struct BiomarkerModel {
  std::string biomarker_id;
  CnnArch arch;
  std::size_t num_classes = 2;
  std::map<std::string, Tensor> weights;  // "<layer>.weight", "<layer>.bias"
  std::map<std::string, bool> trainable;  // per layer
  std::optional<PoissonMaskConfig> input_mask;

  const Tensor& weight(const std::string& layer) const { return weights.at(layer + ".weight"); }
  const Tensor& bias(const std::string& layer) const { return weights.at(layer + ".bias"); }
  bool is_trainable(const std::string& layer) const { return trainable.at(layer); }

  /// Earliest stage holding a trainable layer, or head_stage()+1 if none.
  std::size_t first_trainable_stage() const {
    std::size_t stage = arch.head_stage() + 1;
    for (const auto& [layer, on] : trainable) {
      if (on) stage = std::min(stage, stage_of(arch, layer));
    }
    return stage;
  }
};

inline Gradients zero_gradients(const BiomarkerModel& model) {
  Gradients g;
  for (const auto& [name, t] : model.weights) g.emplace(name, Tensor(t.shape));
  return g;
}

namespace detail {

inline void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = to_f32(rng.uniform(-bound, bound));
}

}  // namespace detail

/// He-uniform weights from a seeded stream, zero biases; all layers trainable.
inline BiomarkerModel init_cnn(const CnnArch& arch, std::size_t num_classes, std::uint64_t seed,
                               std::string biomarker_id = {}) {
  arch.validate(num_classes);
  BiomarkerModel m;
  m.biomarker_id = std::move(biomarker_id);
  m.arch = arch;
  m.num_classes = num_classes;
  Rng rng(seed);
  const std::size_t c = arch.stem_channels;
  auto add_conv = [&](const std::string& name, std::size_t cin) {
    Tensor w({c, cin, 3, 3});
    detail::he_uniform(w, cin * 9, rng);
    m.weights[name + ".weight"] = std::move(w);
    m.weights[name + ".bias"] = Tensor({c});
  };
  add_conv("stem", 1);
  for (std::size_t b = 1; b <= arch.num_blocks; ++b) {
    add_conv(block_layer(b, 1), c);
    add_conv(block_layer(b, 2), c);
  }
  Tensor ew({arch.embedding_dim, c});
  detail::he_uniform(ew, c, rng);
  m.weights["embed.weight"] = std::move(ew);
  m.weights["embed.bias"] = Tensor({arch.embedding_dim});
  Tensor hw({num_classes, arch.embedding_dim});
  detail::he_uniform(hw, arch.embedding_dim, rng);
  m.weights["head.weight"] = std::move(hw);
  m.weights["head.bias"] = Tensor({num_classes});
  for (const auto& name : layer_names(arch)) m.trainable[name] = true;
  return m;
}

/// Replaces the classification head with a freshly initialized one.
inline BiomarkerModel with_new_head(BiomarkerModel model, std::size_t num_classes,
                                    std::uint64_t seed) {
  model.arch.validate(num_classes);
  Rng rng(seed);
  Tensor hw({num_classes, model.arch.embedding_dim});
  detail::he_uniform(hw, model.arch.embedding_dim, rng);
  model.weights["head.weight"] = std::move(hw);
  model.weights["head.bias"] = Tensor({num_classes});
  model.num_classes = num_classes;
  return model;
}

// ---------------------------------------------------------------------------
// Forward

/// Activation entering a stage. Stages 0..embed_stage take a feature map;
/// the head stage takes the embedding vector.
struct StageInput {
  std::size_t stage = 0;
  Activation map;
  std::vector<double> vec;
};

struct CnnTape {
  std::size_t start_stage = 0;
  Activation input;                 // stage 0 input
  std::vector<Activation> stage_out;  // [0] stem output, [b] block b output
  std::vector<Activation> block_a1;   // per block, post-ReLU first conv
  std::vector<Activation> block_c;    // per block, post-ReLU residual sum
  std::vector<double> gap;
  std::vector<double> embedding;
  std::vector<double> logits;
  std::vector<double> probs;
};

/// Center-crops or zero-pads the frame axis to the arch's input_frames,
/// applies the model's input mask, pools and scales.
inline Activation prepare_input(const BiomarkerModel& model, const MfccImage& image) {
  const CnnArch& a = model.arch;
  if (image.coeffs() != a.input_coeffs) {
    fail(ErrorCode::ShapeMismatch, "image has " + std::to_string(image.coeffs()) +
                                       " coefficients, model expects " +
                                       std::to_string(a.input_coeffs));
  }
  const MfccImage* src = &image;
  MfccImage masked;
  if (model.input_mask) {
    masked = apply_poisson_mask(image, *model.input_mask);
    src = &masked;
  }
  const std::size_t frames = image.frames();
  // Offset of the source frame that lands on target frame 0 (may be negative).
  const std::ptrdiff_t offset =
      (static_cast<std::ptrdiff_t>(frames) - static_cast<std::ptrdiff_t>(a.input_frames)) / 2;

  Activation out(1, a.input_frames / a.pool_frames, a.input_coeffs / a.pool_coeffs);
  const double scale = a.input_scale / static_cast<double>(a.pool_frames * a.pool_coeffs);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t dy = 0; dy < a.pool_frames; ++dy) {
      const std::ptrdiff_t f = static_cast<std::ptrdiff_t>(y * a.pool_frames + dy) + offset;
      if (f < 0 || f >= static_cast<std::ptrdiff_t>(frames)) continue;
      const double* row = src->values.row(static_cast<std::size_t>(f));
      for (std::size_t x = 0; x < out.width; ++x) {
        double acc = 0.0;
        for (std::size_t dx = 0; dx < a.pool_coeffs; ++dx) acc += row[x * a.pool_coeffs + dx];
        out.data[y * out.width + x] += acc;
      }
    }
  }
  for (double& v : out.data) v *= scale;
  return out;
}

/// Runs the network from `in.stage` to the output, recording a tape.
inline CnnTape run_from(const BiomarkerModel& model, const StageInput& in) {
  const CnnArch& a = model.arch;
  const std::size_t nb = a.num_blocks;
  CnnTape t;
  t.start_stage = in.stage;
  t.stage_out.resize(nb + 1);
  t.block_a1.resize(nb + 1);
  t.block_c.resize(nb + 1);

  if (in.stage == 0) {
    t.input = in.map;
    Activation s = layers::conv3x3_forward(t.input, model.weight("stem"), model.bias("stem"));
    layers::relu_inplace(s.data);
    t.stage_out[0] = std::move(s);
  } else if (in.stage <= a.embed_stage()) {
    t.stage_out[in.stage - 1] = in.map;
  }
  for (std::size_t b = std::max<std::size_t>(in.stage, 1); b <= nb; ++b) {
    const Activation& s = t.stage_out[b - 1];
    Activation a1 = layers::conv3x3_forward(s, model.weight(block_layer(b, 1)),
                                            model.bias(block_layer(b, 1)));
    layers::relu_inplace(a1.data);
    Activation c = layers::conv3x3_forward(a1, model.weight(block_layer(b, 2)),
                                           model.bias(block_layer(b, 2)));
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += s.data[i];
    layers::relu_inplace(c.data);
    t.stage_out[b] = layers::avgpool_forward(c, 2, 2);
    t.block_a1[b] = std::move(a1);
    t.block_c[b] = std::move(c);
  }
  if (in.stage <= a.embed_stage()) {
    t.gap = layers::global_avgpool_forward(t.stage_out[nb]);
    t.embedding = layers::linear_forward(t.gap, model.weight("embed"), model.bias("embed"));
    layers::relu_inplace(t.embedding);
  } else {
    t.embedding = in.vec;
  }
  t.logits = layers::linear_forward(t.embedding, model.weight("head"), model.bias("head"));
  if (!all_finite(t.logits)) {
    fail(ErrorCode::NonFiniteActivation, "model '" + model.biomarker_id + "' produced non-finite logits");
  }
  t.probs = layers::softmax(t.logits);
  return t;
}

/// Activation entering `stage` for this image.
inline StageInput stage_input(const BiomarkerModel& model, const MfccImage& image,
                              std::size_t stage) {
  StageInput in{0, prepare_input(model, image), {}};
  if (stage == 0) return in;
  CnnTape t = run_from(model, in);
  StageInput out{stage, {}, {}};
  if (stage <= model.arch.embed_stage()) {
    out.map = std::move(t.stage_out[stage - 1]);
  } else {
    out.vec = std::move(t.embedding);
  }
  return out;
}

struct ForwardResult {
  std::vector<double> embedding;
  std::vector<double> probs;
};

inline ForwardResult forward(const BiomarkerModel& model, const MfccImage& image) {
  CnnTape t = run_from(model, {0, prepare_input(model, image), {}});
  return {std::move(t.embedding), std::move(t.probs)};
}

// ---------------------------------------------------------------------------
// Backward

/// Backpropagates an upstream gradient on the logits and/or the embedding.
/// Only trainable layers receive gradients; frozen layers get zero tensors and
/// propagation stops below the earliest trainable layer.
inline Gradients backward_tape(const BiomarkerModel& model, const CnnTape& t,
                               const std::vector<double>* dlogits,
                               const std::vector<double>* dembedding) {
  const CnnArch& a = model.arch;
  const std::size_t nb = a.num_blocks;
  Gradients g = zero_gradients(model);
  const std::size_t lowest = std::max(model.first_trainable_stage(), t.start_stage);
  auto grad_ptr = [&](const std::string& layer, const char* kind) -> Tensor* {
    return model.is_trainable(layer) ? &g.at(layer + kind) : nullptr;
  };

  std::vector<double> de(t.embedding.size(), 0.0);
  if (dlogits) {
    de = layers::linear_backward(t.embedding, model.weight("head"), *dlogits,
                                 grad_ptr("head", ".weight"), grad_ptr("head", ".bias"),
                                 lowest < a.head_stage());
  }
  if (dembedding) {
    for (std::size_t i = 0; i < de.size(); ++i) de[i] += (*dembedding)[i];
  }
  if (lowest >= a.head_stage()) return g;

  layers::relu_backward_inplace(t.embedding, de);
  const std::vector<double> dgap =
      layers::linear_backward(t.gap, model.weight("embed"), de, grad_ptr("embed", ".weight"),
                              grad_ptr("embed", ".bias"), lowest < a.embed_stage());
  if (lowest >= a.embed_stage()) return g;

  Activation ds = layers::global_avgpool_backward(dgap, t.stage_out[nb].height,
                                                  t.stage_out[nb].width);
  for (std::size_t b = nb; b >= 1 && b >= lowest; --b) {
    const Activation& c = t.block_c[b];
    Activation dz = layers::avgpool_backward(ds, c.height, c.width, 2, 2);
    layers::relu_backward_inplace(c.data, dz.data);
    const std::string l1 = block_layer(b, 1), l2 = block_layer(b, 2);
    Activation da1 = layers::conv3x3_backward(t.block_a1[b], model.weight(l2), dz,
                                              grad_ptr(l2, ".weight"), grad_ptr(l2, ".bias"),
                                              true);
    layers::relu_backward_inplace(t.block_a1[b].data, da1.data);
    const bool below = lowest < b;
    Activation dprev = layers::conv3x3_backward(t.stage_out[b - 1], model.weight(l1), da1,
                                                grad_ptr(l1, ".weight"), grad_ptr(l1, ".bias"),
                                                below);
    if (!below) return g;
    for (std::size_t i = 0; i < dprev.data.size(); ++i) dprev.data[i] += dz.data[i];
    ds = std::move(dprev);
  }
  layers::relu_backward_inplace(t.stage_out[0].data, ds.data);
  layers::conv3x3_backward(t.input, model.weight("stem"), ds, grad_ptr("stem", ".weight"),
                           grad_ptr("stem", ".bias"), false);
  return g;
}

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Cross-entropy gradients for one labeled image.
inline LossAndGradients backward(const BiomarkerModel& model, const MfccImage& image,
                                 std::size_t target) {
  if (target >= model.num_classes) {
    fail(ErrorCode::InvalidArgument, "target class out of range");
  }
  const CnnTape t = run_from(model, {0, prepare_input(model, image), {}});
  const auto dlogits = layers::softmax_ce_grad(t.probs, target);
  return {layers::cross_entropy(t.probs, target), backward_tape(model, t, &dlogits, nullptr)};
}

// ---------------------------------------------------------------------------
// Transfer strategies

struct TransferStrategy {
  enum class Kind { Frozen, FineTuneLastN, FineTuneAll };
  Kind kind = Kind::Frozen;
  std::size_t n = 0;

  static TransferStrategy frozen() { return {Kind::Frozen, 0}; }
  static TransferStrategy last(std::size_t n) { return {Kind::FineTuneLastN, n}; }
  static TransferStrategy all() { return {Kind::FineTuneAll, 0}; }

  /// "frozen", "last:N" or "all".
  static TransferStrategy parse(const std::string& text) {
    if (text == "frozen") return frozen();
    if (text == "all") return all();
    if (text.rfind("last:", 0) == 0) {
      try {
        std::size_t used = 0;
        const long v = std::stol(text.substr(5), &used);
        if (v >= 0 && used == text.size() - 5) return last(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
      }
    }
    fail(ErrorCode::InvalidArgument, "strategy '" + text + "' (expected frozen, last:N or all)");
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::Frozen: return "frozen";
      case Kind::FineTuneLastN: return "last:" + std::to_string(n);
      case Kind::FineTuneAll: return "all";
    }
    return "frozen";
  }
  bool operator==(const TransferStrategy&) const = default;
};

/// Head only; head plus the last n conv layers; or everything.
inline BiomarkerModel apply_transfer_strategy(BiomarkerModel model, const TransferStrategy& s) {
  for (auto& [layer, on] : model.trainable) on = s.kind == TransferStrategy::Kind::FineTuneAll;
  model.trainable["head"] = true;
  if (s.kind == TransferStrategy::Kind::FineTuneLastN) {
    const auto convs = conv_layers_from_output(model.arch);
    if (s.n > convs.size()) {
      fail(ErrorCode::NTooLarge, "last:" + std::to_string(s.n) + " exceeds " +
                                     std::to_string(convs.size()) + " conv layers");
    }
    for (std::size_t i = 0; i < s.n; ++i) model.trainable[convs[i]] = true;
  }
  return model;
}

}  // namespace ovbm

#endif  // OVBM_CNN_HPP
