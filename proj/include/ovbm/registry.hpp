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

#ifndef OVBM_REGISTRY_HPP
#define OVBM_REGISTRY_HPP

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "ovbm/audio_io.hpp"
#include "ovbm/chunker.hpp"
#include "ovbm/mfcc.hpp"
#include "ovbm/train.hpp"

namespace ovbm {

enum class Family { Sensory, BrainOS, Cognitive, Symbolic };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::Sensory: return "Sensory";
    case Family::BrainOS: return "BrainOS";
    case Family::Cognitive: return "Cognitive";
    case Family::Symbolic: return "Symbolic";
  }
  return "?";
}

inline constexpr std::array<Family, 4> kFamilies = {Family::Sensory, Family::BrainOS,
                                                    Family::Cognitive, Family::Symbolic};

enum class SurrogateTask {
  None,        // derived biomarker, nothing to pretrain
  SpectralTilt,  // low vs high band voicing, seen through the Poisson mask
  Keyword,     // keyword burst present vs a distractor burst
  Intonation,  // eight pitch classes
  Cough,       // dark vs bright noise burst ("language" proxy)
};

struct Recipe {
  SurrogateTask task = SurrogateTask::None;
  std::size_t num_classes = 2;
  double chunk_seconds = 0.0;
  double learning_rate = 0.0;
  std::string keyword;
  bool poisson_mask = false;
  double brainos_chunk = 0.0;   // Brain OS entries
  std::string symbolic;         // Symbolic entries: average, linpos, linneg, pt
};

struct RegistryEntry {
  std::string id;
  Family family;
  Recipe recipe;

  bool trainable() const { return recipe.task != SurrogateTask::None; }
};

struct BiomarkerRegistry {
  std::string version = "ovbm-registry-1";
  std::vector<RegistryEntry> entries;

  const RegistryEntry& at(std::string_view id) const {
    for (const auto& e : entries) {
      if (e.id == id) return e;
    }
    fail(ErrorCode::MissingBiomarker, "no biomarker '" + std::string(id) + "' in registry");
  }
  std::vector<const RegistryEntry*> family(Family f) const {
    std::vector<const RegistryEntry*> out;
    for (const auto& e : entries) {
      if (e.family == f) out.push_back(&e);
    }
    return out;
  }
  /// Sensory then cognitive ids: the models that are pretrained and fused.
  std::vector<std::string> model_ids() const {
    std::vector<std::string> ids;
    for (Family f : {Family::Sensory, Family::Cognitive}) {
      for (const auto* e : family(f)) ids.push_back(e->id);
    }
    return ids;
  }
};

inline BiomarkerRegistry build_registry() {
  BiomarkerRegistry r;
  auto add = [&](std::string id, Family f, Recipe rec) {
    r.entries.push_back({std::move(id), f, std::move(rec)});
  };
  Recipe muscular{SurrogateTask::SpectralTilt, 2, 4.0, 1e-3, {}, true, 0.0, {}};
  Recipe them{SurrogateTask::Keyword, 2, 3.0, 1e-3, "them", false, 0.0, {}};
  Recipe sentiment{SurrogateTask::Intonation, 8, 4.0, 1e-4, {}, false, 0.0, {}};
  Recipe cough{SurrogateTask::Cough, 2, 6.0, 1e-4, {}, false, 0.0, {}};
  add("poisson_muscular", Family::Sensory, muscular);
  add("vocal_cords_ww_them", Family::Sensory, them);
  add("sentiment_8class", Family::Sensory, sentiment);
  add("cough_origin", Family::Sensory, cough);

  for (double size : brainos_sizes()) {
    Recipe rec;
    rec.brainos_chunk = size;
    add("brainos_" + std::to_string(static_cast<int>(size)), Family::BrainOS, rec);
  }

  const std::array<std::pair<const char*, const char*>, 4> words = {
      {{"ww_context", "kitchen"}, {"ww_unique", "tipping"}, {"ww_inferred", "jar"},
       {"ww_salient", "overflow"}}};
  for (const auto& [id, word] : words) {
    add(id, Family::Cognitive, Recipe{SurrogateTask::Keyword, 2, 3.0, 1e-3, word, false, 0.0, {}});
  }

  for (const char* s : {"average", "linpos", "linneg", "pt"}) {
    Recipe rec;
    rec.symbolic = s;
    add(std::string("symbolic_") + s, Family::Symbolic, rec);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Surrogate pretraining data

namespace detail {

inline void add_tone(std::vector<double>& x, int rate, double hz, double amp, std::size_t start,
                     std::size_t len, bool hann) {
  const std::size_t end = std::min(x.size(), start + len);
  for (std::size_t i = start; i < end; ++i) {
    const double t = static_cast<double>(i - start);
    double env = 1.0;
    if (hann) env = 0.5 - 0.5 * std::cos(2.0 * M_PI * t / static_cast<double>(len));
    x[i] += amp * env * std::sin(2.0 * M_PI * hz * t / rate);
  }
}

/// Keyword signature: three tones derived from the word.
inline std::array<double, 3> keyword_tones(std::string_view word) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : word) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  std::array<double, 3> f{};
  for (int k = 0; k < 3; ++k) {
    h = mix64(h + static_cast<std::uint64_t>(k));
    f[static_cast<std::size_t>(k)] = 300.0 + static_cast<double>(h % 2700);
  }
  return f;
}

}  // namespace detail

/// One surrogate training clip of `recipe.chunk_seconds` for the given class.
inline AudioClip surrogate_clip(const RegistryEntry& entry, std::size_t class_id,
                                std::uint64_t seed, int rate = 16000) {
  const Recipe& rec = entry.recipe;
  if (!entry.trainable()) {
    fail(ErrorCode::InvalidArgument, "biomarker '" + entry.id + "' has no surrogate task");
  }
  if (class_id >= rec.num_classes) fail(ErrorCode::InvalidArgument, "surrogate class out of range");
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate = rate;
  const std::size_t n = seconds_to_samples(rec.chunk_seconds, rate);
  clip.samples.assign(n, 0.0);
  auto& x = clip.samples;
  const double noise = 0.12;
  for (double& v : x) v = noise * rng.uniform(-1.0, 1.0);

  switch (rec.task) {
    case SurrogateTask::SpectralTilt: {
      const double lo = class_id == 0 ? 180.0 : 1100.0;
      const double hi = class_id == 0 ? 480.0 : 2600.0;
      for (int k = 0; k < 3; ++k) detail::add_tone(x, rate, rng.uniform(lo, hi), 0.2, 0, n, false);
      break;
    }
    case SurrogateTask::Keyword: {
      // Babble bed; positives carry a 0.9 s keyword burst.
      for (int k = 0; k < 2; ++k) {
        detail::add_tone(x, rate, rng.uniform(150.0, 3000.0), 0.08, 0, n, false);
      }
      const std::size_t seg = static_cast<std::size_t>(0.3 * rate);
      const std::size_t start = rng.index(n > 3 * seg ? n - 3 * seg : 1);
      if (class_id == 1) {
        const auto tones = detail::keyword_tones(rec.keyword);
        for (std::size_t k = 0; k < 3; ++k) {
          detail::add_tone(x, rate, tones[k] * rng.uniform(0.98, 1.02), 0.45, start + k * seg,
                           seg, true);
        }
      }
      break;
    }
    case SurrogateTask::Intonation: {
      const double f0 = 160.0 * std::pow(1.4, static_cast<double>(class_id)) * rng.uniform(0.97, 1.03);
      detail::add_tone(x, rate, f0, 0.35, 0, n, false);
      detail::add_tone(x, rate, 2.0 * f0, 0.15, 0, n, false);
      break;
    }
    case SurrogateTask::Cough: {
      detail::add_tone(x, rate, rng.uniform(150.0, 400.0), 0.1, 0, n, false);
      // One 0.4 s burst: one-pole low-pass (dark) or first difference (bright).
      const std::size_t len = static_cast<std::size_t>(0.4 * rate);
      const std::size_t start = rng.index(n > len ? n - len : 1);
      double state = 0.0, prev = 0.0;
      for (std::size_t i = start; i < std::min(n, start + len); ++i) {
        const double w = rng.uniform(-1.0, 1.0);
        double v;
        if (class_id == 0) {
          state = 0.9 * state + 0.1 * w;
          v = 4.0 * state;
        } else {
          v = 0.5 * (w - prev);
        }
        prev = w;
        const double t = static_cast<double>(i - start) / static_cast<double>(len);
        x[i] += 0.6 * std::sin(M_PI * t) * v;
      }
      break;
    }
    case SurrogateTask::None:
      break;
  }
  for (double& v : x) v = std::clamp(v, -1.0, 1.0);
  return clip;
}

/// Balanced surrogate set: samples_per_class clips per class, one MFCC image
/// each, ordered class-major.
inline std::vector<LabeledImage> surrogate_dataset(const RegistryEntry& entry,
                                                   std::size_t samples_per_class,
                                                   std::uint64_t seed,
                                                   const MfccParams& params = {}) {
  const MfccExtractor extractor(params);
  std::vector<LabeledImage> out;
  const std::uint64_t base = sub_seed(seed, "surrogate:" + entry.id);
  for (std::size_t c = 0; c < entry.recipe.num_classes; ++c) {
    for (std::size_t i = 0; i < samples_per_class; ++i) {
      const AudioClip clip = surrogate_clip(entry, c, mix64(base ^ mix64(c * 100003 + i + 1)),
                                            params.sample_rate);
      out.push_back({extractor.extract(clip), c});
    }
  }
  return out;
}

/// Fresh model for a registry entry, pretrained on its surrogate task with the
/// recipe's learning rate (all layers trainable).
inline TrainResult pretrain_biomarker(const RegistryEntry& entry, const CnnArch& arch,
                                      const std::vector<LabeledImage>& data, TrainConfig cfg) {
  BiomarkerModel model =
      init_cnn(arch, entry.recipe.num_classes, sub_seed(cfg.seed, "init:" + entry.id), entry.id);
  if (entry.recipe.poisson_mask) model.input_mask = PoissonMaskConfig{};
  cfg.learning_rate = entry.recipe.learning_rate;
  cfg.seed = sub_seed(cfg.seed, "pretrain:" + entry.id);
  return train(std::move(model), data, cfg, TransferStrategy::all());
}

}  // namespace ovbm

#endif  // OVBM_REGISTRY_HPP
