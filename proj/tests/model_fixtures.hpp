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

#ifndef OVBM_TESTS_MODEL_FIXTURES_HPP
#define OVBM_TESTS_MODEL_FIXTURES_HPP

#include <vector>

#include "ovbm/cnn.hpp"
#include "ovbm/train.hpp"

namespace ovbm::testing {

inline CnnArch tiny_arch(std::size_t blocks = 2) {
  CnnArch a;
  a.input_frames = 24;
  a.input_coeffs = 16;
  a.pool_frames = 2;
  a.pool_coeffs = 2;
  a.stem_channels = 3;
  a.num_blocks = blocks;
  a.embedding_dim = 6;
  a.input_scale = 0.5;
  return a;
}

inline MfccImage noise_image(std::size_t frames, std::size_t coeffs, Rng& rng, double amp = 1.0) {
  MfccImage img;
  img.values = Matrix(frames, coeffs, 0.0);
  for (double& v : img.values.data) v = rng.uniform(-amp, amp);
  return img;
}

/// Two classes told apart by which half of the coefficient axis carries a
/// positive offset; balanced and interleaved.
inline std::vector<LabeledImage> separable_set(std::size_t n, std::uint64_t seed,
                                               double offset = 2.0) {
  Rng rng(seed);
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    MfccImage img = noise_image(24, 16, rng);
    for (std::size_t r = 0; r < 24; ++r) {
      for (std::size_t c = label * 8; c < label * 8 + 8; ++c) img.values(r, c) += offset;
    }
    out.push_back({std::move(img), label});
  }
  return out;
}

}  // namespace ovbm::testing

#endif  // OVBM_TESTS_MODEL_FIXTURES_HPP
