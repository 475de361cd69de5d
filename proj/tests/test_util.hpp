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

#ifndef OVBM_TESTS_TEST_UTIL_HPP
#define OVBM_TESTS_TEST_UTIL_HPP

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "ovbm/audio_io.hpp"
#include "ovbm/common.hpp"

namespace ovbm::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("ovbm_" + tag + "_" + std::to_string(mix64(reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline AudioClip random_clip(double seconds, std::uint64_t seed, int rate = 16000) {
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(seconds_to_samples(seconds, rate));
  for (auto& s : clip.samples) s = rng.uniform(-0.5, 0.5);
  return clip;
}

inline AudioClip tone(double hz, double seconds, double amp = 1.0, int rate = 16000) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(seconds_to_samples(seconds, rate));
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / rate);
  }
  return clip;
}

inline double frobenius(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

inline double relative_frobenius(const Matrix& a, const Matrix& b) {
  std::vector<double> diff(a.data.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.data[i] - b.data[i];
  return frobenius(diff) / frobenius(b.data);
}

}  // namespace ovbm::testing

#endif  // OVBM_TESTS_TEST_UTIL_HPP
