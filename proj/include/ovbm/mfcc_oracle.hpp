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

#ifndef OVBM_MFCC_ORACLE_HPP
#define OVBM_MFCC_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "ovbm/audio_io.hpp"
#include "ovbm/mfcc.hpp"

namespace ovbm {

// Reference MFCC for tests: direct DFT, per-bin triangle evaluation and direct
// DCT sums. Shares only MfccParams and the mel formulas with the fast path.
// O(frame_len * fft_size) per frame, hence the 2 s limit.

inline constexpr double kOracleMaxSeconds = 2.0;

inline MfccImage mfcc_oracle(const AudioClip& clip, const MfccParams& p = {}) {
  p.validate();
  if (clip.samples.empty()) fail(ErrorCode::EmptyAudio, "empty clip");
  if (clip.duration() > kOracleMaxSeconds) {
    fail(ErrorCode::OracleTooLarge, "oracle limited to 2 s clips");
  }
  if (clip.sample_rate != p.sample_rate) fail(ErrorCode::RateMismatch, "rate mismatch");

  const std::size_t n = clip.samples.size();
  const std::size_t len = p.frame_length();
  const std::size_t step = p.frame_step();
  const std::size_t nfft = static_cast<std::size_t>(p.fft_size);
  const std::size_t nbins = nfft / 2 + 1;
  const std::size_t nfilt = static_cast<std::size_t>(p.num_filters);
  const std::size_t ncep = static_cast<std::size_t>(p.num_cepstra);

  std::size_t frames = 1;
  while (n > len && (frames - 1) * step + len < n) ++frames;

  std::vector<double> emph(n);
  for (std::size_t i = 0; i < n; ++i) {
    emph[i] = clip.samples[i] - (i > 0 ? p.preemphasis * clip.samples[i - 1] : 0.0);
  }

  // Triangle edges in bins, evaluated per (filter, bin) below.
  std::vector<double> edge(nfilt + 2);
  const double mlo = hz_to_mel(p.low_freq), mhi = hz_to_mel(p.upper_freq());
  for (std::size_t i = 0; i < nfilt + 2; ++i) {
    edge[i] = std::floor((nfft + 1) * mel_to_hz(mlo + (mhi - mlo) * i / (nfilt + 1)) /
                         p.sample_rate);
  }
  auto weight = [&](std::size_t j, double k) {
    const double a = edge[j], b = edge[j + 1], c = edge[j + 2];
    if (k >= a && k < b) return (k - a) / (b - a);
    if (k >= b && k < c) return (c - k) / (c - b);
    return 0.0;
  };

  std::vector<double> cos_table(nfft), sin_table(nfft);
  for (std::size_t i = 0; i < nfft; ++i) {
    cos_table[i] = std::cos(2.0 * M_PI * i / nfft);
    sin_table[i] = std::sin(2.0 * M_PI * i / nfft);
  }

  MfccImage img;
  img.params = p;
  img.span_end = clip.duration();
  img.values = Matrix(frames, ncep);
  std::vector<double> frame(len), power(nbins), logfb(nfilt);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t i = f * step + j;
      frame[j] = i < n ? emph[i] : 0.0;
    }
    double total = 0.0;
    for (std::size_t k = 0; k < nbins; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t idx = (k * t) % nfft;
        re += frame[t] * cos_table[idx];
        im -= frame[t] * sin_table[idx];
      }
      power[k] = (re * re + im * im) / static_cast<double>(nfft);
      total += power[k];
    }
    for (std::size_t j = 0; j < nfilt; ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k < nbins; ++k) e += weight(j, static_cast<double>(k)) * power[k];
      logfb[j] = std::log(std::max(e, p.log_floor));
    }
    for (std::size_t k = 0; k < ncep; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < nfilt; ++i) {
        acc += logfb[i] * std::cos(M_PI * k * (2.0 * i + 1.0) / (2.0 * nfilt));
      }
      acc *= k == 0 ? std::sqrt(1.0 / nfilt) : std::sqrt(2.0 / nfilt);
      if (p.lifter > 0) acc *= 1.0 + (p.lifter / 2.0) * std::sin(M_PI * k / p.lifter);
      img.values(f, k) = acc;
    }
    if (p.append_energy) img.values(f, 0) = std::log(std::max(total, p.log_floor));
  }
  return img;
}

}  // namespace ovbm

#endif  // OVBM_MFCC_ORACLE_HPP
