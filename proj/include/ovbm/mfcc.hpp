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

#ifndef OVBM_MFCC_HPP
#define OVBM_MFCC_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "ovbm/audio_io.hpp"
#include "ovbm/common.hpp"
#include "ovbm/fft.hpp"
#include "ovbm/io.hpp"

namespace ovbm {

/// MFCC extraction parameters. Defaults: 20 ms window, 10 ms step, 200
/// cepstra from 200 filters, 2048-point FFT at 16 kHz.
struct MfccParams {
  double window_len = 0.020;
  double window_step = 0.010;
  int num_cepstra = 200;
  int num_filters = 200;
  int fft_size = 2048;
  int sample_rate = 16000;
  double preemphasis = 0.97;
  double low_freq = 0.0;
  double high_freq = -1.0;  // <= 0 means sample_rate / 2
  double log_floor = 1e-10;
  int lifter = 22;  // 0 disables liftering
  bool append_energy = true;

  double upper_freq() const { return high_freq > 0.0 ? high_freq : sample_rate / 2.0; }
  // Half-up rounding, matching the reference framing of 20 ms -> 320 samples.
  std::size_t frame_length() const {
    return static_cast<std::size_t>(std::floor(window_len * sample_rate + 0.5));
  }
  std::size_t frame_step() const {
    return static_cast<std::size_t>(std::floor(window_step * sample_rate + 0.5));
  }

  void validate() const {
    if (sample_rate <= 0) fail(ErrorCode::InvalidArgument, "sample_rate must be positive");
    if (frame_length() == 0 || frame_step() == 0) {
      fail(ErrorCode::InvalidArgument, "window length and step must span at least one sample");
    }
    if (num_filters <= 0 || num_cepstra <= 0 || num_cepstra > num_filters) {
      fail(ErrorCode::InvalidArgument, "require 0 < num_cepstra <= num_filters");
    }
    if (!is_power_of_two(static_cast<std::size_t>(fft_size)) ||
        static_cast<std::size_t>(fft_size) < frame_length()) {
      fail(ErrorCode::InvalidArgument, "fft_size must be a power of two >= frame length");
    }
    if (!(preemphasis >= 0.0 && preemphasis < 1.0)) {
      fail(ErrorCode::InvalidArgument, "preemphasis must lie in [0, 1)");
    }
    if (!(low_freq >= 0.0 && low_freq < upper_freq() && upper_freq() <= sample_rate / 2.0)) {
      fail(ErrorCode::InvalidArgument, "require 0 <= low_freq < high_freq <= sample_rate/2");
    }
    if (!(log_floor > 0.0)) fail(ErrorCode::InvalidArgument, "log_floor must be positive");
  }

  bool operator==(const MfccParams&) const = default;
};

/// Time x coefficient feature image.
struct MfccImage {
  Matrix values;  // [num_frames x num_cepstra]
  MfccParams params;
  double span_start = 0.0;
  double span_end = 0.0;

  std::size_t frames() const { return values.rows; }
  std::size_t coeffs() const { return values.cols; }
};

inline std::size_t num_frames(std::size_t num_samples, std::size_t frame_len, std::size_t step) {
  if (num_samples <= frame_len) return 1;
  return 1 + (num_samples - frame_len + step - 1) / step;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Pre-emphasized, rectangular-windowed frames; the tail is zero-padded.
inline Matrix frame_signal(const AudioClip& clip, const MfccParams& params) {
  params.validate();
  if (clip.sample_rate != params.sample_rate) {
    fail(ErrorCode::RateMismatch, "clip at " + std::to_string(clip.sample_rate) +
                                      " Hz, params expect " + std::to_string(params.sample_rate));
  }
  const std::size_t len = params.frame_length();
  const std::size_t step = params.frame_step();
  const auto& x = clip.samples;
  const std::size_t n = x.size();
  const std::size_t frames = num_frames(n, len, step);

  Matrix out(frames, len);
  for (std::size_t f = 0; f < frames; ++f) {
    double* row = out.row(f);
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t i = f * step + j;
      if (i >= n) break;
      row[j] = i == 0 ? x[0] : x[i] - params.preemphasis * x[i - 1];
    }
  }
  return out;
}

/// Triangular mel filters over the one-sided FFT bins. `edges` holds the
/// num_filters + 2 bin indices: filter j rises over [edges[j], edges[j+1]]
/// and falls over [edges[j+1], edges[j+2]].
struct FilterBank {
  Matrix weights;  // [num_filters x (fft_size/2 + 1)]
  std::vector<std::size_t> edges;
};

inline FilterBank mel_filterbank(const MfccParams& params) {
  params.validate();
  const int nfilt = params.num_filters;
  const std::size_t nbins = static_cast<std::size_t>(params.fft_size) / 2 + 1;
  const double low = hz_to_mel(params.low_freq);
  const double high = hz_to_mel(params.upper_freq());

  FilterBank fb;
  fb.edges.resize(static_cast<std::size_t>(nfilt) + 2);
  for (int i = 0; i < nfilt + 2; ++i) {
    const double mel = low + (high - low) * i / (nfilt + 1);
    fb.edges[static_cast<std::size_t>(i)] = static_cast<std::size_t>(
        std::floor((params.fft_size + 1) * mel_to_hz(mel) / params.sample_rate));
  }
  for (std::size_t i = 1; i < fb.edges.size(); ++i) {
    if (fb.edges[i] <= fb.edges[i - 1]) {
      fail(ErrorCode::TooManyFilters,
           std::to_string(nfilt) + " filters collide on the " + std::to_string(params.fft_size) +
               "-point bin grid at edge " + std::to_string(i));
    }
  }

  fb.weights = Matrix(static_cast<std::size_t>(nfilt), nbins);
  for (std::size_t j = 0; j < static_cast<std::size_t>(nfilt); ++j) {
    const std::size_t a = fb.edges[j], b = fb.edges[j + 1], c = fb.edges[j + 2];
    for (std::size_t k = a; k < b; ++k) {
      fb.weights(j, k) = static_cast<double>(k - a) / static_cast<double>(b - a);
    }
    for (std::size_t k = b; k < c && k < nbins; ++k) {
      fb.weights(j, k) = static_cast<double>(c - k) / static_cast<double>(c - b);
    }
  }
  return fb;
}

/// Orthonormal DCT-II basis, row k = output coefficient k.
inline Matrix dct2_matrix(std::size_t n) {
  Matrix m(n, n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      m(k, i) = (k == 0 ? s0 : sk) *
                std::cos(M_PI * static_cast<double>(k) * (2.0 * i + 1.0) / (2.0 * n));
    }
  }
  return m;
}

inline double lifter_gain(int lifter, std::size_t n) {
  if (lifter <= 0) return 1.0;
  return 1.0 + (lifter / 2.0) * std::sin(M_PI * static_cast<double>(n) / lifter);
}

/// Log filterbank energies and log frame energies; the pre-DCT stage.
struct LogEnergies {
  Matrix filters;              // [num_frames x num_filters], natural log
  std::vector<double> frames;  // log total power per frame
};

/// Reusable extractor holding the FFT plan, filterbank and DCT basis for one
/// parameter set.
class MfccExtractor {
 public:
  explicit MfccExtractor(const MfccParams& params)
      : params_(params),
        fft_(static_cast<std::size_t>(params.fft_size)),
        bank_(mel_filterbank(params)),
        dct_(dct2_matrix(static_cast<std::size_t>(params.num_filters))) {}

  const MfccParams& params() const { return params_; }
  const FilterBank& filterbank() const { return bank_; }

  LogEnergies log_energies(const AudioClip& clip) const {
    if (clip.samples.empty()) fail(ErrorCode::EmptyAudio, "cannot extract MFCC from an empty clip");
    const Matrix frames = frame_signal(clip, params_);
    const std::size_t nfilt = static_cast<std::size_t>(params_.num_filters);
    const double scale = 1.0 / params_.fft_size;

    LogEnergies out{Matrix(frames.rows, nfilt), std::vector<double>(frames.rows)};
    std::vector<double> power;
    for (std::size_t f = 0; f < frames.rows; ++f) {
      fft_.power_spectrum(frames.row(f), frames.cols, power);
      double total = 0.0;
      for (double& p : power) {
        p *= scale;
        total += p;
      }
      out.frames[f] = std::log(std::max(total, params_.log_floor));
      for (std::size_t j = 0; j < nfilt; ++j) {
        const std::size_t lo = bank_.edges[j] + 1;  // weight at the left edge is zero
        const std::size_t hi = std::min(bank_.edges[j + 2], power.size());
        const double* w = bank_.weights.row(j);
        double e = 0.0;
        for (std::size_t k = lo; k < hi; ++k) e += w[k] * power[k];
        out.filters(f, j) = std::log(std::max(e, params_.log_floor));
      }
    }
    return out;
  }

  MfccImage extract(const AudioClip& clip) const {
    const LogEnergies le = log_energies(clip);
    const std::size_t ncep = static_cast<std::size_t>(params_.num_cepstra);
    const std::size_t nfilt = static_cast<std::size_t>(params_.num_filters);

    MfccImage img;
    img.params = params_;
    img.span_end = clip.duration();
    img.values = Matrix(le.filters.rows, ncep);
    for (std::size_t f = 0; f < le.filters.rows; ++f) {
      const double* in = le.filters.row(f);
      double* out = img.values.row(f);
      for (std::size_t k = 0; k < ncep; ++k) {
        const double* basis = dct_.row(k);
        double acc = 0.0;
        for (std::size_t i = 0; i < nfilt; ++i) acc += basis[i] * in[i];
        out[k] = acc * lifter_gain(params_.lifter, k);
      }
      if (params_.append_energy) out[0] = le.frames[f];
    }
    return img;
  }

 private:
  MfccParams params_;
  Fft fft_;
  FilterBank bank_;
  Matrix dct_;
};

inline MfccImage mfcc(const AudioClip& clip, const MfccParams& params = {}) {
  return MfccExtractor(params).extract(clip);
}

inline LogEnergies log_filterbank_energies(const AudioClip& clip, const MfccParams& params = {}) {
  return MfccExtractor(params).log_energies(clip);
}

// ---------------------------------------------------------------------------
// Cached-feature file: "MFCC", u32 version, u32 rows, u32 cols, float32 data.

inline constexpr std::uint32_t kMfccFileVersion = 1;

inline Bytes encode_mfcc(const MfccImage& img) {
  ByteWriter w;
  w.str("MFCC");
  w.u32(kMfccFileVersion);
  w.u32(static_cast<std::uint32_t>(img.values.rows));
  w.u32(static_cast<std::uint32_t>(img.values.cols));
  for (double v : img.values.data) w.f32(static_cast<float>(v));
  return std::move(w.bytes());
}

/// Only the matrix is stored; params and span come back as defaults.
inline MfccImage decode_mfcc(const Bytes& bytes) {
  ByteReader r(bytes, ErrorCode::MalformedContainer);
  if (r.str(4) != "MFCC") fail(ErrorCode::MalformedContainer, "missing MFCC magic");
  const std::uint32_t version = r.u32();
  if (version != kMfccFileVersion) {
    fail(ErrorCode::UnsupportedEncoding, "MFCC file version " + std::to_string(version));
  }
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (static_cast<std::size_t>(rows) * cols * 4 != r.remaining()) {
    fail(ErrorCode::MalformedContainer, "MFCC payload size does not match header");
  }
  MfccImage img;
  img.values = Matrix(rows, cols);
  for (auto& v : img.values.data) v = r.f32();
  return img;
}

inline void save_mfcc(const std::filesystem::path& path, const MfccImage& img) {
  write_file_atomic(path, encode_mfcc(img));
}

inline MfccImage load_mfcc(const std::filesystem::path& path) { return decode_mfcc(read_file(path)); }

}  // namespace ovbm

#endif  // OVBM_MFCC_HPP
