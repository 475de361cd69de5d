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

#include "ovbm/mfcc.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "ovbm/mfcc_oracle.hpp"
#include "test_util.hpp"

namespace ovbm {
namespace {

using testing::random_clip;
using testing::relative_frobenius;
using testing::tone;

TEST(Framing, OneSecondGives99Frames) {
  const MfccParams p;
  EXPECT_EQ(p.frame_length(), 320u);
  EXPECT_EQ(p.frame_step(), 160u);
  // 1 + ceil((16000 - 320) / 160) = 1 + 98
  EXPECT_EQ(num_frames(16000, 320, 160), 99u);
  const Matrix frames = frame_signal(random_clip(1.0, 1), p);
  EXPECT_EQ(frames.rows, 99u);
  EXPECT_EQ(frames.cols, 320u);
}

TEST(Framing, ExactFrameNeedsNoPadding) {
  const AudioClip clip = random_clip(0.02, 2);
  ASSERT_EQ(clip.samples.size(), 320u);
  const Matrix frames = frame_signal(clip, {});
  ASSERT_EQ(frames.rows, 1u);
  EXPECT_EQ(frames(0, 0), clip.samples[0]);
  EXPECT_DOUBLE_EQ(frames(0, 319), clip.samples[319] - 0.97 * clip.samples[318]);
}

TEST(Framing, ShortClipIsZeroPaddedToOneFrame) {
  AudioClip clip{{0.5, 0.25}, 16000};
  const Matrix frames = frame_signal(clip, {});
  ASSERT_EQ(frames.rows, 1u);
  EXPECT_EQ(frames(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(frames(0, 1), 0.25 - 0.97 * 0.5);
  for (std::size_t j = 2; j < 320; ++j) EXPECT_EQ(frames(0, j), 0.0);
}

TEST(Framing, SilenceStaysSilent) {
  const Matrix frames = frame_signal({std::vector<double>(4000, 0.0), 16000}, {});
  for (double v : frames.data) EXPECT_EQ(v, 0.0);
}

TEST(Framing, RateMismatch) {
  try {
    frame_signal({std::vector<double>(800, 0.0), 8000}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RateMismatch);
  }
}

TEST(MelScale, KnownValuesAndInverse) {
  EXPECT_EQ(hz_to_mel(0.0), 0.0);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(hz_to_mel(700.0), 781.17, 5e-3);
  for (double f : {100.0, 1000.0, 7999.0}) {
    EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-9 * f);
  }
}

TEST(Filterbank, RowsAreNonnegativeUnimodalAndOrdered) {
  const MfccParams p;
  const FilterBank fb = mel_filterbank(p);
  ASSERT_EQ(fb.weights.rows, 200u);
  ASSERT_EQ(fb.weights.cols, 1025u);
  std::size_t prev_peak = 0;
  for (std::size_t j = 0; j < fb.weights.rows; ++j) {
    const double* w = fb.weights.row(j);
    const auto peak = static_cast<std::size_t>(std::max_element(w, w + fb.weights.cols) - w);
    EXPECT_EQ(w[peak], 1.0);
    std::size_t maxima = 0;
    for (std::size_t k = 0; k < fb.weights.cols; ++k) {
      EXPECT_GE(w[k], 0.0);
      maxima += w[k] == 1.0;
      if (k > 0 && k <= peak) {
        EXPECT_GE(w[k], w[k - 1]);
      }
      if (k > peak) {
        EXPECT_LE(w[k], w[k - 1]);
      }
    }
    EXPECT_EQ(maxima, 1u);
    if (j > 0) {
      EXPECT_GT(peak, prev_peak);
    }
    prev_peak = peak;
  }
}

TEST(Filterbank, CollidingCentersAreReported) {
  MfccParams p;
  p.fft_size = 512;
  try {
    mel_filterbank(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyFilters);
  }
}

TEST(Mfcc, SilenceHitsTheFloorEverywhere) {
  const AudioClip silence{std::vector<double>(16000, 0.0), 16000};
  const LogEnergies le = log_filterbank_energies(silence);
  const double floor = std::log(1e-10);
  for (double v : le.filters.data) EXPECT_EQ(v, floor);
  for (double v : le.frames) EXPECT_EQ(v, floor);

  const MfccImage img = mfcc(silence);
  for (std::size_t f = 1; f < img.frames(); ++f) {
    EXPECT_TRUE(std::equal(img.values.row(0), img.values.row(0) + img.coeffs(), img.values.row(f)));
  }

  const MfccImage ref = mfcc_oracle(silence);
  for (std::size_t f = 0; f < img.frames(); ++f) EXPECT_EQ(img.values(f, 0), ref.values(f, 0));
}

// Brute-force filter energies: direct DFT and triangle weights read from the
// filterbank matrix, summed over every bin.
std::vector<double> brute_force_filter_energies(const std::vector<double>& frame,
                                                const MfccParams& p) {
  const FilterBank fb = mel_filterbank(p);
  const std::size_t nfft = static_cast<std::size_t>(p.fft_size);
  std::vector<double> power(nfft / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < frame.size(); ++t) {
      re += frame[t] * std::cos(2.0 * M_PI * k * t / nfft);
      im -= frame[t] * std::sin(2.0 * M_PI * k * t / nfft);
    }
    power[k] = (re * re + im * im) / nfft;
  }
  std::vector<double> energies(fb.weights.rows);
  for (std::size_t j = 0; j < fb.weights.rows; ++j) {
    for (std::size_t k = 0; k < power.size(); ++k) energies[j] += fb.weights(j, k) * power[k];
  }
  return energies;
}

TEST(Mfcc, ToneEnergyPeaksInFilterCoveringIt) {
  const MfccParams p;
  const AudioClip clip = tone(440.0, 1.0);
  const Matrix frames = frame_signal(clip, p);
  const std::size_t mid = frames.rows / 2;
  const std::vector<double> frame(frames.row(mid), frames.row(mid) + frames.cols);
  const auto brute = brute_force_filter_energies(frame, p);
  const auto brute_peak =
      static_cast<std::size_t>(std::max_element(brute.begin(), brute.end()) - brute.begin());

  const LogEnergies le = log_filterbank_energies(clip, p);
  const double* row = le.filters.row(mid);
  const auto peak = static_cast<std::size_t>(std::max_element(row, row + le.filters.cols) - row);
  EXPECT_EQ(peak, brute_peak);

  const FilterBank fb = mel_filterbank(p);
  const double bin_hz = static_cast<double>(p.sample_rate) / p.fft_size;
  EXPECT_LE(fb.edges[peak] * bin_hz, 440.0);
  EXPECT_GE(fb.edges[peak + 2] * bin_hz, 440.0);
  for (std::size_t j = 0; j < brute.size(); ++j) {
    EXPECT_NEAR(row[j], std::log(std::max(brute[j], 1e-10)), 1e-8);
  }
}

TEST(Mfcc, DefaultShapeIs99By200) {
  const MfccImage img = mfcc(random_clip(1.0, 4));
  EXPECT_EQ(img.frames(), 99u);
  EXPECT_EQ(img.coeffs(), 200u);
  EXPECT_DOUBLE_EQ(img.span_end, 1.0);
}

TEST(Mfcc, EmptyClipIsRejected) {
  try {
    mfcc({{}, 16000});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyAudio);
  }
}

TEST(Mfcc, SingleFrameMatchesHandDct) {
  const AudioClip clip = random_clip(0.02, 8);
  const MfccParams p;
  const LogEnergies le = log_filterbank_energies(clip, p);
  const MfccImage img = mfcc(clip, p);
  ASSERT_EQ(img.frames(), 1u);
  const std::size_t n = 200;
  for (std::size_t k = 1; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += le.filters(0, i) * std::cos(M_PI * k * (i + 0.5) / n);
    }
    acc *= std::sqrt(2.0 / n) * (1.0 + 11.0 * std::sin(M_PI * k / 22.0));
    EXPECT_NEAR(img.values(0, k), acc, 1e-9 * std::max(1.0, std::abs(acc)));
  }
  EXPECT_EQ(img.values(0, 0), le.frames[0]);
}

TEST(Mfcc, MatchesOracleOnRandomClips) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const AudioClip clip = random_clip(rng.uniform(0.01, 0.6), seed + 100);
    const MfccImage fast = mfcc(clip);
    const MfccImage slow = mfcc_oracle(clip);
    ASSERT_EQ(fast.frames(), slow.frames());
    EXPECT_LT(relative_frobenius(fast.values, slow.values), 1e-6) << "seed " << seed;
  }
}

TEST(Mfcc, HalfSecondSeed7MatchesOracle) {
  const AudioClip clip = random_clip(0.5, 7);
  EXPECT_LT(relative_frobenius(mfcc(clip).values, mfcc_oracle(clip).values), 1e-6);
}

TEST(Mfcc, OracleRefusesLongClips) {
  try {
    mfcc_oracle(random_clip(2.5, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OracleTooLarge);
  }
}

TEST(Mfcc, ShiftByOneStepShiftsFrames) {
  const AudioClip clip = random_clip(0.5, 21);
  AudioClip shifted = clip;
  shifted.samples.erase(shifted.samples.begin(), shifted.samples.begin() + 160);
  const MfccImage a = mfcc(clip), b = mfcc(shifted);
  ASSERT_EQ(b.frames() + 1, a.frames());
  // Frame 0 of the shifted clip loses the pre-emphasis history; the tail frame
  // is padded differently. Interior frames must agree.
  for (std::size_t f = 1; f + 1 < b.frames(); ++f) {
    for (std::size_t k = 0; k < a.coeffs(); ++k) {
      EXPECT_NEAR(b.values(f, k), a.values(f + 1, k), 1e-9);
    }
  }
}

TEST(Mfcc, AmplitudeScalingAddsLogSquare) {
  const AudioClip clip = random_clip(0.3, 5);
  AudioClip louder = clip;
  const double c = 3.0;
  for (auto& s : louder.samples) s *= c;
  const LogEnergies a = log_filterbank_energies(clip), b = log_filterbank_energies(louder);
  const double floor = std::log(1e-10);
  for (std::size_t i = 0; i < a.filters.data.size(); ++i) {
    if (a.filters.data[i] > floor + 1.0) {
      EXPECT_NEAR(b.filters.data[i] - a.filters.data[i], std::log(c * c), 1e-9);
    }
  }
}

TEST(Mfcc, OutputIsFiniteForExtremeInputs) {
  AudioClip clip{std::vector<double>(4000, 0.0), 16000};
  for (std::size_t i = 0; i < clip.samples.size(); i += 97) clip.samples[i] = 1e-300;
  clip.samples[10] = 1.0;
  clip.samples[3000] = -1.0;
  EXPECT_TRUE(all_finite(mfcc(clip).values.data));
}

TEST(MfccFile, RoundTripsAsFloat32) {
  testing::TempDir dir("mfcc");
  const MfccImage img = mfcc(random_clip(0.1, 2));
  save_mfcc(dir / "x.mfcc", img);
  const MfccImage back = load_mfcc(dir / "x.mfcc");
  ASSERT_EQ(back.values.rows, img.values.rows);
  ASSERT_EQ(back.values.cols, img.values.cols);
  for (std::size_t i = 0; i < img.values.data.size(); ++i) {
    EXPECT_EQ(back.values.data[i], to_f32(img.values.data[i]));
  }
  const Bytes bytes = read_file(dir / "x.mfcc");
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MFCC");
  EXPECT_EQ(bytes.size(), 16 + img.values.data.size() * 4);
}

TEST(MfccFile, RejectsTruncatedPayload) {
  Bytes bytes = encode_mfcc(mfcc(random_clip(0.05, 2)));
  bytes.pop_back();
  EXPECT_THROW(decode_mfcc(bytes), Error);
}

}  // namespace
}  // namespace ovbm
