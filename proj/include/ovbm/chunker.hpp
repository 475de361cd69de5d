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

#ifndef OVBM_CHUNKER_HPP
#define OVBM_CHUNKER_HPP

#include <array>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "ovbm/audio_io.hpp"
#include "ovbm/degradation.hpp"
#include "ovbm/mfcc.hpp"

namespace ovbm {

struct Interval {
  double start = 0.0;
  double end = 0.0;
  bool operator==(const Interval&) const = default;
};

/// Overlapping fixed-size windows over a recording; the recording is treated
/// as zero-padded so the final window is whole.
struct ChunkPlan {
  double chunk_size = 0.0;
  double stride = 0.0;
  std::vector<Interval> intervals;

  double padded_duration() const { return intervals.empty() ? 0.0 : intervals.back().end; }
};

struct Chunk {
  std::size_t index = 0;
  Interval span;
  MfccImage features;
};

inline ChunkPlan chunk_plan(double duration, double chunk_size, double stride) {
  if (!(chunk_size > 0.0) || !(stride > 0.0) || !(duration > 0.0)) {
    fail(ErrorCode::InvalidArgument, "duration, chunk_size and stride must be positive");
  }
  // Tolerance absorbs durations derived from sample counts (e.g. 7.99999999).
  constexpr double kEps = 1e-9;
  std::size_t extra = 0;
  if (duration > chunk_size) {
    extra = static_cast<std::size_t>(std::ceil((duration - chunk_size) / stride - kEps));
  }
  ChunkPlan plan{chunk_size, stride, {}};
  plan.intervals.reserve(extra + 1);
  for (std::size_t i = 0; i <= extra; ++i) {
    const double start = static_cast<double>(i) * stride;
    plan.intervals.push_back({start, start + chunk_size});
  }
  return plan;
}

/// Chunk sizes (seconds) used as the Brain OS biomarkers.
inline constexpr std::array<double, 4> brainos_sizes() { return {2.0, 8.0, 14.0, 20.0}; }

inline constexpr double kDefaultStride = 2.0;

/// Cuts the (zero-padded) clip along the plan and extracts features per
/// chunk, optionally Poisson-masked.
inline std::vector<Chunk> extract_chunks(const AudioClip& clip, const ChunkPlan& plan,
                                         const MfccExtractor& extractor,
                                         const std::optional<PoissonMaskConfig>& mask = {}) {
  if (plan.intervals.empty()) fail(ErrorCode::InvalidArgument, "empty chunk plan");
  const AudioClip padded =
      clip.duration() < plan.padded_duration() ? pad_to(clip, plan.padded_duration()) : clip;
  const int rate = clip.sample_rate;
  const std::size_t len = seconds_to_samples(plan.chunk_size, rate);

  std::vector<Chunk> chunks;
  chunks.reserve(plan.intervals.size());
  for (std::size_t i = 0; i < plan.intervals.size(); ++i) {
    const Interval& span = plan.intervals[i];
    const std::size_t begin = seconds_to_samples(span.start, rate);
    AudioClip piece;
    piece.sample_rate = rate;
    piece.samples.assign(len, 0.0);
    for (std::size_t j = 0; j < len && begin + j < padded.samples.size(); ++j) {
      piece.samples[j] = padded.samples[begin + j];
    }
    Chunk chunk{i, span, extractor.extract(piece)};
    if (mask) chunk.features = apply_poisson_mask(chunk.features, *mask);
    chunk.features.span_start = span.start;
    chunk.features.span_end = span.end;
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

inline std::vector<Chunk> extract_chunks(const AudioClip& clip, const ChunkPlan& plan,
                                         const MfccParams& params,
                                         const std::optional<PoissonMaskConfig>& mask = {}) {
  return extract_chunks(clip, plan, MfccExtractor(params), mask);
}

}  // namespace ovbm

#endif  // OVBM_CHUNKER_HPP
