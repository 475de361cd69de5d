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

#ifndef OVBM_AGGREGATION_HPP
#define OVBM_AGGREGATION_HPP

#include <string>
#include <vector>

#include "ovbm/audio_io.hpp"
#include "ovbm/chunker.hpp"
#include "ovbm/fusion.hpp"

namespace ovbm {

enum class AggregationScheme { Average, LinearPositive, LinearNegative };

inline const char* to_string(AggregationScheme s) {
  switch (s) {
    case AggregationScheme::Average: return "average";
    case AggregationScheme::LinearPositive: return "linpos";
    case AggregationScheme::LinearNegative: return "linneg";
  }
  return "average";
}

inline AggregationScheme parse_scheme(const std::string& text) {
  if (text == "average") return AggregationScheme::Average;
  if (text == "linpos") return AggregationScheme::LinearPositive;
  if (text == "linneg") return AggregationScheme::LinearNegative;
  fail(ErrorCode::InvalidArgument, "scheme '" + text + "' (expected average, linpos or linneg)");
}

/// Chunk weights: uniform, or triangular w_i = 2i / (n(n+1)) rising
/// (LinearPositive) or falling (LinearNegative) over chunk order.
inline std::vector<double> aggregation_weights(std::size_t n, AggregationScheme scheme) {
  if (n == 0) fail(ErrorCode::EmptyList, "no chunks to aggregate");
  std::vector<double> w(n);
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (scheme) {
      case AggregationScheme::Average:
        w[i] = 1.0 / nd;
        break;
      case AggregationScheme::LinearPositive:
        w[i] = 2.0 * static_cast<double>(i + 1) / (nd * (nd + 1.0));
        break;
      case AggregationScheme::LinearNegative:
        w[i] = 2.0 * static_cast<double>(n - i) / (nd * (nd + 1.0));
        break;
    }
  }
  return w;
}

inline double aggregate(const std::vector<double>& probs, AggregationScheme scheme) {
  const auto w = aggregation_weights(probs.size(), scheme);
  double acc = 0.0, lo = 1.0, hi = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      fail(ErrorCode::InvalidArgument, "chunk probability " + std::to_string(p) + " outside [0, 1]");
    }
    acc += w[i] * p;
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  // Rounding can push a convex combination a hair outside its hull.
  return std::clamp(acc, lo, hi);
}

struct Diagnosis {
  std::string subject_id;
  double probability = 0.0;
  Label label = Label::Negative;
  double threshold = 0.5;
  std::vector<double> chunk_probs;
  AggregationScheme scheme = AggregationScheme::Average;
};

/// Ties go to positive.
inline Label threshold_label(double probability, double threshold) {
  return probability >= threshold ? Label::Positive : Label::Negative;
}

inline Diagnosis make_diagnosis(std::string subject_id, std::vector<double> chunk_probs,
                                AggregationScheme scheme, double threshold) {
  Diagnosis d;
  d.subject_id = std::move(subject_id);
  d.probability = aggregate(chunk_probs, scheme);
  d.label = threshold_label(d.probability, threshold);
  d.threshold = threshold;
  d.chunk_probs = std::move(chunk_probs);
  d.scheme = scheme;
  return d;
}

struct ChunkingParams {
  double chunk_size = 4.0;
  double stride = kDefaultStride;
  MfccParams mfcc;
};

inline std::vector<Chunk> chunk_clip(const AudioClip& clip, const ChunkingParams& p) {
  return extract_chunks(clip, chunk_plan(clip.duration(), p.chunk_size, p.stride), p.mfcc);
}

/// P(positive) of every chunk, in chunk order.
inline std::vector<double> chunk_probabilities(const Ensemble& e, const std::vector<Chunk>& chunks,
                                               const MetadataVector& meta) {
  std::vector<double> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) out.push_back(e.predict(c.features, meta));
  return out;
}

inline Diagnosis diagnose_clip(const std::string& subject_id, const AudioClip& clip,
                               const MetadataVector& meta, const Ensemble& e,
                               const ChunkingParams& p, AggregationScheme scheme,
                               double threshold = 0.5) {
  return make_diagnosis(subject_id, chunk_probabilities(e, chunk_clip(clip, p), meta), scheme,
                        threshold);
}

/// Loads the subject's audio (resampled to the MFCC rate) and diagnoses it.
inline Diagnosis diagnose(const SubjectRecord& subject, const Ensemble& e, const ChunkingParams& p,
                          AggregationScheme scheme, double threshold = 0.5) {
  AudioClip clip = load_wav(subject.wav_path);
  if (clip.sample_rate != p.mfcc.sample_rate) clip = resample_linear(clip, p.mfcc.sample_rate);
  return diagnose_clip(subject.subject_id, clip, MetadataVector::from_record(subject), e, p, scheme,
                       threshold);
}

}  // namespace ovbm

#endif  // OVBM_AGGREGATION_HPP
