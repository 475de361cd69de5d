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

#ifndef OVBM_DEGRADATION_HPP
#define OVBM_DEGRADATION_HPP

#include <algorithm>
#include <cmath>
#include <string>

#include "ovbm/common.hpp"
#include "ovbm/mfcc.hpp"

namespace ovbm {

/// How a real-valued MFCC entry becomes the integer pmf argument.
enum class ValueMapping {
  RoundClamp,  // nearest integer, negatives clamped to 0
};

struct PoissonMaskConfig {
  double lambda = 1.0;
  ValueMapping mapping = ValueMapping::RoundClamp;
};

/// Poisson pmf lambda^k e^{-lambda} / k!; log-space beyond k = 20.
inline double poisson_pmf(long long k, double lambda) {
  if (k < 0) fail(ErrorCode::NegativeK, "k = " + std::to_string(k));
  if (!(lambda > 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be positive");
  if (k <= 20) {
    double p = std::exp(-lambda);
    for (long long i = 1; i <= k; ++i) p *= lambda / static_cast<double>(i);
    return p;
  }
  const double kd = static_cast<double>(k);
  return std::exp(kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0));
}

inline long long map_value(double v, ValueMapping mapping) {
  switch (mapping) {
    case ValueMapping::RoundClamp:
      break;
  }
  // Beyond 1e9 the pmf has underflowed to zero for any sane lambda.
  return static_cast<long long>(std::clamp(std::round(v), 0.0, 1e9));
}

/// Elementwise out = pmf(map(v), lambda) * v. Deterministic weighting, no
/// sampling.
inline MfccImage apply_poisson_mask(const MfccImage& image, const PoissonMaskConfig& config = {}) {
  if (!(config.lambda > 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be positive");
  MfccImage out = image;
  for (double& v : out.values.data) {
    v = poisson_pmf(map_value(v, config.mapping), config.lambda) * v;
  }
  return out;
}

}  // namespace ovbm

#endif  // OVBM_DEGRADATION_HPP
