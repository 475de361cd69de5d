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

#ifndef OVBM_COMMON_HPP
#define OVBM_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ovbm {

enum class ErrorCode {
  InvalidArgument,
  MalformedContainer,
  UnsupportedEncoding,
  EmptyAudio,
  ShrinkRequested,
  MissingColumn,
  DuplicateSubject,
  UnparseableLabel,
  RateMismatch,
  TooManyFilters,
  OracleTooLarge,
  NegativeK,
  ShapeMismatch,
  NonFiniteActivation,
  NTooLarge,
  SingleClassDataset,
  EmptyMembers,
  MemberOrderMismatch,
  UnknownMember,
  DimMismatch,
  EmptyList,
  MissingBiomarker,
  RegistryMismatch,
  IoFailure,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedContainer: return "MalformedContainer";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::ShrinkRequested: return "ShrinkRequested";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DuplicateSubject: return "DuplicateSubject";
    case ErrorCode::UnparseableLabel: return "UnparseableLabel";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::TooManyFilters: return "TooManyFilters";
    case ErrorCode::OracleTooLarge: return "OracleTooLarge";
    case ErrorCode::NegativeK: return "NegativeK";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::NTooLarge: return "NTooLarge";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::EmptyMembers: return "EmptyMembers";
    case ErrorCode::MemberOrderMismatch: return "MemberOrderMismatch";
    case ErrorCode::UnknownMember: return "UnknownMember";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::MissingBiomarker: return "MissingBiomarker";
    case ErrorCode::RegistryMismatch: return "RegistryMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an `Error` carrying one of the
/// named codes above, so callers (the CLI in particular) can map it to an exit
/// status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool operator==(const Matrix&) const = default;
};

// ---------------------------------------------------------------------------
// Randomness. Every random draw in the project goes through `Rng`, whose
// output is defined by the bit stream of mt19937_64 alone (no std
// distributions, whose algorithms differ between standard libraries).

/// splitmix64 finalizer; used to derive named sub-seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed for a named component ("split", "init", ...).
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = mix64(seed);
  for (unsigned char c : name) h = mix64(h ^ c);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    // Rejection sampling; no modulo bias.
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Rounds to the nearest float32 value; weights are kept float32-representable
/// so weight files round-trip exactly.
inline double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace ovbm

#endif  // OVBM_COMMON_HPP
