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

#ifndef OVBM_FFT_HPP
#define OVBM_FFT_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "ovbm/common.hpp"

namespace ovbm {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT with precomputed twiddles and bit reversal.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), twiddle_(n / 2), reversed_(n) {
    if (!is_power_of_two(n)) fail(ErrorCode::InvalidArgument, "FFT size must be a power of two");
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      reversed_[i] = r;
    }
  }

  std::size_t size() const { return n_; }

  void transform(std::vector<std::complex<double>>& x) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < reversed_[i]) std::swap(x[i], x[reversed_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const auto t = twiddle_[k * stride] * x[start + k + half];
          x[start + k + half] = x[start + k] - t;
          x[start + k] += t;
        }
      }
    }
  }

  /// |X_k|^2 for k = 0..n/2 of a real frame zero-padded to n.
  void power_spectrum(const double* frame, std::size_t len, std::vector<double>& out) const {
    std::vector<std::complex<double>> buf(n_);
    for (std::size_t i = 0; i < len && i < n_; ++i) buf[i] = frame[i];
    transform(buf);
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = std::norm(buf[k]);
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> reversed_;
};

}  // namespace ovbm

#endif  // OVBM_FFT_HPP
