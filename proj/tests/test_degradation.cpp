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

#include "ovbm/degradation.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ovbm {
namespace {

MfccImage filled(std::size_t rows, std::size_t cols, double v) {
  MfccImage img;
  img.values = Matrix(rows, cols, v);
  return img;
}

TEST(PoissonPmf, SmallKAtUnitRate) {
  const double e = std::exp(-1.0);
  EXPECT_NEAR(poisson_pmf(0, 1.0), e, 1e-12);
  EXPECT_NEAR(poisson_pmf(1, 1.0), e, 1e-12);
  EXPECT_NEAR(poisson_pmf(2, 1.0), e / 2.0, 1e-12);
  EXPECT_NEAR(poisson_pmf(3, 1.0), e / 6.0, 1e-12);
  EXPECT_NEAR(poisson_pmf(3, 1.0), 0.0613132, 1e-7);
}

TEST(PoissonPmf, LogSpaceBranchIsContinuous) {
  for (double lambda : {0.5, 1.0, 2.0, 15.0}) {
    // k = 20 is evaluated by product, k = 21 in log space.
    EXPECT_NEAR(poisson_pmf(21, lambda), poisson_pmf(20, lambda) * lambda / 21.0,
                1e-12 * poisson_pmf(20, lambda));
  }
  EXPECT_EQ(poisson_pmf(100000, 1.0), 0.0);
}

TEST(PoissonPmf, NormalizesOverTruncatedSupport) {
  for (double lambda : {0.5, 1.0, 2.0}) {
    double total = 0.0;
    for (long long k = 0; k <= 200; ++k) total += poisson_pmf(k, lambda);
    EXPECT_GE(total, 1.0 - 1e-9);
    EXPECT_LE(total, 1.0 + 1e-12);
  }
}

TEST(PoissonPmf, NegativeK) {
  try {
    poisson_pmf(-1, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeK);
  }
}

TEST(PoissonMask, ZerosStayZero) {
  const MfccImage out = apply_poisson_mask(filled(3, 4, 0.0));
  for (double v : out.values.data) EXPECT_EQ(v, 0.0);
}

TEST(PoissonMask, OnesBecomeInverseE) {
  const MfccImage out = apply_poisson_mask(filled(3, 4, 1.0));
  for (double v : out.values.data) EXPECT_NEAR(v, std::exp(-1.0), 1e-15);
}

TEST(PoissonMask, RealValueRoundsToNearest) {
  // 2.4 -> k = 2, factor e^-1 / 2 = 0.1839397
  const MfccImage out = apply_poisson_mask(filled(1, 1, 2.4));
  EXPECT_NEAR(out.values(0, 0), 2.4 * std::exp(-1.0) / 2.0, 1e-15);
  EXPECT_NEAR(out.values(0, 0), 0.4415, 1e-4);
}

TEST(PoissonMask, NeverAmplifiesAndKeepsSign) {
  Rng rng(17);
  MfccImage img = filled(40, 50, 0.0);
  for (auto& v : img.values.data) v = rng.uniform(-60.0, 60.0);
  img.params.num_cepstra = 50;
  img.span_start = 2.0;
  img.span_end = 6.0;
  const MfccImage out = apply_poisson_mask(img);
  ASSERT_EQ(out.values.rows, img.values.rows);
  EXPECT_EQ(out.params, img.params);
  EXPECT_EQ(out.span_end, 6.0);
  for (std::size_t i = 0; i < img.values.data.size(); ++i) {
    const double in = img.values.data[i], o = out.values.data[i];
    EXPECT_LE(std::abs(o), std::abs(in) * std::exp(-1.0) + 1e-15);
    EXPECT_TRUE(o == 0.0 || std::signbit(o) == std::signbit(in));
  }
  const MfccImage again = apply_poisson_mask(img);
  EXPECT_EQ(again.values, out.values);
}

}  // namespace
}  // namespace ovbm
