/* Copyright 2026 The RDRF Authors. All Rights Reserved.

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

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

namespace rdrf::testing {
namespace {

TEST(Psnr, CapAndClosedForm) {
  const TensorD a = lcg_image(1, {16, 16});
  EXPECT_EQ(psnr(a, a), 99.0);
  TensorD b = a;
  for (auto& v : b.vec()) v += 0.1;
  EXPECT_NEAR(psnr(b, a), 20.0, 1e-12);
  EXPECT_NEAR(psnr(b, a, 2.0), 20.0 + 20 * std::log10(2.0), 1e-12);
  EXPECT_THROW(psnr(a, TensorD(Shape{4, 4})), ShapeError);
}

TEST(Psnr, Symmetric) {
  const TensorD a = lcg_image(2, {3, 8, 8}), b = lcg_image(3, {3, 8, 8});
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Ssim, IdenticalIsOne) {
  const TensorD a = lcg_image(4, {32, 32});
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_THROW(ssim(a, TensorD(Shape{31, 32})), ShapeError);
}

TEST(Ssim, MatchesDirectLoopOracle) {
  for (std::uint64_t s = 10; s < 15; ++s) {
    const TensorD a = lcg_image(s, {32, 32});
    TensorD b = lcg_image(s + 100, {32, 32});
    for (Index k = 0; k < a.numel(); ++k) b[k] = 0.7 * a[k] + 0.3 * b[k];
    EXPECT_NEAR(ssim(a, b), naive_ssim(a, b), 1e-10);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  }
}

TEST(Ssim, MatchesFrozenReference) {
  for (const auto& c : frozen_ssim_cases()) EXPECT_NEAR(ssim(c.a, c.b), c.expected, 1e-6) << c.name;
}

TEST(Ssim, FloatInputsAgreeWithDouble) {
  const TensorD a = lcg_image(20, {32, 32}), b = lcg_image(21, {32, 32});
  EXPECT_NEAR(ssim(a.cast<float>(), b.cast<float>()), ssim(a, b), 1e-6);
}

}  // namespace
}  // namespace rdrf::testing
