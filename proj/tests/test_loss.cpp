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

double nll_op(double mu, double var, double y, double sigma) {
  Tape<double> t;
  auto c = [&](double v) { return t.constant(TensorD(Shape{1}, std::vector<double>{v})); };
  return gaussian_nll(c(mu), c(var), c(y), sigma).value().item();
}

TEST(GaussianNll, ScalarExamples) {
  const double expect = 0.5 * std::log(0.75) + 1.0 / 1.5;
  EXPECT_NEAR(nll_op(0.0, 0.5, 1.0, 0.5), expect, 1e-15);
  // The closed form evaluates to 0.5228256..., not 0.52285.
  EXPECT_NEAR(nll_op(0.0, 0.5, 1.0, 0.5), 0.5228256, 1e-7);
  EXPECT_NEAR(gaussian_nll_scalar(0.0, 0.5, 1.0, 0.5), expect, 1e-15);
  EXPECT_NEAR(nll_op(0.3, 1e-300, 0.3, 1.0), 0.0, 1e-15);
}

TEST(GaussianNll, MeanReduction) {
  Tape<double> t;
  TensorD mu(Shape{1, 1, 1, 2}, {0.0, 0.2}), var(Shape{1, 1, 1, 2}, {0.5, 0.1}), y(Shape{1, 1, 1, 2}, {1.0, -0.1});
  const double got = gaussian_nll(t.constant(mu), t.constant(var), t.constant(y), 0.3).value().item();
  EXPECT_NEAR(got, 0.5 * (gaussian_nll_scalar(0, 0.5, 1, 0.3) + gaussian_nll_scalar(0.2, 0.1, -0.1, 0.3)), 1e-15);
}

TEST(GaussianNll, MeanGradientVanishesOnlyAtTarget) {
  for (double mu : {0.2, 0.5, 0.9}) {
    Tape<double> t;
    VarD m = t.variable(TensorD(Shape{1}, std::vector<double>{mu}));
    auto c = [&](double v) { return t.constant(TensorD(Shape{1}, std::vector<double>{v})); };
    t.backward(gaussian_nll(m, c(0.1), c(0.5), 0.2));
    const double g = t.grad(m)[0];
    if (mu == 0.5) EXPECT_EQ(g, 0.0);
    else EXPECT_NE(g, 0.0);
  }
}

TEST(GaussianNll, NonPositiveVarianceRejected) {
  EXPECT_THROW(nll_op(0, 0.0, 0, 1), std::invalid_argument);
  EXPECT_THROW(nll_op(0, -1.0, 0, 1), std::invalid_argument);
  EXPECT_THROW(gaussian_nll_scalar(0, 0.0, 0, 1), std::invalid_argument);
}

TEST(GaussianNll, FiniteAtVarianceFloor) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 1000; ++k)
    EXPECT_TRUE(std::isfinite(nll_op(u(rng), kVarianceFloor, u(rng), 1e-3)));
  Tape<float> t;
  Tensor<float> z(Shape{1, 1, 4, 4}, 0.f), o(Shape{1, 1, 4, 4}, 1.f), v(Shape{1, 1, 4, 4}, float(kVarianceFloor));
  EXPECT_TRUE(std::isfinite(gaussian_nll(t.constant(z), t.constant(v), t.constant(o), 25.f / 255.f).value().item()));
}

// The golden-section oracle knows nothing about the closed form.
TEST(GaussianNll, OptimalVarianceMatchesGoldenSection) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1), sig(0.05, 0.5);
  for (int k = 0; k < 100; ++k) {
    const double mu = u(rng), y = u(rng), s = sig(rng);
    EXPECT_NEAR(optimal_variance(mu, y, s), golden_argmin(mu, y, s), 1e-8) << mu << " " << y << " " << s;
  }
}

TEST(PosteriorMean, LimitsAndEqualWeights) {
  std::mt19937_64 rng(2);
  const double s = 25.0 / 255.0;
  TensorD mu = random_tensor({64}, rng, 0, 1), y = random_tensor({64}, rng, 0, 1);
  TensorD small(Shape{64}, 1e-9), big(Shape{64}, 1e9);
  EXPECT_LT(max_abs_diff(posterior_mean(mu, small, y, s), mu), 1e-6);
  EXPECT_LT(max_abs_diff(posterior_mean(mu, big, y, s), y), 1e-9);
  TensorD m0(Shape{1}, 0.0), y1(Shape{1}, 1.0), v(Shape{1}, s * s);
  EXPECT_NEAR(posterior_mean(m0, v, y1, s)[0], 0.5, 1e-15);
}

TEST(PosteriorMean, ShrinksBetweenPriorAndObservation) {
  std::mt19937_64 rng(3);
  TensorD mu = random_tensor({500}, rng), y = random_tensor({500}, rng), var = random_tensor({500}, rng, 1e-6, 2);
  TensorD pm = posterior_mean(mu, var, y, 0.2);
  for (Index k = 0; k < 500; ++k) {
    EXPECT_GE(pm[k], std::min(mu[k], y[k]) - 1e-15);
    EXPECT_LE(pm[k], std::max(mu[k], y[k]) + 1e-15);
  }
  EXPECT_THROW(posterior_mean(mu, TensorD(Shape{3}), y, 0.2), ShapeError);
}

TEST(L2Loss, Examples) {
  Tape<double> t;
  std::mt19937_64 rng(4);
  TensorD a = random_tensor({2, 1, 3, 3}, rng), b = random_tensor({2, 1, 3, 3}, rng);
  EXPECT_EQ(l2_loss(t.constant(a), t.constant(a)).value().item(), 0.0);
  TensorD a1 = a;
  for (auto& v : a1.vec()) v += 1.0;
  EXPECT_NEAR(l2_loss(t.constant(a1), t.constant(a)).value().item(), 1.0, 1e-15);
  double s = 0;
  for (Index k = 0; k < a.numel(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  EXPECT_NEAR(l2_loss(t.constant(a), t.constant(b)).value().item(), s / a.numel(), 1e-15);
}

TEST(NoiseModel, RejectsNonPositive) {
  EXPECT_THROW(NoiseModel(0.0), std::invalid_argument);
  EXPECT_THROW(NoiseModel(-0.1), std::invalid_argument);
  EXPECT_EQ(NoiseModel(0.1).sigma_n, 0.1);
  EXPECT_EQ(loss_kind_from_string("l2"), LossKind::kL2);
  EXPECT_THROW(loss_kind_from_string("l1"), std::invalid_argument);
}

}  // namespace
}  // namespace rdrf::testing
