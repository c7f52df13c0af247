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

#include "test_util.hpp"

namespace rdrf::testing {
namespace {

constexpr Index kW = 3;

TEST(NormalizeTemporal, AffineInvariance) {
  std::mt19937_64 rng(1);
  TensorD x = random_tensor({2, 3, 6, 6}, rng), y(x.shape());
  for (Index i = 0; i < x.numel(); ++i) y[i] = 2.5 * x[i] - 0.7;
  Tape<double> t;
  EXPECT_LE(max_abs_diff(normalize_temporal(t.constant(x)).value(), normalize_temporal(t.constant(y)).value()), 1e-12);
}

TEST(NormalizeTemporal, MatchesTwoPassOracle) {
  std::mt19937_64 rng(2);
  TensorD x = random_tensor({1, 2, 5, 5}, rng);
  Tape<double> t;
  TensorD n = normalize_temporal(t.constant(x)).value();
  for (Index c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (Index k = 0; k < 25; ++k) m += x[c * 25 + k];
    m /= 25;
    for (Index k = 0; k < 25; ++k) v += (x[c * 25 + k] - m) * (x[c * 25 + k] - m);
    const double sd = std::max(std::sqrt(v / 25), 1e-5);
    for (Index k = 0; k < 25; ++k) EXPECT_NEAR(n[c * 25 + k], (x[c * 25 + k] - m) / sd, 1e-12);
  }
}

TEST(ShiftStats, ConstantReference) {
  Tape<double> t;
  ModulationParams<double> zero{t.constant(TensorD(Shape{1, 2, 3, 3})), t.constant(TensorD(Shape{1, 2, 3, 3}))};
  auto m = shift_stats(zero, t.constant(TensorD(Shape{1, 2, 3, 3}, 0.4)), StatsMode::kReference);
  for (double v : m.beta.value().vec()) EXPECT_DOUBLE_EQ(v, 0.4);
  for (double v : m.gamma.value().vec()) EXPECT_DOUBLE_EQ(v, kSigmaEps);
  EXPECT_THROW(shift_stats(zero, t.constant(TensorD(Shape{1, 2, 3, 3})), StatsMode::kOff), std::logic_error);
}

TEST(ShiftStats, StandardisedReference) {
  Tape<double> t;
  TensorD ref(Shape{1, 1, 2, 2}, std::vector<double>{1, -1, -1, 1});  // mean 0, std 1
  std::mt19937_64 rng(3);
  TensorD b = random_tensor({1, 1, 2, 2}, rng), g = random_tensor({1, 1, 2, 2}, rng);
  auto m = shift_stats(ModulationParams<double>{t.constant(b), t.constant(g)}, t.constant(ref), StatsMode::kReference);
  for (Index k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(m.beta.value()[k], b[k]);
    EXPECT_DOUBLE_EQ(m.gamma.value()[k], g[k] + 1.0);
  }
}

TEST(Modulate, IdentityZeroGammaAndLinearity) {
  std::mt19937_64 rng(4);
  TensorD f = random_tensor({1, 2, 4, 4}, rng), f2 = random_tensor({1, 2, 4, 4}, rng);
  TensorD beta = random_tensor({1, 2, 4, 4}, rng), gamma = random_tensor({1, 2, 4, 4}, rng);
  Tape<double> t;
  auto one = t.constant(TensorD(f.shape(), 1.0)), zero = t.constant(TensorD(f.shape()));
  EXPECT_TRUE(modulate(t.constant(f), ModulationParams<double>{zero, one}).value() == f);
  EXPECT_TRUE(modulate(t.constant(f), ModulationParams<double>{t.constant(beta), zero}).value() == beta);
  // Linear in the reference for fixed mods: m(a f + b f2) - beta == a (m(f) - beta) + b (m(f2) - beta).
  ModulationParams<double> mods{t.constant(beta), t.constant(gamma)};
  TensorD mix(f.shape());
  for (Index i = 0; i < f.numel(); ++i) mix[i] = 0.3 * f[i] - 1.1 * f2[i];
  auto lhs = modulate(t.constant(mix), mods).value(), m1 = modulate(t.constant(f), mods).value(),
       m2 = modulate(t.constant(f2), mods).value();
  for (Index i = 0; i < f.numel(); ++i)
    EXPECT_NEAR(lhs[i] - beta[i], 0.3 * (m1[i] - beta[i]) - 1.1 * (m2[i] - beta[i]), 1e-12);
}

TEST(DeriveModulation, ZeroHeadsGiveZero) {
  ParamSpecs s;
  const DFFConfig cfg{kW, true, StatsMode::kOff, 1};
  declare_dff(s, cfg);
  Params<double> ps = init_from_specs<double>(s, 5);
  for (auto* n : {"dff.beta.w", "dff.gamma.w"}) ps.at(n).fill(0.0);
  std::mt19937_64 rng(6);
  Tape<double> t;
  ParamBinding<double> p(t, ps, false);
  auto m = derive_modulation(t.constant(random_tensor({1, kW, 5, 5}, rng)), t.constant(random_tensor({1, kW, 5, 5}, rng)), cfg, p);
  for (double v : m.beta.value().vec()) EXPECT_EQ(v, 0.0);
  for (double v : m.gamma.value().vec()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(derive_modulation(t.constant(TensorD(Shape{1, kW, 5, 5})), t.constant(TensorD(Shape{1, kW, 4, 5})), cfg, p),
               ShapeError);
}

TEST(DFFConfig, Validation) {
  EXPECT_THROW(validate(DFFConfig{kW, false, StatsMode::kReference, 1}), std::invalid_argument);
  EXPECT_THROW(validate(DFFConfig{kW, true, StatsMode::kOff, 0}), std::invalid_argument);
  EXPECT_NO_THROW(validate(DFFConfig{kW, false, StatsMode::kOff, 1}));
}

// Encoder + propagation + DFF only, for frame i of the clip.
ModelFn<double> dff_fn(const DFFConfig& cfg, const Params<double>& ps, int i, std::string what = "out") {
  return [=, &ps](const TensorD& clip) {
    Tape<double> t;
    ParamBinding<double> p(t, ps, false);
    auto c = t.constant(clip);
    auto branches = branch_features(select_frame(c, i), {2, 1, kW}, p, "enc");
    auto [hf, hb] = run_bidirectional(c, i, {1, kW, 1, false, 2}, p);
    if (what == "mods") {
      // beta/gamma of branch 0 rotated back to the input frame
      auto nei = normalize_temporal(concat_channels<double>({hf.feature, hb.feature}));
      auto temporal = leaky_relu(conv2d(nei, p("dff.temporal.w"), std::optional(p("dff.temporal.b")), ConvOptions{}));
      auto m = derive_modulation(branches[0], temporal, cfg, p);
      return concat_channels<double>({m.beta, m.gamma}).value();
    }
    return dff_forward(branches, hf, hb, cfg, p).value();
  };
}

Params<double> dff_params(const DFFConfig& cfg, std::uint64_t seed) {
  ParamSpecs s;
  declare_half_plane_stack(s, "enc", {2, 1, kW});
  declare_propagation(s, {1, kW, 1, false, 2});
  declare_dff(s, cfg);
  return init_from_specs<double>(s, seed);
}

class DffStrict : public ::testing::TestWithParam<bool> {};

TEST_P(DffStrict, SelfPixelBitwiseZero) {
  const DFFConfig cfg{kW, GetParam(), StatsMode::kOff, 1};
  const auto ps = dff_params(cfg, 7);
  std::mt19937_64 rng(8);
  const TensorD clip = random_tensor({1, 3, 1, 10, 10}, rng);
  for (int i = 0; i < 3; ++i) {
    auto fn = dff_fn(cfg, ps, i);
    const TensorD base = fn(clip);
    for (int k = 0; k < 10; ++k) {
      const int y = static_cast<int>(pick(rng, 0, 9)), x = static_cast<int>(pick(rng, 0, 9));
      EXPECT_TRUE(self_pixel_unchanged(fn, clip, i, y, x, base)) << i << " " << y << " " << x;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Bsm, DffStrict, ::testing::Values(true, false));

TEST(DFF, ModulationIsBlindAndSeesNeighbours) {
  const DFFConfig cfg{kW, true, StatsMode::kOff, 1};
  const auto ps = dff_params(cfg, 9);
  std::mt19937_64 rng(10);
  const TensorD clip = random_tensor({1, 3, 1, 9, 9}, rng);
  // Branch 0 is unrotated, so its map is aligned with the input.
  auto fn = dff_fn(cfg, ps, 1, "mods");
  const TensorD base = fn(clip);
  EXPECT_TRUE(self_pixel_unchanged(fn, clip, 1, 4, 4, base));
  EXPECT_GT(probe_sensitivity(fn, clip, 0, 4, 4, &base).at({4, 4}), 0.0);
  EXPECT_GT(probe_sensitivity(fn, clip, 2, 4, 4, &base).at({4, 4}), 0.0);
}

TEST(DFF, ReferenceStatsLeakAndDilute) {
  ModelConfig mc;
  mc.width = 8;
  mc.ablation.no_lfe = true;  // isolate the DFF path
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  const LeakageStats s16 = measure_leakage<double>(mc, 16, seeds, 6);
  const LeakageStats s32 = measure_leakage<double>(mc, 32, seeds, 6);
  EXPECT_GT(s32.median_self, 0.0);  // the global reduction does leak
  EXPECT_LE(s32.ratio(), 0.05);
  EXPECT_LT(s32.ratio(), s16.ratio());
}

}  // namespace
}  // namespace rdrf::testing
