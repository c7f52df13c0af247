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

TensorD iota33() {
  TensorD x(Shape{1, 1, 3, 3});
  for (Index i = 0; i < 9; ++i) x[i] = static_cast<double>(i);
  return x;
}

TEST(ShiftRotate, ShiftZeroAndRotateFourAreIdentity) {
  std::mt19937_64 rng(1);
  TensorD x = random_tensor({2, 3, 4, 5}, rng);
  Tape<double> t;
  auto v = t.constant(x);
  EXPECT_TRUE(shift_down(v, 0).value() == x);
  EXPECT_TRUE(rotate90(rotate90(rotate90(rotate90(v, 1), 1), 1), 1).value() == x);
  EXPECT_TRUE(rotate90(v, 4).value() == x);
  EXPECT_TRUE(rotate90(rotate90(v, 3), -3).value() == x);
}

TEST(ShiftRotate, ManualIndexRemap3x3) {
  Tape<double> t;
  // Counter-clockwise quarter turn of [[0,1,2],[3,4,5],[6,7,8]] is [[2,5,8],[1,4,7],[0,3,6]];
  // shifting down one row fills the top with zeros.
  auto y = shift_down(rotate90(t.constant(iota33()), 1), 1).value();
  const std::vector<double> expect{0, 0, 0, 2, 5, 8, 1, 4, 7};
  EXPECT_EQ(y.vec(), expect);
}

TEST(ShiftRotate, NonSquareRotation) {
  TensorD x(Shape{1, 1, 2, 3});
  for (Index i = 0; i < 6; ++i) x[i] = static_cast<double>(i);
  Tape<double> t;
  auto y = rotate90(t.constant(x), 1).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 2}));
  EXPECT_EQ(y.vec(), (std::vector<double>{2, 5, 1, 4, 0, 3}));
  auto z = rotate90(t.constant(x), 2).value();
  EXPECT_EQ(z.vec(), (std::vector<double>{5, 4, 3, 2, 1, 0}));
}

TEST(ShiftRotate, ShiftBeyondHeightIsZero) {
  Tape<double> t;
  auto y = shift_down(t.constant(iota33()), 5).value();
  for (double v : y.vec()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(shift_down(t.constant(iota33()), -1), std::invalid_argument);
}

TEST(InstanceStats, ClosedForms) {
  Tape<double> t;
  auto [mu, sd] = instance_stats(t.constant(TensorD(Shape{1, 1, 3, 3}, 0.3)));
  EXPECT_DOUBLE_EQ(mu.value()[0], 0.3);
  EXPECT_EQ(sd.value()[0], 0.0);
  TensorD two(Shape{1, 1, 2, 2}, std::vector<double>{0, 2, 2, 0});
  auto [m2, s2] = instance_stats(t.constant(two));
  EXPECT_EQ(m2.value()[0], 1.0);
  EXPECT_EQ(s2.value()[0], 1.0);
}

TEST(InstanceStats, MatchesTwoPassOracle) {
  std::mt19937_64 rng(2);
  TensorD x = random_tensor({2, 3, 8, 8}, rng);
  Tape<double> t;
  auto [mu, sd] = instance_stats(t.constant(x));
  for (Index nc = 0; nc < 6; ++nc) {
    double m = 0;
    for (Index k = 0; k < 64; ++k) m += x[nc * 64 + k];
    m /= 64;
    double v = 0;
    for (Index k = 0; k < 64; ++k) v += (x[nc * 64 + k] - m) * (x[nc * 64 + k] - m);
    EXPECT_NEAR(mu.value()[nc], m, 1e-14);
    EXPECT_NEAR(sd.value()[nc], std::sqrt(v / 64), 1e-14);
  }
}

TEST(InstanceStats, FloorOnlyOnDivision) {
  // Normalising a constant map must not divide by zero.
  Tape<double> t;
  auto x = t.variable(TensorD(Shape{1, 2, 3, 3}, 0.5));
  auto n = normalize_temporal(x);
  for (double v : n.value().vec()) EXPECT_EQ(v, 0.0);
  t.backward(sum(n));
  EXPECT_TRUE(t.grad(x).all_finite());
}

struct Bound {
  ParamSpecs specs;
  Params<double> params;
};

Bound stack_params(Index depth, Index in, Index ch, std::uint64_t seed) {
  Bound b;
  declare_half_plane_stack(b.specs, "s", {depth, in, ch});
  b.params = init_from_specs<double>(b.specs, seed);
  return b;
}

ModelFn<double> as_clip_fn(std::function<VarD(VarD, ParamBinding<double>&)> f, const Params<double>& ps) {
  return [f, &ps](const TensorD& clip) {
    Tape<double> t;
    ParamBinding<double> p(t, ps, false);
    return f(select_frame(t.constant(clip), 0), p).value();
  };
}

TEST(HalfPlaneStack, DepthOneFootprint) {
  FootprintGraph g;
  auto out = describe_half_plane_stack(g, g.input(0), 1);
  OffsetSet expect;
  for (int dy = -2; dy <= -1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) expect.insert({0, dy, dx});
  EXPECT_EQ(footprint_of(g, out), expect);
  for (const Offset& o : footprint_of(g, out)) EXPECT_LE(o.dy, -1);
}

TEST(HalfPlaneStack, ImpulseAtCentreIgnored) {
  Bound b = stack_params(2, 1, 3, 1);
  std::mt19937_64 rng(3);
  TensorD clip = random_tensor({1, 1, 1, 9, 9}, rng);
  auto fn = as_clip_fn([](VarD x, ParamBinding<double>& p) { return half_plane_stack(x, {2, 1, 3}, p, "s"); }, b.params);
  const TensorD base = fn(clip);
  for (int y : {0, 4, 8})
    for (int x : {0, 4, 8}) EXPECT_TRUE(self_pixel_unchanged(fn, clip, 0, y, x, base));
}

TEST(HalfPlaneStack, ConstantInputGivesConstantInterior) {
  Bound b = stack_params(2, 1, 2, 4);
  Tape<double> t;
  ParamBinding<double> p(t, b.params, false);
  auto y = half_plane_stack(t.constant(TensorD(Shape{1, 1, 12, 12}, 0.6)), {2, 1, 2}, p, "s").value();
  // Interior: rows >= 3 (shift + two causal rows), columns 2..9.
  for (Index c = 0; c < 2; ++c)
    for (Index i = 3; i < 12; ++i)
      for (Index j = 2; j < 10; ++j) EXPECT_NEAR(y.at({0, c, i, j}), y.at({0, c, 5, 5}), 1e-14);
}

TEST(FourBranchBlind, ThreeByThreeInputDepthOneSeesEightNeighbours) {
  FootprintGraph g;
  auto out = describe_four_branch_blind(g, g.input(0), 1);
  OffsetSet fs = footprint_on_grid(g, out, GridSpec{1, 3, 3}, 0, 1, 1);
  OffsetSet expect;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if (dy || dx) expect.insert({0, dy, dx});
  EXPECT_EQ(fs, expect);

  Bound b = stack_params(1, 1, 2, 5);
  std::mt19937_64 rng(4);
  auto fn = as_clip_fn([](VarD x, ParamBinding<double>& p) { return four_branch_blind(x, {1, 1, 2}, p, "s"); }, b.params);
  EXPECT_EQ(impulse_support(fn, random_tensor({1, 1, 1, 3, 3}, rng), 0, 1, 1), expect);
}

TEST(FourBranchBlind, SelfSensitivityZeroEverywhere) {
  Bound b = stack_params(3, 1, 4, 6);
  std::mt19937_64 rng(5);
  TensorD clip = random_tensor({1, 1, 1, 10, 10}, rng);
  auto fn = as_clip_fn([](VarD x, ParamBinding<double>& p) { return four_branch_blind(x, {3, 1, 4}, p, "s"); }, b.params);
  const TensorD base = fn(clip);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      TensorD s = probe_sensitivity(fn, clip, 0, y, x, &base);
      EXPECT_EQ(s.at({y, x}), 0.0);
    }
}

TEST(FourBranchBlind, RotationConsistency) {
  Bound b = stack_params(2, 1, 3, 7);
  std::mt19937_64 rng(6);
  TensorD x = random_tensor({1, 1, 7, 7}, rng);
  Tape<double> t;
  ParamBinding<double> p(t, b.params, false);
  const BranchStackConfig cfg{2, 1, 3};
  auto fx = four_branch_blind(t.constant(x), cfg, p, "s");
  auto frx = four_branch_blind(rotate90(t.constant(x), 1), cfg, p, "s").value();
  // Branch k of F(rot x) is rot(branch k+1 of F(x)).
  for (Index k = 0; k < 4; ++k) {
    auto expect = rotate90(slice_channels(fx, ((k + 1) % 4) * 3, 3), 1).value();
    TensorD got(expect.shape(), std::vector<double>(frx.data() + k * expect.numel(), frx.data() + (k + 1) * expect.numel()));
    EXPECT_TRUE(got == expect) << "branch " << k;
  }
}

TEST(DilatedBlindStack, DepthZeroIsIdentityOnFootprint) {
  FootprintGraph g;
  auto f = g.conv(g.input(0), center_hole_taps());
  EXPECT_EQ(footprint_of(g, describe_dilated_blind_stack(g, f, 0)), footprint_of(g, f));
}

TEST(DilatedBlindStack, CentreExcludedForAnyDepth) {
  for (int depth = 0; depth <= 6; ++depth) {
    FootprintGraph g;
    auto out = describe_dilated_blind_stack(g, g.conv(g.input(0), center_hole_taps()), depth);
    EXPECT_FALSE(footprint_of(g, out).contains({0, 0, 0})) << depth;
  }
}

TEST(DilatedBlindStack, DepthFourNumericProbe) {
  ParamSpecs specs;
  declare_conv(specs, "front", 3, 1, 3);
  declare_dilated_blind_stack(specs, "d", 3, 4);
  const Params<double> ps = init_from_specs<double>(specs, 8);
  auto fn = as_clip_fn(
      [](VarD x, ParamBinding<double>& p) {
        x = leaky_relu(conv2d_same(x, p("front.w"), std::optional(p("front.b")), 1, &center_hole_mask<double>()));
        return dilated_blind_stack(x, 4, p, "d");
      },
      ps);
  std::mt19937_64 rng(9);
  TensorD clip = random_tensor({1, 1, 1, 16, 16}, rng);
  const TensorD base = fn(clip);
  for (int k = 0; k < 5; ++k) {
    const int y = static_cast<int>(pick(rng, 0, 15)), x = static_cast<int>(pick(rng, 0, 15));
    EXPECT_EQ(probe_sensitivity(fn, clip, 0, y, x, &base).at({y, x}), 0.0);
  }
}

TEST(Probe, IdentityModelConcentratesAtPixel) {
  ModelFn<double> id = [](const TensorD& clip) {
    return TensorD(Shape{1, 1, clip.dim(3), clip.dim(4)}, std::vector<double>(clip.data(), clip.data() + clip.dim(3) * clip.dim(4)));
  };
  TensorD clip(Shape{1, 1, 1, 5, 5}, 0.2);
  TensorD s = probe_sensitivity(id, clip, 0, 2, 3);
  for (Index y = 0; y < 5; ++y)
    for (Index x = 0; x < 5; ++x) EXPECT_EQ(s.at({y, x}), (y == 2 && x == 3) ? 0.5 : 0.0);
  EXPECT_THROW(probe_sensitivity(id, clip, 0, 5, 0), std::out_of_range);
  EXPECT_THROW(probe_sensitivity(id, clip, 1, 0, 0), std::out_of_range);
  EXPECT_THROW(self_pixel_unchanged(id, clip, 0, -1, 0, s), std::out_of_range);
}

}  // namespace
}  // namespace rdrf::testing
