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

#include "grad_cases.hpp"

namespace rdrf::testing {
namespace {

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const GradCase c = grad_cases()[GetParam()];
  const double err = worst_grad_error(c, 17 + GetParam());
  EXPECT_LE(err, kGradTolerance) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, grad_cases().size()),
                         [](const auto& info) {
                           std::string n = grad_cases()[info.param].name;
                           for (auto& ch : n)
                             if (ch == '.') ch = '_';
                           return n;
                         });

TEST(CompositeGradient, HalfPlaneStack) {
  ParamSpecs specs;
  declare_half_plane_stack(specs, "s", {2, 1, 2});
  std::mt19937_64 rng(5);
  const TensorD x = random_tensor({1, 1, 5, 5}, rng);
  auto f = [&](Tape<double>& t, ParamBinding<double>& p) { return half_plane_stack(t.constant(x), {2, 1, 2}, p, "s"); };
  EXPECT_LE(param_grad_check(f, init_from_specs<double>(specs, 3), 9), kGradTolerance);
}

TEST(CompositeGradient, FullModelTiny) {
  ModelConfig mc;
  mc.width = 2;
  mc.branch_depth = 1;
  mc.lfe_dilated_depth = 1;
  std::mt19937_64 rng(6);
  const TensorD clip = random_tensor({1, 3, 1, 4, 4}, rng, 0, 1);
  auto f = [&](Tape<double>& t, ParamBinding<double>& p) {
    auto o = forward(t.constant(clip), 1, mc, p);
    return concat_channels<double>({o.mu, o.var});
  };
  EXPECT_LE(param_grad_check(f, init_params<double>(mc, 4), 11), kGradTolerance);
}

}  // namespace
}  // namespace rdrf::testing
