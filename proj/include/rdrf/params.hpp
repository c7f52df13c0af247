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

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rdrf/autograd.hpp"
#include "rdrf/tensor.hpp"

namespace rdrf {

/// Declared shape of one named parameter. `fan_in` counts only unmasked taps.
struct ParamSpec {
  std::string name;
  Shape shape;
  Index fan_in = 0;
  bool is_bias = false;
  bool zero_init = false;
};

using ParamSpecs = std::vector<ParamSpec>;

inline void declare_conv(ParamSpecs& specs, const std::string& prefix, Index out_ch, Index in_ch,
                         Index k, Index active_taps = -1, bool zero_init = false) {
  const Index taps = active_taps < 0 ? k * k : active_taps;
  specs.push_back({prefix + ".w", Shape{out_ch, in_ch, k, k}, in_ch * taps, false, zero_init});
  specs.push_back({prefix + ".b", Shape{out_ch}, in_ch * taps, true, true});
}

inline Index count_params(const ParamSpecs& specs) {
  Index n = 0;
  for (const auto& s : specs) n += shape_numel(s.shape);
  return n;
}

/// He-uniform weights for leaky-ReLU(0.1) fan-in; biases start at zero.
/// Parameters are drawn in lexicographic name order from one seeded stream.
template <class T>
Params<T> init_from_specs(const ParamSpecs& specs, std::uint64_t seed) {
  Params<T> params;
  for (const auto& s : specs) {
    RDRF_CHECK_SHAPE(params.count(s.name) == 0, "duplicate parameter '" + s.name + "'");
    params.emplace(s.name, Tensor<T>(s.shape));
  }
  std::map<std::string, const ParamSpec*> by_name;
  for (const auto& s : specs) by_name[s.name] = &s;
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : params) {
    const ParamSpec& s = *by_name.at(name);
    if (s.is_bias || s.zero_init) continue;
    const double slope = 0.1;
    const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(s.fan_in)));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  }
  return params;
}

}  // namespace rdrf
