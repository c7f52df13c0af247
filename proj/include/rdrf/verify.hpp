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

// Blind-spot certification and leakage measurement on the full model.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "rdrf/footprint.hpp"
#include "rdrf/model.hpp"
#include "rdrf/probe.hpp"

namespace rdrf {

/// Model output [N, 2C, H, W] = (mu, var) for frame i, as a probe target.
template <class T>
ModelFn<T> model_fn(const ModelConfig& cfg, const Params<T>& params, int i) {
  return [cfg, &params, i](const Tensor<T>& clip) {
    Tape<T> tape;
    ParamBinding<T> p(tape, params, false);
    ModelOutput<T> o = forward(tape.constant(clip), i, cfg, p);
    return concat_channels<T>({o.mu, o.var}).value();
  };
}

template <class T>
Tensor<T> uniform_clip(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(u(rng));
  return t;
}

struct SelfProbe {
  std::uint64_t seed;
  int frame;
  int y;
  int x;
  bool unchanged;     // bitwise
  double sensitivity;  // max |delta out| at (y, x)
};

struct BlindSpotReport {
  std::vector<SelfProbe> probes;
  bool footprint_excludes_centre = true;
  bool footprint_checked = false;
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(probes.begin(), probes.end(), [](const auto& p) { return !p.unchanged; }));
  }
  double max_sensitivity() const {
    double m = 0;
    for (const auto& p : probes) m = std::max(m, p.sensitivity);
    return m;
  }
  bool passed() const { return failures() == 0 && footprint_excludes_centre; }
};

struct BlindSpotOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int pixels = 25;
  int frames = 5;
  int size = 16;
  bool symbolic = true;
};

/// Perturbs the reference pixel by +-0.5 at random locations for every frame
/// index and checks the co-located output bitwise. Optional symbolic check of
/// (0,0,0) against the model's footprint graph.
template <class T>
BlindSpotReport verify_blindspot(const ModelConfig& cfg, const BlindSpotOptions& opt) {
  BlindSpotReport rep;
  const Index C = cfg.color_channels;
  for (std::uint64_t seed : opt.seeds) {
    const Params<T> params = init_params<T>(cfg, seed);
    const Tensor<T> clip = uniform_clip<T>(Shape{1, opt.frames, C, opt.size, opt.size}, 1000 + seed);
    std::mt19937_64 rng(2000 + seed);
    std::uniform_int_distribution<int> pix(0, opt.size - 1);
    for (int i = 0; i < opt.frames; ++i) {
      const ModelFn<T> fn = model_fn(cfg, params, i);
      const Tensor<T> base = fn(clip);
      for (int k = 0; k < opt.pixels; ++k) {
        const int y = pix(rng), x = pix(rng);
        const Tensor<T> s = probe_sensitivity(fn, clip, i, y, x, &base);
        const double sv = static_cast<double>(s.at({y, x}));
        rep.probes.push_back({seed, i, y, x, self_pixel_unchanged(fn, clip, i, y, x, base), sv});
      }
    }
  }
  if (opt.symbolic) {
    rep.footprint_checked = true;
    for (int i = 0; i < opt.frames; ++i) {
      auto [g, out] = describe_model(cfg, opt.frames, i);
      const int c = opt.size / 2;
      if (footprint_on_grid(g, out, GridSpec{opt.frames, opt.size, opt.size}, i, c, c).contains({0, 0, 0}))
        rep.footprint_excludes_centre = false;
    }
  }
  return rep;
}

struct LeakageStats {
  double median_self = 0;
  double median_neighbour = 0;
  double ratio() const { return median_neighbour > 0 ? median_self / median_neighbour : 0.0; }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Self-pixel vs 8-neighbour sensitivity of the reference frame at random
/// interior pixels, pooled over seeds.
template <class T>
LeakageStats measure_leakage(const ModelConfig& cfg, int size, const std::vector<std::uint64_t>& seeds, int pixels,
                             int frames = 3) {
  std::vector<double> self, neigh;
  const int i = frames / 2;
  for (std::uint64_t seed : seeds) {
    const Params<T> params = init_params<T>(cfg, seed);
    const Tensor<T> clip = uniform_clip<T>(Shape{1, frames, cfg.color_channels, size, size}, 3000 + seed);
    const ModelFn<T> fn = model_fn(cfg, params, i);
    const Tensor<T> base = fn(clip);
    std::mt19937_64 rng(4000 + seed);
    std::uniform_int_distribution<int> pix(1, size - 2);
    for (int k = 0; k < pixels; ++k) {
      const int y = pix(rng), x = pix(rng);
      const Tensor<T> s = probe_sensitivity(fn, clip, i, y, x, &base);
      self.push_back(static_cast<double>(s.at({y, x})));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (dy || dx) neigh.push_back(static_cast<double>(s.at({y + dy, x + dx})));
    }
  }
  return {median(self), median(neigh)};
}

}  // namespace rdrf
