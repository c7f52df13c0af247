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

// Distant feature fusion with blind spatial modulation.
//
// The reference feature arrives as four directional branches, each still in
// its rotated frame where it depends only on rows strictly above the output
// row. Everything spatial that touches the reference (the modulation
// generator and the fusion convolutions) runs per branch with vertically
// causal kernels, which keeps that property. Temporal features never depend
// on the reference frame and can be mixed in freely. Only after the last
// spatial op are the branches rotated back and merged with 1x1 convolutions.
//
// In StatsMode::kReference the per-channel mean/std of the reference feature
// are added to beta/gamma. Those are full-plane reductions, so the output at
// p picks up a (diluted) dependence on input p; StatsMode::kOff is exactly blind.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "rdrf/blind.hpp"
#include "rdrf/footprint.hpp"
#include "rdrf/ops.hpp"
#include "rdrf/params.hpp"
#include "rdrf/propagation.hpp"

namespace rdrf {

enum class StatsMode { kReference, kOff };

struct DFFConfig {
  Index channels = 48;
  bool bsm_enabled = true;
  StatsMode stats = StatsMode::kReference;
  /// Causal 3x3 layers in the modulation generator and in the fusion stack.
  Index depth = 1;
};

inline void validate(const DFFConfig& cfg) {
  if (cfg.stats == StatsMode::kReference && !cfg.bsm_enabled)
    throw std::invalid_argument("DFF: reference statistics require blind spatial modulation");
  if (cfg.depth < 1) throw std::invalid_argument("DFF: depth must be >= 1");
}

template <class T>
struct ModulationParams {
  Var<T> beta;
  Var<T> gamma;
};

inline void declare_dff(ParamSpecs& specs, const DFFConfig& cfg) {
  const Index W = cfg.channels;
  declare_conv(specs, "dff.temporal", W, 2 * W, 1);
  if (cfg.bsm_enabled) {
    declare_causal_convs(specs, "dff.mod", 2 * W, W, cfg.depth);
    declare_conv(specs, "dff.beta", W, W, 1);
    declare_conv(specs, "dff.gamma", W, W, 1);
  }
  declare_causal_convs(specs, "dff.fuse", 2 * W, W, cfg.depth);
  declare_conv(specs, "dff.out", W, 4 * W, 1);
}

/// (nei - mean) / max(std, eps) per sample and channel.
template <class T>
Var<T> normalize_temporal(Var<T> nei) {
  auto [mu, sd] = instance_stats(nei);
  return div_nc(sub_nc(nei, mu), clamp_min(sd, static_cast<T>(kSigmaEps)));
}

/// beta, gamma for one branch from causal convolutions over [ref, temporal].
template <class T>
ModulationParams<T> derive_modulation(Var<T> ref_feat, Var<T> temporal, const DFFConfig& cfg,
                                      ParamBinding<T>& p) {
  RDRF_CHECK_SHAPE(ref_feat.dim(0) == temporal.dim(0) && ref_feat.dim(2) == temporal.dim(2) &&
                       ref_feat.dim(3) == temporal.dim(3),
                   "derive_modulation: spatial shape mismatch " + shape_str(ref_feat.shape()) +
                       " vs " + shape_str(temporal.shape()));
  Var<T> a = causal_convs(concat_channels<T>({ref_feat, temporal}), cfg.depth, p, "dff.mod");
  return {conv2d(a, p("dff.beta.w"), std::optional(p("dff.beta.b")), ConvOptions{}),
          conv2d(a, p("dff.gamma.w"), std::optional(p("dff.gamma.b")), ConvOptions{})};
}

/// beta += mean(ref), gamma += max(std(ref), eps), per channel.
template <class T>
ModulationParams<T> shift_stats(const ModulationParams<T>& mods, Var<T> ref_feat, StatsMode mode) {
  if (mode != StatsMode::kReference)
    throw std::logic_error("shift_stats: reference statistics are disabled");
  auto [mu, sd] = instance_stats(ref_feat);
  return {add_nc(mods.beta, mu), add_nc(mods.gamma, clamp_min(sd, static_cast<T>(kSigmaEps)))};
}

/// ref * gamma + beta.
template <class T>
Var<T> modulate(Var<T> ref_feat, const ModulationParams<T>& mods) {
  return add(mul(ref_feat, mods.gamma), mods.beta);
}

/// Fuses the reference branches with the propagated states; returns [N,W,H,W].
template <class T>
Var<T> dff_forward(const std::array<Var<T>, 4>& ref_branches, const HiddenState<T>& h_f,
                   const HiddenState<T>& h_b, const DFFConfig& cfg, ParamBinding<T>& p) {
  validate(cfg);
  Var<T> nei = normalize_temporal(concat_channels<T>({h_f.feature, h_b.feature}));
  Var<T> temporal = leaky_relu(conv2d(nei, p("dff.temporal.w"), std::optional(p("dff.temporal.b")), ConvOptions{}));
  std::array<Var<T>, 4> fused;
  for (int k = 0; k < 4; ++k) {
    Var<T> e = ref_branches[static_cast<std::size_t>(k)];
    Var<T> t = rotate90(temporal, k);
    Var<T> f = e;
    if (cfg.bsm_enabled) {
      ModulationParams<T> mods = derive_modulation(e, t, cfg, p);
      if (cfg.stats == StatsMode::kReference) mods = shift_stats(mods, e, cfg.stats);
      f = modulate(e, mods);
    }
    fused[static_cast<std::size_t>(k)] = causal_convs(concat_channels<T>({f, t}), cfg.depth, p, "dff.fuse");
  }
  return leaky_relu(conv2d(merge_branches(fused), p("dff.out.w"), std::optional(p("dff.out.b")), ConvOptions{}));
}

inline FootprintGraph::NodeId describe_dff(FootprintGraph& g,
                                           const std::array<FootprintGraph::NodeId, 4>& ref_branches,
                                           FootprintGraph::NodeId h_f, FootprintGraph::NodeId h_b,
                                           const DFFConfig& cfg) {
  FootprintGraph::NodeId nei = g.pointwise({h_f, h_b});
  FootprintGraph::NodeId temporal = g.pointwise({nei, g.global(nei)});
  std::array<FootprintGraph::NodeId, 4> fused{};
  for (int k = 0; k < 4; ++k) {
    FootprintGraph::NodeId e = ref_branches[static_cast<std::size_t>(k)];
    FootprintGraph::NodeId t = g.rotate(temporal, k);
    FootprintGraph::NodeId f = e;
    if (cfg.bsm_enabled) {
      FootprintGraph::NodeId a = describe_causal_convs(g, g.pointwise({e, t}), cfg.depth);
      std::vector<FootprintGraph::NodeId> parts{e, a};
      if (cfg.stats == StatsMode::kReference) parts.push_back(g.global(e));
      f = g.pointwise(parts);
    }
    fused[static_cast<std::size_t>(k)] = describe_causal_convs(g, g.pointwise({f, t}), cfg.depth);
  }
  return describe_merge_branches(g, fused);
}

}  // namespace rdrf
