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

// Local feature extraction: centre-blind 3x3x3 convolution over
// [x(i-1), x(i), x(i+1)], then a dilation-2 stack.

#pragma once

#include <array>
#include <string>

#include "rdrf/blind.hpp"
#include "rdrf/footprint.hpp"
#include "rdrf/ops.hpp"
#include "rdrf/params.hpp"

namespace rdrf {

struct LFEConfig {
  Index in_channels = 1;
  Index channels = 48;
  Index dilated_depth = 4;
};

inline void declare_lfe(ParamSpecs& specs, const LFEConfig& cfg) {
  RDRF_CHECK_SHAPE(cfg.dilated_depth >= 0, "LFE dilated depth must be >= 0");
  specs.push_back({"lfe.front.w", Shape{cfg.channels, cfg.in_channels, 3, 3, 3}, cfg.in_channels * 26});
  specs.push_back({"lfe.front.b", Shape{cfg.channels}, cfg.in_channels * 26, true, true});
  declare_dilated_blind_stack(specs, "lfe.dilated", cfg.channels, cfg.dilated_depth);
  declare_conv(specs, "lfe.out", cfg.channels, cfg.channels, 1);
}

/// Frame indices of the three-frame window around i. Out-of-range neighbours
/// reflect to the opposite neighbour; -1 marks a zero frame (clips shorter than 3).
inline std::array<int, 3> lfe_window_indices(int frames, int i) {
  if (i < 0 || i >= frames) throw std::out_of_range("LFE window: frame index out of range");
  std::array<int, 3> idx{i - 1, i, i + 1};
  for (int k : {0, 2}) {
    int& j = idx[static_cast<std::size_t>(k)];
    if (j >= 0 && j < frames) continue;
    if (frames < 3) {
      j = -1;
    } else {
      j = j < 0 ? i + 1 : i - 1;
    }
  }
  return idx;
}

/// [N,3,C,H,W] window around frame i of a clip [N,T,C,H,W].
template <class T>
Var<T> lfe_window(Var<T> clip, int i) {
  detail::require_rank(clip.shape(), 5, "lfe_window clip");
  const auto idx = lfe_window_indices(static_cast<int>(clip.dim(1)), i);
  std::vector<Var<T>> frames;
  for (int j : idx) {
    if (j < 0) {
      frames.push_back(clip.tape->constant(Tensor<T>(Shape{clip.dim(0), clip.dim(2), clip.dim(3), clip.dim(4)})));
    } else {
      frames.push_back(select_frame(clip, j));
    }
  }
  return stack_frames(frames);
}

template <class T>
Var<T> lfe_forward(Var<T> window, const LFEConfig& cfg, ParamBinding<T>& p) {
  detail::require_rank(window.shape(), 5, "lfe_forward window");
  RDRF_CHECK_SHAPE(window.dim(1) == 3 && window.dim(2) == cfg.in_channels,
                   "lfe_forward: malformed window " + shape_str(window.shape()));
  Var<T> f = leaky_relu(conv3d_masked(window, p("lfe.front.w"), std::optional(p("lfe.front.b")),
                                      center_hole_mask3d<T>()));
  f = dilated_blind_stack(f, cfg.dilated_depth, p, "lfe.dilated");
  return leaky_relu(conv2d(f, p("lfe.out.w"), std::optional(p("lfe.out.b")), ConvOptions{}));
}

inline FootprintGraph::NodeId describe_lfe(FootprintGraph& g, int frames, int i, const LFEConfig& cfg) {
  const auto idx = lfe_window_indices(frames, i);
  std::array<FootprintGraph::NodeId, 3> nodes{};
  for (std::size_t k = 0; k < 3; ++k) nodes[k] = idx[k] < 0 ? g.zero() : g.input(idx[k]);
  FootprintGraph::NodeId f = g.conv3(nodes, center_hole_taps3d());
  return describe_dilated_blind_stack(g, f, cfg.dilated_depth);
}

}  // namespace rdrf
