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

// Blind-spot building blocks.
//
// A half-plane stack sees only rows at or above the output row (kernels with
// their bottom row masked); the final one-row shift pushes that to rows
// strictly above. Running it on the four rotations of the input and undoing
// the rotation gives four directional features, none of which depends on the
// centre pixel.
//
// The dilated stack relies on parity: its front-end only reaches offsets with
// an odd coordinate, and dilation-2 taps only add even ones.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "rdrf/footprint.hpp"
#include "rdrf/ops.hpp"
#include "rdrf/params.hpp"

namespace rdrf {

struct BranchStackConfig {
  Index depth = 3;
  Index in_channels = 1;
  Index channels = 48;
};

/// 3x3 mask keeping the rows at and above the centre.
template <class T>
const Tensor<T>& upper_rows_mask() {
  static const Tensor<T> m(Shape{3, 3}, std::vector<T>{1, 1, 1, 1, 1, 1, 0, 0, 0});
  return m;
}

/// 3x3 mask with only the centre removed.
template <class T>
const Tensor<T>& center_hole_mask() {
  static const Tensor<T> m(Shape{3, 3}, std::vector<T>{1, 1, 1, 1, 0, 1, 1, 1, 1});
  return m;
}

/// 3x3x3 mask with only the spatio-temporal centre removed.
template <class T>
const Tensor<T>& center_hole_mask3d() {
  static const Tensor<T> m = [] {
    Tensor<T> t(Shape{3, 3, 3}, T(1));
    t[13] = T(0);
    return t;
  }();
  return m;
}

inline void declare_causal_convs(ParamSpecs& specs, const std::string& prefix, Index in_ch,
                                 Index ch, Index depth) {
  for (Index l = 0; l < depth; ++l)
    declare_conv(specs, prefix + ".l" + std::to_string(l), ch, l == 0 ? in_ch : ch, 3, 6);
}

inline void declare_half_plane_stack(ParamSpecs& specs, const std::string& prefix,
                                     const BranchStackConfig& cfg) {
  RDRF_CHECK_SHAPE(cfg.depth >= 1, "half-plane stack depth must be >= 1");
  declare_causal_convs(specs, prefix, cfg.in_channels, cfg.channels, cfg.depth);
}

/// Vertically causal 3x3 convolutions (rows dy in {-1, 0}) with leaky ReLU, no shift.
template <class T>
Var<T> causal_convs(Var<T> x, Index depth, ParamBinding<T>& p, const std::string& prefix) {
  for (Index l = 0; l < depth; ++l) {
    const std::string n = prefix + ".l" + std::to_string(l);
    x = leaky_relu(conv2d_same(x, p(n + ".w"), std::optional(p(n + ".b")), 1, &upper_rows_mask<T>()));
  }
  return x;
}

/// Output at row r depends only on input rows < r.
template <class T>
Var<T> half_plane_stack(Var<T> x, const BranchStackConfig& cfg, ParamBinding<T>& p,
                        const std::string& prefix) {
  RDRF_CHECK_SHAPE(cfg.depth >= 1, "half-plane stack depth must be >= 1");
  return shift_down(causal_convs(x, cfg.depth, p, prefix), 1);
}

/// Half-plane features for the four rotations of x, left in their rotated frames.
/// Branch k looks "up" in the frame of rotate90(x, k).
template <class T>
std::array<Var<T>, 4> branch_features(Var<T> x, const BranchStackConfig& cfg, ParamBinding<T>& p,
                                      const std::string& prefix) {
  std::array<Var<T>, 4> out;
  for (int k = 0; k < 4; ++k) out[static_cast<std::size_t>(k)] = half_plane_stack(rotate90(x, k), cfg, p, prefix);
  return out;
}

/// Rotates branch features back to the input frame and concatenates them
/// (branch k occupies channel group k).
template <class T>
Var<T> merge_branches(const std::array<Var<T>, 4>& branches) {
  std::vector<Var<T>> parts;
  for (int k = 0; k < 4; ++k) parts.push_back(rotate90(branches[static_cast<std::size_t>(k)], -k));
  return concat_channels(parts);
}

template <class T>
Var<T> four_branch_blind(Var<T> x, const BranchStackConfig& cfg, ParamBinding<T>& p,
                         const std::string& prefix) {
  return merge_branches(branch_features(x, cfg, p, prefix));
}

inline void declare_dilated_blind_stack(ParamSpecs& specs, const std::string& prefix, Index ch,
                                        Index depth) {
  for (Index l = 0; l < depth; ++l) declare_conv(specs, prefix + ".l" + std::to_string(l), ch, ch, 3);
}

/// `depth` dilation-2 3x3 convolutions (pad 2) with leaky ReLU.
template <class T>
Var<T> dilated_blind_stack(Var<T> f, Index depth, ParamBinding<T>& p, const std::string& prefix) {
  RDRF_CHECK_SHAPE(depth >= 0, "dilated stack depth must be >= 0");
  for (Index l = 0; l < depth; ++l) {
    const std::string n = prefix + ".l" + std::to_string(l);
    f = leaky_relu(conv2d_same(f, p(n + ".w"), std::optional(p(n + ".b")), 2));
  }
  return f;
}

// Symbolic descriptions mirroring the blocks above.

inline FootprintGraph::NodeId describe_causal_convs(FootprintGraph& g, FootprintGraph::NodeId x,
                                                    Index depth) {
  for (Index l = 0; l < depth; ++l) x = g.conv(x, upper_rows_taps());
  return x;
}

inline FootprintGraph::NodeId describe_half_plane_stack(FootprintGraph& g, FootprintGraph::NodeId x,
                                                        Index depth) {
  return g.shift_down(describe_causal_convs(g, x, depth), 1);
}

inline std::array<FootprintGraph::NodeId, 4> describe_branch_features(FootprintGraph& g,
                                                                      FootprintGraph::NodeId x,
                                                                      Index depth) {
  std::array<FootprintGraph::NodeId, 4> out{};
  for (int k = 0; k < 4; ++k)
    out[static_cast<std::size_t>(k)] = describe_half_plane_stack(g, g.rotate(x, k), depth);
  return out;
}

inline FootprintGraph::NodeId describe_merge_branches(FootprintGraph& g,
                                                      const std::array<FootprintGraph::NodeId, 4>& b) {
  std::vector<FootprintGraph::NodeId> parts;
  for (int k = 0; k < 4; ++k) parts.push_back(g.rotate(b[static_cast<std::size_t>(k)], -k));
  return g.pointwise(parts);
}

inline FootprintGraph::NodeId describe_four_branch_blind(FootprintGraph& g, FootprintGraph::NodeId x,
                                                         Index depth) {
  return describe_merge_branches(g, describe_branch_features(g, x, depth));
}

inline FootprintGraph::NodeId describe_dilated_blind_stack(FootprintGraph& g,
                                                           FootprintGraph::NodeId x, Index depth) {
  for (Index l = 0; l < depth; ++l) x = g.conv(x, full_taps(), 2);
  return x;
}

}  // namespace rdrf
