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

// Bidirectional recurrent propagation over neighbour frames.
//
//   h_f[i] = F_f(x[i-1], h_f[i-1]),   h_f[0]   = 0
//   h_b[i] = F_b(x[i+1], h_b[i+1]),   h_b[T-1] = 0
//
// Frame i itself never enters either fold, so both states are free to use
// ordinary (non-blind) convolutions over the neighbours.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rdrf/blind.hpp"
#include "rdrf/footprint.hpp"
#include "rdrf/ops.hpp"
#include "rdrf/params.hpp"

namespace rdrf {

enum class Direction { kForward, kBackward };

struct PropagationCellConfig {
  Index in_channels = 1;
  Index channels = 48;
  Index blocks = 1;
  /// Replace the cell by blind four-branch embedding + 1x1 mixing.
  bool blind = false;
  Index blind_depth = 3;
};

template <class T>
struct HiddenState {
  Var<T> feature;
  Direction direction = Direction::kForward;
  /// Last frame folded into the state; -1 (forward) or T (backward) for the initial state.
  int source_index = -1;
};

inline std::string direction_prefix(Direction d) { return d == Direction::kForward ? "prop.fwd" : "prop.bwd"; }

inline void declare_propagation_cell(ParamSpecs& specs, const std::string& prefix,
                                     const PropagationCellConfig& cfg) {
  RDRF_CHECK_SHAPE(cfg.blocks >= 1, "propagation cell needs at least one block");
  const Index W = cfg.channels;
  const Index k = cfg.blind ? 1 : 3;
  if (cfg.blind) {
    declare_half_plane_stack(specs, prefix + ".embed", {cfg.blind_depth, cfg.in_channels, W});
    declare_conv(specs, prefix + ".embed_mix", W, 4 * W, 1);
  } else {
    declare_conv(specs, prefix + ".embed", W, cfg.in_channels, 3);
  }
  for (Index b = 0; b < cfg.blocks; ++b) {
    const std::string n = prefix + ".block" + std::to_string(b);
    const Index in = b == 0 ? 2 * W : W;
    declare_conv(specs, n + ".c0", W, in, k);
    declare_conv(specs, n + ".c1", W, W, k);
    if (b == 0) declare_conv(specs, n + ".skip", W, in, 1);
  }
}

inline void declare_propagation(ParamSpecs& specs, const PropagationCellConfig& cfg) {
  declare_propagation_cell(specs, direction_prefix(Direction::kForward), cfg);
  declare_propagation_cell(specs, direction_prefix(Direction::kBackward), cfg);
}

template <class T>
HiddenState<T> zero_state(Tape<T>& tape, Index n, Index channels, Index h, Index w, Direction d,
                          int source_index) {
  return {tape.constant(Tensor<T>(Shape{n, channels, h, w})), d, source_index};
}

namespace detail {

template <class T>
Var<T> cell_conv(Var<T> x, ParamBinding<T>& p, const std::string& n) {
  return conv2d_same(x, p(n + ".w"), std::optional(p(n + ".b")));
}

template <class T>
Var<T> propagation_cell(Var<T> x_nb, Var<T> h, const PropagationCellConfig& cfg, ParamBinding<T>& p,
                        const std::string& prefix) {
  Var<T> e;
  if (cfg.blind) {
    e = four_branch_blind(x_nb, {cfg.blind_depth, cfg.in_channels, cfg.channels}, p, prefix + ".embed");
    e = leaky_relu(cell_conv(e, p, prefix + ".embed_mix"));
  } else {
    e = leaky_relu(cell_conv(x_nb, p, prefix + ".embed"));
  }
  Var<T> z = concat_channels<T>({e, h});
  for (Index b = 0; b < cfg.blocks; ++b) {
    const std::string n = prefix + ".block" + std::to_string(b);
    Var<T> y = cell_conv(leaky_relu(cell_conv(z, p, n + ".c0")), p, n + ".c1");
    z = add(y, b == 0 ? cell_conv(z, p, n + ".skip") : z);
  }
  return z;
}

}  // namespace detail

/// h_f[i] from x[i-1] and h_f[i-1].
template <class T>
HiddenState<T> step_forward(Var<T> x_prev, const HiddenState<T>& h_prev, const PropagationCellConfig& cfg,
                            ParamBinding<T>& p) {
  if (h_prev.direction != Direction::kForward)
    throw std::invalid_argument("step_forward: hidden state has backward direction");
  Var<T> f = detail::propagation_cell(x_prev, h_prev.feature, cfg, p, direction_prefix(Direction::kForward));
  return {f, Direction::kForward, h_prev.source_index + 1};
}

/// h_b[i] from x[i+1] and h_b[i+1].
template <class T>
HiddenState<T> step_backward(Var<T> x_next, const HiddenState<T>& h_next, const PropagationCellConfig& cfg,
                             ParamBinding<T>& p) {
  if (h_next.direction != Direction::kBackward)
    throw std::invalid_argument("step_backward: hidden state has forward direction");
  Var<T> f = detail::propagation_cell(x_next, h_next.feature, cfg, p, direction_prefix(Direction::kBackward));
  return {f, Direction::kBackward, h_next.source_index - 1};
}

/// States entering frame i of a clip [N,T,C,H,W].
template <class T>
std::pair<HiddenState<T>, HiddenState<T>> run_bidirectional(Var<T> clip, int i,
                                                             const PropagationCellConfig& cfg,
                                                             ParamBinding<T>& p) {
  detail::require_rank(clip.shape(), 5, "run_bidirectional clip");
  const int TT = static_cast<int>(clip.dim(1));
  if (i < 0 || i >= TT) throw std::out_of_range("run_bidirectional: frame index out of range");
  Tape<T>& tape = *clip.tape;
  const Index N = clip.dim(0), H = clip.dim(3), W = clip.dim(4);
  HiddenState<T> hf = zero_state(tape, N, cfg.channels, H, W, Direction::kForward, -1);
  for (int j = 0; j < i; ++j) hf = step_forward(select_frame(clip, j), hf, cfg, p);
  HiddenState<T> hb = zero_state(tape, N, cfg.channels, H, W, Direction::kBackward, TT);
  for (int j = TT - 1; j > i; --j) hb = step_backward(select_frame(clip, j), hb, cfg, p);
  return {hf, hb};
}

// ---------------------------------------------------------------------------
// Symbolic description

inline FootprintGraph::NodeId describe_propagation_cell(FootprintGraph& g, FootprintGraph::NodeId x,
                                                        FootprintGraph::NodeId h,
                                                        const PropagationCellConfig& cfg) {
  FootprintGraph::NodeId e;
  std::vector<Tap> taps = cfg.blind ? std::vector<Tap>{{0, 0}} : full_taps();
  if (cfg.blind) {
    e = describe_four_branch_blind(g, x, cfg.blind_depth);
  } else {
    e = g.conv(x, full_taps());
  }
  FootprintGraph::NodeId z = g.pointwise({e, h});
  for (Index b = 0; b < cfg.blocks; ++b) {
    FootprintGraph::NodeId y = g.conv(g.conv(z, taps), taps);
    z = g.pointwise({y, z});
  }
  return z;
}

/// (forward state, backward state) entering frame i of a T-frame clip.
inline std::pair<FootprintGraph::NodeId, FootprintGraph::NodeId> describe_bidirectional(
    FootprintGraph& g, int frames, int i, const PropagationCellConfig& cfg) {
  FootprintGraph::NodeId hf = g.zero();
  for (int j = 0; j < i; ++j) hf = describe_propagation_cell(g, g.input(j), hf, cfg);
  FootprintGraph::NodeId hb = g.zero();
  for (int j = frames - 1; j > i; --j) hb = describe_propagation_cell(g, g.input(j), hb, cfg);
  return {hf, hb};
}

}  // namespace rdrf
