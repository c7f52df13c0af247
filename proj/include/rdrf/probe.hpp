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

// Numeric receptive-field probing by finite input perturbation.

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rdrf/footprint.hpp"
#include "rdrf/tensor.hpp"

namespace rdrf {

/// Maps a clip [N,T,C,H,W] to an output map [N,Co,H,W]. Must be deterministic.
template <class T>
using ModelFn = std::function<Tensor<T>(const Tensor<T>& clip)>;

inline constexpr std::array<double, 2> kProbeDeltas{0.5, -0.5};

namespace detail {
template <class T>
Index clip_index(const Tensor<T>& clip, Index n, Index f, Index c, Index y, Index x) {
  return (((n * clip.dim(1) + f) * clip.dim(2) + c) * clip.dim(3) + y) * clip.dim(4) + x;
}

template <class T>
void check_probe_args(const Tensor<T>& clip, int frame, int y, int x) {
  RDRF_CHECK_SHAPE(clip.rank() == 5, "probe: clip must be [N,T,C,H,W]");
  if (frame < 0 || frame >= clip.dim(1) || y < 0 || y >= clip.dim(3) || x < 0 || x >= clip.dim(4))
    throw std::out_of_range("probe: pixel (" + std::to_string(frame) + "," + std::to_string(y) +
                            "," + std::to_string(x) + ") outside clip " + shape_str(clip.shape()));
}
}  // namespace detail

/// |output(clip + delta at (frame, :, y, x)) - output(clip)|, maximised over
/// delta in {+0.5, -0.5}, output channels and batch items. Returns [H,W].
template <class T>
Tensor<T> probe_sensitivity(const ModelFn<T>& model, const Tensor<T>& clip, int frame, int y, int x,
                            const Tensor<T>* base_output = nullptr) {
  detail::check_probe_args(clip, frame, y, x);
  const Tensor<T> base = base_output ? *base_output : model(clip);
  RDRF_CHECK_SHAPE(base.rank() == 4, "probe: model output must be [N,Co,H,W]");
  const Index N = base.dim(0), Co = base.dim(1), H = base.dim(2), W = base.dim(3);
  Tensor<T> sens(Shape{H, W});
  for (double d : kProbeDeltas) {
    Tensor<T> pert = clip;
    for (Index n = 0; n < clip.dim(0); ++n)
      for (Index c = 0; c < clip.dim(2); ++c) pert[detail::clip_index(clip, n, frame, c, y, x)] += static_cast<T>(d);
    const Tensor<T> out = model(pert);
    RDRF_CHECK_SHAPE(out.shape() == base.shape(), "probe: model output shape changed");
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < Co; ++c)
        for (Index i = 0; i < H * W; ++i) {
          const Index k = (n * Co + c) * H * W + i;
          sens[i] = std::max(sens[i], std::abs(out[k] - base[k]));
        }
  }
  return sens;
}

/// Bitwise comparison of the output at (y, x) with and without perturbing the
/// input at (frame, y, x). True when every output channel is unchanged.
template <class T>
bool self_pixel_unchanged(const ModelFn<T>& model, const Tensor<T>& clip, int frame, int y, int x,
                          const Tensor<T>& base_output) {
  detail::check_probe_args(clip, frame, y, x);
  const Index N = base_output.dim(0), Co = base_output.dim(1), H = base_output.dim(2),
              W = base_output.dim(3);
  for (double d : kProbeDeltas) {
    Tensor<T> pert = clip;
    for (Index n = 0; n < clip.dim(0); ++n)
      for (Index c = 0; c < clip.dim(2); ++c) pert[detail::clip_index(clip, n, frame, c, y, x)] += static_cast<T>(d);
    const Tensor<T> out = model(pert);
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < Co; ++c) {
        const Index k = ((n * Co + c) * H + y) * W + x;
        if (!(out[k] == base_output[k])) return false;
      }
  }
  return true;
}

/// For each output pixel in `pixels`, the set of input positions whose
/// perturbation changes it, as offsets relative to (ref_frame, y, x). One
/// pass over the input serves all requested pixels.
template <class T>
std::vector<OffsetSet> impulse_supports(const ModelFn<T>& model, const Tensor<T>& clip, int ref_frame,
                                        const std::vector<std::pair<int, int>>& pixels) {
  RDRF_CHECK_SHAPE(clip.rank() == 5, "impulse_support: clip must be [N,T,C,H,W]");
  for (const auto& [y, x] : pixels) detail::check_probe_args(clip, ref_frame, y, x);
  const Tensor<T> base = model(clip);
  const Index W = base.dim(3), Co = base.dim(1), H = base.dim(2);
  std::vector<OffsetSet> fs(pixels.size());
  for (int f = 0; f < clip.dim(1); ++f)
    for (int qy = 0; qy < clip.dim(3); ++qy)
      for (int qx = 0; qx < clip.dim(4); ++qx) {
        std::vector<bool> hit(pixels.size(), false);
        for (double d : kProbeDeltas) {
          Tensor<T> pert = clip;
          for (Index c = 0; c < clip.dim(2); ++c) pert[detail::clip_index(clip, 0, f, c, qy, qx)] += static_cast<T>(d);
          const Tensor<T> out = model(pert);
          for (std::size_t k = 0; k < pixels.size(); ++k)
            for (Index c = 0; c < Co && !hit[k]; ++c) {
              const Index i = (c * H + pixels[k].first) * W + pixels[k].second;
              hit[k] = !(out[i] == base[i]);
            }
        }
        for (std::size_t k = 0; k < pixels.size(); ++k)
          if (hit[k]) fs[k].insert({f - ref_frame, qy - pixels[k].first, qx - pixels[k].second});
      }
  return fs;
}

template <class T>
OffsetSet impulse_support(const ModelFn<T>& model, const Tensor<T>& clip, int ref_frame, int y, int x) {
  return impulse_supports(model, clip, ref_frame, {{y, x}}).front();
}

}  // namespace rdrf
