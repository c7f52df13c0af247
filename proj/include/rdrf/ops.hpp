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

// Differentiable operations over NCHW tensors recorded on a Tape.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <type_traits>
#include <utility>
#include <vector>

#include "rdrf/autograd.hpp"
#include "rdrf/tensor.hpp"

namespace rdrf {

inline constexpr double kLeakySlope = 0.1;
inline constexpr double kSigmaEps = 1e-5;

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline void require_rank(const Shape& s, std::size_t r, const char* what) {
  RDRF_CHECK_SHAPE(s.size() == r, std::string(what) + ": expected rank " + std::to_string(r) +
                                      ", got " + shape_str(s));
}

struct ConvGeom {
  Index n, c, h, w;      // input
  Index co, kh, kw;      // kernel
  Index dil, pad;
  Index ho, wo;          // output
  bool masked = false;
  std::vector<Index> taps;  // active ky*kw+kx positions when masked
  Index ntaps() const { return masked ? static_cast<Index>(taps.size()) : kh * kw; }
  Index tap(Index t) const { return masked ? taps[static_cast<std::size_t>(t)] : t; }
  Index k() const { return c * ntaps(); }
  Index p() const { return ho * wo; }
};

inline ConvGeom conv_geom(const Shape& x, const Shape& w, Index dil, Index pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d kernel");
  RDRF_CHECK_SHAPE(x[1] == w[1], "conv2d channel mismatch: input " + shape_str(x) + " kernel " +
                                     shape_str(w));
  RDRF_CHECK_SHAPE(w[2] % 2 == 1 && w[3] % 2 == 1,
                   "conv2d kernel must be spatially odd-sized, got " + shape_str(w));
  RDRF_CHECK_SHAPE(dil >= 1 && pad >= 0, "conv2d: dilation >= 1 and pad >= 0 required");
  ConvGeom g{x[0], x[1], x[2], x[3], w[0], w[2], w[3], dil, pad, 0, 0, false, {}};
  g.ho = g.h + 2 * pad - dil * (g.kh - 1);
  g.wo = g.w + 2 * pad - dil * (g.kw - 1);
  RDRF_CHECK_SHAPE(g.ho > 0 && g.wo > 0, "conv2d output would be empty");
  return g;
}

// cols[c*ntaps+t, y*wo+x] = in[c, y - pad + ky*dil, x - pad + kx*dil] (zero outside),
// where (ky, kx) is active tap t.
template <class T>
void im2col(const T* in, const ConvGeom& g, T* cols) {
  const Index P = g.p(), nt = g.ntaps();
  for (Index c = 0; c < g.c; ++c) {
    const T* plane = in + c * g.h * g.w;
    for (Index t = 0; t < nt; ++t) {
      {
        const Index ky = g.tap(t) / g.kw, kx = g.tap(t) % g.kw;
        T* row = cols + (c * nt + t) * P;
        const Index dy = ky * g.dil - g.pad;
        const Index dx = kx * g.dil - g.pad;
        const Index x0 = std::clamp<Index>(-dx, 0, g.wo);
        const Index x1 = std::clamp<Index>(g.w - dx, 0, g.wo);
        for (Index y = 0; y < g.ho; ++y) {
          T* out = row + y * g.wo;
          const Index iy = y + dy;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          const T* src = plane + iy * g.w + dx;
          std::fill(out, out + x0, T(0));
          std::copy(src + x0, src + x1, out + x0);
          std::fill(out + std::max(x0, x1), out + g.wo, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeom& g, T* in) {
  const Index P = g.p(), nt = g.ntaps();
  for (Index c = 0; c < g.c; ++c) {
    T* plane = in + c * g.h * g.w;
    for (Index t = 0; t < nt; ++t) {
      {
        const Index ky = g.tap(t) / g.kw, kx = g.tap(t) % g.kw;
        const T* row = cols + (c * nt + t) * P;
        const Index dy = ky * g.dil - g.pad;
        const Index dx = kx * g.dil - g.pad;
        const Index x0 = std::clamp<Index>(-dx, 0, g.wo);
        const Index x1 = std::clamp<Index>(g.w - dx, 0, g.wo);
        for (Index y = 0; y < g.ho; ++y) {
          const Index iy = y + dy;
          if (iy < 0 || iy >= g.h) continue;
          const T* __restrict src = row + y * g.wo;
          T* __restrict dst = plane + iy * g.w + dx;
          for (Index x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

template <class T>
bool is_pointwise(const ConvGeom& g) {
  return g.kh == 1 && g.kw == 1 && g.pad == 0;
}

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                         const ConvGeom& g) {
  Tensor<T> y(Shape{g.n, g.co, g.ho, g.wo});
  const Index K = g.k(), P = g.p();
  CMapMat<T> wm(w.data(), g.co, K);
  std::vector<T> cols;
  if (!is_pointwise<T>(g)) cols.resize(static_cast<std::size_t>(K * P));
  for (Index n = 0; n < g.n; ++n) {
    const T* xn = x.data() + n * g.c * g.h * g.w;
    const T* src = xn;
    if (!cols.empty()) {
      im2col(xn, g, cols.data());
      src = cols.data();
    }
    MapMat<T> ym(y.data() + n * g.co * P, g.co, P);
    ym.noalias() = wm * CMapMat<T>(src, K, P);
    if (b) {
      for (Index o = 0; o < g.co; ++o) ym.row(o).array() += (*b)[o];
    }
  }
  return y;
}

template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                     const ConvGeom& g, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const Index K = g.k(), P = g.p();
  CMapMat<T> wm(w.data(), g.co, K);
  const bool pw = is_pointwise<T>(g);
  std::vector<T> cols;
  if (!pw && gw) cols.resize(static_cast<std::size_t>(K * P));
  // gx is the correlation of gy with the flipped, channel-transposed kernel, so it
  // reuses im2col (over gy) rather than scattering with col2im.
  const bool flip = !pw && gx && g.kh == g.kw;
  ConvGeom gt{1, g.co, g.ho, g.wo, g.c, g.kh, g.kw, g.dil, g.dil * (g.kh - 1) - g.pad, g.h, g.w, true, {}};
  std::vector<T> wt, tcols, dcols;
  if (flip) {
    const Index nt = g.ntaps();
    for (Index t = 0; t < nt; ++t) gt.taps.push_back(g.kh * g.kw - 1 - g.tap(t));
    wt.resize(static_cast<std::size_t>(g.c * g.co * nt));
    for (Index o = 0; o < g.co; ++o)
      for (Index c = 0; c < g.c; ++c)
        for (Index t = 0; t < nt; ++t) wt[static_cast<std::size_t>((c * g.co + o) * nt + t)] = w[(o * g.c + c) * nt + t];
    tcols.resize(static_cast<std::size_t>(gt.k() * gt.p()));
  } else if (!pw && gx) {
    dcols.resize(static_cast<std::size_t>(K * P));
  }
  for (Index n = 0; n < g.n; ++n) {
    CMapMat<T> gym(gy.data() + n * g.co * P, g.co, P);
    const T* xn = x.data() + n * g.c * g.h * g.w;
    if (gw) {
      const T* src = xn;
      if (!pw) {
        im2col(xn, g, cols.data());
        src = cols.data();
      }
      MapMat<T> gwm(gw->data(), g.co, K);
      gwm.noalias() += gym * CMapMat<T>(src, K, P).transpose();
    }
    if (gb) {
      // plain loop: Eigen's vectorised sum peels by pointer alignment
      for (Index o = 0; o < g.co; ++o) {
        const T* r = gy.data() + n * g.co * P + o * P;
        T acc = 0;
        for (Index q = 0; q < P; ++q) acc += r[q];
        (*gb)[o] += acc;
      }
    }
    if (gx) {
      T* gxn = gx->data() + n * g.c * g.h * g.w;
      if (pw) {
        MapMat<T>(gxn, K, P).noalias() += wm.transpose() * gym;
      } else if (flip) {
        im2col(gy.data() + n * g.co * P, gt, tcols.data());
        MapMat<T>(gxn, g.c, gt.p()).noalias() += CMapMat<T>(wt.data(), g.c, gt.k()) * CMapMat<T>(tcols.data(), gt.k(), gt.p());
      } else {
        MapMat<T>(dcols.data(), K, P).noalias() = wm.transpose() * gym;
        col2im_add(dcols.data(), g, gxn);
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pointwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  RDRF_CHECK_SHAPE(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                               shape_str(b.shape()));
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (Index i = 0; i < out.numel(); ++i) out[i] += pb[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  RDRF_CHECK_SHAPE(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (Index i = 0; i < out.numel(); ++i) out[i] -= pb[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    if (b.requires_grad()) {
      Tensor<T> ng = g;
      for (Index i = 0; i < ng.numel(); ++i) ng[i] = -ng[i];
      t.accumulate(b, std::move(ng));
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  RDRF_CHECK_SHAPE(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                               shape_str(b.shape()));
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (Index i = 0; i < out.numel(); ++i) out[i] *= pb[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    if (a.requires_grad()) {
      Tensor<T> ga = g;
      const T* pb = b.value().data();
      for (Index i = 0; i < ga.numel(); ++i) ga[i] *= pb[i];
      t.accumulate(a, std::move(ga));
    }
    if (b.requires_grad()) {
      Tensor<T> gb = g;
      const T* pa = a.value().data();
      for (Index i = 0; i < gb.numel(); ++i) gb[i] *= pa[i];
      t.accumulate(b, std::move(gb));
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (Index i = 0; i < out.numel(); ++i) out[i] *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga = g;
    for (Index i = 0; i < ga.numel(); ++i) ga[i] *= s;
    t.accumulate(a, std::move(ga));
  });
}

template <class T>
Var<T> leaky_relu(Var<T> x, T slope = T(kLeakySlope)) {
  Tensor<T> out = x.value();
  T* po = out.data();
  for (Index i = 0; i < out.numel(); ++i) po[i] *= po[i] < T(0) ? slope : T(1);
  return x.tape->record(std::move(out), {x}, [x, slope](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx = g;
    const T* px = x.value().data();
    T* pg = gx.data();
    for (Index i = 0; i < gx.numel(); ++i) pg[i] *= px[i] < T(0) ? slope : T(1);
    t.accumulate(x, std::move(gx));
  });
}

template <class T>
Var<T> relu(Var<T> x) {
  return leaky_relu(x, T(0));
}

/// log(1 + e^x), evaluated stably.
template <class T>
T softplus_scalar(T v) {
  return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

template <class T>
Var<T> softplus(Var<T> x) {
  Tensor<T> out = x.value();
  for (Index i = 0; i < out.numel(); ++i) out[i] = softplus_scalar(out[i]);
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx = g;
    const T* px = x.value().data();
    for (Index i = 0; i < gx.numel(); ++i) gx[i] *= T(1) / (T(1) + std::exp(-px[i]));
    t.accumulate(x, std::move(gx));
  });
}

template <class T>
Var<T> add_scalar(Var<T> x, T c) {
  Tensor<T> out = x.value();
  for (Index i = 0; i < out.numel(); ++i) out[i] += c;
  return x.tape->record(std::move(out), {x},
                        [x](Tape<T>& t, const Tensor<T>& g) { t.accumulate(x, g); });
}

/// max(x, floor) elementwise; gradient passes only where x > floor.
template <class T>
Var<T> clamp_min(Var<T> x, T floor) {
  Tensor<T> out = x.value();
  for (Index i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], floor);
  return x.tape->record(std::move(out), {x}, [x, floor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx = g;
    const T* px = x.value().data();
    for (Index i = 0; i < gx.numel(); ++i)
      if (!(px[i] > floor)) gx[i] = T(0);
    t.accumulate(x, std::move(gx));
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().vec()) s += v;
  return x.tape->record(Tensor<T>::scalar(s), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(x.shape(), g.item()));
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  const T inv = T(1) / static_cast<T>(x.value().numel());
  return scale(sum(x), inv);
}

/// Per-sample, per-channel mean and population standard deviation of [N,C,H,W].
template <class T>
std::pair<Var<T>, Var<T>> instance_stats(Var<T> x) {
  detail::require_rank(x.shape(), 4, "instance_stats");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  RDRF_CHECK_SHAPE(HW >= 1, "instance_stats: empty plane");
  Tensor<T> mu(Shape{N, C}), sd(Shape{N, C});
  const T* px = x.value().data();
  for (Index nc = 0; nc < N * C; ++nc) {
    const T* p = px + nc * HW;
    T s = 0;
    for (Index i = 0; i < HW; ++i) s += p[i];
    const T m = s / static_cast<T>(HW);
    T v = 0;
    for (Index i = 0; i < HW; ++i) v += (p[i] - m) * (p[i] - m);
    mu[nc] = m;
    sd[nc] = std::sqrt(v / static_cast<T>(HW));
  }
  Tape<T>& tape = *x.tape;
  Var<T> vmu = tape.record(std::move(mu), {x}, [x, N, C, HW](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(x.shape());
    for (Index nc = 0; nc < N * C; ++nc) {
      const T v = g[nc] / static_cast<T>(HW);
      std::fill(gx.data() + nc * HW, gx.data() + (nc + 1) * HW, v);
    }
    t.accumulate(x, std::move(gx));
  });
  Var<T> vsd = tape.record(std::move(sd), {x}, [x, vmu, N, C, HW](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(x.shape());
    const T* px = x.value().data();
    // Self value is not reachable from the closure, so recompute sigma.
    for (Index nc = 0; nc < N * C; ++nc) {
      const T m = vmu.value()[nc];
      const T* p = px + nc * HW;
      T v = 0;
      for (Index i = 0; i < HW; ++i) v += (p[i] - m) * (p[i] - m);
      const T s = std::sqrt(v / static_cast<T>(HW));
      if (s == T(0)) continue;
      const T k = g[nc] / (static_cast<T>(HW) * s);
      for (Index i = 0; i < HW; ++i) gx[nc * HW + i] = k * (p[i] - m);
    }
    t.accumulate(x, std::move(gx));
  });
  return {vmu, vsd};
}

// ---------------------------------------------------------------------------
// Broadcasts of [N,C] over [N,C,H,W]

namespace detail {
enum class NcOp { kAdd, kSub, kMul, kDiv };

template <class T>
Var<T> nc_binary(Var<T> x, Var<T> v, NcOp op) {
  require_rank(x.shape(), 4, "nc broadcast input");
  RDRF_CHECK_SHAPE(v.shape() == (Shape{x.dim(0), x.dim(1)}),
                   "nc broadcast: expected [N,C] operand, got " + shape_str(v.shape()));
  const Index NC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out = x.value();
  for (Index nc = 0; nc < NC; ++nc) {
    const T s = v.value()[nc];
    T* p = out.data() + nc * HW;
    for (Index i = 0; i < HW; ++i) {
      switch (op) {
        case NcOp::kAdd: p[i] += s; break;
        case NcOp::kSub: p[i] -= s; break;
        case NcOp::kMul: p[i] *= s; break;
        case NcOp::kDiv: p[i] /= s; break;
      }
    }
  }
  return x.tape->record(std::move(out), {x, v}, [x, v, op, NC, HW](Tape<T>& t, const Tensor<T>& g) {
    const T* px = x.value().data();
    if (x.requires_grad()) {
      Tensor<T> gx = g;
      if (op == NcOp::kMul || op == NcOp::kDiv) {
        for (Index nc = 0; nc < NC; ++nc) {
          const T s = v.value()[nc];
          const T f = op == NcOp::kMul ? s : T(1) / s;
          for (Index i = 0; i < HW; ++i) gx[nc * HW + i] *= f;
        }
      }
      t.accumulate(x, std::move(gx));
    }
    if (v.requires_grad()) {
      Tensor<T> gv(v.shape());
      for (Index nc = 0; nc < NC; ++nc) {
        const T s = v.value()[nc];
        T acc = 0;
        for (Index i = 0; i < HW; ++i) {
          const T gi = g[nc * HW + i];
          switch (op) {
            case NcOp::kAdd: acc += gi; break;
            case NcOp::kSub: acc -= gi; break;
            case NcOp::kMul: acc += gi * px[nc * HW + i]; break;
            case NcOp::kDiv: acc -= gi * px[nc * HW + i] / (s * s); break;
          }
        }
        gv[nc] = acc;
      }
      t.accumulate(v, std::move(gv));
    }
  });
}
}  // namespace detail

template <class T>
Var<T> add_nc(Var<T> x, Var<T> v) { return detail::nc_binary(x, v, detail::NcOp::kAdd); }
template <class T>
Var<T> sub_nc(Var<T> x, Var<T> v) { return detail::nc_binary(x, v, detail::NcOp::kSub); }
template <class T>
Var<T> mul_nc(Var<T> x, Var<T> v) { return detail::nc_binary(x, v, detail::NcOp::kMul); }
template <class T>
Var<T> div_nc(Var<T> x, Var<T> v) { return detail::nc_binary(x, v, detail::NcOp::kDiv); }

// ---------------------------------------------------------------------------
// Structural

template <class T>
Var<T> reshape(Var<T> x, Shape s) {
  Tensor<T> out = x.value().reshaped(std::move(s));
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, g.reshaped(x.shape()));
  });
}

/// Concatenate rank-4 tensors along the channel axis.
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  RDRF_CHECK_SHAPE(!xs.empty(), "concat_channels: no inputs");
  const Shape& s0 = xs[0].shape();
  detail::require_rank(s0, 4, "concat_channels");
  Index ctot = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    RDRF_CHECK_SHAPE(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
                     "concat_channels: mismatched " + shape_str(s) + " vs " + shape_str(s0));
    ctot += s[1];
  }
  const Index N = s0[0], HW = s0[2] * s0[3];
  Tensor<T> out(Shape{N, ctot, s0[2], s0[3]});
  for (Index n = 0; n < N; ++n) {
    Index off = 0;
    for (const auto& x : xs) {
      const Index c = x.dim(1);
      const T* src = x.value().data() + n * c * HW;
      std::copy(src, src + c * HW, out.data() + (n * ctot + off) * HW);
      off += c;
    }
  }
  return xs[0].tape->record(std::move(out), xs, [xs, N, HW, ctot](Tape<T>& t, const Tensor<T>& g) {
    Index off = 0;
    for (const auto& x : xs) {
      const Index c = x.dim(1);
      if (x.requires_grad()) {
        Tensor<T> gx(x.shape());
        for (Index n = 0; n < N; ++n) {
          const T* src = g.data() + (n * ctot + off) * HW;
          std::copy(src, src + c * HW, gx.data() + n * c * HW);
        }
        t.accumulate(x, std::move(gx));
      }
      off += c;
    }
  });
}

template <class T>
Var<T> slice_channels(Var<T> x, Index start, Index count) {
  detail::require_rank(x.shape(), 4, "slice_channels");
  const Index N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  RDRF_CHECK_SHAPE(start >= 0 && count >= 1 && start + count <= C, "slice_channels out of range");
  Tensor<T> out(Shape{N, count, x.dim(2), x.dim(3)});
  for (Index n = 0; n < N; ++n) {
    const T* src = x.value().data() + (n * C + start) * HW;
    std::copy(src, src + count * HW, out.data() + n * count * HW);
  }
  return x.tape->record(std::move(out), {x}, [x, start, count, N, C, HW](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>* gx = t.grad_buffer(x);
    for (Index n = 0; n < N; ++n) {
      const T* src = g.data() + n * count * HW;
      T* dst = gx->data() + (n * C + start) * HW;
      for (Index i = 0; i < count * HW; ++i) dst[i] += src[i];
    }
  });
}

/// Frame t of a clip [N,T,C,H,W] as [N,C,H,W].
template <class T>
Var<T> select_frame(Var<T> clip, Index t) {
  detail::require_rank(clip.shape(), 5, "select_frame");
  const Index N = clip.dim(0), TT = clip.dim(1), C = clip.dim(2), H = clip.dim(3), W = clip.dim(4);
  RDRF_CHECK_SHAPE(t >= 0 && t < TT, "select_frame: index " + std::to_string(t) + " out of range");
  const Index F = C * H * W;
  Tensor<T> out(Shape{N, C, H, W});
  for (Index n = 0; n < N; ++n) {
    const T* src = clip.value().data() + (n * TT + t) * F;
    std::copy(src, src + F, out.data() + n * F);
  }
  return clip.tape->record(std::move(out), {clip}, [clip, t, N, TT, F](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>* gc = tp.grad_buffer(clip);
    for (Index n = 0; n < N; ++n) {
      const T* src = g.data() + n * F;
      T* dst = gc->data() + (n * TT + t) * F;
      for (Index i = 0; i < F; ++i) dst[i] += src[i];
    }
  });
}

/// Stack K frames [N,C,H,W] into [N,K,C,H,W].
template <class T>
Var<T> stack_frames(const std::vector<Var<T>>& frames) {
  RDRF_CHECK_SHAPE(!frames.empty(), "stack_frames: no frames");
  const Shape s0 = frames[0].shape();
  detail::require_rank(s0, 4, "stack_frames");
  for (const auto& f : frames) RDRF_CHECK_SHAPE(f.shape() == s0, "stack_frames: shape mismatch");
  const Index N = s0[0], K = static_cast<Index>(frames.size()), F = s0[1] * s0[2] * s0[3];
  Tensor<T> out(Shape{N, K, s0[1], s0[2], s0[3]});
  for (Index n = 0; n < N; ++n)
    for (Index k = 0; k < K; ++k) {
      const T* src = frames[static_cast<std::size_t>(k)].value().data() + n * F;
      std::copy(src, src + F, out.data() + (n * K + k) * F);
    }
  return frames[0].tape->record(std::move(out), frames, [frames, N, K, F](Tape<T>& t, const Tensor<T>& g) {
    for (Index k = 0; k < K; ++k) {
      const Var<T>& f = frames[static_cast<std::size_t>(k)];
      if (!f.requires_grad()) continue;
      Tensor<T> gf(f.shape());
      for (Index n = 0; n < N; ++n) {
        const T* src = g.data() + (n * K + k) * F;
        std::copy(src, src + F, gf.data() + n * F);
      }
      t.accumulate(f, std::move(gf));
    }
  });
}

namespace detail {

// out[y][x] = in[y - rows][x], zero fill.
template <class T>
Tensor<T> shift_rows(const Tensor<T>& x, Index rows) {
  const Index NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> out(x.shape());
  for (Index nc = 0; nc < NC; ++nc) {
    const T* src = x.data() + nc * H * W;
    T* dst = out.data() + nc * H * W;
    for (Index y = 0; y < H; ++y) {
      const Index sy = y - rows;
      if (sy < 0 || sy >= H) continue;
      std::copy(src + sy * W, src + (sy + 1) * W, dst + y * W);
    }
  }
  return out;
}

// Counter-clockwise rotation of the (H,W) axes by k quarter turns (numpy.rot90 convention).
template <class T>
Tensor<T> rot90(const Tensor<T>& x, int k) {
  k = ((k % 4) + 4) % 4;
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (k == 0) return x;
  const Index Ho = (k % 2) ? W : H, Wo = (k % 2) ? H : W;
  Tensor<T> out(Shape{N, C, Ho, Wo});
  for (Index nc = 0; nc < N * C; ++nc) {
    const T* src = x.data() + nc * H * W;
    T* dst = out.data() + nc * Ho * Wo;
    for (Index i = 0; i < Ho; ++i)
      for (Index j = 0; j < Wo; ++j) {
        Index sy = 0, sx = 0;
        switch (k) {
          case 1: sy = j; sx = W - 1 - i; break;
          case 2: sy = H - 1 - i; sx = W - 1 - j; break;
          default: sy = H - 1 - j; sx = i; break;
        }
        dst[i * Wo + j] = src[sy * W + sx];
      }
  }
  return out;
}

}  // namespace detail

template <class T>
Var<T> shift_down(Var<T> x, Index rows) {
  detail::require_rank(x.shape(), 4, "shift_down");
  RDRF_CHECK_SHAPE(rows >= 0, "shift_down: rows must be >= 0");
  return x.tape->record(detail::shift_rows(x.value(), rows), {x},
                        [x, rows](Tape<T>& t, const Tensor<T>& g) {
                          t.accumulate(x, detail::shift_rows(g, -rows));
                        });
}

template <class T>
Var<T> rotate90(Var<T> x, int k) {
  detail::require_rank(x.shape(), 4, "rotate90");
  return x.tape->record(detail::rot90(x.value(), k), {x}, [x, k](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, detail::rot90(g, -k));
  });
}

// ---------------------------------------------------------------------------
// Convolutions

/// Multiplies a kernel by a constant binary mask broadcast over its leading axes.
template <class T>
Var<T> mask_kernel(Var<T> w, const Tensor<T>& mask) {
  const Shape& ws = w.shape();
  const Shape& ms = mask.shape();
  RDRF_CHECK_SHAPE(ms.size() <= ws.size() && std::equal(ms.begin(), ms.end(), ws.end() - static_cast<std::ptrdiff_t>(ms.size())),
                   "mask shape " + shape_str(ms) + " does not match kernel " + shape_str(ws));
  const Index M = mask.numel();
  Tensor<T> out = w.value();
  for (Index i = 0; i < out.numel(); ++i) out[i] *= mask[i % M];
  return w.tape->record(std::move(out), {w}, [w, mask, M](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gw = g;
    for (Index i = 0; i < gw.numel(); ++i) gw[i] *= mask[i % M];
    t.accumulate(w, std::move(gw));
  });
}

namespace detail {

/// [Co,C,kh,kw] -> [Co,C,taps,1] holding w * mask at the listed taps.
template <class T>
Var<T> gather_taps(Var<T> w, const Tensor<T>& mask, const std::vector<Index>& taps) {
  const Index CC = w.dim(0) * w.dim(1), KK = w.dim(2) * w.dim(3), nt = static_cast<Index>(taps.size());
  Tensor<T> out(Shape{w.dim(0), w.dim(1), nt, 1});
  for (Index r = 0; r < CC; ++r)
    for (Index t = 0; t < nt; ++t) out[r * nt + t] = w.value()[r * KK + taps[static_cast<std::size_t>(t)]] * mask[taps[static_cast<std::size_t>(t)]];
  return w.tape->record(std::move(out), {w}, [w, mask, taps, CC, KK, nt](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T> gw(w.shape());
    for (Index r = 0; r < CC; ++r)
      for (Index t = 0; t < nt; ++t) gw[r * KK + taps[static_cast<std::size_t>(t)]] = g[r * nt + t] * mask[taps[static_cast<std::size_t>(t)]];
    tp.accumulate(w, std::move(gw));
  });
}

}  // namespace detail

struct ConvOptions {
  Index dilation = 1;
  Index pad = 0;
};

/// Cross-correlation of x [N,C,H,W] with w [Co,C,kh,kw], zero padding.
/// When `mask` ([kh,kw]) is given the kernel is multiplied by it first.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> b, ConvOptions opt,
              const Tensor<T>* mask = nullptr) {
  detail::ConvGeom g = detail::conv_geom(x.shape(), w.shape(), opt.dilation, opt.pad);
  if (mask) {
    RDRF_CHECK_SHAPE(mask->shape() == (Shape{w.dim(2), w.dim(3)}),
                     "conv2d mask must be [kh,kw], got " + shape_str(mask->shape()));
    // Zero taps are dropped from the column matrix instead of multiplied out.
    g.masked = true;
    for (Index i = 0; i < mask->numel(); ++i)
      if ((*mask)[i] != T(0)) g.taps.push_back(i);
    w = detail::gather_taps(w, *mask, g.taps);
  }
  if (b) RDRF_CHECK_SHAPE(b->shape() == (Shape{g.co}), "conv2d bias must be [Co]");
  Tensor<T> y = detail::conv2d_forward(x.value(), w.value(), b ? &b->value() : nullptr, g);
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(*b);
  return x.tape->record(std::move(y), parents, [x, w, b, g](Tape<T>& t, const Tensor<T>& gy) {
    Tensor<T>* gx = t.grad_buffer(x);
    Tensor<T>* gw = t.grad_buffer(w);
    Tensor<T>* gb = b ? t.grad_buffer(*b) : nullptr;
    detail::conv2d_backward(x.value(), w.value(), gy, g, gx, gw, gb);
  });
}

/// Same-size convolution: pad = dilation * (k - 1) / 2.
template <class T>
Var<T> conv2d_same(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> b, Index dilation = 1,
                   const Tensor<T>* mask = nullptr) {
  return conv2d(x, w, b, ConvOptions{dilation, dilation * (w.dim(2) - 1) / 2}, mask);
}

/// Kernel [Co,C,3,kh,kw] -> [Co,3*C,kh,kw] with channel index t*C + c.
template <class T>
Var<T> fold_temporal_kernel(Var<T> w) {
  detail::require_rank(w.shape(), 5, "fold_temporal_kernel");
  const Index Co = w.dim(0), C = w.dim(1), KT = w.dim(2), KK = w.dim(3) * w.dim(4);
  auto remap = [=](const Tensor<T>& src, Tensor<T>& dst, bool inverse) {
    for (Index o = 0; o < Co; ++o)
      for (Index c = 0; c < C; ++c)
        for (Index k = 0; k < KT; ++k)
          for (Index s = 0; s < KK; ++s) {
            const Index a = ((o * C + c) * KT + k) * KK + s;
            const Index b = ((o * KT + k) * C + c) * KK + s;
            if (inverse) dst[a] = src[b];
            else dst[b] = src[a];
          }
  };
  Tensor<T> out(Shape{Co, KT * C, w.dim(3), w.dim(4)});
  remap(w.value(), out, false);
  return w.tape->record(std::move(out), {w}, [w, remap](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gw(w.shape());
    remap(g, gw, true);
    t.accumulate(w, std::move(gw));
  });
}

/// Center-blind 3D convolution over a three-frame window [N,3,C,H,W] producing the
/// single temporal slice at the middle frame. The mask [3,3,3] must zero its center.
template <class T>
Var<T> conv3d_masked(Var<T> window, Var<T> w, std::type_identity_t<std::optional<Var<T>>> b, const Tensor<T>& mask) {
  detail::require_rank(window.shape(), 5, "conv3d_masked window");
  detail::require_rank(w.shape(), 5, "conv3d_masked kernel");
  RDRF_CHECK_SHAPE(window.dim(1) == 3, "conv3d_masked: window must hold exactly 3 frames");
  RDRF_CHECK_SHAPE(w.dim(2) == 3 && w.dim(3) == 3 && w.dim(4) == 3,
                   "conv3d_masked: kernel must be [Co,C,3,3,3]");
  RDRF_CHECK_SHAPE(w.dim(1) == window.dim(2), "conv3d_masked: channel mismatch");
  RDRF_CHECK_SHAPE(mask.shape() == (Shape{3, 3, 3}), "conv3d_masked: mask must be [3,3,3]");
  RDRF_CHECK_SHAPE(mask[13] == T(0), "conv3d_masked: mask center must be zero");
  const Index N = window.dim(0), C = window.dim(2), H = window.dim(3), W = window.dim(4);
  Var<T> x = reshape(window, Shape{N, 3 * C, H, W});
  Var<T> k = fold_temporal_kernel(mask_kernel(w, mask));
  return conv2d(x, k, b, ConvOptions{1, 1});
}

// ---------------------------------------------------------------------------
// Losses

/// mean( 0.5*log(var + s^2) + (y - mu)^2 / (2*(var + s^2)) ).
template <class T>
Var<T> gaussian_nll(Var<T> mu, Var<T> var, Var<T> y, T sigma_n) {
  RDRF_CHECK_SHAPE(mu.shape() == var.shape() && mu.shape() == y.shape(),
                   "gaussian_nll: shape mismatch");
  const Index M = mu.value().numel();
  const T s2 = sigma_n * sigma_n;
  T acc = 0;
  for (Index i = 0; i < M; ++i) {
    const T v = var.value()[i];
    if (!(v > T(0))) throw std::invalid_argument("gaussian_nll: variance must be positive");
    const T tot = v + s2;
    const T d = y.value()[i] - mu.value()[i];
    acc += T(0.5) * std::log(tot) + d * d / (T(2) * tot);
  }
  return mu.tape->record(Tensor<T>::scalar(acc / static_cast<T>(M)), {mu, var, y},
                         [mu, var, y, s2, M](Tape<T>& t, const Tensor<T>& g) {
    const T scale = g.item() / static_cast<T>(M);
    Tensor<T> gmu(mu.shape()), gvar(var.shape()), gy(y.shape());
    for (Index i = 0; i < M; ++i) {
      const T tot = var.value()[i] + s2;
      const T d = y.value()[i] - mu.value()[i];
      gmu[i] = -scale * d / tot;
      gy[i] = -gmu[i];
      gvar[i] = scale * (T(0.5) / tot - d * d / (T(2) * tot * tot));
    }
    t.accumulate(mu, std::move(gmu));
    t.accumulate(var, std::move(gvar));
    t.accumulate(y, std::move(gy));
  });
}

template <class T>
Var<T> l2_loss(Var<T> a, Var<T> b) {
  RDRF_CHECK_SHAPE(a.shape() == b.shape(), "l2_loss: shape mismatch");
  const Index M = a.value().numel();
  T acc = 0;
  for (Index i = 0; i < M; ++i) {
    const T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return a.tape->record(Tensor<T>::scalar(acc / static_cast<T>(M)), {a, b},
                        [a, b, M](Tape<T>& t, const Tensor<T>& g) {
    const T k = T(2) * g.item() / static_cast<T>(M);
    Tensor<T> ga(a.shape()), gb(b.shape());
    for (Index i = 0; i < M; ++i) {
      ga[i] = k * (a.value()[i] - b.value()[i]);
      gb[i] = -ga[i];
    }
    t.accumulate(a, std::move(ga));
    t.accumulate(b, std::move(gb));
  });
}

}  // namespace rdrf
