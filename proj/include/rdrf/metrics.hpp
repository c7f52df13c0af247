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

// PSNR and SSIM. SSIM follows Wang et al. (2004): 11x11 Gaussian window,
// sigma 1.5, K1 = 0.01, K2 = 0.03, population (co)variances, averaged over
// the positions where the window fits inside the image.

#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "rdrf/tensor.hpp"

namespace rdrf {

inline constexpr double kPsnrCap = 99.0;

template <class T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  RDRF_CHECK_SHAPE(a.shape() == b.shape(), "metric: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  RDRF_CHECK_SHAPE(a.numel() > 0, "metric: empty input");
  double s = 0;
  for (Index k = 0; k < a.numel(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

/// 10 log10(peak^2 / MSE), capped at 99 dB when MSE < 1e-12.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
  const double m = mse(a, b);
  if (m < 1e-12) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / m);
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double s = 0;
  for (int i = 0; i < size; ++i) s += k[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
  for (auto& v : k) v /= s;
  return k;
}

/// Valid-mode separable filter of an h x w plane.
inline std::vector<double> filter_valid(const std::vector<double>& x, Index h, Index w, const std::vector<double>& k) {
  const Index n = static_cast<Index>(k.size()), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h * ow)), out(static_cast<std::size_t>(oh * ow));
  for (Index y = 0; y < h; ++y)
    for (Index x0 = 0; x0 < ow; ++x0) {
      double s = 0;
      for (Index i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(y * w + x0 + i)];
      tmp[static_cast<std::size_t>(y * ow + x0)] = s;
    }
  for (Index y0 = 0; y0 < oh; ++y0)
    for (Index x0 = 0; x0 < ow; ++x0) {
      double s = 0;
      for (Index i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y0 + i) * ow + x0)];
      out[static_cast<std::size_t>(y0 * ow + x0)] = s;
    }
  return out;
}

inline double ssim_plane(const double* a, const double* b, Index h, Index w, const SsimParams& p) {
  const auto k = gaussian_window_1d(p.window, p.sigma);
  const std::size_t n = static_cast<std::size_t>(h * w);
  std::vector<double> x(a, a + n), y(b, b + n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace detail

/// Mean SSIM of [H,W] or [C,H,W] images (per channel, then averaged).
template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimParams& p = {}) {
  RDRF_CHECK_SHAPE(a.shape() == b.shape(), "ssim: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  RDRF_CHECK_SHAPE(a.rank() == 2 || a.rank() == 3, "ssim: expected [H,W] or [C,H,W], got " + shape_str(a.shape()));
  const Index C = a.rank() == 3 ? a.dim(0) : 1;
  const Index H = a.dim(a.rank() - 2), W = a.dim(a.rank() - 1);
  RDRF_CHECK_SHAPE(H >= p.window && W >= p.window, "ssim: image smaller than the window");
  const std::size_t plane = static_cast<std::size_t>(H * W);
  std::vector<double> da(plane), db(plane);
  double total = 0;
  for (Index c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      da[i] = static_cast<double>(a[static_cast<Index>(c * static_cast<Index>(plane) + static_cast<Index>(i))]);
      db[i] = static_cast<double>(b[static_cast<Index>(c * static_cast<Index>(plane) + static_cast<Index>(i))]);
    }
    total += detail::ssim_plane(da.data(), db.data(), H, W, p);
  }
  return total / static_cast<double>(C);
}

}  // namespace rdrf
