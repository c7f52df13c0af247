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

// Self-supervised Gaussian-prior objective and the matching posterior mean.
// The network predicts a prior N(mu, var) over the clean pixel; with known
// noise sigma_n the noisy observation is N(mu, var + sigma_n^2).

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rdrf/ops.hpp"

namespace rdrf {

struct NoiseModel {
  double sigma_n = 25.0 / 255.0;

  explicit NoiseModel(double s) : sigma_n(s) {
    if (!(s > 0)) throw std::invalid_argument("NoiseModel: sigma_n must be > 0");
  }
};

enum class LossKind { kLog, kL2 };

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "log") return LossKind::kLog;
  if (s == "l2") return LossKind::kL2;
  throw std::invalid_argument("loss must be log or l2");
}
inline std::string to_string(LossKind k) { return k == LossKind::kLog ? "log" : "l2"; }

/// Scalar per-pixel NLL, used by tests and diagnostics.
inline double gaussian_nll_scalar(double mu, double var, double y, double sigma_n) {
  if (!(var > 0)) throw std::invalid_argument("gaussian_nll: variance must be > 0");
  const double s = var + sigma_n * sigma_n;
  return 0.5 * std::log(s) + (y - mu) * (y - mu) / (2.0 * s);
}

/// Minimiser in var of the per-pixel NLL.
inline double optimal_variance(double mu, double y, double sigma_n) {
  return std::max(0.0, (y - mu) * (y - mu) - sigma_n * sigma_n);
}

/// (sigma_n^2 * mu + var * y) / (var + sigma_n^2), elementwise.
template <class T>
Tensor<T> posterior_mean(const Tensor<T>& mu, const Tensor<T>& var, const Tensor<T>& y, double sigma_n) {
  RDRF_CHECK_SHAPE(mu.shape() == var.shape() && mu.shape() == y.shape(),
                   "posterior_mean: shape mismatch " + shape_str(mu.shape()) + ", " + shape_str(var.shape()) +
                       ", " + shape_str(y.shape()));
  const double s2 = sigma_n * sigma_n;
  Tensor<T> out(mu.shape());
  for (Index k = 0; k < mu.numel(); ++k) {
    const double v = static_cast<double>(var[k]);
    out[k] = static_cast<T>((s2 * static_cast<double>(mu[k]) + v * static_cast<double>(y[k])) / (v + s2));
  }
  return out;
}

}  // namespace rdrf
