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

// Adam training loop and sliding-window evaluation.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rdrf/checkpoint.hpp"
#include "rdrf/data.hpp"
#include "rdrf/loss.hpp"
#include "rdrf/metrics.hpp"
#include "rdrf/model.hpp"
#include "rdrf/ops.hpp"

namespace rdrf {

struct TrainConfig {
  Index seq_len = 9;
  Index batch = 4;
  double lr = 1e-4;
  std::int64_t steps = 2000;
  double sigma = 25.0 / 255.0;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kLog;
  Index patch = 48;
  /// 0 disables intermediate checkpoints.
  std::int64_t checkpoint_interval = 0;
  /// Inject fresh noise each step (clean training data); off for already-noisy data.
  bool inject_noise = true;

  void validate() const {
    if (seq_len < 3 || seq_len % 2 == 0) throw std::invalid_argument("seq_len must be odd and >= 3");
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (!(sigma > 0)) throw std::invalid_argument("sigma must be > 0");
    if (patch < 1) throw std::invalid_argument("patch must be >= 1");
    if (checkpoint_interval < 0) throw std::invalid_argument("checkpoint_interval must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"seq_len", c.seq_len}, {"batch", c.batch},       {"lr", c.lr},
                        {"steps", c.steps},     {"sigma", c.sigma},       {"seed", c.seed},
                        {"loss", to_string(c.loss)}, {"patch", c.patch}, {"checkpoint_interval", c.checkpoint_interval},
                        {"inject_noise", c.inject_noise}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"seq_len", "batch", "lr", "steps", "sigma", "seed",
                                              "loss", "patch", "checkpoint_interval", "inject_noise"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw std::invalid_argument("unknown train config key '" + k + "'");
  TrainConfig c;
  c.seq_len = j.value("seq_len", c.seq_len);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.steps = j.value("steps", c.steps);
  c.sigma = j.value("sigma", c.sigma);
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss")) c.loss = loss_kind_from_string(j["loss"].get<std::string>());
  c.patch = j.value("patch", c.patch);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.inject_noise = j.value("inject_noise", c.inject_noise);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Params<float> m;
  Params<float> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const Params<float>& params) {
    AdamState s;
    for (const auto& [k, t] : params) {
      s.m.emplace(k, Tensor<float>(t.shape()));
      s.v.emplace(k, Tensor<float>(t.shape()));
    }
    return s;
  }
};

/// One bias-corrected Adam update, in place.
inline void adam_step(Params<float>& params, const Params<float>& grads, AdamState& st, const AdamConfig& cfg) {
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    const Tensor<float>& g = grads.at(name);
    Tensor<float>& m = st.m.at(name);
    Tensor<float>& v = st.v.at(name);
    RDRF_CHECK_SHAPE(g.shape() == p.shape() && m.shape() == p.shape(), "adam: shape mismatch for '" + name + "'");
    for (Index k = 0; k < p.numel(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      p[k] = static_cast<float>(p[k] - cfg.lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Data

/// Generated training corpus: `count` clips with random subpixel motion and drift.
inline std::vector<Clip> make_synthetic_dataset(Index count, Index frames, Index size, Index channels,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> vel(-2.f, 2.f), drift(-0.05f, 0.05f);
  std::vector<Clip> clips;
  for (Index k = 0; k < count; ++k) {
    SequenceSpec s;
    s.frames = frames;
    s.height = size;
    s.width = size;
    s.channels = channels;
    s.velocity = {vel(rng), vel(rng)};
    s.drift = drift(rng);
    s.texture_seed = rng();
    clips.push_back(generate_clip(s, seed + static_cast<std::uint64_t>(k)));
  }
  return clips;
}

/// Copies clip[t0:t0+L, :, y0:y0+P, x0:x0+P] into batch slot n of [N,L,C,P,P].
inline void crop_into(const Clip& clip, Index t0, Index y0, Index x0, Index L, Index P, Tensor<float>& batch, Index n) {
  const Index C = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  for (Index t = 0; t < L; ++t)
    for (Index c = 0; c < C; ++c)
      for (Index y = 0; y < P; ++y) {
        const float* src = clip.data() + (((t0 + t) * C + c) * H + y0 + y) * W + x0;
        float* dst = batch.data() + ((((n * L + t) * C + c) * P + y) * P);
        std::copy(src, src + P, dst);
      }
}

// ---------------------------------------------------------------------------
// Training

struct LogRow {
  std::int64_t step;
  double loss;
  double grad_norm;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double params_norm(const Params<float>& ps) {
  double s = 0;
  for (const auto& [k, t] : ps)
    for (float v : t.span()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
};

struct TrainHooks {
  /// Called after each step.
  std::function<void(const LogRow&)> on_step;
  /// Called every checkpoint_interval steps with the current checkpoint.
  std::function<void(const Checkpoint&)> on_checkpoint;
};

inline Checkpoint make_checkpoint(const ModelConfig& mc, const TrainConfig& tc, const Params<float>& params,
                                  const AdamState& st) {
  Checkpoint ck;
  ck.config = nlohmann::json{{"model", to_json(mc)}, {"train", to_json(tc)}};
  ck.step = st.step;
  ck.params = params;
  ck.adam_m = st.m;
  ck.adam_v = st.v;
  return ck;
}

/// One optimisation step on a prepared batch [N,L,C,P,P]; returns (loss, grads).
inline std::pair<double, Params<float>> loss_and_grads(const Tensor<float>& noisy, const ModelConfig& mc,
                                                       const Params<float>& params, LossKind kind, double sigma) {
  Tape<float> tape;
  ParamBinding<float> p(tape, params);
  Var<float> clip = tape.constant(noisy);
  const int centre = static_cast<int>(noisy.dim(1) / 2);
  ModelOutput<float> out = forward(clip, centre, mc, p);
  Var<float> y = select_frame(clip, centre);
  Var<float> loss = kind == LossKind::kLog ? gaussian_nll(out.mu, out.var, y, static_cast<float>(sigma))
                                           : l2_loss(out.mu, y);
  tape.backward(loss);
  return {static_cast<double>(loss.value().item()), p.grads()};
}

inline TrainResult train(const ModelConfig& mc, const TrainConfig& tc, const std::vector<Clip>& data,
                         const TrainHooks& hooks = {}) {
  mc.validate();
  tc.validate();
  if (data.empty()) throw std::invalid_argument("train: no training clips");
  for (const auto& c : data) {
    RDRF_CHECK_SHAPE(c.rank() == 4 && c.dim(1) == mc.color_channels, "train: clip shape " + shape_str(c.shape()));
    if (c.dim(0) < tc.seq_len || c.dim(2) < tc.patch || c.dim(3) < tc.patch)
      throw std::invalid_argument("train: clip " + shape_str(c.shape()) + " smaller than seq_len/patch");
  }
  Params<float> params = init_params<float>(mc, tc.seed);
  AdamState st = AdamState::zeros_like(params);
  const AdamConfig ac{tc.lr};
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  const Index L = tc.seq_len, P = tc.patch, C = mc.color_channels;
  TrainResult res;
  for (std::int64_t step = 1; step <= tc.steps; ++step) {
    Tensor<float> batch(Shape{tc.batch, L, C, P, P});
    for (Index n = 0; n < tc.batch; ++n) {
      const Clip& clip = data[static_cast<std::size_t>(rng() % data.size())];
      const Index t0 = static_cast<Index>(rng() % static_cast<std::uint64_t>(clip.dim(0) - L + 1));
      const Index y0 = static_cast<Index>(rng() % static_cast<std::uint64_t>(clip.dim(2) - P + 1));
      const Index x0 = static_cast<Index>(rng() % static_cast<std::uint64_t>(clip.dim(3) - P + 1));
      crop_into(clip, t0, y0, x0, L, P, batch, n);
    }
    if (tc.inject_noise) batch = add_gaussian_noise(batch, tc.sigma, rng());
    double loss = 0;
    Params<float> grads;
    try {
      std::tie(loss, grads) = loss_and_grads(batch, mc, params, tc.loss, tc.sigma);
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << "training diverged at step " << step << ": " << e.what() << "; parameter norm " << params_norm(params);
      for (const auto& [k, t] : params) {
        double s = 0;
        for (float v : t.span()) s += static_cast<double>(v) * v;
        os << "\n  " << k << " norm " << std::sqrt(s);
      }
      throw TrainingDiverged(os.str());
    }
    const LogRow row{step, loss, params_norm(grads)};
    if (!std::isfinite(loss) || !std::isfinite(row.grad_norm))
      throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": non-finite loss/gradient; parameter norm " +
                             std::to_string(params_norm(params)));
    adam_step(params, grads, st, ac);
    res.log.push_back(row);
    if (hooks.on_step) hooks.on_step(row);
    if (tc.checkpoint_interval > 0 && step % tc.checkpoint_interval == 0 && hooks.on_checkpoint)
      hooks.on_checkpoint(make_checkpoint(mc, tc, params, st));
  }
  res.checkpoint = make_checkpoint(mc, tc, params, st);
  return res;
}

// ---------------------------------------------------------------------------
// Inference and evaluation

/// Frame indices of the window used to denoise frame i of a T-frame clip.
/// Frame i sits at the centre; a neighbour i+k past a clip end is replaced by
/// i-k, so frame i never repeats. Short clips get a narrower window.
inline std::vector<Index> inference_window(Index frames, Index i, Index seq_len) {
  if (i < 0 || i >= frames) throw std::out_of_range("inference_window: frame index out of range");
  const Index half = std::min(seq_len / 2, std::max(i, frames - 1 - i));
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(2 * half + 1));
  for (Index k = -half; k <= half; ++k) idx.push_back(i + k >= 0 && i + k < frames ? i + k : i - k);
  return idx;
}

struct Denoised {
  Clip mean;       // posterior mean, [T,C,H,W]
  Clip prior_mu;   // network prior mean
  Clip prior_var;  // network prior variance
};

/// Sliding-window (stride 1) denoising of a noisy clip [T,C,H,W].
inline Denoised denoise_clip(const Clip& noisy, const ModelConfig& mc, const Params<float>& params, Index seq_len,
                             double sigma) {
  RDRF_CHECK_SHAPE(noisy.rank() == 4 && noisy.dim(1) == mc.color_channels,
                   "denoise: clip shape " + shape_str(noisy.shape()));
  const Index T = noisy.dim(0), C = noisy.dim(1), H = noisy.dim(2), W = noisy.dim(3), F = C * H * W;
  Denoised out{Clip(noisy.shape()), Clip(noisy.shape()), Clip(noisy.shape())};
  for (Index i = 0; i < T; ++i) {
    const std::vector<Index> idx = inference_window(T, i, seq_len);
    const Index L = static_cast<Index>(idx.size());
    Tensor<float> win(Shape{1, L, C, H, W});
    for (Index t = 0; t < L; ++t)
      std::copy(noisy.data() + idx[t] * F, noisy.data() + (idx[t] + 1) * F, win.data() + t * F);
    Tensor<float> mv = predict(win, static_cast<int>(L / 2), mc, params);
    Tensor<float> mu(Shape{C, H, W}, std::vector<float>(mv.data(), mv.data() + F));
    Tensor<float> var(Shape{C, H, W}, std::vector<float>(mv.data() + F, mv.data() + 2 * F));
    Tensor<float> y(Shape{C, H, W}, std::vector<float>(noisy.data() + i * F, noisy.data() + (i + 1) * F));
    Tensor<float> pm = posterior_mean(mu, var, y, sigma);
    std::copy(pm.data(), pm.data() + F, out.mean.data() + i * F);
    std::copy(mu.data(), mu.data() + F, out.prior_mu.data() + i * F);
    std::copy(var.data(), var.data() + F, out.prior_var.data() + i * F);
  }
  return out;
}

struct EvalRow {
  std::string clip;
  Index frame;
  double psnr;
  double ssim;
  double psnr_noisy;
  double ssim_noisy;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  double mean_psnr = 0, mean_ssim = 0, mean_psnr_noisy = 0, mean_ssim_noisy = 0;
};

inline Tensor<float> frame_of(const Clip& c, Index t) {
  const Index F = c.dim(1) * c.dim(2) * c.dim(3);
  return Tensor<float>(Shape{c.dim(1), c.dim(2), c.dim(3)}, std::vector<float>(c.data() + t * F, c.data() + (t + 1) * F));
}

/// Per-frame PSNR/SSIM of the posterior mean and of the noisy input against `clean`.
inline void score_clip(const std::string& name, const Clip& clean, const Clip& noisy, const Clip& restored,
                       EvalSummary& summary) {
  for (Index t = 0; t < clean.dim(0); ++t) {
    const auto c = frame_of(clean, t), n = frame_of(noisy, t), r = frame_of(restored, t);
    summary.rows.push_back({name, t, psnr(r, c), ssim(r, c), psnr(n, c), ssim(n, c)});
  }
}

inline void finalize(EvalSummary& s) {
  if (s.rows.empty()) return;
  for (const auto& r : s.rows) {
    s.mean_psnr += r.psnr;
    s.mean_ssim += r.ssim;
    s.mean_psnr_noisy += r.psnr_noisy;
    s.mean_ssim_noisy += r.ssim_noisy;
  }
  const double n = static_cast<double>(s.rows.size());
  s.mean_psnr /= n;
  s.mean_ssim /= n;
  s.mean_psnr_noisy /= n;
  s.mean_ssim_noisy /= n;
}

/// Adds noise at `sigma` to each clean clip, denoises, and scores.
inline EvalSummary evaluate(const Checkpoint& ck, const std::vector<std::pair<std::string, Clip>>& clean_clips,
                            double sigma, std::uint64_t noise_seed, Index seq_len) {
  const ModelConfig mc = ck.model_config();
  check_params_match(mc, ck.params);
  EvalSummary s;
  std::uint64_t k = 0;
  for (const auto& [name, clean] : clean_clips) {
    const Clip noisy = add_gaussian_noise(clean, sigma, noise_seed + k++);
    const Clip restored = sigma > 0 ? denoise_clip(noisy, mc, ck.params, seq_len, sigma).mean : noisy;
    score_clip(name, clean, noisy, restored, s);
  }
  finalize(s);
  return s;
}

inline std::string eval_csv(const EvalSummary& s) {
  std::ostringstream os;
  os.precision(10);
  os << "clip,frame,psnr,ssim,psnr_noisy,ssim_noisy\n";
  for (const auto& r : s.rows)
    os << r.clip << ',' << r.frame << ',' << r.psnr << ',' << r.ssim << ',' << r.psnr_noisy << ',' << r.ssim_noisy << '\n';
  return os.str();
}

}  // namespace rdrf
