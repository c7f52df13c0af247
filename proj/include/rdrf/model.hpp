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

// Full network: reference blind encoder + bidirectional propagation feeding the
// distant-feature-fusion branch, the local-feature branch, and a 1x1 head that
// predicts a per-pixel Gaussian prior (mean, variance) for the centre frame.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rdrf/blind.hpp"
#include "rdrf/footprint.hpp"
#include "rdrf/fusion.hpp"
#include "rdrf/lfe.hpp"
#include "rdrf/ops.hpp"
#include "rdrf/params.hpp"
#include "rdrf/propagation.hpp"

namespace rdrf {

inline constexpr double kVarianceFloor = 1e-6;

/// Switches for the ablation variants; all false is the full model.
struct Ablation {
  bool no_dff = false;      // drop distant feature fusion (and propagation)
  bool blind_prop = false;  // propagate neighbours through blind convolutions
  bool no_lfe = false;      // drop local feature extraction
  bool no_bsm = false;      // fuse without blind spatial modulation

  static Ablation from_names(const std::vector<std::string>& names) {
    Ablation a;
    for (const auto& n : names) {
      if (n == "full" || n.empty()) continue;
      if (n == "no_dff") a.no_dff = true;
      else if (n == "blind_prop") a.blind_prop = true;
      else if (n == "no_lfe") a.no_lfe = true;
      else if (n == "no_bsm") a.no_bsm = true;
      else throw std::invalid_argument("unknown ablation variant '" + n + "'");
    }
    return a;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (blind_prop) out.push_back("blind_prop");
    if (no_bsm) out.push_back("no_bsm");
    if (no_dff) out.push_back("no_dff");
    if (no_lfe) out.push_back("no_lfe");
    return out;
  }
  std::string label() const {
    auto n = names();
    if (n.empty()) return "full";
    std::string s;
    for (std::size_t i = 0; i < n.size(); ++i) s += (i ? "+" : "") + n[i];
    return s;
  }
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"full", "no_dff", "blind_prop", "no_lfe", "no_bsm"};
  return v;
}

struct ModelConfig {
  Index width = 48;
  Index branch_depth = 3;
  Index color_channels = 1;  // 1 gray, 3 rgb
  Index lfe_dilated_depth = 4;
  Index prop_blocks = 1;
  Index dff_depth = 1;
  bool bsm_enabled = true;
  StatsMode bsm_stats = StatsMode::kReference;
  Ablation ablation;

  void validate() const {
    if (width < 2) throw std::invalid_argument("model width must be >= 2");
    if (branch_depth < 1) throw std::invalid_argument("branch_depth must be >= 1");
    if (color_channels != 1 && color_channels != 3)
      throw std::invalid_argument("color channels must be 1 (gray) or 3 (rgb)");
    if (ablation.no_dff && ablation.no_lfe)
      throw std::invalid_argument("ablation no_dff together with no_lfe leaves no information path");
    if (bsm_stats == StatsMode::kReference && !bsm_enabled)
      throw std::invalid_argument("reference statistics require bsm_enabled");
    if (lfe_dilated_depth < 0 || prop_blocks < 1 || dff_depth < 1)
      throw std::invalid_argument("invalid depth setting");
  }

  LFEConfig lfe() const { return {color_channels, width, lfe_dilated_depth}; }
  PropagationCellConfig prop() const {
    return {color_channels, width, prop_blocks, ablation.blind_prop, branch_depth};
  }
  DFFConfig dff() const {
    const bool bsm = bsm_enabled && !ablation.no_bsm;
    return {width, bsm, bsm ? bsm_stats : StatsMode::kOff, dff_depth};
  }
  BranchStackConfig encoder() const { return {branch_depth, color_channels, width}; }
  Index head_hidden() const { return std::max<Index>(1, width / 2); }

  /// Copy with global statistics disabled: exactly blind.
  ModelConfig strict() const {
    ModelConfig c = *this;
    c.bsm_stats = StatsMode::kOff;
    return c;
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"width", c.width},
                        {"branch_depth", c.branch_depth},
                        {"color", c.color_channels == 1 ? "gray" : "rgb"},
                        {"lfe", {{"dilated_depth", c.lfe_dilated_depth}}},
                        {"prop", {{"blocks", c.prop_blocks}}},
                        {"dff",
                         {{"depth", c.dff_depth},
                          {"bsm_enabled", c.bsm_enabled},
                          {"bsm_stats_mode", c.bsm_stats == StatsMode::kReference ? "reference" : "off"}}},
                        {"ablation", c.ablation.names()}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"width", "branch_depth", "color", "lfe", "prop", "dff", "ablation"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw std::invalid_argument("unknown model config key '" + k + "'");
  ModelConfig c;
  c.width = j.value("width", c.width);
  c.branch_depth = j.value("branch_depth", c.branch_depth);
  const std::string color = j.value("color", std::string("gray"));
  if (color == "gray") c.color_channels = 1;
  else if (color == "rgb") c.color_channels = 3;
  else throw std::invalid_argument("color must be gray or rgb");
  if (j.contains("lfe")) c.lfe_dilated_depth = j["lfe"].value("dilated_depth", c.lfe_dilated_depth);
  if (j.contains("prop")) c.prop_blocks = j["prop"].value("blocks", c.prop_blocks);
  if (j.contains("dff")) {
    const auto& d = j["dff"];
    c.dff_depth = d.value("depth", c.dff_depth);
    c.bsm_enabled = d.value("bsm_enabled", c.bsm_enabled);
    const std::string mode = d.value("bsm_stats_mode", std::string("reference"));
    if (mode == "reference") c.bsm_stats = StatsMode::kReference;
    else if (mode == "off") c.bsm_stats = StatsMode::kOff;
    else throw std::invalid_argument("bsm_stats_mode must be reference or off");
  }
  if (j.contains("ablation")) {
    const auto& a = j["ablation"];
    if (a.is_string()) c.ablation = Ablation::from_names({a.get<std::string>()});
    else c.ablation = Ablation::from_names(a.get<std::vector<std::string>>());
  }
  c.validate();
  return c;
}

inline ParamSpecs model_param_specs(const ModelConfig& cfg) {
  cfg.validate();
  ParamSpecs specs;
  const Index W = cfg.width, C = cfg.color_channels;
  Index head_in = 0;
  if (!cfg.ablation.no_dff) {
    declare_half_plane_stack(specs, "enc", cfg.encoder());
    declare_propagation(specs, cfg.prop());
    declare_dff(specs, cfg.dff());
    head_in += W;
  }
  if (!cfg.ablation.no_lfe) {
    declare_lfe(specs, cfg.lfe());
    head_in += W;
  }
  declare_conv(specs, "head.l0", W, head_in, 1);
  declare_conv(specs, "head.l1", cfg.head_hidden(), W, 1);
  declare_conv(specs, "head.out", 2 * C, cfg.head_hidden(), 1);
  return specs;
}

template <class T>
Params<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  return init_from_specs<T>(model_param_specs(cfg), seed);
}

template <class T>
struct ModelOutput {
  Var<T> mu;
  Var<T> raw_var;
  Var<T> var;  // softplus(raw_var) + 1e-6
};

/// Prediction for frame i of a clip [N,T,C,H,W].
template <class T>
ModelOutput<T> forward(Var<T> clip, int i, const ModelConfig& cfg, ParamBinding<T>& p) {
  cfg.validate();
  detail::require_rank(clip.shape(), 5, "model clip");
  RDRF_CHECK_SHAPE(clip.dim(2) == cfg.color_channels,
                   "clip has " + std::to_string(clip.dim(2)) + " channels, model expects " +
                       std::to_string(cfg.color_channels));
  const int frames = static_cast<int>(clip.dim(1));
  if (frames < 1 || i < 0 || i >= frames) throw std::out_of_range("forward: frame index out of range");
  std::vector<Var<T>> parts;
  if (!cfg.ablation.no_dff) {
    Var<T> x = select_frame(clip, i);
    auto branches = branch_features(x, cfg.encoder(), p, "enc");
    auto [hf, hb] = run_bidirectional(clip, i, cfg.prop(), p);
    parts.push_back(dff_forward(branches, hf, hb, cfg.dff(), p));
  }
  if (!cfg.ablation.no_lfe) parts.push_back(lfe_forward(lfe_window(clip, i), cfg.lfe(), p));
  Var<T> h = parts.size() == 1 ? parts[0] : concat_channels(parts);
  auto conv1 = [&](Var<T> v, const std::string& n) {
    return conv2d(v, p(n + ".w"), std::optional(p(n + ".b")), ConvOptions{});
  };
  h = leaky_relu(conv1(h, "head.l0"));
  h = leaky_relu(conv1(h, "head.l1"));
  Var<T> out = conv1(h, "head.out");
  const Index C = cfg.color_channels;
  Var<T> mu = slice_channels(out, 0, C);
  Var<T> raw = slice_channels(out, C, C);
  return {mu, raw, add_scalar(softplus(raw), static_cast<T>(kVarianceFloor))};
}

/// Inference helper: [mu, var] stacked along channels for frame i, no gradients.
template <class T>
Tensor<T> predict(const Tensor<T>& clip, int i, const ModelConfig& cfg, const Params<T>& params) {
  Tape<T> tape;
  ParamBinding<T> p(tape, params, false);
  ModelOutput<T> o = forward(tape.constant(clip), i, cfg, p);
  return concat_channels<T>({o.mu, o.var}).value();
}

/// Symbolic graph of the whole model for frame i of a T-frame clip.
inline std::pair<FootprintGraph, FootprintGraph::NodeId> describe_model(const ModelConfig& cfg, int frames, int i) {
  cfg.validate();
  FootprintGraph g;
  std::vector<FootprintGraph::NodeId> parts;
  if (!cfg.ablation.no_dff) {
    auto branches = describe_branch_features(g, g.input(i), cfg.branch_depth);
    auto [hf, hb] = describe_bidirectional(g, frames, i, cfg.prop());
    parts.push_back(describe_dff(g, branches, hf, hb, cfg.dff()));
  }
  if (!cfg.ablation.no_lfe) parts.push_back(describe_lfe(g, frames, i, cfg.lfe()));
  FootprintGraph::NodeId out = g.pointwise(parts);
  return {std::move(g), out};
}

}  // namespace rdrf
