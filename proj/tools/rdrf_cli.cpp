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

// Command-line front end: gen-data, train, denoise, eval, verify-blindspot, ablate.
//
// Exit codes: 0 success, 1 usage / invalid configuration, 2 runtime error,
// 3 verification failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rdrf/rdrf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rdrf;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerify = 3;

/// Thrown for configuration problems detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw UsageError("config '" + path + "': " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
}

/// Flags shared by every command that builds a model and/or a training run.
/// Unset optionals keep the config-file (or built-in) value.
struct ConfigFlags {
  std::string config_path;
  std::optional<Index> width, branch_depth, lfe_depth, seq_len, batch, patch;
  std::optional<std::string> color, stats_mode, loss;
  std::vector<std::string> variants;
  std::optional<double> lr, sigma;
  std::optional<std::int64_t> steps, checkpoint_interval;
  std::optional<std::uint64_t> seed;

  void add_model(CLI::App* app) {
    app->add_option("--config", config_path, "canonical JSON config {\"model\":{...},\"train\":{...}}");
    app->add_option("--width", width, "feature channels");
    app->add_option("--branch-depth", branch_depth, "half-plane stack depth");
    app->add_option("--lfe-depth", lfe_depth, "dilated layers in the local branch");
    app->add_option("--color", color, "gray|rgb")->check(CLI::IsMember({"gray", "rgb"}));
    app->add_option("--bsm-stats", stats_mode, "reference|off")->check(CLI::IsMember({"reference", "off"}));
  }
  void add_variant(CLI::App* app) {
    app->add_option("--variant", variants, "ablation switch (repeatable): full, no_dff, blind_prop, no_lfe, no_bsm");
  }
  void add_train(CLI::App* app) {
    app->add_option("--seq-len", seq_len, "frames per training window (odd)");
    app->add_option("--batch", batch, "clips per step");
    app->add_option("--patch", patch, "spatial crop size");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--steps", steps, "optimisation steps");
    app->add_option("--sigma", sigma, "noise std in [0,1] units");
    app->add_option("--seed", seed, "initialisation and sampling seed");
    app->add_option("--loss", loss, "log|l2")->check(CLI::IsMember({"log", "l2"}));
    app->add_option("--checkpoint-interval", checkpoint_interval, "steps between intermediate checkpoints (0 = off)");
  }

  json file() const { return config_path.empty() ? json::object() : read_json_file(config_path); }

  ModelConfig model(bool with_variants = true) const {
    json j = file().value("model", json::object());
    if (width) j["width"] = *width;
    if (branch_depth) j["branch_depth"] = *branch_depth;
    if (lfe_depth) j["lfe"]["dilated_depth"] = *lfe_depth;
    if (color) j["color"] = *color;
    if (stats_mode) j["dff"]["bsm_stats_mode"] = *stats_mode;
    if (with_variants && !variants.empty()) {
      std::vector<std::string> names = j.contains("ablation")
                                           ? (j["ablation"].is_string() ? std::vector<std::string>{j["ablation"].get<std::string>()}
                                                                        : j["ablation"].get<std::vector<std::string>>())
                                           : std::vector<std::string>{};
      names.insert(names.end(), variants.begin(), variants.end());
      j["ablation"] = names;
    }
    try {
      return model_config_from_json(j);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }

  TrainConfig train() const {
    json j = file().value("train", json::object());
    if (seq_len) j["seq_len"] = *seq_len;
    if (batch) j["batch"] = *batch;
    if (patch) j["patch"] = *patch;
    if (lr) j["lr"] = *lr;
    if (steps) j["steps"] = *steps;
    if (sigma) j["sigma"] = *sigma;
    if (seed) j["seed"] = *seed;
    if (loss) j["loss"] = *loss;
    if (checkpoint_interval) j["checkpoint_interval"] = *checkpoint_interval;
    try {
      return train_config_from_json(j);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
};

/// Where training/evaluation clips come from: a directory of .rdv files or the generator.
struct DataFlags {
  std::string dir;
  Index count = 8, frames = 16, size = 48;
  std::uint64_t data_seed = 1;

  void add(CLI::App* app, Index default_count, std::uint64_t default_seed) {
    count = default_count;
    data_seed = default_seed;
    app->add_option("--data", dir, "directory of .rdv sequences (default: generated clips)");
    app->add_option("--gen-count", count, "generated clips")->capture_default_str();
    app->add_option("--gen-frames", frames, "frames per generated clip")->capture_default_str();
    app->add_option("--gen-size", size, "generated frame size")->capture_default_str();
    app->add_option("--data-seed", data_seed, "generator seed")->capture_default_str();
  }

  std::vector<std::pair<std::string, Clip>> load(Index channels) const {
    std::vector<std::pair<std::string, Clip>> out;
    if (!dir.empty()) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".rdv") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw std::runtime_error("no .rdv files in '" + dir + "'");
      for (const auto& f : files) out.emplace_back(f.stem().string(), read_sequence(f.string()));
    } else {
      auto clips = make_synthetic_dataset(count, frames, size, channels, data_seed);
      for (std::size_t k = 0; k < clips.size(); ++k) out.emplace_back("gen" + std::to_string(k), std::move(clips[k]));
    }
    return out;
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& out_dir, const DataFlags& d, Index channels) {
  fs::create_directories(out_dir);
  auto clips = make_synthetic_dataset(d.count, d.frames, d.size, channels, d.data_seed);
  for (std::size_t k = 0; k < clips.size(); ++k) {
    std::ostringstream name;
    name << "clip_" << std::setw(3) << std::setfill('0') << k << ".rdv";
    write_sequence((fs::path(out_dir) / name.str()).string(), clips[k]);
  }
  std::cout << "wrote " << clips.size() << " clips to " << out_dir << "\n";
  return 0;
}

TrainResult run_training(const ModelConfig& mc, const TrainConfig& tc, const DataFlags& d, const std::string& log_path,
                         const std::string& ck_prefix, bool quiet) {
  std::vector<Clip> data;
  for (auto& [name, c] : d.load(mc.color_channels)) data.push_back(std::move(c));
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw std::runtime_error("cannot open '" + log_path + "' for writing");
    log << "step,loss,grad_norm\n" << std::setprecision(10);
  }
  TrainHooks hooks;
  hooks.on_step = [&](const LogRow& r) {
    if (log.is_open()) log << r.step << ',' << r.loss << ',' << r.grad_norm << '\n';
    if (!quiet && (r.step % 100 == 0 || r.step == tc.steps))
      std::cerr << "step " << r.step << " loss " << fmt(r.loss) << " grad_norm " << fmt(r.grad_norm) << "\n";
  };
  if (!ck_prefix.empty())
    hooks.on_checkpoint = [&](const Checkpoint& ck) { save_checkpoint(ck_prefix + ".step" + std::to_string(ck.step), ck); };
  return train(mc, tc, data, hooks);
}

int cmd_train(const ConfigFlags& cf, const DataFlags& d, const std::string& out, const std::string& log_path, bool quiet) {
  const ModelConfig mc = cf.model();
  const TrainConfig tc = cf.train();
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = run_training(mc, tc, d, log_path, out, quiet);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(out, r.checkpoint);
  std::cout << "checkpoint " << out << "\n";
  std::cout << "steps " << r.checkpoint.step << " seconds " << fmt(secs, 1) << "\n";
  std::cout << "digest " << checkpoint_digest(r.checkpoint) << "\n";
  return 0;
}

int cmd_denoise(const std::string& ck_path, const std::string& in, const std::string& out, double sigma,
                std::optional<Index> seq_len, const std::string& var_out) {
  const Checkpoint ck = load_checkpoint(ck_path);
  const ModelConfig mc = ck.model_config();
  check_params_match(mc, ck.params);
  const Index L = seq_len ? *seq_len : ck.config.value("train", json::object()).value("seq_len", TrainConfig{}.seq_len);
  const Clip noisy = read_sequence(in);
  const Denoised dn = denoise_clip(noisy, mc, ck.params, L, sigma);
  write_sequence(out, dn.mean);
  if (!var_out.empty()) write_sequence(var_out, dn.prior_var);
  std::cout << "denoised " << noisy.dim(0) << " frames -> " << out << "\n";
  return 0;
}

void print_summary(const EvalSummary& s) {
  std::cout << "mean_psnr " << fmt(s.mean_psnr) << " mean_ssim " << fmt(s.mean_ssim) << " noisy_psnr "
            << fmt(s.mean_psnr_noisy) << " noisy_ssim " << fmt(s.mean_ssim_noisy) << "\n";
}

int cmd_eval(const std::string& ck_path, const DataFlags& d, double sigma, std::uint64_t noise_seed,
             std::optional<Index> seq_len, const std::string& csv) {
  const Checkpoint ck = load_checkpoint(ck_path);
  const ModelConfig mc = ck.model_config();
  const Index L = seq_len ? *seq_len : ck.config.value("train", json::object()).value("seq_len", TrainConfig{}.seq_len);
  const EvalSummary s = evaluate(ck, d.load(mc.color_channels), sigma, noise_seed, L);
  if (!csv.empty()) write_text(csv, eval_csv(s));
  else std::cout << eval_csv(s);
  print_summary(s);
  return 0;
}

int cmd_verify(const ConfigFlags& cf, bool strict, const BlindSpotOptions& opt, int leak_size) {
  ModelConfig mc = cf.model();
  if (strict) {
    mc = mc.strict();
    const BlindSpotReport rep = verify_blindspot<float>(mc, opt);
    std::cout << "mode strict (bsm_stats_mode=off), variant " << mc.ablation.label() << "\n";
    std::cout << "probes " << rep.probes.size() << " failures " << rep.failures() << " max_self_sensitivity "
              << rep.max_sensitivity() << "\n";
    std::cout << "footprint_excludes_centre " << (rep.footprint_excludes_centre ? "yes" : "no") << "\n";
    std::cout << (rep.passed() ? "PASS" : "FAIL") << "\n";
    return rep.passed() ? 0 : kExitVerify;
  }
  // Reference statistics: the dependence on the centre pixel is diluted, not absent.
  const LeakageStats ls = measure_leakage<double>(mc, leak_size, opt.seeds, opt.pixels);
  std::cout << "mode " << (mc.bsm_stats == StatsMode::kReference ? "reference" : "off") << ", variant "
            << mc.ablation.label() << ", size " << leak_size << "\n";
  std::cout << "median_self " << ls.median_self << " median_neighbour " << ls.median_neighbour << " ratio " << ls.ratio()
            << "\n";
  return 0;
}

int cmd_ablate(const ConfigFlags& cf, const DataFlags& train_data, const DataFlags& eval_data, std::uint64_t eval_noise_seed,
               const std::string& csv, const std::string& out_dir, bool quiet) {
  std::vector<std::vector<std::string>> runs;
  if (cf.variants.empty()) {
    for (const auto& v : ablation_variants()) runs.push_back({v});
  } else {
    runs.push_back(cf.variants);
  }
  // Validate every run before spending time on training.
  std::vector<ModelConfig> models;
  for (const auto& names : runs) {
    ConfigFlags c = cf;
    c.variants = names;
    models.push_back(c.model());
  }
  const TrainConfig tc = cf.train();
  std::ostringstream os;
  os << std::setprecision(10) << "variant,params,final_loss,psnr,ssim,psnr_noisy,ssim_noisy,seconds\n";
  if (!out_dir.empty()) fs::create_directories(out_dir);
  for (const ModelConfig& mc : models) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string ck_path = out_dir.empty() ? "" : (fs::path(out_dir) / (mc.ablation.label() + ".ckpt")).string();
    const TrainResult r = run_training(mc, tc, train_data, "", "", quiet);
    if (!ck_path.empty()) save_checkpoint(ck_path, r.checkpoint);
    const EvalSummary s = evaluate(r.checkpoint, eval_data.load(mc.color_channels), tc.sigma,
                                   eval_noise_seed, tc.seq_len);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double tail = 0;
    const std::size_t n = std::min<std::size_t>(50, r.log.size());
    for (std::size_t k = r.log.size() - n; k < r.log.size(); ++k) tail += r.log[k].loss;
    os << mc.ablation.label() << ',' << count_params(model_param_specs(mc)) << ',' << (n ? tail / static_cast<double>(n) : 0.0)
       << ',' << s.mean_psnr << ',' << s.mean_ssim << ',' << s.mean_psnr_noisy << ',' << s.mean_ssim_noisy << ',' << secs
       << '\n';
    std::cerr << mc.ablation.label() << ": psnr " << fmt(s.mean_psnr) << " (noisy " << fmt(s.mean_psnr_noisy) << ")\n";
  }
  if (!csv.empty()) write_text(csv, os.str());
  std::cout << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent blind-spot video denoiser"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for all subcommands");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write generated clean sequences as .rdv files");
  std::string gen_out;
  std::string gen_color = "gray";
  DataFlags gen_data;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--color", gen_color, "gray|rgb")->check(CLI::IsMember({"gray", "rgb"}));
  gen_data.add(gen, 8, 1);

  // train
  auto* tr = app.add_subcommand("train", "train a model; prints the checkpoint digest");
  ConfigFlags tr_cf;
  DataFlags tr_data;
  std::string tr_out, tr_log;
  bool tr_quiet = false;
  tr_cf.add_model(tr);
  tr_cf.add_variant(tr);
  tr_cf.add_train(tr);
  tr_data.add(tr, 8, 1);
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--log", tr_log, "CSV log (step, loss, grad_norm)");
  tr->add_flag("--quiet", tr_quiet, "no progress on stderr");

  // denoise
  auto* dn = app.add_subcommand("denoise", "posterior-mean denoising of one .rdv sequence");
  std::string dn_ck, dn_in, dn_out, dn_var;
  double dn_sigma = 25.0 / 255.0;
  std::optional<Index> dn_len;
  dn->add_option("--checkpoint", dn_ck, "trained checkpoint")->required();
  dn->add_option("--input", dn_in, "noisy .rdv")->required();
  dn->add_option("--output", dn_out, "denoised .rdv")->required();
  dn->add_option("--variance-output", dn_var, "prior variance .rdv");
  dn->add_option("--sigma", dn_sigma, "noise std in [0,1] units")->capture_default_str();
  dn->add_option("--seq-len", dn_len, "window length (default: training value)");

  // eval
  auto* ev = app.add_subcommand("eval", "add noise to clean clips, denoise, report PSNR/SSIM");
  std::string ev_ck, ev_csv;
  double ev_sigma = 25.0 / 255.0;
  std::uint64_t ev_noise_seed = 99;
  std::optional<Index> ev_len;
  DataFlags ev_data;
  ev->add_option("--checkpoint", ev_ck, "trained checkpoint")->required();
  ev->add_option("--sigma", ev_sigma)->capture_default_str();
  ev->add_option("--noise-seed", ev_noise_seed, "seed of the added noise")->capture_default_str();
  ev->add_option("--seq-len", ev_len, "window length (default: training value)");
  ev->add_option("--csv", ev_csv, "write per-frame CSV here instead of stdout");
  ev_data.add(ev, 1, 777);

  // verify-blindspot
  auto* vb = app.add_subcommand("verify-blindspot", "probe the self-pixel dependence of the model");
  ConfigFlags vb_cf;
  bool vb_strict = false;
  BlindSpotOptions vb_opt;
  int vb_seeds = 3, vb_leak_size = 32;
  vb_cf.add_model(vb);
  vb_cf.add_variant(vb);
  vb->add_flag("--strict", vb_strict, "disable reference statistics and require bitwise blindness");
  vb->add_option("--seeds", vb_seeds, "number of initialisation seeds")->capture_default_str();
  vb->add_option("--pixels", vb_opt.pixels, "probed pixels per frame and seed")->capture_default_str();
  vb->add_option("--frames", vb_opt.frames, "clip length")->capture_default_str();
  vb->add_option("--size", vb_opt.size, "clip size (strict mode)")->capture_default_str();
  vb->add_option("--leak-size", vb_leak_size, "clip size (reference-statistics mode)")->capture_default_str();

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate ablation variants; emits a comparison CSV");
  ConfigFlags ab_cf;
  DataFlags ab_train, ab_eval;
  std::string ab_csv, ab_dir;
  std::uint64_t ab_noise_seed = 99;
  bool ab_quiet = false;
  ab_cf.add_model(ab);
  ab_cf.add_variant(ab);
  ab_cf.add_train(ab);
  ab_train.add(ab, 8, 1);
  ab->add_option("--eval-data", ab_eval.dir, "directory of clean .rdv clips for evaluation (default: generated)");
  ab->add_option("--eval-seed", ab_eval.data_seed, "generator seed for the held-out clip")->default_val(777);
  ab->add_option("--noise-seed", ab_noise_seed, "seed of the added noise")->capture_default_str();
  ab->add_option("--csv", ab_csv, "comparison CSV path");
  ab->add_option("--out-dir", ab_dir, "directory for per-variant checkpoints");
  ab->add_flag("--quiet", ab_quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gen_out, gen_data, gen_color == "rgb" ? 3 : 1);
    if (*tr) return cmd_train(tr_cf, tr_data, tr_out, tr_log, tr_quiet);
    if (*dn) return cmd_denoise(dn_ck, dn_in, dn_out, dn_sigma, dn_len, dn_var);
    if (*ev) return cmd_eval(ev_ck, ev_data, ev_sigma, ev_noise_seed, ev_len, ev_csv);
    if (*vb) {
      vb_opt.seeds.clear();
      for (int s = 0; s < vb_seeds; ++s) vb_opt.seeds.push_back(static_cast<std::uint64_t>(s));
      return cmd_verify(vb_cf, vb_strict, vb_opt, vb_leak_size);
    }
    if (*ab) {
      ab_eval.count = 1;
      ab_eval.frames = ab_train.frames;
      ab_eval.size = ab_train.size;
      return cmd_ablate(ab_cf, ab_train, ab_eval, ab_noise_seed, ab_csv, ab_dir, ab_quiet);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
