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

// Synthetic video clips, Gaussian noise injection, and frame-sequence I/O.
// Clips are [T,C,H,W] float tensors with values nominally in [0,1].

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "rdrf/tensor.hpp"

namespace rdrf {

static_assert(std::endian::native == std::endian::little, "file I/O assumes a little-endian host");

using Clip = Tensor<float>;

struct SequenceSpec {
  Index frames = 16;
  Index height = 48;
  Index width = 48;
  Index channels = 1;
  /// Per-step (dy, dx) velocity in pixels/frame. Empty means `velocity` for every step;
  /// otherwise one entry per transition (frames - 1).
  std::vector<std::array<float, 2>> motion;
  std::array<float, 2> velocity{0.f, 0.f};
  std::uint64_t texture_seed = 0;
  /// Amplitude of a sinusoidal brightness offset over the clip.
  float drift = 0.f;
  /// Standard deviations of the two Gaussian-smoothed noise octaves.
  float fine_scale = 1.0f;
  float coarse_scale = 3.0f;

  static constexpr float kMaxSpeed = 4.f;

  void validate() const {
    if (frames < 1 || height < 1 || width < 1) throw std::invalid_argument("SequenceSpec: empty clip");
    if (channels != 1 && channels != 3) throw std::invalid_argument("SequenceSpec: channels must be 1 or 3");
    if (!motion.empty() && static_cast<Index>(motion.size()) != frames - 1)
      throw std::invalid_argument("SequenceSpec: motion needs frames-1 entries");
    auto check = [](const std::array<float, 2>& v) {
      if (std::hypot(v[0], v[1]) > kMaxSpeed) throw std::invalid_argument("SequenceSpec: |velocity| > 4 px/frame");
    };
    check(velocity);
    for (const auto& v : motion) check(v);
    if (!(fine_scale > 0) || !(coarse_scale > 0)) throw std::invalid_argument("SequenceSpec: scales must be > 0");
  }

  std::array<float, 2> step_velocity(Index t) const {
    return motion.empty() ? velocity : motion[static_cast<std::size_t>(t)];
  }
};

namespace detail {

/// Mirror a continuous coordinate into [0, n-1] (edge sample not repeated).
inline double reflect_coord(double c, Index n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * static_cast<double>(n - 1);
  c = std::fmod(c, period);
  if (c < 0) c += period;
  return c > static_cast<double>(n - 1) ? period - c : c;
}

inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i > n - 1 ? period - i : i;
}

/// Separable Gaussian blur, radius ceil(3 sigma), reflected borders.
inline std::vector<double> gaussian_blur(const std::vector<double>& in, Index h, Index w, double sigma) {
  const Index r = static_cast<Index>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double ks = 0;
  for (Index i = -r; i <= r; ++i) ks += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= ks;
  std::vector<double> tmp(in.size()), out(in.size());
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double s = 0;
      for (Index i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * in[static_cast<std::size_t>(y * w + reflect_index(x + i, w))];
      tmp[static_cast<std::size_t>(y * w + x)] = s;
    }
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double s = 0;
      for (Index i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(reflect_index(y + i, h) * w + x)];
      out[static_cast<std::size_t>(y * w + x)] = s;
    }
  return out;
}

inline double bilinear_reflect(const std::vector<double>& img, Index h, Index w, double y, double x) {
  y = reflect_coord(y, h);
  x = reflect_coord(x, w);
  const Index y0 = std::min<Index>(static_cast<Index>(std::floor(y)), h - 1);
  const Index x0 = std::min<Index>(static_cast<Index>(std::floor(x)), w - 1);
  const Index y1 = std::min<Index>(y0 + 1, h - 1), x1 = std::min<Index>(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  auto at = [&](Index yy, Index xx) { return img[static_cast<std::size_t>(yy * w + xx)]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

}  // namespace detail

/// Band-limited texture translated frame by frame. Frame t samples the
/// texture canvas at (y - d_y(t), x - d_x(t)), d(t) the accumulated motion.
inline Clip generate_clip(const SequenceSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Index T = spec.frames, C = spec.channels, H = spec.height, W = spec.width;
  std::vector<std::array<double, 2>> disp(static_cast<std::size_t>(T), {0.0, 0.0});
  double reach = 0;
  for (Index t = 1; t < T; ++t) {
    const auto v = spec.step_velocity(t - 1);
    disp[static_cast<std::size_t>(t)] = {disp[static_cast<std::size_t>(t - 1)][0] + v[0],
                                         disp[static_cast<std::size_t>(t - 1)][1] + v[1]};
    reach = std::max({reach, std::abs(disp[static_cast<std::size_t>(t)][0]), std::abs(disp[static_cast<std::size_t>(t)][1])});
  }
  // Canvas margin so moving content enters from outside the first frame.
  const Index margin = static_cast<Index>(std::ceil(reach)) + 2;
  const Index ch = H + 2 * margin, cw = W + 2 * margin;

  std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(spec.texture_seed), static_cast<std::uint32_t>(spec.texture_seed >> 32)};
  std::mt19937_64 rng(sseq);
  std::normal_distribution<double> normal(0.0, 1.0);

  Clip out(Shape{T, C, H, W});
  for (Index c = 0; c < C; ++c) {
    std::vector<double> fine(static_cast<std::size_t>(ch * cw)), coarse(fine.size());
    for (auto& v : fine) v = normal(rng);
    for (auto& v : coarse) v = normal(rng);
    fine = detail::gaussian_blur(fine, ch, cw, spec.fine_scale);
    coarse = detail::gaussian_blur(coarse, ch, cw, spec.coarse_scale);
    auto standardize = [](std::vector<double>& v) {
      double m = 0, s = 0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      for (double x : v) s += (x - m) * (x - m);
      s = std::sqrt(s / static_cast<double>(v.size()));
      for (double& x : v) x = (x - m) / std::max(s, 1e-12);
    };
    standardize(fine);
    standardize(coarse);
    std::vector<double> tex(fine.size());
    for (std::size_t k = 0; k < tex.size(); ++k) tex[k] = 0.5 + 0.12 * coarse[k] + 0.06 * fine[k];
    for (Index t = 0; t < T; ++t) {
      const auto& d = disp[static_cast<std::size_t>(t)];
      const double offset = spec.drift * std::sin(2.0 * M_PI * static_cast<double>(t) / static_cast<double>(std::max<Index>(T, 2)));
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
          const double v = detail::bilinear_reflect(tex, ch, cw, static_cast<double>(y + margin) - d[0],
                                                    static_cast<double>(x + margin) - d[1]);
          out[((t * C + c) * H + y) * W + x] = static_cast<float>(v + offset);
        }
    }
  }
  return out;
}

/// clip + sigma * N(0,1); no clipping.
inline Clip add_gaussian_noise(const Clip& clip, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
  Clip out = clip;
  if (sigma == 0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index k = 0; k < out.numel(); ++k)
    out[k] = static_cast<float>(static_cast<double>(out[k]) + sigma * normal(rng));
  return out;
}

// ---------------------------------------------------------------------------
// FrameSequenceFile: "RDV1", u32 T, H, W, C, then float32 [T,C,H,W].

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kSequenceMagic[4] = {'R', 'D', 'V', '1'};

namespace detail {

template <class U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get(std::istream& is, const std::string& what) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw FormatError("truncated " + what);
  return v;
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline void write_sequence(const std::string& path, const Clip& clip) {
  RDRF_CHECK_SHAPE(clip.rank() == 4, "write_sequence: clip must be [T,C,H,W], got " + shape_str(clip.shape()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(kSequenceMagic, 4);
  for (Index d : {clip.dim(0), clip.dim(2), clip.dim(3), clip.dim(1)}) detail::put<std::uint32_t>(f, static_cast<std::uint32_t>(d));
  f.write(reinterpret_cast<const char*>(clip.data()), static_cast<std::streamsize>(clip.numel() * sizeof(float)));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline Clip read_sequence(const std::string& path) {
  const std::string bytes = detail::slurp(path);
  if (bytes.size() < 20) throw FormatError("'" + path + "': truncated header");
  if (std::memcmp(bytes.data(), kSequenceMagic, 4) != 0) throw FormatError("'" + path + "': bad magic");
  std::uint32_t dims[4];
  std::memcpy(dims, bytes.data() + 4, sizeof(dims));
  const Index T = dims[0], H = dims[1], W = dims[2], C = dims[3];
  const std::uint64_t expect = 20 + static_cast<std::uint64_t>(T * C * H * W) * 4;
  if (bytes.size() != expect)
    throw FormatError("'" + path + "': payload length " + std::to_string(bytes.size() - 20) + " bytes, expected " +
                      std::to_string(expect - 20));
  Clip out(Shape{T, C, H, W});
  std::memcpy(out.data(), bytes.data() + 20, static_cast<std::size_t>(out.numel()) * sizeof(float));
  return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5).

namespace detail {

/// Parses one P5 image; returns (height, width, values scaled to [0,1]).
inline std::tuple<Index, Index, std::vector<float>> parse_pgm(const std::string& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_ws();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw FormatError("'" + name + "': malformed PGM header");
    return std::stol(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("'" + name + "': not a P5 PGM");
  pos = 2;
  const long w = number(), h = number(), maxval = number();
  if (maxval != 255 && maxval != 65535) throw FormatError("'" + name + "': maxval must be 255 or 65535");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("'" + name + "': malformed PGM header");
  ++pos;
  const std::size_t bpp = maxval == 255 ? 1 : 2;
  const std::size_t n = static_cast<std::size_t>(w * h);
  if (bytes.size() - pos < n * bpp) throw FormatError("'" + name + "': truncated PGM payload");
  std::vector<float> v(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t k = 0; k < n; ++k) {
    const unsigned raw = bpp == 1 ? p[k] : (static_cast<unsigned>(p[2 * k]) << 8) | p[2 * k + 1];
    v[k] = static_cast<float>(static_cast<double>(raw) / static_cast<double>(maxval));
  }
  return {h, w, std::move(v)};
}

}  // namespace detail

/// All *.pgm files in `dir`, sorted by name, as a [T,1,H,W] clip.
inline Clip import_pgm_dir(const std::string& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  if (files.empty()) throw FormatError("'" + dir + "': no .pgm frames");
  std::sort(files.begin(), files.end());
  Index H = -1, W = -1;
  std::vector<float> all;
  for (const auto& f : files) {
    auto [h, w, v] = detail::parse_pgm(detail::slurp(f.string()), f.string());
    if (H < 0) {
      H = h;
      W = w;
    } else if (h != H || w != W) {
      throw FormatError("'" + f.string() + "': frame is " + std::to_string(h) + "x" + std::to_string(w) +
                        ", expected " + std::to_string(H) + "x" + std::to_string(W));
    }
    all.insert(all.end(), v.begin(), v.end());
  }
  return Clip(Shape{static_cast<Index>(files.size()), 1, H, W}, std::move(all));
}

/// 8-bit P5 export of one single-channel frame [H,W], values clamped to [0,1].
inline void write_pgm(const std::string& path, const Tensor<float>& frame) {
  RDRF_CHECK_SHAPE(frame.rank() == 2, "write_pgm: frame must be [H,W]");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << "P5\n" << frame.dim(1) << " " << frame.dim(0) << "\n255\n";
  for (Index k = 0; k < frame.numel(); ++k) {
    const double v = std::clamp(static_cast<double>(frame[k]), 0.0, 1.0);
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

}  // namespace rdrf
