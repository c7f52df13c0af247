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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "test_util.hpp"

namespace rdrf::testing {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rdrf_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary).write(s.data(), static_cast<std::streamsize>(s.size()));
}

SequenceSpec spec(Index T, std::array<float, 2> v, float drift = 0) {
  SequenceSpec s;
  s.frames = T;
  s.height = 24;
  s.width = 20;
  s.velocity = v;
  s.drift = drift;
  s.texture_seed = 11;
  return s;
}

TEST(GenerateClip, StaticClipHasIdenticalFrames) {
  const Clip c = generate_clip(spec(5, {0, 0}), 3);
  for (Index t = 1; t < 5; ++t) EXPECT_TRUE(frame_of(c, t) == frame_of(c, 0));
}

TEST(GenerateClip, IntegerVelocityIsExactShift) {
  const Clip c = generate_clip(spec(4, {1, 0}), 3);
  for (Index t = 0; t + 1 < 4; ++t)
    for (Index y = 0; y + 1 < 24; ++y)
      for (Index x = 0; x < 20; ++x) EXPECT_EQ(c.at({t + 1, 0, y + 1, x}), c.at({t, 0, y, x}));
  const Clip d = generate_clip(spec(3, {0, -2}), 3);
  for (Index y = 0; y < 24; ++y)
    for (Index x = 0; x + 2 < 20; ++x) EXPECT_EQ(d.at({1, 0, y, x}), d.at({0, 0, y, x + 2}));
}

TEST(GenerateClip, DeterministicInSeed) {
  const SequenceSpec s = spec(4, {0.3f, -1.2f}, 0.05f);
  EXPECT_TRUE(generate_clip(s, 9) == generate_clip(s, 9));
  EXPECT_FALSE(generate_clip(s, 9) == generate_clip(s, 10));
}

TEST(GenerateClip, SpecValidation) {
  EXPECT_THROW(generate_clip(spec(0, {0, 0}), 1), std::invalid_argument);
  EXPECT_THROW(generate_clip(spec(3, {3, 3}), 1), std::invalid_argument);
  SequenceSpec s = spec(4, {0, 0});
  s.motion = {{1, 0}};
  EXPECT_THROW(generate_clip(s, 1), std::invalid_argument);
  s.motion = {{1, 0}, {0, 1}, {-1, 0}};
  EXPECT_NO_THROW(generate_clip(s, 1));
  s.motion.clear();
  s.channels = 2;
  EXPECT_THROW(generate_clip(s, 1), std::invalid_argument);
}

TEST(GenerateClip, DriftIsUniformOffset) {
  const Clip a = generate_clip(spec(4, {0, 0}, 0.0f), 5), b = generate_clip(spec(4, {0, 0}, 0.05f), 5);
  for (Index t = 0; t < 4; ++t) {
    const double want = 0.05 * std::sin(2 * M_PI * t / 4.0);
    EXPECT_NEAR(b.at({t, 0, 7, 3}) - a.at({t, 0, 7, 3}), want, 1e-6);
  }
}

TEST(GenerateClip, TemporalDifferenceSanityBand) {
  const std::array<float, 2> v{0.7f, 0.4f};
  SequenceSpec s = spec(6, v);
  s.height = s.width = 40;
  const Clip c = generate_clip(s, 2);
  double diff = 0, grad = 0;
  Index n = 0;
  for (Index t = 0; t + 1 < 6; ++t)
    for (Index y = 1; y + 1 < 40; ++y)
      for (Index x = 1; x + 1 < 40; ++x) {
        diff += std::abs(c.at({t + 1, 0, y, x}) - c.at({t, 0, y, x}));
        const double gy = (c.at({t, 0, y + 1, x}) - c.at({t, 0, y - 1, x})) / 2;
        const double gx = (c.at({t, 0, y, x + 1}) - c.at({t, 0, y, x - 1})) / 2;
        grad += std::hypot(gy, gx);
        ++n;
      }
  diff /= n, grad /= n;
  EXPECT_GT(diff, 0.0);
  EXPECT_LE(diff, 2 * std::hypot(v[0], v[1]) * grad);
}

TEST(GenerateClip, RgbChannelsDiffer) {
  SequenceSpec s = spec(2, {0.5f, 0});
  s.channels = 3;
  const Clip c = generate_clip(s, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 3, 24, 20}));
  EXPECT_NE(c.at({0, 0, 5, 5}), c.at({0, 1, 5, 5}));
}

TEST(Noise, SigmaZeroIsIdentity) {
  const Clip c = generate_clip(spec(2, {0, 0}), 1);
  EXPECT_TRUE(add_gaussian_noise(c, 0.0, 5) == c);
  EXPECT_THROW(add_gaussian_noise(c, -0.1, 5), std::invalid_argument);
}

TEST(Noise, MomentsOverOneMillionDraws) {
  const double sigma = 25.0 / 255.0;
  const Clip zero(Shape{1, 1, 1000, 1000}, 0.5f);
  const Clip n = add_gaussian_noise(zero, sigma, 42);
  double m = 0, s = 0;
  for (Index k = 0; k < n.numel(); ++k) m += n[k] - 0.5;
  m /= n.numel();
  for (Index k = 0; k < n.numel(); ++k) s += (n[k] - 0.5 - m) * (n[k] - 0.5 - m);
  s = std::sqrt(s / n.numel());
  EXPECT_LE(std::abs(m), 4 * sigma / 1000);
  EXPECT_NEAR(s, sigma, 0.005 * sigma);
  EXPECT_NEAR(psnr(n, zero), -20 * std::log10(sigma), 0.1);
  EXPECT_NEAR(psnr(n, zero), 20.17, 0.1);
}

TEST(Noise, DeterministicAndUnclipped) {
  const Clip c(Shape{1, 1, 50, 50}, 0.99f);
  const Clip a = add_gaussian_noise(c, 0.2, 3), b = add_gaussian_noise(c, 0.2, 3);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == add_gaussian_noise(c, 0.2, 4));
  float hi = 0;
  for (float v : a.vec()) hi = std::max(hi, v);
  EXPECT_GT(hi, 1.0f);
}

TEST(SequenceFile, RoundTripIsBitwise) {
  const fs::path dir = temp_dir("rdv");
  std::mt19937_64 rng(1);
  const Clip c = random_tensor({3, 3, 5, 7}, rng, 0, 1).cast<float>();
  write_sequence((dir / "a.rdv").string(), c);
  EXPECT_TRUE(read_sequence((dir / "a.rdv").string()) == c);
  EXPECT_EQ(fs::file_size(dir / "a.rdv"), 4u + 16u + 3u * 3 * 5 * 7 * 4);
  fs::remove_all(dir);
}

TEST(SequenceFile, HeaderIsTHWC) {
  const fs::path dir = temp_dir("hdr");
  write_sequence((dir / "a.rdv").string(), Clip(Shape{2, 3, 4, 5}));
  std::ifstream is(dir / "a.rdv", std::ios::binary);
  char magic[4];
  std::uint32_t h[4];
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(h), 16);
  EXPECT_EQ(std::string(magic, 4), "RDV1");
  EXPECT_EQ(h[0], 2u);
  EXPECT_EQ(h[1], 4u);
  EXPECT_EQ(h[2], 5u);
  EXPECT_EQ(h[3], 3u);
  fs::remove_all(dir);
}

TEST(SequenceFile, Errors) {
  const fs::path dir = temp_dir("rdverr");
  const std::string f = (dir / "a.rdv").string();
  write_sequence(f, Clip(Shape{2, 1, 4, 4}, 0.5f));
  std::string bytes = detail::slurp(f);
  write_bytes(dir / "trunc.rdv", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_sequence((dir / "trunc.rdv").string()), FormatError);
  write_bytes(dir / "long.rdv", bytes + "x");
  EXPECT_THROW(read_sequence((dir / "long.rdv").string()), FormatError);
  std::string bad = bytes;
  bad[3] = '2';
  write_bytes(dir / "bad.rdv", bad);
  EXPECT_THROW(read_sequence((dir / "bad.rdv").string()), FormatError);
  write_bytes(dir / "short.rdv", "RDV1\x01");
  EXPECT_THROW(read_sequence((dir / "short.rdv").string()), FormatError);
  EXPECT_THROW(read_sequence((dir / "missing.rdv").string()), std::runtime_error);
  fs::remove_all(dir);
}

std::string pgm8(int w, int h, unsigned char fill) {
  return "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n" + std::string(static_cast<std::size_t>(w * h), static_cast<char>(fill));
}

TEST(Pgm, ImportScalesAndSorts) {
  const fs::path dir = temp_dir("pgm");
  write_bytes(dir / "b.pgm", pgm8(3, 2, 255));
  write_bytes(dir / "a.pgm", pgm8(3, 2, 128));
  write_bytes(dir / "notes.txt", "ignored");
  const Clip c = import_pgm_dir(dir.string());
  EXPECT_EQ(c.shape(), (Shape{2, 1, 2, 3}));
  EXPECT_FLOAT_EQ(c.at({0, 0, 1, 2}), 128.0f / 255.0f);
  EXPECT_EQ(c.at({1, 0, 0, 0}), 1.0f);
  fs::remove_all(dir);
}

TEST(Pgm, SixteenBitAndComments) {
  const fs::path dir = temp_dir("pgm16");
  std::string p = "P5\n# comment\n2 1\n65535\n";
  p += std::string{'\x80', '\x00', '\xff', '\xff'};
  write_bytes(dir / "f.pgm", p);
  const Clip c = import_pgm_dir(dir.string());
  EXPECT_FLOAT_EQ(c.at({0, 0, 0, 0}), 32768.0f / 65535.0f);
  EXPECT_EQ(c.at({0, 0, 0, 1}), 1.0f);
  fs::remove_all(dir);
}

TEST(Pgm, Errors) {
  const fs::path dir = temp_dir("pgmerr");
  write_bytes(dir / "a.pgm", pgm8(3, 2, 1));
  write_bytes(dir / "b.pgm", pgm8(2, 3, 1));
  EXPECT_THROW(import_pgm_dir(dir.string()), FormatError);
  fs::remove(dir / "b.pgm");
  write_bytes(dir / "c.pgm", pgm8(3, 2, 1).substr(0, 14));
  EXPECT_THROW(import_pgm_dir(dir.string()), FormatError);
  fs::remove(dir / "c.pgm");
  write_bytes(dir / "d.pgm", "P2\n3 2\n255\n" + std::string(6, 'a'));
  EXPECT_THROW(import_pgm_dir(dir.string()), FormatError);
  fs::remove_all(dir);
  fs::create_directories(dir);
  EXPECT_THROW(import_pgm_dir(dir.string()), FormatError);
  fs::remove_all(dir);
}

TEST(Pgm, WriteReadRoundTrip) {
  const fs::path dir = temp_dir("pgmw");
  Tensor<float> f(Shape{2, 2}, std::vector<float>{0.f, 1.f, 128.f / 255.f, 1.5f});
  write_pgm((dir / "x.pgm").string(), f);
  const Clip c = import_pgm_dir(dir.string());
  EXPECT_FLOAT_EQ(c.at({0, 0, 1, 0}), 128.f / 255.f);
  EXPECT_EQ(c.at({0, 0, 1, 1}), 1.f);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace rdrf::testing
