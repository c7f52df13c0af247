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

// Symbolic receptive-field analysis.
//
// A FootprintGraph describes a network as a DAG of spatial operators acting on
// single-plane "feature maps" (channels are collapsed; dense channel mixing
// makes every output channel depend on every input channel). Evaluating the
// graph on a finite grid propagates exact per-pixel dependency sets, with the
// same zero padding, shifts and rotations as the numeric operators.

#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rdrf/tensor.hpp"

namespace rdrf {

struct Offset {
  int dt = 0;
  int dy = 0;
  int dx = 0;
  auto operator<=>(const Offset&) const = default;
  Offset operator+(const Offset& o) const { return {dt + o.dt, dy + o.dy, dx + o.dx}; }
};

/// Dependency footprint of one output pixel: (frame offset, dy, dx) triples.
class OffsetSet {
 public:
  OffsetSet() = default;
  OffsetSet(std::initializer_list<Offset> items) : items_(items) {}
  explicit OffsetSet(std::set<Offset> items) : items_(std::move(items)) {}

  void insert(Offset o) { items_.insert(o); }
  bool contains(Offset o) const { return items_.count(o) != 0; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::set<Offset>& items() const { return items_; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  /// Offsets restricted to one frame offset.
  OffsetSet frame(int dt) const {
    OffsetSet out;
    for (const Offset& o : items_)
      if (o.dt == dt) out.insert(o);
    return out;
  }

  /// Minkowski sum: footprint of applying `outer` on top of `inner`.
  static OffsetSet compose(const OffsetSet& inner, const OffsetSet& outer) {
    OffsetSet out;
    for (const Offset& a : inner)
      for (const Offset& b : outer) out.insert(a + b);
    return out;
  }

  friend OffsetSet operator|(const OffsetSet& a, const OffsetSet& b) {
    OffsetSet out = a;
    out.items_.insert(b.items_.begin(), b.items_.end());
    return out;
  }
  friend bool operator==(const OffsetSet&, const OffsetSet&) = default;

  std::string str() const {
    std::string s = "{";
    bool first = true;
    for (const Offset& o : items_) {
      s += (first ? "" : ", ") + std::string("(") + std::to_string(o.dt) + "," +
           std::to_string(o.dy) + "," + std::to_string(o.dx) + ")";
      first = false;
    }
    return s + "}";
  }

 private:
  std::set<Offset> items_;
};

class UnsupportedOpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A spatial tap (dy, dx) of a 3x3-style kernel, in units of the dilation.
struct Tap {
  int dy = 0;
  int dx = 0;
};

/// Spatio-temporal tap of the three-frame convolution; dt in {-1, 0, +1}.
struct Tap3 {
  int dt = 0;
  int dy = 0;
  int dx = 0;
};

inline std::vector<Tap> full_taps(int radius = 1) {
  std::vector<Tap> t;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) t.push_back({dy, dx});
  return t;
}

inline std::vector<Tap> upper_rows_taps() {
  std::vector<Tap> t;
  for (int dy = -1; dy <= 0; ++dy)
    for (int dx = -1; dx <= 1; ++dx) t.push_back({dy, dx});
  return t;
}

inline std::vector<Tap> center_hole_taps() {
  std::vector<Tap> t;
  for (const Tap& a : full_taps())
    if (a.dy != 0 || a.dx != 0) t.push_back(a);
  return t;
}

inline std::vector<Tap3> center_hole_taps3d() {
  std::vector<Tap3> t;
  for (int dt = -1; dt <= 1; ++dt)
    for (const Tap& a : full_taps())
      if (dt != 0 || a.dy != 0 || a.dx != 0) t.push_back({dt, a.dy, a.dx});
  return t;
}

class FootprintGraph {
 public:
  enum class Kind { kInput, kZero, kConv, kConv3, kShift, kRotate, kPointwise, kGlobal, kUnsupported };

  using NodeId = int;

  struct Node {
    Kind kind = Kind::kUnsupported;
    std::vector<NodeId> inputs;
    int frame = 0;            // kInput
    std::vector<Tap> taps;    // kConv
    std::vector<Tap3> taps3;  // kConv3 (inputs are frames dt=-1,0,+1 in order)
    int dilation = 1;         // kConv
    int amount = 0;           // kShift rows / kRotate quarter turns
    std::string label;        // kUnsupported

    Node(Kind k = Kind::kUnsupported, std::vector<NodeId> in = {}, int f = 0)
        : kind(k), inputs(std::move(in)), frame(f) {}
  };

  /// One frame of the input clip.
  NodeId input(int frame) { return add({Kind::kInput, {}, frame}); }
  /// A map that depends on nothing (e.g. a zero initial hidden state).
  NodeId zero() { return add({Kind::kZero}); }
  NodeId conv(NodeId in, std::vector<Tap> taps, int dilation = 1) {
    Node n{Kind::kConv, {in}};
    n.taps = std::move(taps);
    n.dilation = dilation;
    return add(std::move(n));
  }
  NodeId conv3(std::array<NodeId, 3> frames, std::vector<Tap3> taps) {
    Node n{Kind::kConv3, {frames[0], frames[1], frames[2]}};
    n.taps3 = std::move(taps);
    return add(std::move(n));
  }
  NodeId shift_down(NodeId in, int rows) {
    Node n{Kind::kShift, {in}};
    n.amount = rows;
    return add(std::move(n));
  }
  NodeId rotate(NodeId in, int k) {
    Node n{Kind::kRotate, {in}};
    n.amount = ((k % 4) + 4) % 4;
    return add(std::move(n));
  }
  /// Any per-pixel combination: activation, 1x1 convolution, add, multiply, concat.
  NodeId pointwise(std::vector<NodeId> ins) { return add({Kind::kPointwise, std::move(ins)}); }
  /// Full-plane reduction broadcast back (instance statistics).
  NodeId global(NodeId in) { return add({Kind::kGlobal, {in}}); }
  /// Placeholder for an operator the analyzer cannot reason about.
  NodeId unsupported(NodeId in, std::string label) {
    Node n{Kind::kUnsupported, {in}};
    n.label = std::move(label);
    return add(std::move(n));
  }

  const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }

  /// Upper bound on the spatial reach of `out` (Chebyshev radius).
  int reach(NodeId out) const {
    std::vector<int> r(nodes_.size(), 0);
    for (std::size_t i = 0; i <= static_cast<std::size_t>(out); ++i) {
      const Node& n = nodes_[i];
      int m = 0;
      for (NodeId in : n.inputs) m = std::max(m, r[static_cast<std::size_t>(in)]);
      switch (n.kind) {
        case Kind::kConv: {
          int t = 0;
          for (const Tap& a : n.taps) t = std::max({t, std::abs(a.dy), std::abs(a.dx)});
          m += t * n.dilation;
          break;
        }
        case Kind::kConv3: {
          int t = 0;
          for (const Tap3& a : n.taps3) t = std::max({t, std::abs(a.dy), std::abs(a.dx)});
          m += t;
          break;
        }
        case Kind::kShift: m += std::abs(n.amount); break;
        default: break;
      }
      r[i] = m;
    }
    return r[static_cast<std::size_t>(out)];
  }

 private:
  NodeId add(Node n) {
    for (NodeId in : n.inputs)
      if (in < 0 || in >= static_cast<NodeId>(nodes_.size()))
        throw std::invalid_argument("footprint graph: dangling input");
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

struct GridSpec {
  int frames = 1;
  int height = 16;
  int width = 16;
};

namespace detail {

class DepPlane {
 public:
  DepPlane() = default;
  DepPlane(int h, int w, std::size_t words) : h_(h), w_(w), words_(words),
      bits_(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * words, 0) {}
  int h() const { return h_; }
  int w() const { return w_; }
  std::uint64_t* at(int y, int x) { return bits_.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)) * words_; }
  const std::uint64_t* at(int y, int x) const { return bits_.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(w_) + static_cast<std::size_t>(x)) * words_; }
  void or_into(int y, int x, const std::uint64_t* src) {
    std::uint64_t* d = at(y, x);
    for (std::size_t i = 0; i < words_; ++i) d[i] |= src[i];
  }
  void release() { bits_.clear(); bits_.shrink_to_fit(); }

 private:
  int h_ = 0, w_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
};

}  // namespace detail

/// Exact dependency sets of output pixels of node `out` on a finite grid, as
/// offsets relative to (ref_frame, y, x). One propagation serves all pixels.
inline std::vector<OffsetSet> footprints_on_grid(const FootprintGraph& g, FootprintGraph::NodeId out,
                                                 const GridSpec& grid, int ref_frame,
                                                 const std::vector<std::pair<int, int>>& pixels) {
  using Kind = FootprintGraph::Kind;
  const std::size_t positions = static_cast<std::size_t>(grid.frames) * static_cast<std::size_t>(grid.height) *
                                static_cast<std::size_t>(grid.width);
  const std::size_t words = (positions + 63) / 64;
  const std::size_t n = static_cast<std::size_t>(out) + 1;

  std::vector<int> uses(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (auto in : g.node(static_cast<int>(i)).inputs) ++uses[static_cast<std::size_t>(in)];
  uses[n - 1] += 1;

  std::vector<detail::DepPlane> planes(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nd = g.node(static_cast<int>(i));
    auto in_plane = [&](std::size_t k) -> const detail::DepPlane& {
      return planes[static_cast<std::size_t>(nd.inputs[k])];
    };
    detail::DepPlane p;
    switch (nd.kind) {
      case Kind::kInput: {
        if (nd.frame < 0 || nd.frame >= grid.frames)
          throw std::invalid_argument("footprint: input frame out of grid range");
        p = detail::DepPlane(grid.height, grid.width, words);
        for (int yy = 0; yy < grid.height; ++yy)
          for (int xx = 0; xx < grid.width; ++xx) {
            const std::size_t bit = (static_cast<std::size_t>(nd.frame) * static_cast<std::size_t>(grid.height) + static_cast<std::size_t>(yy)) *
                                        static_cast<std::size_t>(grid.width) + static_cast<std::size_t>(xx);
            p.at(yy, xx)[bit / 64] |= std::uint64_t{1} << (bit % 64);
          }
        break;
      }
      case Kind::kZero:
        p = detail::DepPlane(grid.height, grid.width, words);
        break;
      case Kind::kConv: {
        const auto& src = in_plane(0);
        p = detail::DepPlane(src.h(), src.w(), words);
        for (int yy = 0; yy < src.h(); ++yy)
          for (int xx = 0; xx < src.w(); ++xx)
            for (const Tap& t : nd.taps) {
              const int sy = yy + t.dy * nd.dilation, sx = xx + t.dx * nd.dilation;
              if (sy < 0 || sy >= src.h() || sx < 0 || sx >= src.w()) continue;
              p.or_into(yy, xx, src.at(sy, sx));
            }
        break;
      }
      case Kind::kConv3: {
        const auto& s0 = in_plane(0);
        p = detail::DepPlane(s0.h(), s0.w(), words);
        for (int yy = 0; yy < s0.h(); ++yy)
          for (int xx = 0; xx < s0.w(); ++xx)
            for (const Tap3& t : nd.taps3) {
              const auto& src = in_plane(static_cast<std::size_t>(t.dt + 1));
              const int sy = yy + t.dy, sx = xx + t.dx;
              if (sy < 0 || sy >= src.h() || sx < 0 || sx >= src.w()) continue;
              p.or_into(yy, xx, src.at(sy, sx));
            }
        break;
      }
      case Kind::kShift: {
        const auto& src = in_plane(0);
        p = detail::DepPlane(src.h(), src.w(), words);
        for (int yy = 0; yy < src.h(); ++yy) {
          const int sy = yy - nd.amount;
          if (sy < 0 || sy >= src.h()) continue;
          for (int xx = 0; xx < src.w(); ++xx) p.or_into(yy, xx, src.at(sy, xx));
        }
        break;
      }
      case Kind::kRotate: {
        const auto& src = in_plane(0);
        const int k = nd.amount, H = src.h(), W = src.w();
        const int Ho = (k % 2) ? W : H, Wo = (k % 2) ? H : W;
        p = detail::DepPlane(Ho, Wo, words);
        for (int i2 = 0; i2 < Ho; ++i2)
          for (int j = 0; j < Wo; ++j) {
            int sy = i2, sx = j;
            switch (k) {
              case 1: sy = j; sx = W - 1 - i2; break;
              case 2: sy = H - 1 - i2; sx = W - 1 - j; break;
              case 3: sy = H - 1 - j; sx = i2; break;
              default: break;
            }
            p.or_into(i2, j, src.at(sy, sx));
          }
        break;
      }
      case Kind::kPointwise: {
        const auto& s0 = in_plane(0);
        p = detail::DepPlane(s0.h(), s0.w(), words);
        for (std::size_t k = 0; k < nd.inputs.size(); ++k) {
          const auto& src = in_plane(k);
          if (src.h() != s0.h() || src.w() != s0.w())
            throw std::invalid_argument("footprint: pointwise inputs in different frames");
          for (int yy = 0; yy < src.h(); ++yy)
            for (int xx = 0; xx < src.w(); ++xx) p.or_into(yy, xx, src.at(yy, xx));
        }
        break;
      }
      case Kind::kGlobal: {
        const auto& src = in_plane(0);
        std::vector<std::uint64_t> all(words, 0);
        for (int yy = 0; yy < src.h(); ++yy)
          for (int xx = 0; xx < src.w(); ++xx) {
            const std::uint64_t* s = src.at(yy, xx);
            for (std::size_t w2 = 0; w2 < words; ++w2) all[w2] |= s[w2];
          }
        p = detail::DepPlane(src.h(), src.w(), words);
        for (int yy = 0; yy < src.h(); ++yy)
          for (int xx = 0; xx < src.w(); ++xx) p.or_into(yy, xx, all.data());
        break;
      }
      case Kind::kUnsupported:
        throw UnsupportedOpError("footprint: unsupported op '" + nd.label + "'");
    }
    planes[i] = std::move(p);
    for (auto in : nd.inputs)
      if (--uses[static_cast<std::size_t>(in)] == 0) planes[static_cast<std::size_t>(in)].release();
  }

  const detail::DepPlane& res = planes[n - 1];
  const std::size_t plane = static_cast<std::size_t>(grid.height) * static_cast<std::size_t>(grid.width);
  std::vector<OffsetSet> out_sets;
  for (const auto& [y, x] : pixels) {
    if (y < 0 || y >= res.h() || x < 0 || x >= res.w())
      throw std::out_of_range("footprint: output pixel outside grid");
    OffsetSet fs;
    const std::uint64_t* bits = res.at(y, x);
    for (std::size_t b = 0; b < positions; ++b) {
      if (!(bits[b / 64] >> (b % 64) & 1U)) continue;
      const int rem = static_cast<int>(b % plane);
      fs.insert({static_cast<int>(b / plane) - ref_frame, rem / grid.width - y, rem % grid.width - x});
    }
    out_sets.push_back(std::move(fs));
  }
  return out_sets;
}

inline OffsetSet footprint_on_grid(const FootprintGraph& g, FootprintGraph::NodeId out, const GridSpec& grid,
                                   int ref_frame, int y, int x) {
  return footprints_on_grid(g, out, grid, ref_frame, {{y, x}}).front();
}

/// Footprint of an interior output pixel: evaluated on a grid large enough
/// that no zero-padded border is reachable.
inline OffsetSet footprint_of(const FootprintGraph& g, FootprintGraph::NodeId out, int frames = 1,
                              int ref_frame = 0) {
  const int r = g.reach(out);
  const int size = 2 * r + 3;
  return footprint_on_grid(g, out, GridSpec{frames, size, size}, ref_frame, size / 2, size / 2);
}

}  // namespace rdrf
