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

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rdrf/tensor.hpp"

namespace rdrf {

template <class T>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  Index dim(std::size_t i) const { return value().dim(i); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
/// reverse insertion order is a valid reverse topological order.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }
  Var<T> variable(Tensor<T> v) { return push(std::move(v), true, nullptr); }

  /// Records an op result. `backward` is dropped when no parent needs a gradient.
  Var<T> record(Tensor<T> v, std::initializer_list<Var<T>> parents, BackwardFn backward) {
    bool needs = false;
    for (const Var<T>& p : parents) needs = needs || requires_grad(p);
    return push(std::move(v), needs, needs ? std::move(backward) : nullptr);
  }
  Var<T> record(Tensor<T> v, const std::vector<Var<T>>& parents, BackwardFn backward) {
    bool needs = false;
    for (const Var<T>& p : parents) needs = needs || requires_grad(p);
    return push(std::move(v), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(idx(v)).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(idx(v)).requires_grad; }

  /// Gradient of the last backward() target w.r.t. a leaf v; zeros if v was
  /// unreachable. Interior gradients are released during the sweep.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(idx(v));
    if (n.grad_set) return n.grad;
    return Tensor<T>(n.value.shape());
  }

  /// Accumulates `g` into the gradient slot of `v` (no-op for constants).
  void accumulate(Var<T> v, Tensor<T> g) {
    Node& n = nodes_.at(idx(v));
    if (!n.requires_grad) return;
    RDRF_CHECK_SHAPE(g.shape() == n.value.shape(), "gradient shape " + shape_str(g.shape()) +
                                                       " does not match value " +
                                                       shape_str(n.value.shape()));
    if (!n.grad_set) {
      n.grad = std::move(g);
      n.grad_set = true;
      return;
    }
    T* dst = n.grad.data();
    const T* src = g.data();
    for (Index i = 0; i < g.numel(); ++i) dst[i] += src[i];
  }

  /// Mutable gradient buffer for ops that scatter directly; allocated zeroed on demand.
  Tensor<T>* grad_buffer(Var<T> v) {
    Node& n = nodes_.at(idx(v));
    if (!n.requires_grad) return nullptr;
    if (!n.grad_set) {
      n.grad = Tensor<T>(n.value.shape());
      n.grad_set = true;
    }
    return &n.grad;
  }

  /// Reverse sweep from a scalar loss. Returns the number of nodes whose
  /// backward function ran.
  std::size_t backward(Var<T> loss) {
    RDRF_CHECK_SHAPE(value(loss).numel() == 1,
                     "backward() needs a scalar loss, got " + shape_str(value(loss).shape()));
    if (!std::isfinite(value(loss).item())) throw NumericError("backward() on non-finite loss");
    for (Node& n : nodes_) {
      n.grad = Tensor<T>();
      n.grad_set = false;
    }
    Node& root = nodes_.at(idx(loss));
    if (!root.requires_grad) return 0;
    root.grad = Tensor<T>(root.value.shape(), T(1));
    root.grad_set = true;
    std::size_t visited = 0;
    for (std::size_t k = nodes_.size(); k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.grad_set || !n.backward) continue;
      n.backward(*this, n.grad);
      n.grad = Tensor<T>();
      n.grad_set = false;
      ++visited;
    }
    return visited;
  }

  std::size_t size() const { return nodes_.size(); }

  /// When enabled (default), every recorded value is checked for NaN/Inf.
  void set_finite_check(bool on) { finite_check_ = on; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool grad_set = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::size_t idx(Var<T> v) const {
    RDRF_CHECK_SHAPE(v.tape == this && v.id >= 0, "Var does not belong to this tape");
    return static_cast<std::size_t>(v.id);
  }

  Var<T> push(Tensor<T> v, bool needs_grad, BackwardFn fn) {
    if (finite_check_ && !v.all_finite())
      throw NumericError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
    nodes_.push_back(Node{std::move(v), Tensor<T>(), false, needs_grad, std::move(fn)});
    return Var<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  std::deque<Node> nodes_;  // deque: value() references survive later pushes
  bool finite_check_ = true;
};

/// Named parameter tensors in lexicographic order.
template <class T>
using Params = std::map<std::string, Tensor<T>>;

/// Lazily lifts named parameters onto a tape as gradient-carrying leaves.
template <class T>
class ParamBinding {
 public:
  ParamBinding(Tape<T>& tape, const Params<T>& params, bool requires_grad = true)
      : tape_(&tape), params_(&params), requires_grad_(requires_grad) {}

  Var<T> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto p = params_->find(name);
    if (p == params_->end()) throw ShapeError("unknown parameter '" + name + "'");
    Var<T> v = requires_grad_ ? tape_->variable(p->second) : tape_->constant(p->second);
    bound_.emplace(name, v);
    return v;
  }

  bool has(const std::string& name) const { return params_->count(name) != 0; }
  Tape<T>& tape() { return *tape_; }
  const std::map<std::string, Var<T>>& bound() const { return bound_; }

  /// Gradients for every stored parameter (zeros for ones never touched).
  Params<T> grads() const {
    Params<T> out;
    for (const auto& [name, t] : *params_) {
      auto it = bound_.find(name);
      out.emplace(name, it == bound_.end() ? Tensor<T>(t.shape()) : tape_->grad(it->second));
    }
    return out;
  }

 private:
  Tape<T>* tape_;
  const Params<T>* params_;
  bool requires_grad_;
  std::map<std::string, Var<T>> bound_;
};

template <class To, class From>
Params<To> cast_params(const Params<From>& p) {
  Params<To> out;
  for (const auto& [k, v] : p) out.emplace(k, v.template cast<To>());
  return out;
}

}  // namespace rdrf
