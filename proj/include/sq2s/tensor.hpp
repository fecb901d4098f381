// sq2s/tensor.hpp
//
// Copyright 2026 The sq2s Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode autodiff core: a dense row-major tensor handle plus a tape
// that records one backward closure per op and replays them in exact
// reverse recording order. Templated on the scalar type: float for
// training, double for finite-difference gradient checks.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sq2s/common.hpp"

namespace sq2s {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  bool tape_output = false;  // produced by a recorded op (not a leaf)
};

}  // namespace detail

template <typename T>
class TensorT {
 public:
  using Node = detail::Node<T>;

  TensorT() = default;

  // Creation from user data validates shape positivity and finiteness.
  static TensorT from_data(Shape shape, std::vector<T> data,
                           bool requires_grad = false) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                  " does not match data length " +
                                  std::to_string(data.size()));
    }
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw std::invalid_argument("tensor: non-finite value at creation");
      }
    }
    return make_raw(std::move(shape), std::move(data), requires_grad);
  }

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    validate_shape(shape);
    std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)), T(0));
    return make_raw(std::move(shape), std::move(data), requires_grad);
  }

  static TensorT full(Shape shape, T v, bool requires_grad = false) {
    validate_shape(shape);
    if (!std::isfinite(static_cast<double>(v))) {
      throw std::invalid_argument("tensor: non-finite fill value");
    }
    std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)), v);
    return make_raw(std::move(shape), std::move(data), requires_grad);
  }

  static TensorT scalar(T v) { return full({1}, v); }

  // Internal fast path for op outputs; skips finite validation (debug mode
  // re-checks after each op).
  static TensorT make_raw(Shape shape, std::vector<T> data,
                          bool requires_grad) {
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    if (requires_grad) t.node_->grad.assign(t.node_->value.size(), T(0));
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on && node_->grad.size() != node_->value.size()) {
      node_->grad.assign(node_->value.size(), T(0));
    }
  }

  std::vector<T>& grad() {
    if (!node_->requires_grad) {
      throw std::runtime_error("tensor: grad requested but requires_grad is off");
    }
    return node_->grad;
  }
  const std::vector<T>& grad() const {
    return const_cast<TensorT*>(this)->grad();
  }

  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1) {
      throw std::invalid_argument("tensor: item() on non-scalar " +
                                  shape_str(node_->shape));
    }
    return node_->value[0];
  }

  // Value copy with no tape lineage.
  TensorT detach_copy() const {
    return make_raw(node_->shape, node_->value, false);
  }

  bool is_leaf() const { return !node_->tape_output; }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
    for (std::int64_t d : shape) {
      if (d <= 0) {
        throw std::invalid_argument("tensor: non-positive dim in " +
                                    shape_str(shape));
      }
    }
  }

  std::shared_ptr<Node> node_;
};

// Records ops in forward order; backward() replays the closures in exact
// reverse recording order. Single-threaded by contract.
template <typename T>
class TapeT {
 public:
  void record(const TensorT<T>& output, std::function<void()> backward) {
    output.node()->tape_output = true;
    entries_.push_back(Entry{output.node(), std::move(backward)});
  }

  // Seeds d(loss)/d(loss)=1 and propagates. Grads of op outputs are reset at
  // the start of each pass; leaf grads accumulate additively across passes.
  void backward(const TensorT<T>& loss) {
    if (loss.numel() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(loss.shape()));
    }
    if (entries_.empty()) {
      throw std::runtime_error("backward: tape is empty");
    }
    if (!loss.requires_grad()) {
      throw std::invalid_argument(
          "backward: loss does not depend on any requires_grad tensor");
    }
    for (Entry& e : entries_) {
      if (e.output->requires_grad) {
        std::fill(e.output->grad.begin(), e.output->grad.end(), T(0));
      }
    }
    loss.node()->grad[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      it->backward();
    }
  }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<detail::Node<T>> output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

template <typename T>
TensorT<T> random_uniform(Shape shape, Rng& rng, double lo, double hi,
                          bool requires_grad = false) {
  std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return TensorT<T>::make_raw(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
TensorT<T> random_normal(Shape shape, Rng& rng, bool requires_grad = false) {
  std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.normal());
  return TensorT<T>::make_raw(std::move(shape), std::move(data), requires_grad);
}

}  // namespace sq2s
