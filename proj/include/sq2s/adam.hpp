// sq2s/adam.hpp
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

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sq2s/tensor.hpp"

namespace sq2s {

template <typename T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.5);  // GAN-style first moment decay
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// Standard Adam with bias correction over a fixed parameter list. Reads
// gradients off the parameter tensors; updates values in place.
template <typename T>
class AdamState {
 public:
  AdamState(std::vector<TensorT<T>> params, AdamConfig<T> cfg)
      : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= T(0)) throw std::invalid_argument("adam: lr must be > 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      if (!p.requires_grad()) {
        throw std::invalid_argument("adam: parameter without requires_grad");
      }
      m_.emplace_back(p.data().size(), T(0));
      v_.emplace_back(p.data().size(), T(0));
    }
  }

  void step() {
    ++step_count_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(step_count_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(step_count_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& value = params_[pi].data();
      const auto& grad = params_[pi].grad();
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const T g = grad[i];
        m[i] = cfg_.beta1 * m[i] + (T(1) - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (T(1) - cfg_.beta2) * g * g;
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::int64_t steps() const { return step_count_; }
  const std::vector<TensorT<T>>& params() const { return params_; }
  const AdamConfig<T>& config() const { return cfg_; }

 private:
  std::vector<TensorT<T>> params_;
  AdamConfig<T> cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t step_count_ = 0;
};

// One Adam update over the given parameters; spec-level entry point.
template <typename T>
void adam_step(AdamState<T>& state) {
  state.step();
}

}  // namespace sq2s
