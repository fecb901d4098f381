// sq2s/ops.hpp
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

// Layer primitives over TensorT/TapeT. Every op takes the tape as its first
// argument; passing nullptr runs the forward computation without recording
// (inference mode). Convolution is cross-correlation, no kernel flip.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sq2s/tensor.hpp"

namespace sq2s {

enum class PointwiseFn { kRelu, kSigmoid, kAbs, kSoftplus };

namespace detail {

template <typename T>
inline void debug_check_op(const char* op, const TensorT<T>& t) {
  if (!debug_checks()) return;
  for (T v : t.data()) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw std::runtime_error(std::string(op) + ": non-finite output value");
    }
  }
}

template <typename T>
inline void check_same_shape(const char* op, const TensorT<T>& a,
                             const TensorT<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

template <typename T>
inline T stable_sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
inline T stable_softplus(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(TapeT<T>* tape, const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("add", a, b);
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  bool rg = tape && (a.requires_grad() || b.requires_grad());
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("add", y);
  if (rg) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape->record(y, [an, bn, yn] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < yn->grad.size(); ++i) bn->grad[i] += yn->grad[i];
    });
  }
  return y;
}

template <typename T>
TensorT<T> sub(TapeT<T>* tape, const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  bool rg = tape && (a.requires_grad() || b.requires_grad());
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("sub", y);
  if (rg) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape->record(y, [an, bn, yn] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < yn->grad.size(); ++i) bn->grad[i] -= yn->grad[i];
    });
  }
  return y;
}

template <typename T>
TensorT<T> mul(TapeT<T>* tape, const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  bool rg = tape && (a.requires_grad() || b.requires_grad());
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("mul", y);
  if (rg) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape->record(y, [an, bn, yn] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < yn->grad.size(); ++i)
          an->grad[i] += bn->value[i] * yn->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < yn->grad.size(); ++i)
          bn->grad[i] += an->value[i] * yn->grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> scalar_mul(TapeT<T>* tape, const TensorT<T>& a, T c) {
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("scalar_mul", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn, c] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += c * yn->grad[i];
    });
  }
  return y;
}

template <typename T>
TensorT<T> scalar_add(TapeT<T>* tape, const TensorT<T>& a, T c) {
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("scalar_add", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
    });
  }
  return y;
}

template <typename T>
TensorT<T> elem_exp(TapeT<T>* tape, const TensorT<T>& a) {
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("exp", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i)
        an->grad[i] += yn->value[i] * yn->grad[i];
    });
  }
  return y;
}

template <typename T>
TensorT<T> elem_log(TapeT<T>* tape, const TensorT<T>& a) {
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a.data()[i] <= T(0)) {
      throw std::invalid_argument("log: non-positive input");
    }
    out[i] = std::log(a.data()[i]);
  }
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("log", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i)
        an->grad[i] += yn->grad[i] / an->value[i];
    });
  }
  return y;
}

// Subgradient 0 outside [lo, hi].
template <typename T>
TensorT<T> clamp(TapeT<T>* tape, const TensorT<T>& a, T lo, T hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::min(hi, std::max(lo, a.data()[i]));
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("clamp", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn, lo, hi] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->value[i] >= lo && an->value[i] <= hi) an->grad[i] += yn->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
TensorT<T> pointwise(TapeT<T>* tape, const TensorT<T>& a, PointwiseFn fn) {
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    T x = a.data()[i];
    switch (fn) {
      case PointwiseFn::kRelu: out[i] = x > T(0) ? x : T(0); break;
      case PointwiseFn::kSigmoid: out[i] = detail::stable_sigmoid(x); break;
      case PointwiseFn::kAbs: out[i] = std::abs(x); break;
      case PointwiseFn::kSoftplus: out[i] = detail::stable_softplus(x); break;
    }
  }
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw(a.shape(), std::move(out), rg);
  detail::debug_check_op("pointwise", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn, fn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        T x = an->value[i];
        T d = T(0);
        switch (fn) {
          case PointwiseFn::kRelu: d = x > T(0) ? T(1) : T(0); break;
          case PointwiseFn::kSigmoid: {
            T s = yn->value[i];
            d = s * (T(1) - s);
            break;
          }
          case PointwiseFn::kAbs:
            d = x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
            break;
          case PointwiseFn::kSoftplus: d = detail::stable_sigmoid(x); break;
        }
        an->grad[i] += d * yn->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
TensorT<T> relu(TapeT<T>* tape, const TensorT<T>& a) {
  return pointwise(tape, a, PointwiseFn::kRelu);
}
template <typename T>
TensorT<T> sigmoid(TapeT<T>* tape, const TensorT<T>& a) {
  return pointwise(tape, a, PointwiseFn::kSigmoid);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum_all(TapeT<T>* tape, const TensorT<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw({1}, {s}, rg);
  detail::debug_check_op("sum", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn] {
      T g = yn->grad[0];
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
  }
  return y;
}

template <typename T>
TensorT<T> mean_all(TapeT<T>* tape, const TensorT<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  T n = static_cast<T>(a.numel());
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw({1}, {s / n}, rg);
  detail::debug_check_op("mean", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn, n] {
      T g = yn->grad[0] / n;
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
  }
  return y;
}

// Mean over all trailing dims, one scalar per leading channel: [C,...] -> [C].
template <typename T>
TensorT<T> channel_mean(TapeT<T>* tape, const TensorT<T>& a) {
  if (a.rank() < 2) {
    throw std::invalid_argument("channel_mean: rank must be >= 2, got " +
                                shape_str(a.shape()));
  }
  std::int64_t c = a.dim(0);
  std::int64_t rest = a.numel() / c;
  std::vector<T> out(static_cast<std::size_t>(c), T(0));
  for (std::int64_t i = 0; i < c; ++i) {
    T s = T(0);
    for (std::int64_t j = 0; j < rest; ++j) s += a.data()[i * rest + j];
    out[static_cast<std::size_t>(i)] = s / static_cast<T>(rest);
  }
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw({c}, std::move(out), rg);
  detail::debug_check_op("channel_mean", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn, c, rest] {
      for (std::int64_t i = 0; i < c; ++i) {
        T g = yn->grad[static_cast<std::size_t>(i)] / static_cast<T>(rest);
        for (std::int64_t j = 0; j < rest; ++j) an->grad[i * rest + j] += g;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> reshape(TapeT<T>* tape, const TensorT<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " +
                                shape_str(shape) + " changes element count");
  }
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw(std::move(shape), a.data(), rg);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
    });
  }
  return y;
}

template <typename T>
TensorT<T> concat_channels(TapeT<T>* tape, const TensorT<T>& a,
                           const TensorT<T>& b) {
  if (a.rank() != b.rank() || a.rank() < 1) {
    throw std::invalid_argument("concat_channels: rank mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  for (int i = 1; i < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw std::invalid_argument("concat_channels: trailing dims differ " +
                                  shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
    }
  }
  Shape shape = a.shape();
  shape[0] = a.dim(0) + b.dim(0);
  std::vector<T> out(a.data().size() + b.data().size());
  std::copy(a.data().begin(), a.data().end(), out.begin());
  std::copy(b.data().begin(), b.data().end(), out.begin() + static_cast<std::ptrdiff_t>(a.data().size()));
  bool rg = tape && (a.requires_grad() || b.requires_grad());
  auto y = TensorT<T>::make_raw(std::move(shape), std::move(out), rg);
  if (rg) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    std::size_t na = a.data().size();
    tape->record(y, [an, bn, yn, na] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < na; ++i) an->grad[i] += yn->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = na; i < yn->grad.size(); ++i)
          bn->grad[i - na] += yn->grad[i];
    });
  }
  return y;
}

// Channels [c0, c1) of a [C,...] tensor.
template <typename T>
TensorT<T> slice_channels(TapeT<T>* tape, const TensorT<T>& a, std::int64_t c0,
                          std::int64_t c1) {
  std::int64_t c = a.dim(0);
  if (c0 < 0 || c1 <= c0 || c1 > c) {
    throw std::invalid_argument("slice_channels: range [" + std::to_string(c0) +
                                "," + std::to_string(c1) + ") invalid for " +
                                shape_str(a.shape()));
  }
  std::int64_t rest = a.numel() / c;
  Shape shape = a.shape();
  shape[0] = c1 - c0;
  std::vector<T> out(static_cast<std::size_t>((c1 - c0) * rest));
  std::copy(a.data().begin() + c0 * rest, a.data().begin() + c1 * rest,
            out.begin());
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw(std::move(shape), std::move(out), rg);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn, c0, rest] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i)
        an->grad[static_cast<std::size_t>(c0 * rest) + i] += yn->grad[i];
    });
  }
  return y;
}

// Stacks T frames of shape [C,H,W] into a sequence [C,T,H,W].
template <typename T>
TensorT<T> stack_temporal(TapeT<T>* tape, const std::vector<TensorT<T>>& frames) {
  if (frames.empty()) throw std::invalid_argument("stack_temporal: no frames");
  const Shape& fs = frames[0].shape();
  if (fs.size() != 3) {
    throw std::invalid_argument("stack_temporal: frames must be [C,H,W], got " +
                                shape_str(fs));
  }
  for (const auto& f : frames) detail::check_same_shape("stack_temporal", frames[0], f);
  std::int64_t c = fs[0], h = fs[1], w = fs[2];
  std::int64_t t_len = static_cast<std::int64_t>(frames.size());
  std::vector<T> out(static_cast<std::size_t>(c * t_len * h * w));
  for (std::int64_t t = 0; t < t_len; ++t) {
    const auto& fd = frames[static_cast<std::size_t>(t)].data();
    for (std::int64_t ci = 0; ci < c; ++ci) {
      std::copy(fd.begin() + ci * h * w, fd.begin() + (ci + 1) * h * w,
                out.begin() + ((ci * t_len + t) * h * w));
    }
  }
  bool rg = false;
  for (const auto& f : frames) rg = rg || f.requires_grad();
  rg = rg && tape;
  auto y = TensorT<T>::make_raw({c, t_len, h, w}, std::move(out), rg);
  if (rg) {
    std::vector<std::shared_ptr<detail::Node<T>>> fns;
    fns.reserve(frames.size());
    for (const auto& f : frames) fns.push_back(f.node());
    auto yn = y.node();
    tape->record(y, [fns, yn, c, t_len, h, w] {
      for (std::int64_t t = 0; t < t_len; ++t) {
        auto& fn = fns[static_cast<std::size_t>(t)];
        if (!fn->requires_grad) continue;
        for (std::int64_t ci = 0; ci < c; ++ci) {
          for (std::int64_t j = 0; j < h * w; ++j) {
            fn->grad[ci * h * w + j] += yn->grad[(ci * t_len + t) * h * w + j];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

// Max over windows (2, sh, sw), stride equal to the window. Halves T exactly;
// requires even T. Spatial remainders are dropped. Ties route the gradient to
// the first element in window scan order.
template <typename T>
TensorT<T> maxpool3d_temporal(TapeT<T>* tape, const TensorT<T>& a,
                              std::int64_t sh, std::int64_t sw) {
  if (a.rank() != 4) {
    throw std::invalid_argument("maxpool3d_temporal: input must be [C,T,H,W], got " +
                                shape_str(a.shape()));
  }
  if (sh < 1 || sw < 1) throw std::invalid_argument("maxpool3d_temporal: pool dims must be >= 1");
  std::int64_t c = a.dim(0), t_len = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (t_len % 2 != 0) {
    throw std::invalid_argument("maxpool3d_temporal: temporal size " +
                                std::to_string(t_len) + " is odd");
  }
  std::int64_t to = t_len / 2, ho = h / sh, wo = w / sw;
  if (ho < 1 || wo < 1) {
    throw std::invalid_argument("maxpool3d_temporal: pool " + std::to_string(sh) +
                                "x" + std::to_string(sw) + " larger than input " +
                                shape_str(a.shape()));
  }
  std::vector<T> out(static_cast<std::size_t>(c * to * ho * wo));
  std::vector<std::int64_t> argmax(out.size());
  const auto& x = a.data();
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t ti = 0; ti < to; ++ti) {
      for (std::int64_t hi = 0; hi < ho; ++hi) {
        for (std::int64_t wi = 0; wi < wo; ++wi) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (std::int64_t dt = 0; dt < 2; ++dt) {
            for (std::int64_t dh = 0; dh < sh; ++dh) {
              for (std::int64_t dw = 0; dw < sw; ++dw) {
                std::int64_t idx = ((ci * t_len + ti * 2 + dt) * h + hi * sh + dh) * w +
                                   wi * sw + dw;
                if (x[static_cast<std::size_t>(idx)] > best) {
                  best = x[static_cast<std::size_t>(idx)];
                  best_idx = idx;
                }
              }
            }
          }
          std::size_t oidx = static_cast<std::size_t>(((ci * to + ti) * ho + hi) * wo + wi);
          out[oidx] = best;
          argmax[oidx] = best_idx;
        }
      }
    }
  }
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw({c, to, ho, wo}, std::move(out), rg);
  detail::debug_check_op("maxpool3d_temporal", y);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn, argmax = std::move(argmax)] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i)
        an->grad[static_cast<std::size_t>(argmax[i])] += yn->grad[i];
    });
  }
  return y;
}

// Global max over the temporal axis: [C,T,H,W] -> [C,1,H,W]. First-index
// tie-break, as in the pooling op.
template <typename T>
TensorT<T> temporal_max(TapeT<T>* tape, const TensorT<T>& a) {
  if (a.rank() != 4) {
    throw std::invalid_argument("temporal_max: input must be [C,T,H,W], got " +
                                shape_str(a.shape()));
  }
  std::int64_t c = a.dim(0), t_len = a.dim(1), h = a.dim(2), w = a.dim(3);
  std::vector<T> out(static_cast<std::size_t>(c * h * w));
  std::vector<std::int64_t> argmax(out.size());
  const auto& x = a.data();
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t j = 0; j < h * w; ++j) {
      T best = -std::numeric_limits<T>::infinity();
      std::int64_t best_idx = -1;
      for (std::int64_t t = 0; t < t_len; ++t) {
        std::int64_t idx = (ci * t_len + t) * h * w + j;
        if (x[static_cast<std::size_t>(idx)] > best) {
          best = x[static_cast<std::size_t>(idx)];
          best_idx = idx;
        }
      }
      out[static_cast<std::size_t>(ci * h * w + j)] = best;
      argmax[static_cast<std::size_t>(ci * h * w + j)] = best_idx;
    }
  }
  bool rg = tape && a.requires_grad();
  auto y = TensorT<T>::make_raw({c, 1, h, w}, std::move(out), rg);
  if (rg) {
    auto an = a.node();
    auto yn = y.node();
    tape->record(y, [an, yn, argmax = std::move(argmax)] {
      for (std::size_t i = 0; i < yn->grad.size(); ++i)
        an->grad[static_cast<std::size_t>(argmax[i])] += yn->grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

// 3-D cross-correlation. input [C_in,T,H,W], kernel [C_out,C_in,kT,kH,kW],
// per-axis stride and zero padding (t,h,w). Inner loops stream along the
// output width per kernel tap; accumulation is double, cast once at the end.
namespace detail {

// valid output range so that out*s + d - p stays inside [0, in)
inline std::int64_t conv_lo(std::int64_t d, std::int64_t p, std::int64_t s) {
  const std::int64_t num = p - d;
  return num <= 0 ? 0 : (num + s - 1) / s;
}
inline std::int64_t conv_hi(std::int64_t d, std::int64_t p, std::int64_t s,
                            std::int64_t in, std::int64_t out) {
  const std::int64_t num = in - 1 - d + p;
  if (num < 0) return 0;
  return std::min(out, num / s + 1);
}

}  // namespace detail

template <typename T>
TensorT<T> conv3d(TapeT<T>* tape, const TensorT<T>& input,
                  const TensorT<T>& kernel, std::array<std::int64_t, 3> stride,
                  std::array<std::int64_t, 3> pad) {
  if (input.rank() != 4 || kernel.rank() != 5 || input.dim(0) != kernel.dim(1)) {
    throw std::invalid_argument("conv3d: input " + shape_str(input.shape()) +
                                " incompatible with kernel " +
                                shape_str(kernel.shape()));
  }
  for (auto s : stride)
    if (s < 1) throw std::invalid_argument("conv3d: stride must be >= 1");
  for (auto p : pad)
    if (p < 0) throw std::invalid_argument("conv3d: negative padding");
  const std::int64_t cin = input.dim(0), tn = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t cout = kernel.dim(0), kt = kernel.dim(2), kh = kernel.dim(3), kw = kernel.dim(4);
  const std::int64_t st = stride[0], sh = stride[1], sw = stride[2];
  const std::int64_t pt = pad[0], ph = pad[1], pw = pad[2];
  if (kt > tn + 2 * pt || kh > h + 2 * ph || kw > w + 2 * pw) {
    throw std::invalid_argument("conv3d: kernel " + shape_str(kernel.shape()) +
                                " exceeds padded input " + shape_str(input.shape()));
  }
  const std::int64_t to = (tn + 2 * pt - kt) / st + 1;
  const std::int64_t ho = (h + 2 * ph - kh) / sh + 1;
  const std::int64_t wo = (w + 2 * pw - kw) / sw + 1;

  std::vector<T> out(static_cast<std::size_t>(cout * to * ho * wo));
  std::vector<double> stage(static_cast<std::size_t>(to * ho * wo));
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (std::int64_t co = 0; co < cout; ++co) {
    std::fill(stage.begin(), stage.end(), 0.0);
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      for (std::int64_t dt = 0; dt < kt; ++dt) {
        const std::int64_t tlo = detail::conv_lo(dt, pt, st);
        const std::int64_t thi = detail::conv_hi(dt, pt, st, tn, to);
        for (std::int64_t dh = 0; dh < kh; ++dh) {
          const std::int64_t hlo = detail::conv_lo(dh, ph, sh);
          const std::int64_t hhi = detail::conv_hi(dh, ph, sh, h, ho);
          for (std::int64_t dw = 0; dw < kw; ++dw) {
            const std::int64_t wlo = detail::conv_lo(dw, pw, sw);
            const std::int64_t whi = detail::conv_hi(dw, pw, sw, w, wo);
            if (wlo >= whi) continue;
            const double kd = static_cast<double>(
                k[(((co * cin + ci) * kt + dt) * kh + dh) * kw + dw]);
            for (std::int64_t toi = tlo; toi < thi; ++toi) {
              const std::int64_t t = toi * st + dt - pt;
              for (std::int64_t hoi = hlo; hoi < hhi; ++hoi) {
                const std::int64_t hi = hoi * sh + dh - ph;
                const T* xrow = x + ((ci * tn + t) * h + hi) * w + dw - pw;
                double* srow = stage.data() + (toi * ho + hoi) * wo;
                if (sw == 1) {
                  for (std::int64_t woi = wlo; woi < whi; ++woi)
                    srow[woi] += kd * static_cast<double>(xrow[woi]);
                } else {
                  for (std::int64_t woi = wlo; woi < whi; ++woi)
                    srow[woi] += kd * static_cast<double>(xrow[woi * sw]);
                }
              }
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < stage.size(); ++i) {
      out[static_cast<std::size_t>(co) * stage.size() + i] = static_cast<T>(stage[i]);
    }
  }
  bool rg = tape && (input.requires_grad() || kernel.requires_grad());
  auto y = TensorT<T>::make_raw({cout, to, ho, wo}, std::move(out), rg);
  detail::debug_check_op("conv3d", y);
  if (rg) {
    auto xn = input.node(), kn = kernel.node(), yn = y.node();
    tape->record(y, [xn, kn, yn, cin, tn, h, w, cout, kt, kh, kw, st, sh, sw,
                     pt, ph, pw, to, ho, wo] {
      const T* x = xn->value.data();
      const T* k = kn->value.data();
      const T* gy = yn->grad.data();
      T* gx = xn->requires_grad ? xn->grad.data() : nullptr;
      T* gk = kn->requires_grad ? kn->grad.data() : nullptr;
      for (std::int64_t co = 0; co < cout; ++co) {
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          for (std::int64_t dt = 0; dt < kt; ++dt) {
            const std::int64_t tlo = detail::conv_lo(dt, pt, st);
            const std::int64_t thi = detail::conv_hi(dt, pt, st, tn, to);
            for (std::int64_t dh = 0; dh < kh; ++dh) {
              const std::int64_t hlo = detail::conv_lo(dh, ph, sh);
              const std::int64_t hhi = detail::conv_hi(dh, ph, sh, h, ho);
              for (std::int64_t dw = 0; dw < kw; ++dw) {
                const std::int64_t wlo = detail::conv_lo(dw, pw, sw);
                const std::int64_t whi = detail::conv_hi(dw, pw, sw, w, wo);
                if (wlo >= whi) continue;
                const std::int64_t koff = (((co * cin + ci) * kt + dt) * kh + dh) * kw + dw;
                const T kv = k[koff];
                T gkacc = T(0);
                for (std::int64_t toi = tlo; toi < thi; ++toi) {
                  const std::int64_t t = toi * st + dt - pt;
                  for (std::int64_t hoi = hlo; hoi < hhi; ++hoi) {
                    const std::int64_t hi = hoi * sh + dh - ph;
                    const std::int64_t xoff = ((ci * tn + t) * h + hi) * w + dw - pw;
                    const T* gyrow = gy + ((co * to + toi) * ho + hoi) * wo;
                    const T* xrow = x + xoff;
                    T* gxrow = gx ? gx + xoff : nullptr;
                    if (gxrow && gk && sw == 1) {
                      for (std::int64_t woi = wlo; woi < whi; ++woi) {
                        const T g = gyrow[woi];
                        gxrow[woi] += kv * g;
                        gkacc += xrow[woi] * g;
                      }
                    } else {
                      if (gxrow) {
                        for (std::int64_t woi = wlo; woi < whi; ++woi)
                          gxrow[woi * sw] += kv * gyrow[woi];
                      }
                      if (gk) {
                        for (std::int64_t woi = wlo; woi < whi; ++woi)
                          gkacc += xrow[woi * sw] * gyrow[woi];
                      }
                    }
                  }
                }
                if (gk) gk[koff] += gkacc;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// 2-D cross-correlation. input [C_in,H,W], kernel [C_out,C_in,kH,kW].
template <typename T>
TensorT<T> conv2d(TapeT<T>* tape, const TensorT<T>& input,
                  const TensorT<T>& kernel, std::int64_t stride,
                  std::int64_t pad) {
  if (input.rank() != 3 || kernel.rank() != 4 || input.dim(0) != kernel.dim(1)) {
    throw std::invalid_argument("conv2d: input " + shape_str(input.shape()) +
                                " incompatible with kernel " +
                                shape_str(kernel.shape()));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: negative padding");
  const std::int64_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::int64_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                " exceeds padded input " + shape_str(input.shape()));
  }
  const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::int64_t wo = (w + 2 * pad - kw) / stride + 1;

  std::vector<T> out(static_cast<std::size_t>(cout * ho * wo));
  std::vector<double> stage(static_cast<std::size_t>(ho * wo));
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  const std::int64_t s = stride, p = pad;
  for (std::int64_t co = 0; co < cout; ++co) {
    std::fill(stage.begin(), stage.end(), 0.0);
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      for (std::int64_t dh = 0; dh < kh; ++dh) {
        const std::int64_t hlo = detail::conv_lo(dh, p, s);
        const std::int64_t hhi = detail::conv_hi(dh, p, s, h, ho);
        for (std::int64_t dw = 0; dw < kw; ++dw) {
          const std::int64_t wlo = detail::conv_lo(dw, p, s);
          const std::int64_t whi = detail::conv_hi(dw, p, s, w, wo);
          if (wlo >= whi) continue;
          const double kd = static_cast<double>(
              k[((co * cin + ci) * kh + dh) * kw + dw]);
          for (std::int64_t hoi = hlo; hoi < hhi; ++hoi) {
            const std::int64_t hi = hoi * s + dh - p;
            const T* xrow = x + (ci * h + hi) * w + dw - p;
            double* srow = stage.data() + hoi * wo;
            if (s == 1) {
              for (std::int64_t woi = wlo; woi < whi; ++woi)
                srow[woi] += kd * static_cast<double>(xrow[woi]);
            } else {
              for (std::int64_t woi = wlo; woi < whi; ++woi)
                srow[woi] += kd * static_cast<double>(xrow[woi * s]);
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < stage.size(); ++i) {
      out[static_cast<std::size_t>(co) * stage.size() + i] = static_cast<T>(stage[i]);
    }
  }
  bool rg = tape && (input.requires_grad() || kernel.requires_grad());
  auto y = TensorT<T>::make_raw({cout, ho, wo}, std::move(out), rg);
  detail::debug_check_op("conv2d", y);
  if (rg) {
    auto xn = input.node(), kn = kernel.node(), yn = y.node();
    tape->record(y, [xn, kn, yn, cin, h, w, cout, kh, kw, s, p, ho, wo] {
      const T* x = xn->value.data();
      const T* k = kn->value.data();
      const T* gy = yn->grad.data();
      T* gx = xn->requires_grad ? xn->grad.data() : nullptr;
      T* gk = kn->requires_grad ? kn->grad.data() : nullptr;
      for (std::int64_t co = 0; co < cout; ++co) {
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          for (std::int64_t dh = 0; dh < kh; ++dh) {
            const std::int64_t hlo = detail::conv_lo(dh, p, s);
            const std::int64_t hhi = detail::conv_hi(dh, p, s, h, ho);
            for (std::int64_t dw = 0; dw < kw; ++dw) {
              const std::int64_t wlo = detail::conv_lo(dw, p, s);
              const std::int64_t whi = detail::conv_hi(dw, p, s, w, wo);
              if (wlo >= whi) continue;
              const std::int64_t koff = ((co * cin + ci) * kh + dh) * kw + dw;
              const T kv = k[koff];
              T gkacc = T(0);
              for (std::int64_t hoi = hlo; hoi < hhi; ++hoi) {
                const std::int64_t hi = hoi * s + dh - p;
                const std::int64_t xoff = (ci * h + hi) * w + dw - p;
                const T* gyrow = gy + (co * ho + hoi) * wo;
                const T* xrow = x + xoff;
                T* gxrow = gx ? gx + xoff : nullptr;
                if (gxrow && gk && s == 1) {
                  for (std::int64_t woi = wlo; woi < whi; ++woi) {
                    const T g = gyrow[woi];
                    gxrow[woi] += kv * g;
                    gkacc += xrow[woi] * g;
                  }
                } else {
                  if (gxrow) {
                    for (std::int64_t woi = wlo; woi < whi; ++woi)
                      gxrow[woi * s] += kv * gyrow[woi];
                  }
                  if (gk) {
                    for (std::int64_t woi = wlo; woi < whi; ++woi)
                      gkacc += xrow[woi * s] * gyrow[woi];
                  }
                }
              }
              if (gk) gk[koff] += gkacc;
            }
          }
        }
      }
    });
  }
  return y;
}

// Transposed 2-D convolution, the exact adjoint of conv2d with the same
// stride/padding: <conv2d(a,k), b> == <a, conv2d_transpose(b,k)>.
// input [C_in,H,W], kernel [C_in,C_out,kH,kW],
// output [C_out, (H-1)*stride + kH - 2*pad, ...].
template <typename T>
TensorT<T> conv2d_transpose(TapeT<T>* tape, const TensorT<T>& input,
                            const TensorT<T>& kernel, std::int64_t stride,
                            std::int64_t pad) {
  if (input.rank() != 3 || kernel.rank() != 4 || input.dim(0) != kernel.dim(0)) {
    throw std::invalid_argument("conv2d_transpose: input " +
                                shape_str(input.shape()) +
                                " incompatible with kernel " +
                                shape_str(kernel.shape()));
  }
  if (stride < 1) throw std::invalid_argument("conv2d_transpose: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d_transpose: negative padding");
  const std::int64_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::int64_t cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::int64_t ho = (h - 1) * stride + kh - 2 * pad;
  const std::int64_t wo = (w - 1) * stride + kw - 2 * pad;
  if (ho < 1 || wo < 1) {
    throw std::invalid_argument("conv2d_transpose: output collapses for input " +
                                shape_str(input.shape()) + ", kernel " +
                                shape_str(kernel.shape()));
  }
  std::vector<double> acc(static_cast<std::size_t>(cout * ho * wo), 0.0);
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (std::int64_t ci = 0; ci < cin; ++ci) {
    for (std::int64_t hi = 0; hi < h; ++hi) {
      const std::int64_t oh0 = hi * stride - pad;
      const std::int64_t khlo = std::max<std::int64_t>(0, -oh0);
      const std::int64_t khhi = std::min(kh, ho - oh0);
      for (std::int64_t wi = 0; wi < w; ++wi) {
        const std::int64_t ow0 = wi * stride - pad;
        const std::int64_t kwlo = std::max<std::int64_t>(0, -ow0);
        const std::int64_t kwhi = std::min(kw, wo - ow0);
        const double v = static_cast<double>(x[(ci * h + hi) * w + wi]);
        if (v == 0.0) continue;
        for (std::int64_t co = 0; co < cout; ++co) {
          for (std::int64_t dh = khlo; dh < khhi; ++dh) {
            double* orow = acc.data() + (co * ho + oh0 + dh) * wo + ow0;
            const T* krow = k + ((ci * cout + co) * kh + dh) * kw;
            for (std::int64_t dw = kwlo; dw < kwhi; ++dw)
              orow[dw] += static_cast<double>(krow[dw]) * v;
          }
        }
      }
    }
  }
  std::vector<T> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
  bool rg = tape && (input.requires_grad() || kernel.requires_grad());
  auto y = TensorT<T>::make_raw({cout, ho, wo}, std::move(out), rg);
  detail::debug_check_op("conv2d_transpose", y);
  if (rg) {
    auto xn = input.node(), kn = kernel.node(), yn = y.node();
    const std::int64_t s = stride, p = pad;
    tape->record(y, [xn, kn, yn, cin, h, w, cout, kh, kw, s, p, ho, wo] {
      const T* x = xn->value.data();
      const T* k = kn->value.data();
      const T* gy = yn->grad.data();
      T* gx = xn->requires_grad ? xn->grad.data() : nullptr;
      T* gk = kn->requires_grad ? kn->grad.data() : nullptr;
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        for (std::int64_t hi = 0; hi < h; ++hi) {
          const std::int64_t oh0 = hi * s - p;
          const std::int64_t khlo = std::max<std::int64_t>(0, -oh0);
          const std::int64_t khhi = std::min(kh, ho - oh0);
          for (std::int64_t wi = 0; wi < w; ++wi) {
            const std::int64_t ow0 = wi * s - p;
            const std::int64_t kwlo = std::max<std::int64_t>(0, -ow0);
            const std::int64_t kwhi = std::min(kw, wo - ow0);
            const T v = x[(ci * h + hi) * w + wi];
            T gacc = T(0);
            for (std::int64_t co = 0; co < cout; ++co) {
              for (std::int64_t dh = khlo; dh < khhi; ++dh) {
                const T* gyrow = gy + (co * ho + oh0 + dh) * wo + ow0;
                const T* krow = k + ((ci * cout + co) * kh + dh) * kw;
                T* gkrow = gk ? gk + ((ci * cout + co) * kh + dh) * kw : nullptr;
                for (std::int64_t dw = kwlo; dw < kwhi; ++dw) {
                  if (gx) gacc += krow[dw] * gyrow[dw];
                  if (gkrow) gkrow[dw] += v * gyrow[dw];
                }
              }
            }
            if (gx) gx[(ci * h + hi) * w + wi] += gacc;
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Dense and bias
// ---------------------------------------------------------------------------

// y = W x + b with x [n], W [m,n], b [m].
template <typename T>
TensorT<T> dense(TapeT<T>* tape, const TensorT<T>& x, const TensorT<T>& wgt,
                 const TensorT<T>& bias) {
  if (x.rank() != 1 || wgt.rank() != 2 || bias.rank() != 1 ||
      wgt.dim(1) != x.dim(0) || wgt.dim(0) != bias.dim(0)) {
    throw std::invalid_argument("dense: x " + shape_str(x.shape()) + ", W " +
                                shape_str(wgt.shape()) + ", b " +
                                shape_str(bias.shape()) + " do not conform");
  }
  const std::int64_t m = wgt.dim(0), n = wgt.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m));
  for (std::int64_t j = 0; j < m; ++j) {
    double acc = static_cast<double>(bias.data()[static_cast<std::size_t>(j)]);
    const T* wrow = wgt.data().data() + j * n;
    for (std::int64_t i = 0; i < n; ++i)
      acc += static_cast<double>(wrow[i]) *
             static_cast<double>(x.data()[static_cast<std::size_t>(i)]);
    out[static_cast<std::size_t>(j)] = static_cast<T>(acc);
  }
  bool rg = tape && (x.requires_grad() || wgt.requires_grad() || bias.requires_grad());
  auto y = TensorT<T>::make_raw({m}, std::move(out), rg);
  detail::debug_check_op("dense", y);
  if (rg) {
    auto xn = x.node(), wn = wgt.node(), bn = bias.node(), yn = y.node();
    tape->record(y, [xn, wn, bn, yn, m, n] {
      const T* gy = yn->grad.data();
      for (std::int64_t j = 0; j < m; ++j) {
        const T g = gy[j];
        if (g == T(0)) continue;
        if (bn->requires_grad) bn->grad[static_cast<std::size_t>(j)] += g;
        const T* wrow = wn->value.data() + j * n;
        T* gwrow = wn->requires_grad ? wn->grad.data() + j * n : nullptr;
        for (std::int64_t i = 0; i < n; ++i) {
          if (xn->requires_grad) xn->grad[static_cast<std::size_t>(i)] += wrow[i] * g;
          if (gwrow) gwrow[i] += xn->value[static_cast<std::size_t>(i)] * g;
        }
      }
    });
  }
  return y;
}

// Adds b[c] to every element of channel c: x [C,...], b [C].
template <typename T>
TensorT<T> channel_bias(TapeT<T>* tape, const TensorT<T>& x,
                        const TensorT<T>& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.dim(0) != bias.dim(0)) {
    throw std::invalid_argument("channel_bias: x " + shape_str(x.shape()) +
                                " vs bias " + shape_str(bias.shape()));
  }
  const std::int64_t c = x.dim(0);
  const std::int64_t rest = x.numel() / c;
  std::vector<T> out(x.data().size());
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const T b = bias.data()[static_cast<std::size_t>(ci)];
    for (std::int64_t j = 0; j < rest; ++j)
      out[static_cast<std::size_t>(ci * rest + j)] =
          x.data()[static_cast<std::size_t>(ci * rest + j)] + b;
  }
  bool rg = tape && (x.requires_grad() || bias.requires_grad());
  auto y = TensorT<T>::make_raw(x.shape(), std::move(out), rg);
  detail::debug_check_op("channel_bias", y);
  if (rg) {
    auto xn = x.node(), bn = bias.node(), yn = y.node();
    tape->record(y, [xn, bn, yn, c, rest] {
      if (xn->requires_grad) {
        for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i];
      }
      if (bn->requires_grad) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
          T s = T(0);
          for (std::int64_t j = 0; j < rest; ++j)
            s += yn->grad[static_cast<std::size_t>(ci * rest + j)];
          bn->grad[static_cast<std::size_t>(ci)] += s;
        }
      }
    });
  }
  return y;
}

}  // namespace sq2s
