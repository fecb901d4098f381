// sq2s/objectives.hpp
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

// The training objectives: reconstruction MSE, pairwise KL between the
// pooled utterance factors of two inputs, and the adversarial pair. The
// discriminator BCE is negated relative to the printed form so that
// minimizing it trains D, and the translator term defaults to the
// nonsaturating -log D(fake); a minimax variant (+log(1 - D(fake))) is kept
// behind a flag. Neither translator variant touches real spectrograms.

#pragma once

#include <stdexcept>

#include "sq2s/ops.hpp"
#include "sq2s/tensor.hpp"

namespace sq2s {

struct LossWeights {
  float beta = 0.5f;
  float lambda = 0.5f;
  bool beta_active = true;  // same-utterance pair?
};

enum class AdvVariant { kNonsaturating, kMinimax };

inline constexpr double kProbClamp = 1e-7;

namespace detail {
template <typename T>
void check_probability(const char* op, const TensorT<T>& p) {
  for (T v : p.data()) {
    if (!(v >= T(0) && v <= T(1))) {
      throw std::invalid_argument(std::string(op) + ": input " +
                                  std::to_string(static_cast<double>(v)) +
                                  " is not a probability");
    }
  }
}
}  // namespace detail

// Mean (not sum) of squared elementwise differences.
template <typename T>
TensorT<T> loss_rec(TapeT<T>* tape, const TensorT<T>& pred,
                    const TensorT<T>& target) {
  detail::check_same_shape("loss_rec", pred, target);
  TensorT<T> diff = sub(tape, pred, target);
  return mean_all(tape, mul(tape, diff, diff));
}

// KL divergence between diagonal Gaussians given per-channel scalars:
// -1/2 sum_m [1 + log(s1^2/s2^2) - s1^2/s2^2 - (mu1-mu2)^2/s2^2].
template <typename T>
TensorT<T> loss_kl(TapeT<T>* tape, const TensorT<T>& mu1,
                   const TensorT<T>& logvar1, const TensorT<T>& mu2,
                   const TensorT<T>& logvar2) {
  detail::check_same_shape("loss_kl", mu1, logvar1);
  detail::check_same_shape("loss_kl", mu1, mu2);
  detail::check_same_shape("loss_kl", mu1, logvar2);
  TensorT<T> dlv = sub(tape, logvar1, logvar2);
  TensorT<T> ratio = elem_exp(tape, dlv);  // s1^2 / s2^2
  TensorT<T> dmu = sub(tape, mu1, mu2);
  TensorT<T> maha =
      mul(tape, mul(tape, dmu, dmu),
          elem_exp(tape, scalar_mul(tape, logvar2, T(-1))));
  TensorT<T> inner =
      sub(tape, sub(tape, scalar_add(tape, dlv, T(1)), ratio), maha);
  return scalar_mul(tape, sum_all(tape, inner), T(-0.5));
}

// -log D(real) - log(1 - D(fake)), averaged over the batch.
template <typename T>
TensorT<T> loss_disc(TapeT<T>* tape, const TensorT<T>& d_real,
                     const TensorT<T>& d_fake) {
  detail::check_probability("loss_disc", d_real);
  detail::check_probability("loss_disc", d_fake);
  const T lo = static_cast<T>(kProbClamp);
  const T hi = T(1) - static_cast<T>(kProbClamp);
  TensorT<T> cr = clamp(tape, d_real, lo, hi);
  TensorT<T> cf = clamp(tape, d_fake, lo, hi);
  TensorT<T> real_term = mean_all(tape, elem_log(tape, cr));
  TensorT<T> fake_term = mean_all(
      tape, elem_log(tape, scalar_add(tape, scalar_mul(tape, cf, T(-1)), T(1))));
  return scalar_mul(tape, add(tape, real_term, fake_term), T(-1));
}

// Translator's confusion term; decreasing in D(fake) for both variants.
template <typename T>
TensorT<T> loss_adv(TapeT<T>* tape, const TensorT<T>& d_fake,
                    AdvVariant variant = AdvVariant::kNonsaturating) {
  detail::check_probability("loss_adv", d_fake);
  const T lo = static_cast<T>(kProbClamp);
  const T hi = T(1) - static_cast<T>(kProbClamp);
  TensorT<T> cf = clamp(tape, d_fake, lo, hi);
  if (variant == AdvVariant::kNonsaturating) {
    return scalar_mul(tape, mean_all(tape, elem_log(tape, cf)), T(-1));
  }
  return mean_all(
      tape, elem_log(tape, scalar_add(tape, scalar_mul(tape, cf, T(-1)), T(1))));
}

// rec + beta_eff * kl + lambda * adv, beta_eff = beta when the pair shares
// an utterance and 0 otherwise.
template <typename T>
TensorT<T> total_translator_loss(TapeT<T>* tape, const TensorT<T>& rec,
                                 const TensorT<T>& kl, const TensorT<T>& adv,
                                 const LossWeights& w) {
  if (w.beta < 0.0f || w.lambda < 0.0f) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  const T beta_eff = w.beta_active ? static_cast<T>(w.beta) : T(0);
  return add(tape, rec,
             add(tape, scalar_mul(tape, kl, beta_eff),
                 scalar_mul(tape, adv, static_cast<T>(w.lambda))));
}

}  // namespace sq2s
