// tests/objectives_test.cpp
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "sq2s/objectives.hpp"

using namespace sq2s;

TEST_CASE("loss_rec closed forms") {
  auto a = Tensor::full({2, 2}, 0.3f);
  CHECK(loss_rec<float>(nullptr, a, a).item() == doctest::Approx(0.0f));

  auto ones = Tensor::full({4}, 1.0f);
  auto zeros = Tensor::zeros({4});
  CHECK(loss_rec<float>(nullptr, ones, zeros).item() == doctest::Approx(1.0f));

  auto p = Tensor::from_data({2}, {0.5f, 0.5f});
  auto t = Tensor::from_data({2}, {0.0f, 1.0f});
  CHECK(loss_rec<float>(nullptr, p, t).item() == doctest::Approx(0.25f));

  CHECK_THROWS_AS(loss_rec<float>(nullptr, ones, a), std::invalid_argument);
}

TEST_CASE("loss_kl closed forms at 1e-6") {
  using D = double;
  auto v = [](std::initializer_list<double> xs) {
    return TensorT<D>::from_data({static_cast<std::int64_t>(xs.size())}, xs);
  };
  // identical distributions
  auto kl0 = loss_kl<D>(nullptr, v({0.3, -1.0}), v({0.2, 0.4}), v({0.3, -1.0}),
                        v({0.2, 0.4}));
  CHECK(std::abs(kl0.item()) < 1e-12);

  // mu1=1, mu2=0, sigma1=sigma2=1, M=1 -> 0.5
  auto kl1 = loss_kl<D>(nullptr, v({1.0}), v({0.0}), v({0.0}), v({0.0}));
  CHECK(kl1.item() == doctest::Approx(0.5).epsilon(1e-9));

  // sigma1=2, sigma2=1, mu equal, M=1 -> 1.5 + ln(0.5) = 0.8068528...
  // logvar1 = ln(4)
  auto kl2 = loss_kl<D>(nullptr, v({0.7}), v({std::log(4.0)}), v({0.7}), v({0.0}));
  CHECK(std::abs(kl2.item() - (1.5 + std::log(0.5))) < 1e-6);
  CHECK(kl2.item() == doctest::Approx(0.80685).epsilon(1e-4));

  // float path agrees to 1e-5
  auto vf = [](std::initializer_list<float> xs) {
    return Tensor::from_data({static_cast<std::int64_t>(xs.size())}, xs);
  };
  auto kf = loss_kl<float>(nullptr, vf({0.7f}), vf({std::log(4.0f)}), vf({0.7f}),
                           vf({0.0f}));
  CHECK(std::abs(kf.item() - 0.8068528f) < 1e-5f);

  CHECK_THROWS_AS(loss_kl<float>(nullptr, vf({1.f, 2.f}), vf({0.f}), vf({0.f}),
                                 vf({0.f})),
                  std::invalid_argument);
}

TEST_CASE("loss_kl is non-negative, zero only at equality, and asymmetric") {
  Rng rng(17);
  using D = double;
  for (int trial = 0; trial < 50; ++trial) {
    auto mu1 = random_uniform<D>({14}, rng, -1, 1);
    auto lv1 = random_uniform<D>({14}, rng, -1, 1);
    auto mu2 = random_uniform<D>({14}, rng, -1, 1);
    auto lv2 = random_uniform<D>({14}, rng, -1, 1);
    const double forward = loss_kl<D>(nullptr, mu1, lv1, mu2, lv2).item();
    const double backward = loss_kl<D>(nullptr, mu2, lv2, mu1, lv1).item();
    CHECK(forward >= 0.0);
    CHECK(backward >= 0.0);
    CHECK(std::abs(forward - backward) > 1e-12);  // generically asymmetric
  }
}

TEST_CASE("loss_kl gradient matches finite differences at 1e-6") {
  Rng rng(23);
  using D = double;
  std::vector<TensorT<D>> inputs = {
      random_uniform<D>({14}, rng, -1, 1, true),
      random_uniform<D>({14}, rng, -1, 1, true),
      random_uniform<D>({14}, rng, -1, 1, true),
      random_uniform<D>({14}, rng, -1, 1, true)};
  test::OpFn<D> fn = [](TapeT<D>* t, const std::vector<TensorT<D>>& in) {
    return loss_kl(t, in[0], in[1], in[2], in[3]);
  };
  CHECK(test::gradcheck_max_rel_error<D>(fn, inputs, rng, 1e-6) < 1e-6);
}

TEST_CASE("loss_disc closed forms and monotonicity") {
  auto p = [](float v) { return Tensor::from_data({1}, {v}); };
  // perfect discriminator
  CHECK(loss_disc<float>(nullptr, p(1.0f - 1e-7f), p(1e-7f)).item() ==
        doctest::Approx(0.0f).epsilon(1e-5));
  // coin-flip discriminator
  CHECK(loss_disc<float>(nullptr, p(0.5f), p(0.5f)).item() ==
        doctest::Approx(2.0f * std::log(2.0f)).epsilon(1e-6));
  // strictly decreasing in d_real with d_fake fixed
  float prev = loss_disc<float>(nullptr, p(0.1f), p(0.5f)).item();
  for (float dr : {0.3f, 0.5f, 0.7f, 0.9f}) {
    const float cur = loss_disc<float>(nullptr, p(dr), p(0.5f)).item();
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK_THROWS_AS(loss_disc<float>(nullptr, p(0.5f), Tensor::from_data({1}, {1.5f})),
                  std::invalid_argument);
}

TEST_CASE("loss_adv closed forms, limits, monotonicity") {
  auto p = [](float v) { return Tensor::from_data({1}, {v}); };
  CHECK(loss_adv<float>(nullptr, p(0.5f)).item() ==
        doctest::Approx(std::log(2.0f)).epsilon(1e-6));
  // d_fake -> 1 drives the nonsaturating loss to 0+
  const float near_one = loss_adv<float>(nullptr, p(1.0f - 1e-7f)).item();
  CHECK(near_one > 0.0f);
  CHECK(near_one < 1e-5f);
  // both variants decrease as d_fake increases
  for (auto variant : {AdvVariant::kNonsaturating, AdvVariant::kMinimax}) {
    float prev = loss_adv<float>(nullptr, p(0.1f), variant).item();
    for (float df : {0.3f, 0.5f, 0.7f, 0.9f}) {
      const float cur = loss_adv<float>(nullptr, p(df), variant).item();
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("total_translator_loss weighting") {
  auto s = [](float v) { return Tensor::from_data({1}, {v}); };
  LossWeights w;  // defaults beta = lambda = 0.5
  CHECK(w.beta == doctest::Approx(0.5f));
  CHECK(w.lambda == doctest::Approx(0.5f));
  w.beta_active = true;
  CHECK(total_translator_loss<float>(nullptr, s(1.0f), s(2.0f), s(3.0f), w).item() ==
        doctest::Approx(3.5f));
  // inactive pair: total is independent of the KL value
  w.beta_active = false;
  const float t1 =
      total_translator_loss<float>(nullptr, s(1.0f), s(2.0f), s(3.0f), w).item();
  const float t2 =
      total_translator_loss<float>(nullptr, s(1.0f), s(123.0f), s(3.0f), w).item();
  CHECK(t1 == t2);
  LossWeights bad;
  bad.beta = -0.1f;
  CHECK_THROWS_AS(total_translator_loss<float>(nullptr, s(1), s(1), s(1), bad),
                  std::invalid_argument);
}
