// tests/translator_test.cpp
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
#include <filesystem>
#include <fstream>
#include <set>

#include "sq2s/objectives.hpp"
#include "sq2s/serialize.hpp"
#include "sq2s/translator.hpp"

using namespace sq2s;

namespace {

TaggedSequence random_sequence(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  TaggedSequence x;
  x.t = cfg.input_t;
  x.h = cfg.input_h;
  x.w = cfg.input_w;
  x.data.resize(static_cast<std::size_t>(x.t * x.h * x.w));
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return x;
}

TaggedSequence constant_sequence(const ModelConfig& cfg, float value) {
  TaggedSequence x;
  x.t = cfg.input_t;
  x.h = cfg.input_h;
  x.w = cfg.input_w;
  x.data.assign(static_cast<std::size_t>(x.t * x.h * x.w), value);
  return x;
}

}  // namespace

TEST_CASE("residual_frames examples") {
  ModelConfig cfg = ModelConfig::desk();
  TaggedSequence c = constant_sequence(cfg, 0.4f);
  auto res = residual_frames(c);
  CHECK(res.size() == static_cast<std::size_t>(cfg.input_t - 1));
  for (const auto& r : res) {
    for (float v : r.data()) CHECK(v == 0.0f);
  }

  TaggedSequence two;
  two.t = 2;
  two.h = 4;
  two.w = 4;
  two.data.assign(32, 0.0f);
  for (std::size_t i = 16; i < 32; ++i) two.data[i] = 1.0f;
  auto r2 = residual_frames(two);
  REQUIRE(r2.size() == 1);
  for (float v : r2[0].data()) CHECK(v == doctest::Approx(1.0f));

  TaggedSequence half = two;
  std::fill(half.data.begin(), half.data.begin() + 16, 0.7f);
  std::fill(half.data.begin() + 16, half.data.end(), 0.2f);
  auto r3 = residual_frames(half);
  for (float v : r3[0].data()) CHECK(v == doctest::Approx(0.5f));

  TaggedSequence one;
  one.t = 1;
  one.h = 2;
  one.w = 2;
  one.data.assign(4, 0.0f);
  CHECK_THROWS_AS(residual_frames(one), std::invalid_argument);
}

TEST_CASE("apply_masks: ones mask equals no-attention bit for bit") {
  ModelConfig cfg = ModelConfig::desk();
  TaggedSequence x = random_sequence(cfg, 3);
  std::vector<Tensor> ones;
  for (std::int64_t t = 1; t < x.t; ++t) {
    ones.push_back(Tensor::full({1, x.h, x.w}, 1.0f));
  }
  Tensor with = apply_masks(nullptr, x, ones);
  Tensor without = apply_masks(nullptr, x, {});
  CHECK(with.data() == without.data());  // exact
}

TEST_CASE("apply_masks: zero masks blank frames 2..T, first frame untouched") {
  ModelConfig cfg = ModelConfig::desk();
  TaggedSequence x = random_sequence(cfg, 4);
  std::vector<Tensor> zeros;
  for (std::int64_t t = 1; t < x.t; ++t) {
    zeros.push_back(Tensor::zeros({1, x.h, x.w}));
  }
  Tensor seq = apply_masks(nullptr, x, zeros);
  // layout [1,T,H,W]
  for (std::int64_t t = 0; t < x.t; ++t) {
    for (std::int64_t j = 0; j < x.h * x.w; ++j) {
      const float v = seq.data()[static_cast<std::size_t>(t * x.h * x.w + j)];
      if (t == 0) {
        CHECK(v == x.data[static_cast<std::size_t>(j)]);
      } else {
        CHECK(v == 0.0f);
      }
    }
  }
}

TEST_CASE("untrained attention masks stay in (0,1) and bound the frames") {
  ModelConfig cfg = ModelConfig::desk();
  Models m(cfg, 11);
  TaggedSequence x = random_sequence(cfg, 5);
  auto masks = attention_masks(nullptr, m.a, x);
  CHECK(masks.size() == static_cast<std::size_t>(x.t - 1));
  for (const auto& mk : masks) {
    for (float v : mk.data()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
  }
  Tensor seq = apply_masks(nullptr, x, masks);
  for (std::int64_t t = 1; t < x.t; ++t) {
    for (std::int64_t j = 0; j < x.h * x.w; ++j) {
      const float orig = x.data[static_cast<std::size_t>(t * x.h * x.w + j)];
      const float gated = seq.data()[static_cast<std::size_t>(t * x.h * x.w + j)];
      CHECK(gated >= 0.0f);
      CHECK(gated <= orig);
    }
  }
}

TEST_CASE("encode: slice partition, determinism, temporal collapse") {
  ModelConfig cfg = ModelConfig::desk();
  CHECK(cfg.mu_channels + cfg.logvar_channels + cfg.style_channels == 128);
  Models m(cfg, 2);
  TaggedSequence x = random_sequence(cfg, 6);
  Tensor seq = apply_masks(nullptr, x, {});
  auto e1 = m.f.encode(nullptr, seq);
  auto e2 = m.f.encode(nullptr, seq);
  CHECK(e1.mu.shape() == Shape{14, 4, 4});
  CHECK(e1.logvar.shape() == Shape{14, 4, 4});
  CHECK(e1.style.shape() == Shape{100, 4, 4});
  CHECK(e1.mu.data() == e2.mu.data());
  CHECK(e1.style.data() == e2.style.data());

  // wrong temporal size is rejected
  ModelConfig bad = cfg;
  bad.input_t = 6;  // 6 not divisible by 2^3
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("reparameterize examples and Monte-Carlo mean") {
  auto mu = Tensor::from_data({3}, {0.5f, -1.0f, 2.0f});
  auto logvar = Tensor::zeros({3});
  auto eps0 = Tensor::zeros({3});
  Tensor u0 = reparameterize(nullptr, mu, logvar, eps0);
  CHECK(u0.data() == mu.data());

  auto eps1 = Tensor::full({3}, 1.0f);
  Tensor u1 = reparameterize(nullptr, mu, logvar, eps1);
  for (int i = 0; i < 3; ++i) {
    CHECK(u1.data()[static_cast<std::size_t>(i)] ==
          doctest::Approx(mu.data()[static_cast<std::size_t>(i)] + 1.0f));
  }

  Rng rng(77);
  const int draws = 10000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) {
    auto eps = random_normal<float>({3}, rng);
    Tensor u = reparameterize(nullptr, mu, logvar, eps);
    sum += u.data()[0];
  }
  // sigma = 1, so the sample mean lands within 3*sigma/sqrt(draws) = 0.03
  CHECK(std::abs(sum / draws - 0.5) < 0.03);
}

TEST_CASE("decode: shape, sigmoid range, gradients reach u and style") {
  ModelConfig cfg = ModelConfig::desk();
  Models m(cfg, 8);
  Rng rng(12);
  auto u = random_uniform<float>({14, 4, 4}, rng, -1, 1, true);
  auto s = random_uniform<float>({100, 4, 4}, rng, -1, 1, true);
  Tape tape;
  Tensor spec = m.f.decode(&tape, u, s);
  CHECK(spec.shape() == Shape{32, 32});
  for (float v : spec.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  Tensor loss = mean_all(&tape, spec);
  tape.backward(loss);
  double un = 0, sn = 0;
  for (float g : u.grad()) un += std::abs(g);
  for (float g : s.grad()) sn += std::abs(g);
  CHECK(un > 0.0);
  CHECK(sn > 0.0);
}

TEST_CASE("translate is deterministic at inference and shapes check out") {
  ModelConfig cfg = ModelConfig::desk();
  Models m(cfg, 21);
  TaggedSequence x = random_sequence(cfg, 9);
  Tensor y1 = translate(m, x);
  Tensor y2 = translate(m, x);
  CHECK(y1.shape() == Shape{32, 32});
  CHECK(y1.data() == y2.data());

  // mismatched input is rejected
  TaggedSequence wrong = x;
  wrong.t = 4;
  wrong.data.resize(static_cast<std::size_t>(4 * x.h * x.w));
  CHECK_THROWS_AS(translate(m, wrong), std::invalid_argument);
}

TEST_CASE("full translator backward yields finite gradients everywhere") {
  ModelConfig cfg = ModelConfig::desk();
  Models m(cfg, 33);
  TaggedSequence x = random_sequence(cfg, 10);
  Rng rng(55);
  auto eps = random_normal<float>({14, 4, 4}, rng);
  Tape tape;
  TranslationResult r = translate_full(&tape, m, x, &eps, true);
  Tensor target = random_uniform<float>({32, 32}, rng, 0, 1);
  Tensor loss = loss_rec(&tape, r.spec, target);
  tape.backward(loss);
  double total_norm = 0.0;
  for (const auto& [name, p] : m.named_params()) {
    if (name[0] == 'D') continue;  // discriminator not in this graph
    for (float g : p.grad()) {
      CHECK(std::isfinite(g));
      total_norm += std::abs(g);
    }
  }
  CHECK(total_norm > 0.0);
}

TEST_CASE("discriminator output and a double-precision gradient check of its graph") {
  ModelConfig cfg = ModelConfig::desk();
  Models m(cfg, 41);
  Rng rng(6);
  auto spec = random_uniform<float>({32, 32}, rng, 0, 1);
  Tensor p1 = m.d.forward(nullptr, spec);
  Tensor p2 = m.d.forward(nullptr, spec);
  CHECK(p1.numel() == 1);
  CHECK(p1.item() > 0.0f);
  CHECK(p1.item() < 1.0f);
  CHECK(p1.item() == p2.item());
  CHECK_THROWS_AS(m.d.forward(nullptr, Tensor::zeros({16, 16})), std::invalid_argument);

  // same conv-conv-conv-dense-dense-sigmoid graph in double precision
  using D = double;
  auto k1 = random_uniform<D>({4, 1, 3, 3}, rng, -0.3, 0.3, true);
  auto b1 = random_uniform<D>({4}, rng, -0.1, 0.1, true);
  auto k2 = random_uniform<D>({8, 4, 3, 3}, rng, -0.3, 0.3, true);
  auto b2 = random_uniform<D>({8}, rng, -0.1, 0.1, true);
  auto k3 = random_uniform<D>({8, 8, 3, 3}, rng, -0.3, 0.3, true);
  auto b3 = random_uniform<D>({8}, rng, -0.1, 0.1, true);
  auto w1 = random_uniform<D>({8, 128}, rng, -0.2, 0.2, true);
  auto c1 = random_uniform<D>({8}, rng, -0.1, 0.1, true);
  auto w2 = random_uniform<D>({1, 8}, rng, -0.5, 0.5, true);
  auto c2 = random_uniform<D>({1}, rng, -0.1, 0.1, true);
  auto input = random_uniform<D>({1, 32, 32}, rng, 0, 1, true);
  std::vector<TensorT<D>> params = {k1, b1, k2, b2, k3, b3, w1, c1, w2, c2, input};

  auto forward = [&](TapeT<D>* t) {
    TensorT<D> h = relu(t, channel_bias(t, conv2d(t, input, k1, 2, 1), b1));
    h = relu(t, channel_bias(t, conv2d(t, h, k2, 2, 1), b2));
    h = relu(t, channel_bias(t, conv2d(t, h, k3, 2, 1), b3));
    h = reshape(t, h, {h.numel()});
    h = relu(t, dense(t, h, w1, c1));
    h = dense(t, h, w2, c2);
    return sigmoid(t, h);
  };

  TapeT<D> tape;
  TensorT<D> out = forward(&tape);
  for (auto& p : params) p.zero_grad();
  tape.backward(out);

  const double eps_fd = 1e-6;
  double max_diff = 0, scale = 0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.data().size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + eps_fd;
      const double fp = forward(nullptr).item();
      p.data()[i] = saved - eps_fd;
      const double fm = forward(nullptr).item();
      p.data()[i] = saved;
      const double numeric = (fp - fm) / (2 * eps_fd);
      const double analytic = p.grad()[i];
      max_diff = std::max(max_diff, std::abs(numeric - analytic));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic)});
    }
  }
  CHECK(max_diff / std::max(scale, 1e-12) < 1e-4);
}

TEST_CASE("no parameter is shared between F, A, and D") {
  ModelConfig cfg = ModelConfig::desk();
  Models m(cfg, 7);
  std::set<const void*> seen;
  for (const auto& [name, t] : m.named_params()) {
    CHECK(seen.insert(static_cast<const void*>(t.data().data())).second);
  }
}

TEST_CASE("param_count: hand example, additivity, save/load stability") {
  // a single 3x3 conv, 1 -> 4 channels with bias
  Tensor w = Tensor::zeros({4, 1, 3, 3});
  Tensor b = Tensor::zeros({4});
  CHECK(w.numel() + b.numel() == 40);

  ModelConfig cfg = ModelConfig::desk();
  Models m(cfg, 3);
  auto counts = param_count(m);
  CHECK(counts["total"] == counts["F"] + counts["A"] + counts["D"]);
  CHECK(counts["F"] > 0);
  CHECK(counts["A"] > 0);
  CHECK(counts["D"] > 0);

  const auto path = std::filesystem::temp_directory_path() / "sq2s_test_ckpt.bin";
  save_models(path.string(), m, MelConfig::desk(), {{"ablation", "none"}});
  LoadedModels loaded = load_models(path.string());
  auto counts2 = param_count(loaded.models);
  CHECK(counts2 == counts);
  CHECK(loaded.extra.at("ablation") == "none");

  // parameters round-trip bit-exactly
  auto a_named = m.named_params();
  auto b_named = loaded.models.named_params();
  REQUIRE(a_named.size() == b_named.size());
  for (std::size_t i = 0; i < a_named.size(); ++i) {
    CHECK(a_named[i].first == b_named[i].first);
    CHECK(a_named[i].second.data() == b_named[i].second.data());
  }
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoint magic is a usage error") {
  const auto path = std::filesystem::temp_directory_path() / "sq2s_test_bad_ckpt.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPEgarbage";
  }
  CHECK_THROWS_AS(load_models(path.string()), UsageError);
  std::filesystem::remove(path);
}

TEST_CASE("paper-scale model constructs, reports parameters, and runs forward") {
  ModelConfig cfg = ModelConfig::paper_scale();
  cfg.validate();
  Models m(cfg, 1);
  auto counts = param_count(m);
  CHECK(counts["total"] > 0);
  TaggedSequence x = random_sequence(cfg, 2);
  CHECK(x.t == 26);
  CHECK(x.h == 128);
  Tensor y = translate(m, x);
  CHECK(y.shape() == Shape{64, 64});
  for (float v : y.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("tensor binary file round trip") {
  Rng rng(14);
  Tensor t = random_uniform<float>({3, 5, 7}, rng, -2, 2);
  const auto path = std::filesystem::temp_directory_path() / "sq2s_test_tensor.sq2t";
  write_tensor_file(path.string(), t);
  Tensor r = read_tensor_file(path.string());
  CHECK(r.shape() == t.shape());
  CHECK(r.data() == t.data());
  std::filesystem::remove(path);
}
