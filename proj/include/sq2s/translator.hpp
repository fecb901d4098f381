// sq2s/translator.hpp
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

// The three networks: translator F (3-D conv encoder with temporal pooling,
// tensor-slice latent split, 2-D transposed-conv decoder), residual
// attention network A, and discriminator D. Attention masks come from
// residual frames of adjacent inputs and gate the original frames; no
// attention labels are involved.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sq2s/dsp.hpp"
#include "sq2s/ops.hpp"
#include "sq2s/tensor.hpp"

namespace sq2s {

struct TaggedSequence {
  std::int64_t t = 0, h = 0, w = 0;
  std::vector<float> data;  // [T][H][W] row-major, values in [0,1]

  float at(std::int64_t ti, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>((ti * h + y) * w + x)];
  }
  float& at(std::int64_t ti, std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>((ti * h + y) * w + x)];
  }
};

struct ModelConfig {
  int input_t = 8, input_h = 32, input_w = 32;
  int spec_h = 32, spec_w = 32;

  // encoder: conv3d blocks, temporal-preserving kernels, optional pooling
  std::vector<int> enc_channels = {16, 32, 64, 128, 128};
  std::vector<int> enc_spatial_stride = {1, 1, 1, 1, 1};
  std::vector<int> enc_pool_after = {1, 1, 1, 0, 0};
  int enc_kernel = 3;

  // latent split of the bottleneck channels
  int mu_channels = 14, logvar_channels = 14, style_channels = 100;

  // decoder: transposed-conv blocks, then 1x1 conv + sigmoid
  std::vector<int> dec_channels = {64, 32, 16, 8};
  std::vector<int> dec_strides = {2, 2, 2, 1};
  std::vector<int> dec_kernels = {4, 4, 4, 3};

  // attention net: stride-2 conv stack, mirrored deconv stack, 1x1 + sigmoid
  std::vector<int> att_channels = {8, 16, 32, 64};

  // discriminator: stride-2 convs, two dense layers, sigmoid
  std::vector<int> disc_channels = {8, 16, 32};
  int disc_hidden = 64;

  int latent_channels() const { return mu_channels + logvar_channels + style_channels; }

  // spatial extent of the encoder bottleneck feature maps
  std::pair<std::int64_t, std::int64_t> bottleneck_hw() const;

  void validate() const;
  static ModelConfig desk();
  static ModelConfig paper_scale();
  std::string serialize() const;
  static ModelConfig parse(const std::string& text);
};

struct ConvLayer {
  Tensor w, b;
};

class AttentionNet {
 public:
  AttentionNet(const ModelConfig& cfg, Rng& rng);
  // residual frame [1,H,W] -> mask [1,H,W], values in (0,1)
  Tensor forward(Tape* tape, const Tensor& frame) const;
  void collect_params(std::vector<std::pair<std::string, Tensor>>* out) const;

 private:
  std::vector<ConvLayer> down_, up_;
  ConvLayer head_;
};

class Translator {
 public:
  Translator(const ModelConfig& cfg, Rng& rng);

  struct Encoded {
    Tensor mu, logvar, style;  // feature maps [C, h, w]
  };

  // attentive sequence [1,T,H,W] -> latent split
  Encoded encode(Tape* tape, const Tensor& seq) const;
  // (u, style) feature maps -> spectrogram-shaped tensor [spec_h, spec_w]
  Tensor decode(Tape* tape, const Tensor& u, const Tensor& style) const;
  void collect_params(std::vector<std::pair<std::string, Tensor>>* out) const;

 private:
  ModelConfig cfg_;
  std::vector<ConvLayer> enc_, dec_;
  ConvLayer head_;
};

class Discriminator {
 public:
  Discriminator(const ModelConfig& cfg, Rng& rng);
  // spectrogram [spec_h, spec_w] -> probability tensor [1], strictly in (0,1)
  Tensor forward(Tape* tape, const Tensor& spec) const;
  void collect_params(std::vector<std::pair<std::string, Tensor>>* out) const;

 private:
  ModelConfig cfg_;
  std::vector<ConvLayer> conv_;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

class Models {
 public:
  ModelConfig cfg;
  Translator f;
  AttentionNet a;
  Discriminator d;

  Models(const ModelConfig& config, std::uint64_t seed);

  std::vector<Tensor> f_params() const;
  std::vector<Tensor> a_params() const;
  std::vector<Tensor> d_params() const;
  // named parameters of every network, "F." / "A." / "D." prefixes
  std::vector<std::pair<std::string, Tensor>> named_params() const;

 private:
  Models(const ModelConfig& config, Rng rng);
};

// Per-network and total parameter counts keyed "F", "A", "D", "total".
std::map<std::string, std::int64_t> param_count(const Models& m);

// d_t = |x_t - x_{t-1}| for t in {2..T}; (T-1) single-channel frames.
std::vector<Tensor> residual_frames(const TaggedSequence& x);

// frame t (0-based) as a constant [1,H,W] tensor
Tensor frame_tensor(const TaggedSequence& x, std::int64_t t);

// masks for frames {2..T} from A over the residual frames
std::vector<Tensor> attention_masks(Tape* tape, const AttentionNet& a,
                                    const TaggedSequence& x);

// x'_1 = x_1, x'_t = mask_{t} (*) x_t; empty masks stack the raw frames
Tensor apply_masks(Tape* tape, const TaggedSequence& x,
                   const std::vector<Tensor>& masks);

// u = mu + exp(0.5 * logvar) (*) eps
Tensor reparameterize(Tape* tape, const Tensor& mu, const Tensor& logvar,
                      const Tensor& eps);

struct TranslationResult {
  Tensor spec;         // [spec_h, spec_w]
  Tensor mu, logvar;   // latent feature maps
};

// Full forward pass. eps == nullptr means the posterior mean (inference).
TranslationResult translate_full(Tape* tape, const Models& m,
                                 const TaggedSequence& x, const Tensor* eps,
                                 bool use_attention);

// Inference-mode spectrogram (eps = 0, no tape).
Tensor translate(const Models& m, const TaggedSequence& x,
                 bool use_attention = true);

// Per-channel pooled latent statistics (mu, logvar), each of length
// mu_channels; the quantities the pairwise KL compares.
std::pair<std::vector<float>, std::vector<float>> encode_pooled(
    const Models& m, const TaggedSequence& x, bool use_attention = true);

// --- checkpointing ----------------------------------------------------------

void save_models(const std::string& path, const Models& m, const MelConfig& dsp,
                 const std::map<std::string, std::string>& extra);

struct LoadedModels {
  Models models;
  MelConfig dsp;
  std::map<std::string, std::string> extra;
};

LoadedModels load_models(const std::string& path);

}  // namespace sq2s
