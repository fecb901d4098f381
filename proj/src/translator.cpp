// src/translator.cpp
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

#include "sq2s/translator.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sq2s/serialize.hpp"

namespace sq2s {

namespace {

Tensor init_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  return random_uniform<float>(std::move(shape), rng, -bound, bound, true);
}

ConvLayer make_conv3d_layer(int cin, int cout, int k, Rng& rng) {
  ConvLayer l;
  l.w = init_uniform({cout, cin, k, k, k}, static_cast<std::int64_t>(cin) * k * k * k, rng);
  l.b = Tensor::zeros({cout}, true);
  return l;
}

ConvLayer make_conv2d_layer(int cin, int cout, int k, Rng& rng) {
  ConvLayer l;
  l.w = init_uniform({cout, cin, k, k}, static_cast<std::int64_t>(cin) * k * k, rng);
  l.b = Tensor::zeros({cout}, true);
  return l;
}

ConvLayer make_deconv2d_layer(int cin, int cout, int k, Rng& rng) {
  ConvLayer l;
  l.w = init_uniform({cin, cout, k, k}, static_cast<std::int64_t>(cin) * k * k, rng);
  l.b = Tensor::zeros({cout}, true);
  return l;
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[static_cast<std::size_t>(i)];
  }
  return os.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

// mirrored deconv output channels for the attention net:
// {8,16,32,64} -> up outputs {32,16,8,8}
std::vector<int> attention_up_channels(const std::vector<int>& down) {
  std::vector<int> up;
  const int n = static_cast<int>(down.size());
  for (int i = 0; i < n; ++i) {
    up.push_back(i < n - 1 ? down[static_cast<std::size_t>(n - 2 - i)]
                           : down[0]);
  }
  return up;
}

void append_params(std::vector<std::pair<std::string, Tensor>>* out,
                   const std::string& name, const ConvLayer& l) {
  out->emplace_back(name + ".w", l.w);
  out->emplace_back(name + ".b", l.b);
}

}  // namespace

// --- ModelConfig --------------------------------------------------------------

void ModelConfig::validate() const {
  const std::size_t n = enc_channels.size();
  if (n == 0 || enc_spatial_stride.size() != n || enc_pool_after.size() != n) {
    throw std::invalid_argument("model config: encoder lists must have equal length");
  }
  if (enc_channels.back() != latent_channels()) {
    throw std::invalid_argument(
        "model config: bottleneck channels " + std::to_string(enc_channels.back()) +
        " != latent split " + std::to_string(latent_channels()));
  }
  if (dec_channels.empty() || dec_strides.size() != dec_channels.size() ||
      dec_kernels.size() != dec_channels.size()) {
    throw std::invalid_argument("model config: decoder lists must have equal length");
  }
  if (enc_kernel % 2 != 1) {
    throw std::invalid_argument("model config: encoder kernel must be odd");
  }

  // encoder shape chain
  int t = input_t, h = input_h, w = input_w;
  for (std::size_t i = 0; i < n; ++i) {
    const int s = enc_spatial_stride[i];
    if (s < 1) throw std::invalid_argument("model config: bad encoder stride");
    h = (h - 1) / s + 1;
    w = (w - 1) / s + 1;
    if (enc_pool_after[i]) {
      if (t % 2 != 0) {
        throw std::invalid_argument(
            "model config: temporal size " + std::to_string(t) +
            " not divisible by 2 at encoder pool " + std::to_string(i + 1));
      }
      t /= 2;
      h /= 2;
      w /= 2;
      if (h < 1 || w < 1) {
        throw std::invalid_argument("model config: encoder pools collapse spatial dims");
      }
    }
  }

  // decoder shape chain must land exactly on the spectrogram shape
  int dh = h, dw = w;
  for (std::size_t i = 0; i < dec_channels.size(); ++i) {
    dh = (dh - 1) * dec_strides[i] + dec_kernels[i] - 2;
    dw = (dw - 1) * dec_strides[i] + dec_kernels[i] - 2;
  }
  if (dh != spec_h || dw != spec_w) {
    throw std::invalid_argument("model config: decoder yields " + std::to_string(dh) +
                                "x" + std::to_string(dw) + ", spectrogram is " +
                                std::to_string(spec_h) + "x" + std::to_string(spec_w));
  }

  // attention chain must return to the input frame size
  int ah = input_h, aw = input_w;
  for (std::size_t i = 0; i < att_channels.size(); ++i) {
    ah = (ah - 1) / 2 + 1;
    aw = (aw - 1) / 2 + 1;
  }
  for (std::size_t i = 0; i < att_channels.size(); ++i) {
    ah = 2 * ah;
    aw = 2 * aw;
  }
  if (ah != input_h || aw != input_w) {
    throw std::invalid_argument("model config: attention net does not restore HxW");
  }

  int sh = spec_h, sw = spec_w;
  for (std::size_t i = 0; i < disc_channels.size(); ++i) {
    sh = (sh - 1) / 2 + 1;
    sw = (sw - 1) / 2 + 1;
  }
  if (sh < 1 || sw < 1 || disc_hidden < 1) {
    throw std::invalid_argument("model config: discriminator collapses spatial dims");
  }
}

std::pair<std::int64_t, std::int64_t> ModelConfig::bottleneck_hw() const {
  std::int64_t h = input_h, w = input_w;
  for (std::size_t i = 0; i < enc_channels.size(); ++i) {
    const std::int64_t s = enc_spatial_stride[i];
    h = (h - 1) / s + 1;
    w = (w - 1) / s + 1;
    if (enc_pool_after[i]) {
      h /= 2;
      w /= 2;
    }
  }
  return {h, w};
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig cfg;
  cfg.input_t = 26;
  cfg.input_h = 128;
  cfg.input_w = 128;
  cfg.spec_h = 64;
  cfg.spec_w = 64;
  cfg.enc_spatial_stride = {1, 2, 2, 2, 2};
  cfg.enc_pool_after = {1, 0, 0, 0, 0};
  cfg.dec_strides = {2, 2, 2, 2};
  cfg.dec_kernels = {4, 4, 4, 4};
  return cfg;
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "input_t=" << input_t << "\n";
  os << "input_h=" << input_h << "\n";
  os << "input_w=" << input_w << "\n";
  os << "spec_h=" << spec_h << "\n";
  os << "spec_w=" << spec_w << "\n";
  os << "enc_channels=" << join_ints(enc_channels) << "\n";
  os << "enc_spatial_stride=" << join_ints(enc_spatial_stride) << "\n";
  os << "enc_pool_after=" << join_ints(enc_pool_after) << "\n";
  os << "enc_kernel=" << enc_kernel << "\n";
  os << "mu_channels=" << mu_channels << "\n";
  os << "logvar_channels=" << logvar_channels << "\n";
  os << "style_channels=" << style_channels << "\n";
  os << "dec_channels=" << join_ints(dec_channels) << "\n";
  os << "dec_strides=" << join_ints(dec_strides) << "\n";
  os << "dec_kernels=" << join_ints(dec_kernels) << "\n";
  os << "att_channels=" << join_ints(att_channels) << "\n";
  os << "disc_channels=" << join_ints(disc_channels) << "\n";
  os << "disc_hidden=" << disc_hidden << "\n";
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("model config: bad line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "input_t") cfg.input_t = std::stoi(val);
      else if (key == "input_h") cfg.input_h = std::stoi(val);
      else if (key == "input_w") cfg.input_w = std::stoi(val);
      else if (key == "spec_h") cfg.spec_h = std::stoi(val);
      else if (key == "spec_w") cfg.spec_w = std::stoi(val);
      else if (key == "enc_channels") cfg.enc_channels = split_ints(val);
      else if (key == "enc_spatial_stride") cfg.enc_spatial_stride = split_ints(val);
      else if (key == "enc_pool_after") cfg.enc_pool_after = split_ints(val);
      else if (key == "enc_kernel") cfg.enc_kernel = std::stoi(val);
      else if (key == "mu_channels") cfg.mu_channels = std::stoi(val);
      else if (key == "logvar_channels") cfg.logvar_channels = std::stoi(val);
      else if (key == "style_channels") cfg.style_channels = std::stoi(val);
      else if (key == "dec_channels") cfg.dec_channels = split_ints(val);
      else if (key == "dec_strides") cfg.dec_strides = split_ints(val);
      else if (key == "dec_kernels") cfg.dec_kernels = split_ints(val);
      else if (key == "att_channels") cfg.att_channels = split_ints(val);
      else if (key == "disc_channels") cfg.disc_channels = split_ints(val);
      else if (key == "disc_hidden") cfg.disc_hidden = std::stoi(val);
      else throw UsageError("model config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw UsageError("model config: bad value for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

// --- AttentionNet ---------------------------------------------------------------

AttentionNet::AttentionNet(const ModelConfig& cfg, Rng& rng) {
  int cin = 1;
  for (int c : cfg.att_channels) {
    down_.push_back(make_conv2d_layer(cin, c, 3, rng));
    cin = c;
  }
  for (int c : attention_up_channels(cfg.att_channels)) {
    up_.push_back(make_deconv2d_layer(cin, c, 4, rng));
    cin = c;
  }
  head_ = make_conv2d_layer(cin, 1, 1, rng);
}

Tensor AttentionNet::forward(Tape* tape, const Tensor& frame) const {
  Tensor h = frame;
  for (const auto& l : down_) {
    h = relu(tape, channel_bias(tape, conv2d(tape, h, l.w, 2, 1), l.b));
  }
  for (const auto& l : up_) {
    h = relu(tape, channel_bias(tape, conv2d_transpose(tape, h, l.w, 2, 1), l.b));
  }
  return sigmoid(tape, channel_bias(tape, conv2d(tape, h, head_.w, 1, 0), head_.b));
}

void AttentionNet::collect_params(
    std::vector<std::pair<std::string, Tensor>>* out) const {
  for (std::size_t i = 0; i < down_.size(); ++i) {
    append_params(out, "A.down" + std::to_string(i + 1), down_[i]);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    append_params(out, "A.up" + std::to_string(i + 1), up_[i]);
  }
  append_params(out, "A.head", head_);
}

// --- Translator -----------------------------------------------------------------

Translator::Translator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  int cin = 1;
  for (int c : cfg.enc_channels) {
    enc_.push_back(make_conv3d_layer(cin, c, cfg.enc_kernel, rng));
    cin = c;
  }
  cin = cfg.mu_channels + cfg.style_channels;  // decoder input: concat(u, s)
  for (std::size_t i = 0; i < cfg.dec_channels.size(); ++i) {
    dec_.push_back(make_deconv2d_layer(cin, cfg.dec_channels[i], cfg.dec_kernels[i], rng));
    cin = cfg.dec_channels[i];
  }
  head_ = make_conv2d_layer(cin, 1, 1, rng);
}

Translator::Encoded Translator::encode(Tape* tape, const Tensor& seq) const {
  if (seq.rank() != 4 || seq.dim(0) != 1 || seq.dim(1) != cfg_.input_t ||
      seq.dim(2) != cfg_.input_h || seq.dim(3) != cfg_.input_w) {
    throw std::invalid_argument("encode: sequence " + shape_str(seq.shape()) +
                                " does not match configured input [1," +
                                std::to_string(cfg_.input_t) + "," +
                                std::to_string(cfg_.input_h) + "," +
                                std::to_string(cfg_.input_w) + "]");
  }
  const std::int64_t pad = (cfg_.enc_kernel - 1) / 2;
  Tensor h = seq;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    const std::int64_t s = cfg_.enc_spatial_stride[i];
    h = conv3d(tape, h, enc_[i].w, {1, s, s}, {pad, pad, pad});
    h = relu(tape, channel_bias(tape, h, enc_[i].b));
    if (cfg_.enc_pool_after[i]) h = maxpool3d_temporal(tape, h, 2, 2);
  }
  h = temporal_max(tape, h);  // [C,1,h,w]; identity when T is already 1
  h = reshape(tape, h, {h.dim(0), h.dim(2), h.dim(3)});
  Encoded enc;
  const std::int64_t m = cfg_.mu_channels;
  const std::int64_t lv = cfg_.logvar_channels;
  enc.mu = slice_channels(tape, h, 0, m);
  enc.logvar = slice_channels(tape, h, m, m + lv);
  enc.style = slice_channels(tape, h, m + lv, h.dim(0));
  return enc;
}

Tensor Translator::decode(Tape* tape, const Tensor& u, const Tensor& style) const {
  if (u.rank() != 3 || style.rank() != 3 || u.dim(1) != style.dim(1) ||
      u.dim(2) != style.dim(2)) {
    throw std::invalid_argument("decode: u " + shape_str(u.shape()) +
                                " and style " + shape_str(style.shape()) +
                                " spatial shapes differ");
  }
  Tensor h = concat_channels(tape, u, style);
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    h = conv2d_transpose(tape, h, dec_[i].w, cfg_.dec_strides[i], 1);
    h = relu(tape, channel_bias(tape, h, dec_[i].b));
  }
  h = sigmoid(tape, channel_bias(tape, conv2d(tape, h, head_.w, 1, 0), head_.b));
  return reshape(tape, h, {h.dim(1), h.dim(2)});
}

void Translator::collect_params(
    std::vector<std::pair<std::string, Tensor>>* out) const {
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    append_params(out, "F.enc" + std::to_string(i + 1), enc_[i]);
  }
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    append_params(out, "F.dec" + std::to_string(i + 1), dec_[i]);
  }
  append_params(out, "F.head", head_);
}

// --- Discriminator ----------------------------------------------------------------

Discriminator::Discriminator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  int cin = 1;
  int h = cfg.spec_h, w = cfg.spec_w;
  for (int c : cfg.disc_channels) {
    conv_.push_back(make_conv2d_layer(cin, c, 3, rng));
    cin = c;
    h = (h - 1) / 2 + 1;
    w = (w - 1) / 2 + 1;
  }
  const std::int64_t flat = static_cast<std::int64_t>(cin) * h * w;
  fc1_w = init_uniform({cfg.disc_hidden, flat}, flat, rng);
  fc1_b = Tensor::zeros({cfg.disc_hidden}, true);
  fc2_w = init_uniform({1, cfg.disc_hidden}, cfg.disc_hidden, rng);
  fc2_b = Tensor::zeros({1}, true);
}

Tensor Discriminator::forward(Tape* tape, const Tensor& spec) const {
  if (spec.rank() != 2 || spec.dim(0) != cfg_.spec_h || spec.dim(1) != cfg_.spec_w) {
    throw std::invalid_argument("discriminate: spectrogram " +
                                shape_str(spec.shape()) + " expected [" +
                                std::to_string(cfg_.spec_h) + "," +
                                std::to_string(cfg_.spec_w) + "]");
  }
  Tensor h = reshape(tape, spec, {1, spec.dim(0), spec.dim(1)});
  for (const auto& l : conv_) {
    h = relu(tape, channel_bias(tape, conv2d(tape, h, l.w, 2, 1), l.b));
  }
  h = reshape(tape, h, {h.numel()});
  h = relu(tape, dense(tape, h, fc1_w, fc1_b));
  h = dense(tape, h, fc2_w, fc2_b);
  return sigmoid(tape, h);
}

void Discriminator::collect_params(
    std::vector<std::pair<std::string, Tensor>>* out) const {
  for (std::size_t i = 0; i < conv_.size(); ++i) {
    append_params(out, "D.conv" + std::to_string(i + 1), conv_[i]);
  }
  out->emplace_back("D.fc1.w", fc1_w);
  out->emplace_back("D.fc1.b", fc1_b);
  out->emplace_back("D.fc2.w", fc2_w);
  out->emplace_back("D.fc2.b", fc2_b);
}

// --- Models ------------------------------------------------------------------------

namespace {
const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

Models::Models(const ModelConfig& config, std::uint64_t seed)
    : Models(config, Rng(seed)) {}

// Members initialize in declaration order (cfg, f, a, d), all drawing from
// the one seeded stream.
Models::Models(const ModelConfig& config, Rng rng)
    : cfg(validated(config)), f(cfg, rng), a(cfg, rng), d(cfg, rng) {}

std::vector<Tensor> Models::f_params() const {
  std::vector<std::pair<std::string, Tensor>> named;
  f.collect_params(&named);
  std::vector<Tensor> out;
  for (auto& [n, t] : named) out.push_back(t);
  return out;
}

std::vector<Tensor> Models::a_params() const {
  std::vector<std::pair<std::string, Tensor>> named;
  a.collect_params(&named);
  std::vector<Tensor> out;
  for (auto& [n, t] : named) out.push_back(t);
  return out;
}

std::vector<Tensor> Models::d_params() const {
  std::vector<std::pair<std::string, Tensor>> named;
  d.collect_params(&named);
  std::vector<Tensor> out;
  for (auto& [n, t] : named) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Models::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  f.collect_params(&out);
  a.collect_params(&out);
  d.collect_params(&out);
  return out;
}

std::map<std::string, std::int64_t> param_count(const Models& m) {
  std::map<std::string, std::int64_t> counts;
  counts["F"] = 0;
  counts["A"] = 0;
  counts["D"] = 0;
  for (const auto& [name, t] : m.named_params()) {
    counts[name.substr(0, 1)] += t.numel();
  }
  counts["total"] = counts["F"] + counts["A"] + counts["D"];
  return counts;
}

// --- pipeline ops ---------------------------------------------------------------------

std::vector<Tensor> residual_frames(const TaggedSequence& x) {
  if (x.t < 2) {
    throw std::invalid_argument("residual_frames: need at least 2 frames, got " +
                                std::to_string(x.t));
  }
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(x.t - 1));
  for (std::int64_t t = 1; t < x.t; ++t) {
    std::vector<float> d(static_cast<std::size_t>(x.h * x.w));
    for (std::int64_t j = 0; j < x.h * x.w; ++j) {
      d[static_cast<std::size_t>(j)] =
          std::abs(x.data[static_cast<std::size_t>(t * x.h * x.w + j)] -
                   x.data[static_cast<std::size_t>((t - 1) * x.h * x.w + j)]);
    }
    out.push_back(Tensor::from_data({1, x.h, x.w}, std::move(d)));
  }
  return out;
}

Tensor frame_tensor(const TaggedSequence& x, std::int64_t t) {
  std::vector<float> d(x.data.begin() + t * x.h * x.w,
                       x.data.begin() + (t + 1) * x.h * x.w);
  return Tensor::from_data({1, x.h, x.w}, std::move(d));
}

std::vector<Tensor> attention_masks(Tape* tape, const AttentionNet& a,
                                    const TaggedSequence& x) {
  std::vector<Tensor> masks;
  for (const Tensor& d : residual_frames(x)) {
    masks.push_back(a.forward(tape, d));
  }
  return masks;
}

Tensor apply_masks(Tape* tape, const TaggedSequence& x,
                   const std::vector<Tensor>& masks) {
  if (!masks.empty() && static_cast<std::int64_t>(masks.size()) != x.t - 1) {
    throw std::invalid_argument("apply_masks: got " + std::to_string(masks.size()) +
                                " masks for " + std::to_string(x.t) + " frames");
  }
  std::vector<Tensor> frames;
  frames.reserve(static_cast<std::size_t>(x.t));
  frames.push_back(frame_tensor(x, 0));  // first frame has no residual
  for (std::int64_t t = 1; t < x.t; ++t) {
    Tensor ft = frame_tensor(x, t);
    if (masks.empty()) {
      frames.push_back(ft);
    } else {
      frames.push_back(mul(tape, masks[static_cast<std::size_t>(t - 1)], ft));
    }
  }
  return stack_temporal(tape, frames);
}

Tensor reparameterize(Tape* tape, const Tensor& mu, const Tensor& logvar,
                      const Tensor& eps) {
  detail::check_same_shape("reparameterize", mu, logvar);
  detail::check_same_shape("reparameterize", mu, eps);
  Tensor sigma = elem_exp(tape, scalar_mul(tape, logvar, 0.5f));
  return add(tape, mu, mul(tape, sigma, eps));
}

TranslationResult translate_full(Tape* tape, const Models& m,
                                 const TaggedSequence& x, const Tensor* eps,
                                 bool use_attention) {
  std::vector<Tensor> masks;
  if (use_attention) masks = attention_masks(tape, m.a, x);
  Tensor seq = apply_masks(tape, x, masks);
  Translator::Encoded enc = m.f.encode(tape, seq);
  // eps = 0 is the posterior mean; skip the zero-product for exactness
  Tensor u = eps ? reparameterize(tape, enc.mu, enc.logvar, *eps) : enc.mu;
  Tensor spec = m.f.decode(tape, u, enc.style);
  return TranslationResult{spec, enc.mu, enc.logvar};
}

Tensor translate(const Models& m, const TaggedSequence& x, bool use_attention) {
  return translate_full(nullptr, m, x, nullptr, use_attention).spec;
}

std::pair<std::vector<float>, std::vector<float>> encode_pooled(
    const Models& m, const TaggedSequence& x, bool use_attention) {
  std::vector<Tensor> masks;
  if (use_attention) masks = attention_masks(nullptr, m.a, x);
  Tensor seq = apply_masks(nullptr, x, masks);
  Translator::Encoded enc = m.f.encode(nullptr, seq);
  Tensor mu = channel_mean<float>(nullptr, enc.mu);
  Tensor logvar = channel_mean<float>(nullptr, enc.logvar);
  return {mu.data(), logvar.data()};
}

// --- checkpointing -----------------------------------------------------------------------

void save_models(const std::string& path, const Models& m, const MelConfig& dsp,
                 const std::map<std::string, std::string>& extra) {
  Checkpoint ckpt;
  std::ostringstream os;
  os << "[model]\n" << m.cfg.serialize();
  os << "[dsp]\n" << dsp.serialize();
  os << "[extra]\n";
  for (const auto& [k, v] : extra) os << k << "=" << v << "\n";
  ckpt.config_text = os.str();
  for (const auto& [name, t] : m.named_params()) {
    ckpt.tensors.emplace_back(name, t.detach_copy());
  }
  write_checkpoint(path, ckpt);
}

LoadedModels load_models(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  std::string section;
  std::string model_text, dsp_text;
  std::map<std::string, std::string> extra;
  std::istringstream is(ckpt.config_text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    if (line.empty()) continue;
    if (section == "model") {
      model_text += line + "\n";
    } else if (section == "dsp") {
      dsp_text += line + "\n";
    } else if (section == "extra") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw UsageError("checkpoint: bad extra line");
      extra[line.substr(0, eq)] = line.substr(eq + 1);
    } else {
      throw UsageError("checkpoint: unknown config section '" + section + "'");
    }
  }
  ModelConfig cfg = ModelConfig::parse(model_text);
  LoadedModels out{Models(cfg, 0), MelConfig::parse(dsp_text), std::move(extra)};
  auto named = out.models.named_params();
  if (named.size() != ckpt.tensors.size()) {
    throw UsageError("checkpoint: expected " + std::to_string(named.size()) +
                     " tensors, file has " + std::to_string(ckpt.tensors.size()));
  }
  std::map<std::string, Tensor> index;
  for (auto& [name, t] : ckpt.tensors) index.emplace(name, t);
  for (auto& [name, t] : named) {
    auto it = index.find(name);
    if (it == index.end()) throw UsageError("checkpoint: missing tensor " + name);
    if (it->second.shape() != t.shape()) {
      throw UsageError("checkpoint: tensor " + name + " has shape " +
                       shape_str(it->second.shape()) + ", model expects " +
                       shape_str(t.shape()));
    }
    t.data() = it->second.data();
  }
  return out;
}

}  // namespace sq2s
