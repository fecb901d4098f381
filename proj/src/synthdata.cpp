// src/synthdata.cpp
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

#include "sq2s/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sq2s/serialize.hpp"

namespace sq2s {

namespace {

constexpr double kPi = 3.14159265358979323846;

// formant ranges the blob mapping covers (Hz)
constexpr double kFormant1Lo = 250.0, kFormant1Hi = 850.0;
constexpr double kFormant2Lo = 700.0, kFormant2Hi = 1900.0;
constexpr double kFormantBandwidth = 150.0;  // resonance width, Hz
constexpr double kBlobMarginFrac = 0.15;     // border the blob stays off

double smooth_track(double start, double end, double wobble, double u) {
  // half-cosine glide plus one gentle wobble cycle; bounded step size
  const double glide = start + (end - start) * 0.5 * (1.0 - std::cos(kPi * u));
  return glide + wobble * std::sin(2.0 * kPi * u);
}

}  // namespace

double UtteranceTemplate::formant1(double u) const {
  return smooth_track(f1_start, f1_end, f1_wobble, u);
}

double UtteranceTemplate::formant2(double u) const {
  return smooth_track(f2_start, f2_end, f2_wobble, u);
}

UtteranceTemplate UtteranceTemplate::for_class(int class_id, double duration) {
  UtteranceTemplate t;
  t.class_id = class_id;
  t.duration = duration;
  // class trajectories separate primarily in the second formant's direction
  switch (class_id % 4) {
    case 0:  // open -> rounded, both formants fall
      t.f1_start = 700; t.f1_end = 380; t.f1_wobble = 18;
      t.f2_start = 1250; t.f2_end = 850; t.f2_wobble = 30;
      break;
    case 1:  // open -> fronted, second formant rises
      t.f1_start = 650; t.f1_end = 330; t.f1_wobble = 14;
      t.f2_start = 950; t.f2_end = 1750; t.f2_wobble = 40;
      break;
    case 2:  // rising first formant, high flat second
      t.f1_start = 320; t.f1_end = 780; t.f1_wobble = 20;
      t.f2_start = 1600; t.f2_end = 1500; t.f2_wobble = 35;
      break;
    default:  // dipping first formant, falling second
      t.f1_start = 520; t.f1_end = 500; t.f1_wobble = 90;
      t.f2_start = 1800; t.f2_end = 950; t.f2_wobble = 25;
      break;
  }
  return t;
}

SubjectStyle SubjectStyle::for_subject(int subject_id, std::uint64_t corpus_seed) {
  Rng rng(derive_seed(corpus_seed, "subject/" + std::to_string(subject_id)));
  SubjectStyle s;
  s.pitch_base = rng.uniform(100.0, 180.0);
  s.attack = rng.uniform(0.08, 0.2);
  s.release = rng.uniform(0.12, 0.3);
  s.amplitude = rng.uniform(0.3, 0.55);
  s.texture_seed = rng.raw();
  return s;
}

Waveform render_audio(const UtteranceTemplate& t, const SubjectStyle& s,
                      int sample_rate, std::int64_t length) {
  if (length < 2) throw std::invalid_argument("render_audio: length too short");
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(static_cast<std::size_t>(length));
  const double f0 = s.pitch_base;
  const double f_limit = 0.45 * sample_rate;
  const int harmonics = std::max(1, static_cast<int>(f_limit / f0));
  // fixed per-harmonic phases keep the render free of any RNG
  std::vector<double> phase(static_cast<std::size_t>(harmonics));
  for (int k = 0; k < harmonics; ++k) {
    phase[static_cast<std::size_t>(k)] = 2.0 * kPi * std::fmod(0.618033988749895 * (k + 1), 1.0);
  }
  double peak = 0.0;
  for (std::int64_t i = 0; i < length; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(length - 1);
    const double f1 = t.formant1(u);
    const double f2 = t.formant2(u);
    const double tt = static_cast<double>(i) / sample_rate;
    double v = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      const double fk = f0 * k;
      const double g1 = std::exp(-((fk - f1) / kFormantBandwidth) * ((fk - f1) / kFormantBandwidth));
      const double g2 = 0.5 * std::exp(-((fk - f2) / kFormantBandwidth) * ((fk - f2) / kFormantBandwidth));
      const double gain = g1 + g2;
      if (gain < 1e-4) continue;
      v += gain * std::sin(2.0 * kPi * fk * tt + phase[static_cast<std::size_t>(k - 1)]);
    }
    double env = 1.0;
    if (u < s.attack) env = u / s.attack;
    if (u > 1.0 - s.release) env = std::min(env, (1.0 - u) / s.release);
    env = 0.1 + 0.9 * env;  // keep a floor so no window is fully silent
    const double sample = env * v;
    w.samples[static_cast<std::size_t>(i)] = static_cast<float>(sample);
    peak = std::max(peak, std::abs(sample));
  }
  if (peak > 0.0) {
    const float scale = static_cast<float>(s.amplitude / peak);
    for (auto& v : w.samples) v *= scale;
  }
  return w;
}

std::pair<double, double> blob_position(const UtteranceTemplate& t, double u,
                                        std::int64_t h, std::int64_t w) {
  const double mx = kBlobMarginFrac * static_cast<double>(w);
  const double my = kBlobMarginFrac * static_cast<double>(h);
  const double ux = (t.formant1(u) - kFormant1Lo) / (kFormant1Hi - kFormant1Lo);
  const double uy = (t.formant2(u) - kFormant2Lo) / (kFormant2Hi - kFormant2Lo);
  const double cx = mx + std::min(1.0, std::max(0.0, ux)) * (static_cast<double>(w) - 1 - 2 * mx);
  const double cy = my + std::min(1.0, std::max(0.0, uy)) * (static_cast<double>(h) - 1 - 2 * my);
  return {cx, cy};
}

TaggedSequence render_video(const UtteranceTemplate& t, const SubjectStyle& s,
                            std::int64_t h, std::int64_t w, std::int64_t frames) {
  TaggedSequence x;
  x.t = frames;
  x.h = h;
  x.w = w;
  x.data.resize(static_cast<std::size_t>(frames * h * w));

  // static tag-like background, unique to the subject
  Rng rng(s.texture_seed);
  const double theta = rng.uniform(0.0, kPi);
  const double period = rng.uniform(3.5, 6.5);
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  std::vector<float> background(static_cast<std::size_t>(h * w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t xx = 0; xx < w; ++xx) {
      const double stripe =
          std::sin(2.0 * kPi * (xx * cos_t + y * sin_t) / period + phi);
      const double noise = rng.uniform(-0.03, 0.03);
      background[static_cast<std::size_t>(y * w + xx)] =
          static_cast<float>(std::min(0.95, std::max(0.05, 0.45 + 0.25 * stripe + noise)));
    }
  }

  const double sigma = static_cast<double>(w) / 10.0;
  const double cutoff = 3.0 * sigma;  // hard support; residuals vanish outside
  for (std::int64_t f = 0; f < frames; ++f) {
    const double u = frames > 1 ? static_cast<double>(f) / static_cast<double>(frames - 1) : 0.0;
    auto [cx, cy] = blob_position(t, u, h, w);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t xx = 0; xx < w; ++xx) {
        const float b = background[static_cast<std::size_t>(y * w + xx)];
        const double dx = static_cast<double>(xx) - cx;
        const double dy = static_cast<double>(y) - cy;
        const double r2 = dx * dx + dy * dy;
        float v = b;
        if (r2 < cutoff * cutoff) {
          const double blob = 0.55 * std::exp(-r2 / (2.0 * sigma * sigma));
          v = static_cast<float>(b + blob * (1.0 - b));  // screen blend, stays < 1
        }
        x.at(f, y, xx) = v;
      }
    }
  }
  return x;
}

std::vector<std::pair<TaggedSequence, Waveform>> sliding_window_augment(
    const TaggedSequence& x, const Waveform& y, std::int64_t window,
    std::int64_t stride) {
  const std::int64_t len = static_cast<std::int64_t>(y.samples.size());
  if (window > len) {
    throw std::invalid_argument("sliding_window_augment: window " +
                                std::to_string(window) + " exceeds length " +
                                std::to_string(len));
  }
  if (stride < 1) throw std::invalid_argument("sliding_window_augment: stride must be >= 1");
  std::vector<std::pair<TaggedSequence, Waveform>> out;
  for (std::int64_t off = 0; off + window <= len; off += stride) {
    Waveform crop;
    crop.sample_rate = y.sample_rate;
    crop.samples.assign(y.samples.begin() + off, y.samples.begin() + off + window);
    out.emplace_back(x, std::move(crop));
  }
  return out;
}

// --- manifest -----------------------------------------------------------------

void CorpusManifest::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw UsageError("manifest: cannot write " + path);
  for (const auto& it : items) {
    f << it.subject_id << "\t" << it.class_id << "\t" << it.seed << "\t"
      << it.seq_path << "\t" << it.wav_path << "\n";
  }
  if (!f) throw UsageError("manifest: short write to " + path);
}

CorpusManifest CorpusManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("manifest: cannot open " + path);
  CorpusManifest m;
  m.dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  std::set<std::pair<int, int>> seen;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    CorpusItem it;
    if (!(is >> it.subject_id >> it.class_id >> it.seed >> it.seq_path >> it.wav_path)) {
      throw UsageError("manifest: bad line '" + line + "'");
    }
    if (!seen.insert({it.subject_id, it.class_id}).second) {
      throw UsageError("manifest: duplicate (subject " + std::to_string(it.subject_id) +
                       ", class " + std::to_string(it.class_id) + ")");
    }
    m.items.push_back(std::move(it));
  }
  for (const auto& it : m.items) {
    for (const std::string& rel : {it.seq_path, it.wav_path}) {
      if (!std::filesystem::exists(m.resolve(rel))) {
        throw UsageError("manifest: referenced file missing: " + m.resolve(rel));
      }
    }
  }
  return m;
}

std::string CorpusManifest::resolve(const std::string& rel) const {
  if (dir.empty()) return rel;
  return (std::filesystem::path(dir) / rel).string();
}

// --- corpus -------------------------------------------------------------------

CorpusManifest make_corpus(const std::string& dir, const SynthConfig& cfg) {
  if (cfg.subjects < 1 || cfg.classes < 1) {
    throw std::invalid_argument("make_corpus: need at least one subject and class");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw UsageError("make_corpus: cannot create " + dir + ": " + ec.message());

  const std::int64_t window = cfg.dsp.frame_aligned_length();
  const std::int64_t length = window + static_cast<std::int64_t>(cfg.margin_hops) * cfg.dsp.hop;
  const double duration = static_cast<double>(length) / cfg.dsp.sample_rate;

  CorpusManifest manifest;
  manifest.dir = dir;
  MelFilterbank fb = make_mel_filterbank(cfg.dsp);
  double max_power = 0.0;
  for (int subject = 0; subject < cfg.subjects; ++subject) {
    SubjectStyle style = SubjectStyle::for_subject(subject, cfg.seed);
    for (int cls = 0; cls < cfg.classes; ++cls) {
      UtteranceTemplate tmpl = UtteranceTemplate::for_class(cls, duration);
      CorpusItem item;
      item.subject_id = subject;
      item.class_id = cls;
      item.seed = derive_seed(cfg.seed, "item/" + std::to_string(subject) + "/" +
                                            std::to_string(cls));
      item.seq_path = "s" + std::to_string(subject) + "_c" + std::to_string(cls) + ".sq2t";
      item.wav_path = "s" + std::to_string(subject) + "_c" + std::to_string(cls) + ".wav";

      Waveform audio = render_audio(tmpl, style, cfg.dsp.sample_rate, length);
      TaggedSequence video =
          render_video(tmpl, style, cfg.video_h, cfg.video_w, cfg.video_t);
      write_wav(manifest.resolve(item.wav_path), audio);
      save_sequence(manifest.resolve(item.seq_path), video);

      for (double p : mel_power_frames(audio, cfg.dsp, fb)) max_power = std::max(max_power, p);
      manifest.items.push_back(std::move(item));
    }
  }
  MelConfig dsp = cfg.dsp;
  if (max_power > 0.0) dsp.ref_power = max_power;
  {
    std::ofstream f((std::filesystem::path(dir) / "dsp.cfg").string());
    if (!f) throw UsageError("make_corpus: cannot write dsp.cfg under " + dir);
    f << dsp.serialize();
  }
  manifest.save((std::filesystem::path(dir) / "manifest.tsv").string());
  return manifest;
}

PairSample sample_training_pair(const CorpusManifest& manifest, Rng& rng,
                                double p_same) {
  if (manifest.items.size() < 2) {
    throw std::invalid_argument("sample_training_pair: corpus has fewer than 2 items");
  }
  const bool want_same = rng.uniform() < p_same;

  auto pick = [&](auto&& pred) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < manifest.items.size(); ++i) {
      if (pred(i)) pool.push_back(i);
    }
    return pool;
  };

  if (want_same) {
    // classes with at least two recordings; (subject, class) uniqueness makes
    // any two same-class items cross-subject
    std::map<int, int> class_count;
    for (const auto& it : manifest.items) ++class_count[it.class_id];
    std::vector<int> classes;
    for (auto& [c, n] : class_count) {
      if (n >= 2) classes.push_back(c);
    }
    if (!classes.empty()) {
      const int cls = classes[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(classes.size())))];
      auto pool = pick([&](std::size_t i) { return manifest.items[i].class_id == cls; });
      const std::size_t a = pool[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(pool.size())))];
      std::size_t b = a;
      while (b == a) {
        b = pool[static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(pool.size())))];
      }
      return {a, b, true};
    }
    // fall through when no class has two items
  }
  const std::size_t a = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(manifest.items.size())));
  auto pool = pick([&](std::size_t i) {
    return manifest.items[i].class_id != manifest.items[a].class_id;
  });
  if (pool.empty()) {
    // single-class corpus: any distinct item still shares the utterance
    std::size_t b = a;
    while (b == a) {
      b = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(manifest.items.size())));
    }
    return {a, b, true};
  }
  const std::size_t b = pool[static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(pool.size())))];
  return {a, b, false};
}

TaggedSequence load_sequence(const std::string& path) {
  Tensor t = read_tensor_file(path);
  if (t.rank() != 3) {
    throw UsageError("sequence: " + path + " has rank " + std::to_string(t.rank()) +
                     ", expected 3 ([T,H,W])");
  }
  TaggedSequence x;
  x.t = t.dim(0);
  x.h = t.dim(1);
  x.w = t.dim(2);
  x.data = t.data();
  return x;
}

void save_sequence(const std::string& path, const TaggedSequence& x) {
  write_tensor_file(path, Tensor::from_data({x.t, x.h, x.w}, x.data));
}

}  // namespace sq2s
