// tests/synthdata_test.cpp
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
#include <set>

#include "sq2s/synthdata.hpp"
#include "sq2s/translator.hpp"

using namespace sq2s;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

// mel band whose center frequency is closest to f
int nearest_band(const MelFilterbank& fb, const MelConfig& cfg, double f) {
  int best = 0;
  double best_gap = 1e18;
  for (int m = 0; m < fb.n_mels; ++m) {
    // center = bin of the filter's peak
    int peak_bin = 0;
    double peak = -1;
    for (int k = 0; k < fb.n_bins; ++k) {
      if (fb.at(m, k) > peak) {
        peak = fb.at(m, k);
        peak_bin = k;
      }
    }
    const double fc = static_cast<double>(peak_bin) * cfg.sample_rate / cfg.n_fft;
    if (std::abs(fc - f) < best_gap) {
      best_gap = std::abs(fc - f);
      best = m;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("render_audio is deterministic and keeps RMS in range") {
  SynthConfig cfg;
  const std::int64_t len = cfg.dsp.frame_aligned_length();
  for (int subject = 0; subject < 6; ++subject) {
    SubjectStyle s = SubjectStyle::for_subject(subject, 99);
    CHECK(s.pitch_base >= 80.0);
    CHECK(s.pitch_base <= 300.0);
    for (int cls = 0; cls < 2; ++cls) {
      UtteranceTemplate t = UtteranceTemplate::for_class(cls, 0.6);
      Waveform a = render_audio(t, s, cfg.dsp.sample_rate, len);
      Waveform b = render_audio(t, s, cfg.dsp.sample_rate, len);
      CHECK(a.samples == b.samples);  // bit-identical
      double rms = 0;
      for (float v : a.samples) rms += static_cast<double>(v) * v;
      rms = std::sqrt(rms / static_cast<double>(a.samples.size()));
      CHECK(rms >= 0.05);
      CHECK(rms <= 0.9);
      for (float v : a.samples) CHECK(std::abs(v) <= 1.0f);
    }
  }
}

TEST_CASE("spectrogram band argmax tracks the first formant") {
  SynthConfig cfg;
  MelConfig mel = cfg.dsp;
  MelFilterbank fb = make_mel_filterbank(mel);
  SubjectStyle s = SubjectStyle::for_subject(1, 7);
  UtteranceTemplate t = UtteranceTemplate::for_class(0, 0.6);
  const std::int64_t len = mel.frame_aligned_length();
  Waveform wav = render_audio(t, s, mel.sample_rate, len);
  // per-corpus style normalization: reference is this item's own max power
  double maxp = 0;
  for (double p : mel_power_frames(wav, mel, fb)) maxp = std::max(maxp, p);
  mel.ref_power = maxp;
  MelSpec spec = wav_to_melspec(wav, mel);

  int hits = 0;
  for (int frame = 0; frame < spec.width; ++frame) {
    int argmax = 0;
    float best = -1;
    for (int m = 0; m < spec.n_mels; ++m) {
      if (spec.at(m, frame) > best) {
        best = spec.at(m, frame);
        argmax = m;
      }
    }
    const double u =
        static_cast<double>(frame * mel.hop) / static_cast<double>(len - 1);
    const int expected = nearest_band(fb, mel, t.formant1(u));
    if (std::abs(argmax - expected) <= 1) ++hits;
  }
  CHECK(static_cast<double>(hits) / spec.width >= 0.8);
}

TEST_CASE("render_video: moving blob on a static texture, values in range") {
  SynthConfig cfg;
  SubjectStyle s = SubjectStyle::for_subject(2, 31);
  UtteranceTemplate t = UtteranceTemplate::for_class(1, 0.6);
  TaggedSequence x = render_video(t, s, 32, 32, 8);
  CHECK(x.t == 8);
  for (float v : x.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  // residuals vanish outside a dilated blob trajectory region
  auto res = residual_frames(x);
  const double sigma = 32.0 / 10.0;
  const double cutoff = 3.0 * sigma + 1.0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    const double u0 = static_cast<double>(i) / 7.0;
    const double u1 = static_cast<double>(i + 1) / 7.0;
    auto [cx0, cy0] = blob_position(t, u0, 32, 32);
    auto [cx1, cy1] = blob_position(t, u1, 32, 32);
    for (std::int64_t y = 0; y < 32; ++y) {
      for (std::int64_t xx = 0; xx < 32; ++xx) {
        const double d0 = std::hypot(static_cast<double>(xx) - cx0,
                                     static_cast<double>(y) - cy0);
        const double d1 = std::hypot(static_cast<double>(xx) - cx1,
                                     static_cast<double>(y) - cy1);
        if (d0 > cutoff && d1 > cutoff) {
          CHECK(res[i].data()[static_cast<std::size_t>(y * 32 + xx)] == 0.0f);
        }
      }
    }
  }

  // same utterance, two subjects: identical trajectory, different texture
  SubjectStyle s2 = SubjectStyle::for_subject(3, 31);
  TaggedSequence x2 = render_video(t, s2, 32, 32, 8);
  auto res2 = residual_frames(x2);
  // moving-content locations agree (supports differ only through texture)
  int diff_bg = 0;
  for (std::int64_t j = 0; j < 32 * 32; ++j) {
    if (std::abs(x.data[static_cast<std::size_t>(j)] -
                 x2.data[static_cast<std::size_t>(j)]) > 0.05f) {
      ++diff_bg;
    }
  }
  CHECK(diff_bg > 100);  // textures differ broadly
}

TEST_CASE("sliding_window_augment examples") {
  TaggedSequence x;
  x.t = 2;
  x.h = 2;
  x.w = 2;
  x.data.assign(8, 0.5f);
  Waveform y;
  y.sample_rate = 8000;
  y.samples.assign(24000, 0.1f);
  auto crops = sliding_window_augment(x, y, 21000, 1000);
  CHECK(crops.size() == 4);
  for (auto& [seq, wav] : crops) {
    CHECK(wav.samples.size() == 21000);
    CHECK(seq.t == 2);
  }

  Waveform exact;
  exact.sample_rate = 8000;
  exact.samples.assign(5000, 0.2f);
  auto one = sliding_window_augment(x, exact, 5000, 100);
  CHECK(one.size() == 1);
  CHECK(one[0].second.samples == exact.samples);

  CHECK_THROWS_AS(sliding_window_augment(x, exact, 6000, 100), std::invalid_argument);

  // 100x augmentation factor with stride (L - window) / 99
  Waveform big;
  big.sample_rate = 8000;
  big.samples.assign(24000, 0.0f);
  const std::int64_t stride = (24000 - 21000) / 99;  // 30
  auto many = sliding_window_augment(x, big, 21000, stride);
  CHECK(many.size() == 101);  // stride 30 tiles 3000 inclusive
}

TEST_CASE("make_corpus writes a reloadable, regenerable corpus") {
  auto dir = temp_dir("sq2s_test_corpus");
  SynthConfig cfg;
  cfg.subjects = 3;
  cfg.classes = 2;
  cfg.seed = 4242;
  CorpusManifest m = make_corpus(dir.string(), cfg);
  CHECK(m.items.size() == 6);

  CorpusManifest loaded = CorpusManifest::load((dir / "manifest.tsv").string());
  CHECK(loaded.items.size() == 6);
  std::set<std::pair<int, int>> pairs;
  for (const auto& it : loaded.items) {
    pairs.insert({it.subject_id, it.class_id});
    TaggedSequence seq = load_sequence(loaded.resolve(it.seq_path));
    CHECK(seq.t == cfg.video_t);
    CHECK(seq.h == cfg.video_h);
    Waveform wav = read_wav(loaded.resolve(it.wav_path));
    CHECK(wav.sample_rate == cfg.dsp.sample_rate);
  }
  CHECK(pairs.size() == 6);

  // dsp.cfg carries the corpus reference power
  std::ifstream f((dir / "dsp.cfg").string());
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  MelConfig dsp = MelConfig::parse(text);
  CHECK(dsp.ref_power > 0.0);

  // regeneration from the same seed is bit-identical
  auto dir2 = temp_dir("sq2s_test_corpus2");
  make_corpus(dir2.string(), cfg);
  for (const auto& it : loaded.items) {
    for (const std::string& rel : {it.seq_path, it.wav_path}) {
      std::ifstream a(loaded.resolve(rel), std::ios::binary);
      std::ifstream b((dir2 / rel).string(), std::ios::binary);
      std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
      std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
      CHECK(sa == sb);
    }
  }
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("sample_training_pair honors p_same") {
  auto dir = temp_dir("sq2s_test_corpus3");
  SynthConfig cfg;
  cfg.subjects = 4;
  cfg.classes = 2;
  cfg.video_t = 2;
  cfg.video_h = 8;
  cfg.video_w = 8;
  CorpusManifest m = make_corpus(dir.string(), cfg);

  Rng rng1(5);
  for (int i = 0; i < 50; ++i) {
    PairSample p = sample_training_pair(m, rng1, 1.0);
    CHECK(p.same_utterance);
    CHECK(m.items[p.first].class_id == m.items[p.second].class_id);
    CHECK(m.items[p.first].subject_id != m.items[p.second].subject_id);
  }
  Rng rng2(6);
  for (int i = 0; i < 50; ++i) {
    PairSample p = sample_training_pair(m, rng2, 0.0);
    CHECK(!p.same_utterance);
    CHECK(m.items[p.first].class_id != m.items[p.second].class_id);
  }
  // empirical rate over 10^4 draws within +-0.02
  Rng rng3(7);
  int same = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    if (sample_training_pair(m, rng3, 0.5).same_utterance) ++same;
  }
  CHECK(std::abs(static_cast<double>(same) / draws - 0.5) < 0.02);
  std::filesystem::remove_all(dir);
}

TEST_CASE("formant trajectories are smooth") {
  for (int cls = 0; cls < 2; ++cls) {
    UtteranceTemplate t = UtteranceTemplate::for_class(cls, 0.6);
    const int steps = 200;
    for (int i = 1; i <= steps; ++i) {
      const double u0 = static_cast<double>(i - 1) / steps;
      const double u1 = static_cast<double>(i) / steps;
      CHECK(std::abs(t.formant1(u1) - t.formant1(u0)) < 15.0);
      CHECK(std::abs(t.formant2(u1) - t.formant2(u0)) < 15.0);
    }
  }
}
