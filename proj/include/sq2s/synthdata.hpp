// sq2s/synthdata.hpp
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

// Deterministic paired synthetic corpus: each item is a tagged-style video
// (static stripe texture plus one moving blob) and the audio whose two
// formants the blob position encodes. Utterance classes share formant
// trajectories across subjects; subjects differ in pitch, envelope, and
// texture. The video->audio map is a pure function of (template, style), so
// the learning problem is well-posed by construction.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sq2s/dsp.hpp"
#include "sq2s/translator.hpp"

namespace sq2s {

struct UtteranceTemplate {
  int class_id = 0;
  double duration = 0.6;  // seconds
  // two formant trajectories, smooth in normalized time u in [0,1]
  double f1_start = 0, f1_end = 0, f1_wobble = 0;
  double f2_start = 0, f2_end = 0, f2_wobble = 0;

  double formant1(double u) const;
  double formant2(double u) const;

  static UtteranceTemplate for_class(int class_id, double duration);
};

struct SubjectStyle {
  double pitch_base = 140.0;  // Hz, within [80, 300]
  double attack = 0.15;       // envelope rise fraction
  double release = 0.2;       // envelope fall fraction
  double amplitude = 0.4;     // peak amplitude target
  std::uint64_t texture_seed = 0;

  static SubjectStyle for_subject(int subject_id, std::uint64_t corpus_seed);
};

struct CorpusItem {
  int subject_id = 0;
  int class_id = 0;
  std::uint64_t seed = 0;
  std::string seq_path;  // relative to the manifest directory
  std::string wav_path;
};

struct CorpusManifest {
  std::vector<CorpusItem> items;
  std::string dir;  // set on load; resolution base for relative paths

  void save(const std::string& path) const;
  static CorpusManifest load(const std::string& path);

  std::string resolve(const std::string& rel) const;
};

struct SynthConfig {
  int subjects = 8;
  int classes = 2;
  std::uint64_t seed = 1234;
  MelConfig dsp = MelConfig::desk();
  // video geometry
  std::int64_t video_t = 8, video_h = 32, video_w = 32;
  // extra audio beyond one mel window, in hops, for sliding-window crops
  int margin_hops = 8;
};

// Harmonic source at the subject pitch shaped by the two formant resonances;
// deterministic, no RNG.
Waveform render_audio(const UtteranceTemplate& t, const SubjectStyle& s,
                      int sample_rate, std::int64_t length);

// Static stripe texture plus a truncated-Gaussian blob whose position
// encodes (formant1, formant2) at each frame's normalized time.
TaggedSequence render_video(const UtteranceTemplate& t, const SubjectStyle& s,
                            std::int64_t h, std::int64_t w, std::int64_t frames);

// Formant-to-pixel map used by render_video; exposed for tests.
std::pair<double, double> blob_position(const UtteranceTemplate& t, double u,
                                        std::int64_t h, std::int64_t w);

// Audio crops of fixed window length at the given stride, each paired with
// the full unmodified sequence.
std::vector<std::pair<TaggedSequence, Waveform>> sliding_window_augment(
    const TaggedSequence& x, const Waveform& y, std::int64_t window,
    std::int64_t stride);

// Renders subjects x classes items under dir, writes manifest.tsv and
// dsp.cfg (ref_power set to the corpus max mel power).
CorpusManifest make_corpus(const std::string& dir, const SynthConfig& cfg);

// Indices into manifest.items plus the same-utterance flag.
struct PairSample {
  std::size_t first = 0;
  std::size_t second = 0;
  bool same_utterance = false;
};

PairSample sample_training_pair(const CorpusManifest& manifest, Rng& rng,
                                double p_same);

TaggedSequence load_sequence(const std::string& path);
void save_sequence(const std::string& path, const TaggedSequence& x);

}  // namespace sq2s
