// sq2s/dsp.hpp
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

// Waveform <-> normalized log-mel spectrogram bridge. The forward direction
// is Hann STFT -> power -> triangular mel filterbank -> dB -> [0,1]; the
// inverse is a clamped pseudo-inverse of the filterbank followed by
// Griffin-Lim phase recovery. All functions are pure and thread-safe.

#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "sq2s/common.hpp"

namespace sq2s {

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 8000;
};

struct MelConfig {
  int sample_rate = 8000;
  int n_fft = 256;  // power of two
  int hop = 128;
  int n_mels = 32;
  int width = 32;  // time frames; output is cropped/zero-padded to this
  double fmin = 0.0;
  double fmax = 4000.0;
  double db_floor = -80.0;
  double db_ceil = 0.0;
  // dB reference power; per-corpus max power when built by gen-data,
  // otherwise the pinned desk-scale default.
  double ref_power = 400.0;

  // Audio length that fills exactly `width` frames.
  std::int64_t frame_aligned_length() const {
    return static_cast<std::int64_t>(width - 1) * hop + n_fft;
  }

  static MelConfig desk();
  static MelConfig paper_scale();

  std::string serialize() const;
  static MelConfig parse(const std::string& text);
};

struct MelSpec {
  int n_mels = 0;
  int width = 0;
  std::vector<float> values;  // [n_mels][width] row-major, in [0,1]
  MelConfig meta;

  float at(int m, int t) const {
    return values[static_cast<std::size_t>(m) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(t)];
  }
};

// n_mels x (n_fft/2 + 1) triangular filters, peak 1, centers equally spaced
// on the mel axis between fmin and fmax.
struct MelFilterbank {
  int n_mels = 0;
  int n_bins = 0;
  std::vector<double> weights;  // [n_mels][n_bins]

  double at(int m, int k) const {
    return weights[static_cast<std::size_t>(m) * static_cast<std::size_t>(n_bins) +
                   static_cast<std::size_t>(k)];
  }
};

// Magnitude short-time spectrum, [n_bins][frames].
struct Spectrogram {
  int n_bins = 0;
  int frames = 0;
  std::vector<double> mag;

  double at(int k, int t) const {
    return mag[static_cast<std::size_t>(k) * static_cast<std::size_t>(frames) +
               static_cast<std::size_t>(t)];
  }
};

struct GriffinLimResult {
  Waveform wav;
  // Spectral-convergence error per iteration, non-increasing.
  std::vector<double> convergence;
};

// HTK mel scale: 2595 * log10(1 + f/700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

MelFilterbank make_mel_filterbank(const MelConfig& cfg);

// In-place radix-2 complex FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse);

enum class StftWindow { kHann, kRect };

Spectrogram stft_magnitude(const Waveform& w, int n_fft, int hop,
                           StftWindow window = StftWindow::kHann);

MelSpec wav_to_melspec(const Waveform& w, const MelConfig& cfg);

Waveform melspec_to_wav(const MelSpec& s, const MelConfig& cfg,
                        int gl_iters = 32, std::uint64_t phase_seed = 0);

GriffinLimResult griffin_lim(const Spectrogram& mag, int n_fft, int hop,
                             int iters, int sample_rate,
                             std::uint64_t phase_seed = 0);

// Raw (pre-dB) mel power grid; used by gen-data to find the corpus max power.
std::vector<double> mel_power_frames(const Waveform& w, const MelConfig& cfg,
                                     const MelFilterbank& fb);

// --- file I/O -------------------------------------------------------------

// PCM 16-bit mono little-endian. Anything else raises UsageError.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

// 8-bit binary PGM (P5); one byte per cell, rows are mel bands.
void write_pgm(const std::string& path, const MelSpec& s);
MelSpec read_pgm(const std::string& path, const MelConfig& cfg);

}  // namespace sq2s
