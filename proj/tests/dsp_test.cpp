// tests/dsp_test.cpp
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
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sq2s/common.hpp"
#include "sq2s/dsp.hpp"

using namespace sq2s;

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform sine(const MelConfig& cfg, double freq, double amp,
              std::int64_t len = 0) {
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  if (len == 0) len = cfg.frame_aligned_length();
  w.samples.resize(static_cast<std::size_t>(len));
  for (std::int64_t i = 0; i < len; ++i) {
    w.samples[static_cast<std::size_t>(i)] = static_cast<float>(
        amp * std::sin(2.0 * kPi * freq * i / cfg.sample_rate));
  }
  return w;
}

// 3-harmonic synthetic vowel with a fade envelope.
Waveform vowel(const MelConfig& cfg, double f0, double amp) {
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  const std::int64_t n = cfg.frame_aligned_length();
  w.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate;
    const double v = amp * (std::sin(2 * kPi * f0 * t) +
                            0.5 * std::sin(2 * kPi * 2 * f0 * t) +
                            0.25 * std::sin(2 * kPi * 3 * f0 * t));
    const double env = std::sin(kPi * static_cast<double>(i) / static_cast<double>(n));
    w.samples[static_cast<std::size_t>(i)] = static_cast<float>(v * env);
  }
  return w;
}

double corr2d_flat(const std::vector<float>& a, const std::vector<float>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("hz_to_mel closed forms and round trip") {
  CHECK(hz_to_mel(0.0) == doctest::Approx(0.0));
  CHECK(hz_to_mel(1000.0) == doctest::Approx(999.9855371396).epsilon(1e-9));
  CHECK(mel_to_hz(hz_to_mel(440.0)) == doctest::Approx(440.0).epsilon(1e-6));
  CHECK_THROWS_AS(hz_to_mel(-1.0), std::invalid_argument);
  // bijective on [0, sr/2]
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const double f = rng.uniform(0.0, 4000.0);
    CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f).epsilon(1e-9));
  }
}

TEST_CASE("fft matches a naive DFT") {
  Rng rng(9);
  const int n = 64;
  std::vector<std::complex<double>> a(n);
  for (auto& v : a) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  auto naive = [&](int k) {
    std::complex<double> s{0, 0};
    for (int i = 0; i < n; ++i) {
      const double ang = -2.0 * kPi * k * i / n;
      s += a[static_cast<std::size_t>(i)] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    return s;
  };
  std::vector<std::complex<double>> expect(n);
  for (int k = 0; k < n; ++k) expect[static_cast<std::size_t>(k)] = naive(k);
  auto b = a;
  fft_radix2(b, false);
  for (int k = 0; k < n; ++k) {
    CHECK(std::abs(b[static_cast<std::size_t>(k)] - expect[static_cast<std::size_t>(k)]) < 1e-9);
  }
  fft_radix2(b, true);
  for (int k = 0; k < n; ++k) {
    CHECK(std::abs(b[static_cast<std::size_t>(k)] - a[static_cast<std::size_t>(k)]) < 1e-12);
  }
  std::vector<std::complex<double>> bad(3);
  CHECK_THROWS_AS(fft_radix2(bad, false), std::invalid_argument);
}

TEST_CASE("stft of silence is zero and short input throws") {
  MelConfig cfg = MelConfig::desk();
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.assign(1024, 0.0f);
  Spectrogram s = stft_magnitude(w, cfg.n_fft, cfg.hop);
  for (double v : s.mag) CHECK(v == 0.0);
  w.samples.resize(100);  // < n_fft
  CHECK_THROWS_AS(stft_magnitude(w, cfg.n_fft, cfg.hop), UsageError);
}

TEST_CASE("stft concentrates a bin-centered sine at bin k") {
  MelConfig cfg = MelConfig::desk();
  const int k = 16;
  const double freq = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
  Waveform w = sine(cfg, freq, 0.5, 4 * cfg.n_fft);

  // rectangular window: all energy lands exactly on bin k
  Spectrogram sr = stft_magnitude(w, cfg.n_fft, cfg.hop, StftWindow::kRect);
  double tot_r = 0, at_r = 0;
  for (int b = 0; b < sr.n_bins; ++b) {
    const double e = sr.at(b, 1) * sr.at(b, 1) * (b == 0 || b == sr.n_bins - 1 ? 1 : 2);
    tot_r += e;
    if (b == k) at_r += e;
  }
  CHECK(at_r / tot_r > 0.999);

  // Hann window: main lobe spans bins k-1..k+1
  Spectrogram sh = stft_magnitude(w, cfg.n_fft, cfg.hop, StftWindow::kHann);
  double tot = 0, lobe = 0;
  int argmax = -1;
  double best = -1;
  for (int b = 0; b < sh.n_bins; ++b) {
    const double e = sh.at(b, 1) * sh.at(b, 1) * (b == 0 || b == sh.n_bins - 1 ? 1 : 2);
    tot += e;
    if (b >= k - 1 && b <= k + 1) lobe += e;
    if (e > best) {
      best = e;
      argmax = b;
    }
  }
  CHECK(argmax == k);
  CHECK(lobe / tot > 0.9);
}

TEST_CASE("stft frame energy satisfies Parseval within 1 percent") {
  MelConfig cfg = MelConfig::desk();
  Rng rng(21);
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(static_cast<std::size_t>(cfg.n_fft));
  for (auto& v : w.samples) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  Spectrogram s = stft_magnitude(w, cfg.n_fft, cfg.n_fft);
  // spectral energy of the full spectrum via conjugate symmetry
  double spec_e = 0;
  for (int b = 0; b < s.n_bins; ++b) {
    const double e = s.at(b, 0) * s.at(b, 0);
    spec_e += (b == 0 || b == s.n_bins - 1) ? e : 2 * e;
  }
  // windowed time-domain energy scaled by n_fft
  double time_e = 0;
  for (int i = 0; i < cfg.n_fft; ++i) {
    const double win = 0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.n_fft);
    const double x = static_cast<double>(w.samples[static_cast<std::size_t>(i)]) * win;
    time_e += x * x;
  }
  time_e *= cfg.n_fft;
  CHECK(spec_e == doctest::Approx(time_e).epsilon(0.01));
}

TEST_CASE("mel filterbank invariants") {
  MelConfig cfg = MelConfig::desk();
  MelFilterbank fb = make_mel_filterbank(cfg);
  CHECK(fb.n_mels == cfg.n_mels);
  CHECK(fb.n_bins == cfg.n_fft / 2 + 1);
  // rows sum positive, unimodal triangles
  for (int m = 0; m < fb.n_mels; ++m) {
    double sum = 0;
    int rises = 0, falls = 0;
    bool falling = false;
    for (int k = 0; k < fb.n_bins; ++k) {
      sum += fb.at(m, k);
      if (k > 0) {
        const double d = fb.at(m, k) - fb.at(m, k - 1);
        if (d > 1e-12) {
          CHECK(!falling);  // never rises again after falling
          ++rises;
        } else if (d < -1e-12) {
          falling = true;
          ++falls;
        }
      }
    }
    CHECK(sum > 0.0);
    CHECK(rises > 0);
    CHECK(falls > 0);
  }
  // every strictly interior bin is covered by some filter
  for (int k = 0; k < fb.n_bins; ++k) {
    const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
    if (f <= cfg.fmin || f >= cfg.fmax) {
      for (int m = 0; m < fb.n_mels; ++m) CHECK(fb.at(m, k) == 0.0);
    } else {
      double cover = 0;
      for (int m = 0; m < fb.n_mels; ++m) cover += fb.at(m, k);
      CHECK(cover > 0.0);
    }
  }
}

TEST_CASE("wav_to_melspec: silence, shapes, band tracking, range") {
  MelConfig cfg = MelConfig::desk();
  Waveform silence;
  silence.sample_rate = cfg.sample_rate;
  silence.samples.assign(static_cast<std::size_t>(cfg.frame_aligned_length()), 0.0f);
  MelSpec s0 = wav_to_melspec(silence, cfg);
  CHECK(s0.n_mels == 32);
  CHECK(s0.width == 32);
  for (float v : s0.values) CHECK(v == 0.0f);

  // sine at the center frequency of band 8 has its row argmax there
  const double center = 476.6395576048055;  // desk filterbank center of band 8
  Waveform w = sine(cfg, center, 0.3);
  MelSpec s = wav_to_melspec(w, cfg);
  int best = -1;
  double best_e = -1;
  for (int m = 0; m < s.n_mels; ++m) {
    double e = 0;
    for (int t = 0; t < s.width; ++t) e += s.at(m, t);
    if (e > best_e) {
      best_e = e;
      best = m;
    }
  }
  CHECK(best == 8);
  for (float v : s.values) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  // paper scale shape
  MelConfig pc = MelConfig::paper_scale();
  Waveform wp = vowel(pc, 220.0, 0.3);
  MelSpec sp = wav_to_melspec(wp, pc);
  CHECK(sp.n_mels == 64);
  CHECK(sp.width == 64);

  // sample-rate mismatch is a usage error
  Waveform bad = w;
  bad.sample_rate = 44100;
  CHECK_THROWS_AS(wav_to_melspec(bad, cfg), UsageError);
}

TEST_CASE("melspec output stays in [0,1] for random waveforms") {
  MelConfig cfg = MelConfig::desk();
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Waveform w;
    w.sample_rate = cfg.sample_rate;
    w.samples.resize(static_cast<std::size_t>(cfg.frame_aligned_length()));
    for (auto& v : w.samples) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    MelSpec s = wav_to_melspec(w, cfg);
    for (float v : s.values) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("dsp round trip reaches Corr2D >= 0.90 on the synthetic vowel") {
  MelConfig cfg = MelConfig::desk();
  Waveform w = vowel(cfg, 220.0, 0.3);
  MelSpec m1 = wav_to_melspec(w, cfg);
  Waveform w2 = melspec_to_wav(m1, cfg, 32, 7);
  CHECK(w2.samples.size() == static_cast<std::size_t>(cfg.frame_aligned_length()));
  MelSpec m2 = wav_to_melspec(w2, cfg);
  CHECK(corr2d_flat(m1.values, m2.values) >= 0.90);
}

TEST_CASE("all-zero melspec inverts to a near-silent waveform") {
  MelConfig cfg = MelConfig::desk();
  MelSpec s;
  s.n_mels = cfg.n_mels;
  s.width = cfg.width;
  s.meta = cfg;
  s.values.assign(static_cast<std::size_t>(s.n_mels) * static_cast<std::size_t>(s.width), 0.0f);
  Waveform w = melspec_to_wav(s, cfg, 8, 3);
  double rms = 0;
  for (float v : w.samples) rms += static_cast<double>(v) * v;
  rms = std::sqrt(rms / static_cast<double>(w.samples.size()));
  CHECK(rms < 1e-3);
}

TEST_CASE("griffin-lim: monotone convergence, determinism, self-reconstruction") {
  MelConfig cfg = MelConfig::desk();
  Waveform w = vowel(cfg, 220.0, 0.3);
  Spectrogram mag = stft_magnitude(w, cfg.n_fft, cfg.hop);
  GriffinLimResult gl = griffin_lim(mag, cfg.n_fft, cfg.hop, 32, cfg.sample_rate, 7);
  REQUIRE(gl.convergence.size() == 32);
  for (std::size_t i = 1; i < gl.convergence.size(); ++i) {
    CHECK(gl.convergence[i] <= gl.convergence[i - 1] * (1.0 + 1e-9) + 1e-12);
  }
  // spectral reconstruction SNR from the waveform's own magnitudes
  Spectrogram mag2 = stft_magnitude(gl.wav, cfg.n_fft, cfg.hop);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < mag.mag.size(); ++i) {
    const double d = mag.mag[i] - mag2.mag[i];
    num += d * d;
    den += mag.mag[i] * mag.mag[i];
  }
  CHECK(10.0 * std::log10(den / num) > 10.0);

  GriffinLimResult gl2 = griffin_lim(mag, cfg.n_fft, cfg.hop, 32, cfg.sample_rate, 7);
  CHECK(gl.wav.samples == gl2.wav.samples);  // deterministic given the seed

  // monotone convergence holds on an arbitrary (inconsistent) magnitude too
  Rng rng(13);
  Spectrogram randmag;
  randmag.n_bins = cfg.n_fft / 2 + 1;
  randmag.frames = 8;
  randmag.mag.resize(static_cast<std::size_t>(randmag.n_bins) * 8);
  for (auto& v : randmag.mag) v = rng.uniform(0.0, 1.0);
  GriffinLimResult glr = griffin_lim(randmag, cfg.n_fft, cfg.hop, 16, cfg.sample_rate, 11);
  for (std::size_t i = 1; i < glr.convergence.size(); ++i) {
    CHECK(glr.convergence[i] <= glr.convergence[i - 1] * (1.0 + 1e-9) + 1e-12);
  }
  CHECK_THROWS_AS(griffin_lim(mag, cfg.n_fft, cfg.hop, 0, cfg.sample_rate, 1),
                  std::invalid_argument);
}

TEST_CASE("wav file round trip and format rejection") {
  MelConfig cfg = MelConfig::desk();
  Waveform w = vowel(cfg, 180.0, 0.4);
  const auto path = temp_file("sq2s_test_roundtrip.wav");
  write_wav(path.string(), w);
  Waveform r = read_wav(path.string());
  CHECK(r.sample_rate == w.sample_rate);
  REQUIRE(r.samples.size() == w.samples.size());
  double max_err = 0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    max_err = std::max(max_err, std::abs(static_cast<double>(w.samples[i]) - r.samples[i]));
  }
  CHECK(max_err < 1.0 / 32000.0);  // 16-bit quantization
  std::filesystem::remove(path);

  // stereo header is rejected
  const auto bad_path = temp_file("sq2s_test_stereo.wav");
  {
    std::ofstream f(bad_path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<char*>(&v), 2); };
    f.write("RIFF", 4);
    u32(36 + 8);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(2);  // stereo
    u32(8000);
    u32(32000);
    u16(4);
    u16(16);
    f.write("data", 4);
    u32(8);
    for (int i = 0; i < 4; ++i) u16(0);
  }
  CHECK_THROWS_AS(read_wav(bad_path.string()), UsageError);
  std::filesystem::remove(bad_path);

  CHECK_THROWS_AS(read_wav("/nonexistent/definitely_missing.wav"), UsageError);
}

TEST_CASE("pgm round trip preserves values to 8-bit precision") {
  MelConfig cfg = MelConfig::desk();
  Waveform w = vowel(cfg, 220.0, 0.3);
  MelSpec s = wav_to_melspec(w, cfg);
  const auto path = temp_file("sq2s_test_spec.pgm");
  write_pgm(path.string(), s);
  MelSpec r = read_pgm(path.string(), cfg);
  CHECK(r.n_mels == s.n_mels);
  CHECK(r.width == s.width);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    CHECK(std::abs(s.values[i] - r.values[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  std::filesystem::remove(path);

  MelConfig other = cfg;
  other.n_mels = 16;
  write_pgm(path.string(), s);
  CHECK_THROWS_AS(read_pgm(path.string(), other), UsageError);
  std::filesystem::remove(path);
}

TEST_CASE("mel config text round trip") {
  MelConfig cfg = MelConfig::paper_scale();
  cfg.ref_power = 1234.5;
  MelConfig back = MelConfig::parse(cfg.serialize());
  CHECK(back.sample_rate == cfg.sample_rate);
  CHECK(back.n_fft == cfg.n_fft);
  CHECK(back.hop == cfg.hop);
  CHECK(back.n_mels == cfg.n_mels);
  CHECK(back.width == cfg.width);
  CHECK(back.ref_power == doctest::Approx(cfg.ref_power));
  CHECK_THROWS_AS(MelConfig::parse("bogus_key=1\n"), UsageError);
  CHECK_THROWS_AS(MelConfig::parse("n_fft=100\n"), std::invalid_argument);
}
