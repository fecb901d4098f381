// src/dsp.cpp
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

#include "sq2s/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sq2s {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void validate_cfg(const MelConfig& cfg) {
  if (!is_pow2(cfg.n_fft)) {
    throw std::invalid_argument("mel config: n_fft must be a power of two, got " +
                                std::to_string(cfg.n_fft));
  }
  if (cfg.hop < 1 || cfg.n_mels < 1 || cfg.width < 1 || cfg.sample_rate < 1) {
    throw std::invalid_argument("mel config: non-positive field");
  }
  if (cfg.fmin < 0.0 || cfg.fmax <= cfg.fmin ||
      cfg.fmax > cfg.sample_rate / 2.0 + 1e-9) {
    throw std::invalid_argument("mel config: need 0 <= fmin < fmax <= sr/2");
  }
  if (cfg.db_ceil <= cfg.db_floor) {
    throw std::invalid_argument("mel config: db_ceil must exceed db_floor");
  }
  if (cfg.ref_power <= 0.0) {
    throw std::invalid_argument("mel config: ref_power must be positive");
  }
}

std::vector<double> make_window(int n, StftWindow window) {
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (window == StftWindow::kHann) {
    for (int i = 0; i < n; ++i) {
      w[static_cast<std::size_t>(i)] =
          0.5 - 0.5 * std::cos(2.0 * kPi * i / n);  // periodic Hann
    }
  }
  return w;
}

struct ComplexStft {
  int n_bins = 0;
  int frames = 0;
  std::vector<std::complex<double>> c;  // [n_bins][frames]

  std::complex<double>& at(int k, int t) {
    return c[static_cast<std::size_t>(k) * static_cast<std::size_t>(frames) +
             static_cast<std::size_t>(t)];
  }
  std::complex<double> at(int k, int t) const {
    return c[static_cast<std::size_t>(k) * static_cast<std::size_t>(frames) +
             static_cast<std::size_t>(t)];
  }
};

ComplexStft stft_complex(const std::vector<float>& samples, int n_fft, int hop,
                         StftWindow window) {
  if (static_cast<int>(samples.size()) < n_fft) {
    throw UsageError("stft: waveform shorter than n_fft (" +
                     std::to_string(samples.size()) + " < " +
                     std::to_string(n_fft) + ")");
  }
  const int frames =
      1 + static_cast<int>((samples.size() - static_cast<std::size_t>(n_fft)) /
                           static_cast<std::size_t>(hop));
  const int n_bins = n_fft / 2 + 1;
  const std::vector<double> win = make_window(n_fft, window);
  ComplexStft out;
  out.n_bins = n_bins;
  out.frames = frames;
  out.c.assign(static_cast<std::size_t>(n_bins) * static_cast<std::size_t>(frames),
               {0.0, 0.0});
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
  for (int t = 0; t < frames; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
    for (int i = 0; i < n_fft; ++i) {
      buf[static_cast<std::size_t>(i)] = {
          static_cast<double>(samples[base + static_cast<std::size_t>(i)]) *
              win[static_cast<std::size_t>(i)],
          0.0};
    }
    fft_radix2(buf, false);
    for (int k = 0; k < n_bins; ++k) out.at(k, t) = buf[static_cast<std::size_t>(k)];
  }
  return out;
}

// Least-squares inverse STFT: windowed overlap-add normalized by the window
// square sum.
std::vector<float> istft(const ComplexStft& s, int n_fft, int hop,
                         StftWindow window) {
  const int frames = s.frames;
  const std::size_t len =
      static_cast<std::size_t>(frames - 1) * static_cast<std::size_t>(hop) +
      static_cast<std::size_t>(n_fft);
  const std::vector<double> win = make_window(n_fft, window);
  std::vector<double> num(len, 0.0), den(len, 0.0);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < s.n_bins; ++k) buf[static_cast<std::size_t>(k)] = s.at(k, t);
    for (int k = s.n_bins; k < n_fft; ++k) {
      buf[static_cast<std::size_t>(k)] = std::conj(s.at(n_fft - k, t));
    }
    fft_radix2(buf, true);
    const std::size_t base = static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
    for (int i = 0; i < n_fft; ++i) {
      const double w = win[static_cast<std::size_t>(i)];
      num[base + static_cast<std::size_t>(i)] +=
          w * buf[static_cast<std::size_t>(i)].real();
      den[base + static_cast<std::size_t>(i)] += w * w;
    }
  }
  std::vector<float> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    out[i] = static_cast<float>(num[i] / std::max(den[i], 1e-8));
  }
  return out;
}

// Non-negative least-squares mel inversion: solve min ||F s - m||^2, s >= 0
// per frame by projected gradient, started from the zero-clamped
// Moore-Penrose pseudo-inverse (F^T (F F^T)^{-1} m). The clamped pinv alone
// leaves a visible reprojection error; the refinement removes it.
class MelInverter {
 public:
  static constexpr int kPgdIters = 200;

  explicit MelInverter(const MelFilterbank& fb) : fb_(fb), chol_(sq(fb.n_mels)) {
    const int m = fb.n_mels;
    std::vector<double> gram(sq(m), 0.0);
    for (int a = 0; a < m; ++a) {
      for (int b = a; b < m; ++b) {
        double s = 0.0;
        for (int k = 0; k < fb.n_bins; ++k) s += fb.at(a, k) * fb.at(b, k);
        gram[idx(a, b)] = s;
        gram[idx(b, a)] = s;
      }
    }
    double trace = 0.0;
    for (int a = 0; a < m; ++a) trace += gram[idx(a, a)];
    const double jitter = 1e-10 * trace / m;
    for (int a = 0; a < m; ++a) gram[idx(a, a)] += jitter;
    // lower-triangular Cholesky factor
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b <= a; ++b) {
        double s = gram[idx(a, b)];
        for (int c = 0; c < b; ++c) s -= chol_[idx(a, c)] * chol_[idx(b, c)];
        if (a == b) {
          if (s <= 0.0) throw std::runtime_error("mel inversion: filterbank gram not SPD");
          chol_[idx(a, a)] = std::sqrt(s);
        } else {
          chol_[idx(a, b)] = s / chol_[idx(b, b)];
        }
      }
    }
    // power iteration for the gradient step size 1/lambda_max(F F^T)
    std::vector<double> v(static_cast<std::size_t>(m), 1.0);
    double lmax = 1.0;
    for (int it = 0; it < 64; ++it) {
      std::vector<double> gv(static_cast<std::size_t>(m), 0.0);
      for (int a = 0; a < m; ++a) {
        double s = 0.0;
        for (int b = 0; b < m; ++b) s += gram[idx(a, b)] * v[static_cast<std::size_t>(b)];
        gv[static_cast<std::size_t>(a)] = s;
      }
      double norm = 0.0;
      for (double x : gv) norm += x * x;
      norm = std::sqrt(norm);
      if (norm <= 0.0) break;
      for (int a = 0; a < m; ++a) v[static_cast<std::size_t>(a)] = gv[static_cast<std::size_t>(a)] / norm;
      lmax = norm;
    }
    step_ = 1.0 / lmax;
  }

  // mel_power[m] -> spec_power[k], non-negative.
  std::vector<double> invert_frame(const std::vector<double>& mel_power) const {
    const int m = fb_.n_mels;
    const int kbins = fb_.n_bins;
    std::vector<double> z(static_cast<std::size_t>(m));
    for (int a = 0; a < m; ++a) {
      double s = mel_power[static_cast<std::size_t>(a)];
      for (int c = 0; c < a; ++c) s -= chol_[idx(a, c)] * z[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(a)] = s / chol_[idx(a, a)];
    }
    for (int a = m - 1; a >= 0; --a) {
      double s = z[static_cast<std::size_t>(a)];
      for (int c = a + 1; c < m; ++c) s -= chol_[idx(c, a)] * z[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(a)] = s / chol_[idx(a, a)];
    }
    std::vector<double> spec(static_cast<std::size_t>(kbins), 0.0);
    for (int k = 0; k < kbins; ++k) {
      double s = 0.0;
      for (int a = 0; a < m; ++a) s += fb_.at(a, k) * z[static_cast<std::size_t>(a)];
      spec[static_cast<std::size_t>(k)] = std::max(0.0, s);
    }
    std::vector<double> resid(static_cast<std::size_t>(m));
    for (int it = 0; it < kPgdIters; ++it) {
      for (int a = 0; a < m; ++a) {
        double s = 0.0;
        for (int k = 0; k < kbins; ++k) s += fb_.at(a, k) * spec[static_cast<std::size_t>(k)];
        resid[static_cast<std::size_t>(a)] = s - mel_power[static_cast<std::size_t>(a)];
      }
      for (int k = 0; k < kbins; ++k) {
        double g = 0.0;
        for (int a = 0; a < m; ++a) g += fb_.at(a, k) * resid[static_cast<std::size_t>(a)];
        spec[static_cast<std::size_t>(k)] =
            std::max(0.0, spec[static_cast<std::size_t>(k)] - step_ * g);
      }
    }
    return spec;
  }

 private:
  static std::size_t sq(int m) {
    return static_cast<std::size_t>(m) * static_cast<std::size_t>(m);
  }
  std::size_t idx(int a, int b) const {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(fb_.n_mels) +
           static_cast<std::size_t>(b);
  }
  MelFilterbank fb_;
  std::vector<double> chol_;
  double step_ = 0.1;
};

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

double hz_to_mel(double hz) {
  if (hz < 0.0) throw std::invalid_argument("hz_to_mel: negative frequency");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
  if (mel < 0.0) throw std::invalid_argument("mel_to_hz: negative mel");
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("fft: size must be a power of two, got " +
                                std::to_string(n));
  }
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

MelFilterbank make_mel_filterbank(const MelConfig& cfg) {
  validate_cfg(cfg);
  const int n_bins = cfg.n_fft / 2 + 1;
  MelFilterbank fb;
  fb.n_mels = cfg.n_mels;
  fb.n_bins = n_bins;
  fb.weights.assign(
      static_cast<std::size_t>(cfg.n_mels) * static_cast<std::size_t>(n_bins), 0.0);
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> pts(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    pts[static_cast<std::size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  }
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double fl = pts[static_cast<std::size_t>(m)];
    const double fc = pts[static_cast<std::size_t>(m) + 1];
    const double fr = pts[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > fl && f < fr) {
        w = f <= fc ? (f - fl) / (fc - fl) : (fr - f) / (fr - fc);
      }
      fb.weights[static_cast<std::size_t>(m) * static_cast<std::size_t>(n_bins) +
                 static_cast<std::size_t>(k)] = w;
    }
  }
  return fb;
}

Spectrogram stft_magnitude(const Waveform& w, int n_fft, int hop,
                           StftWindow window) {
  if (!is_pow2(n_fft)) {
    throw std::invalid_argument("stft: n_fft must be a power of two");
  }
  if (hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
  ComplexStft c = stft_complex(w.samples, n_fft, hop, window);
  Spectrogram out;
  out.n_bins = c.n_bins;
  out.frames = c.frames;
  out.mag.resize(c.c.size());
  for (std::size_t i = 0; i < c.c.size(); ++i) out.mag[i] = std::abs(c.c[i]);
  return out;
}

std::vector<double> mel_power_frames(const Waveform& w, const MelConfig& cfg,
                                     const MelFilterbank& fb) {
  Spectrogram s = stft_magnitude(w, cfg.n_fft, cfg.hop, StftWindow::kHann);
  std::vector<double> mel(
      static_cast<std::size_t>(cfg.n_mels) * static_cast<std::size_t>(s.frames), 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    for (int t = 0; t < s.frames; ++t) {
      double p = 0.0;
      for (int k = 0; k < s.n_bins; ++k) {
        const double a = s.at(k, t);
        p += fb.at(m, k) * a * a;
      }
      mel[static_cast<std::size_t>(m) * static_cast<std::size_t>(s.frames) +
          static_cast<std::size_t>(t)] = p;
    }
  }
  return mel;
}

MelSpec wav_to_melspec(const Waveform& w, const MelConfig& cfg) {
  validate_cfg(cfg);
  if (w.sample_rate != cfg.sample_rate) {
    throw UsageError("wav_to_melspec: waveform sample rate " +
                     std::to_string(w.sample_rate) + " differs from config " +
                     std::to_string(cfg.sample_rate));
  }
  MelFilterbank fb = make_mel_filterbank(cfg);
  std::vector<double> mel = mel_power_frames(w, cfg, fb);
  const int frames = static_cast<int>(mel.size() / static_cast<std::size_t>(cfg.n_mels));
  MelSpec out;
  out.n_mels = cfg.n_mels;
  out.width = cfg.width;
  out.meta = cfg;
  out.values.assign(
      static_cast<std::size_t>(cfg.n_mels) * static_cast<std::size_t>(cfg.width), 0.0f);
  const double p_floor = cfg.ref_power * std::pow(10.0, cfg.db_floor / 10.0);
  const int t_lim = std::min(cfg.width, frames);
  for (int m = 0; m < cfg.n_mels; ++m) {
    for (int t = 0; t < t_lim; ++t) {
      const double p = mel[static_cast<std::size_t>(m) * static_cast<std::size_t>(frames) +
                           static_cast<std::size_t>(t)];
      const double db = 10.0 * std::log10(std::max(p, p_floor) / cfg.ref_power);
      double v = (db - cfg.db_floor) / (cfg.db_ceil - cfg.db_floor);
      v = std::min(1.0, std::max(0.0, v));
      out.values[static_cast<std::size_t>(m) * static_cast<std::size_t>(cfg.width) +
                 static_cast<std::size_t>(t)] = static_cast<float>(v);
    }
  }
  return out;
}

GriffinLimResult griffin_lim(const Spectrogram& mag, int n_fft, int hop,
                             int iters, int sample_rate,
                             std::uint64_t phase_seed) {
  if (iters < 1) throw std::invalid_argument("griffin_lim: iters must be >= 1");
  Rng rng(phase_seed);
  ComplexStft s;
  s.n_bins = mag.n_bins;
  s.frames = mag.frames;
  s.c.resize(mag.mag.size());
  for (std::size_t i = 0; i < mag.mag.size(); ++i) {
    const double theta = 2.0 * kPi * rng.uniform();
    s.c[i] = std::polar(mag.mag[i], theta);
  }
  double mag_norm = 0.0;
  for (double v : mag.mag) mag_norm += v * v;
  mag_norm = std::sqrt(mag_norm);

  GriffinLimResult result;
  result.convergence.reserve(static_cast<std::size_t>(iters));
  std::vector<float> x;
  for (int it = 0; it < iters; ++it) {
    x = istft(s, n_fft, hop, StftWindow::kHann);
    ComplexStft c = stft_complex(x, n_fft, hop, StftWindow::kHann);
    double err = 0.0;
    for (std::size_t i = 0; i < c.c.size(); ++i) {
      const double d = std::abs(c.c[i]) - mag.mag[i];
      err += d * d;
    }
    result.convergence.push_back(std::sqrt(err) / std::max(mag_norm, 1e-12));
    for (std::size_t i = 0; i < c.c.size(); ++i) {
      const double a = std::abs(c.c[i]);
      s.c[i] = a > 1e-300 ? mag.mag[i] * (c.c[i] / a)
                          : std::complex<double>(mag.mag[i], 0.0);
    }
  }
  x = istft(s, n_fft, hop, StftWindow::kHann);
  for (float& v : x) v = std::min(1.0f, std::max(-1.0f, v));
  result.wav.samples = std::move(x);
  result.wav.sample_rate = sample_rate;
  return result;
}

Waveform melspec_to_wav(const MelSpec& s, const MelConfig& cfg, int gl_iters,
                        std::uint64_t phase_seed) {
  validate_cfg(cfg);
  if (s.n_mels != cfg.n_mels) {
    throw std::invalid_argument("melspec_to_wav: spectrogram has " +
                                std::to_string(s.n_mels) + " bands, config " +
                                std::to_string(cfg.n_mels));
  }
  MelFilterbank fb = make_mel_filterbank(cfg);
  MelInverter inv(fb);
  Spectrogram mag;
  mag.n_bins = cfg.n_fft / 2 + 1;
  mag.frames = s.width;
  mag.mag.assign(
      static_cast<std::size_t>(mag.n_bins) * static_cast<std::size_t>(s.width), 0.0);
  std::vector<double> mel_power(static_cast<std::size_t>(cfg.n_mels));
  for (int t = 0; t < s.width; ++t) {
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double v = static_cast<double>(s.at(m, t));
      const double db = v * (cfg.db_ceil - cfg.db_floor) + cfg.db_floor;
      // value 0 is a censored at-or-below-floor reading; map it to silence
      mel_power[static_cast<std::size_t>(m)] =
          v <= 0.0 ? 0.0 : cfg.ref_power * std::pow(10.0, db / 10.0);
    }
    std::vector<double> spec = inv.invert_frame(mel_power);
    for (int k = 0; k < mag.n_bins; ++k) {
      mag.mag[static_cast<std::size_t>(k) * static_cast<std::size_t>(s.width) +
              static_cast<std::size_t>(t)] = std::sqrt(spec[static_cast<std::size_t>(k)]);
    }
  }
  GriffinLimResult gl =
      griffin_lim(mag, cfg.n_fft, cfg.hop, gl_iters, cfg.sample_rate, phase_seed);
  return std::move(gl.wav);
}

// --- MelConfig text form ----------------------------------------------------

MelConfig MelConfig::desk() { return MelConfig{}; }

MelConfig MelConfig::paper_scale() {
  MelConfig cfg;
  cfg.sample_rate = 16000;
  cfg.n_fft = 512;
  cfg.hop = 325;  // 64 frames from a 21000-sample window
  cfg.n_mels = 64;
  cfg.width = 64;
  cfg.fmax = 8000.0;
  cfg.ref_power = 1600.0;
  return cfg;
}

std::string MelConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "sample_rate=" << sample_rate << "\n";
  os << "n_fft=" << n_fft << "\n";
  os << "hop=" << hop << "\n";
  os << "n_mels=" << n_mels << "\n";
  os << "width=" << width << "\n";
  os << "fmin=" << fmin << "\n";
  os << "fmax=" << fmax << "\n";
  os << "db_floor=" << db_floor << "\n";
  os << "db_ceil=" << db_ceil << "\n";
  os << "ref_power=" << ref_power << "\n";
  return os.str();
}

MelConfig MelConfig::parse(const std::string& text) {
  MelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("mel config: bad line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "sample_rate") cfg.sample_rate = std::stoi(val);
      else if (key == "n_fft") cfg.n_fft = std::stoi(val);
      else if (key == "hop") cfg.hop = std::stoi(val);
      else if (key == "n_mels") cfg.n_mels = std::stoi(val);
      else if (key == "width") cfg.width = std::stoi(val);
      else if (key == "fmin") cfg.fmin = std::stod(val);
      else if (key == "fmax") cfg.fmax = std::stod(val);
      else if (key == "db_floor") cfg.db_floor = std::stod(val);
      else if (key == "db_ceil") cfg.db_ceil = std::stod(val);
      else if (key == "ref_power") cfg.ref_power = std::stod(val);
      else throw UsageError("mel config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw UsageError("mel config: bad value for '" + key + "'");
    }
  }
  validate_cfg(cfg);
  return cfg;
}

// --- WAV I/O ----------------------------------------------------------------

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("wav: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  auto u16 = [&](std::size_t off) -> std::uint32_t {
    return static_cast<std::uint8_t>(bytes[off]) |
           (static_cast<std::uint8_t>(bytes[off + 1]) << 8);
  };
  auto u32 = [&](std::size_t off) -> std::uint32_t {
    return u16(off) | (u16(off + 2) << 16);
  };
  if (bytes.size() < 44 || bytes.compare(0, 4, "RIFF") != 0 ||
      bytes.compare(8, 4, "WAVE") != 0) {
    throw UsageError("wav: " + path + " is not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int channels = 0, bits = 0, sample_rate = 0, audio_format = 0;
  bool have_fmt = false;
  Waveform w;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = u32(pos + 4);
    pos += 8;
    if (pos + size > bytes.size()) {
      throw UsageError("wav: " + path + " has a truncated chunk");
    }
    if (id == "fmt ") {
      if (size < 16) throw UsageError("wav: " + path + " has a short fmt chunk");
      audio_format = static_cast<int>(u16(pos));
      channels = static_cast<int>(u16(pos + 2));
      sample_rate = static_cast<int>(u32(pos + 4));
      bits = static_cast<int>(u16(pos + 14));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw UsageError("wav: " + path + " has data before fmt");
      if (audio_format != 1 || bits != 16) {
        throw UsageError("wav: " + path + " is not PCM 16-bit (format " +
                         std::to_string(audio_format) + ", " +
                         std::to_string(bits) + " bits)");
      }
      if (channels != 1) {
        throw UsageError("wav: " + path + " is not mono (" +
                         std::to_string(channels) + " channels)");
      }
      const std::size_t n = size / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t v = static_cast<std::int16_t>(u16(pos + 2 * i));
        w.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      w.sample_rate = sample_rate;
      return w;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }
  throw UsageError("wav: " + path + " has no data chunk");
}

void write_wav(const std::string& path, const Waveform& w) {
  std::string out;
  const std::uint32_t data_size = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate * 2));  // byte rate
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits
  out += "data";
  put_u32(out, data_size);
  for (float v : w.samples) {
    const float c = std::min(1.0f, std::max(-1.0f, v));
    const long q = std::lrint(c * 32768.0f);
    const std::int16_t s = static_cast<std::int16_t>(
        std::min(32767L, std::max(-32768L, q)));
    put_u16(out, static_cast<std::uint16_t>(s));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("wav: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw UsageError("wav: short write to " + path);
}

// --- PGM I/O ----------------------------------------------------------------

void write_pgm(const std::string& path, const MelSpec& s) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("pgm: cannot write " + path);
  f << "P5\n" << s.width << " " << s.n_mels << "\n255\n";
  for (int m = 0; m < s.n_mels; ++m) {
    for (int t = 0; t < s.width; ++t) {
      const float v = std::min(1.0f, std::max(0.0f, s.at(m, t)));
      f.put(static_cast<char>(std::lrint(v * 255.0f)));
    }
  }
  if (!f) throw UsageError("pgm: short write to " + path);
}

MelSpec read_pgm(const std::string& path, const MelConfig& cfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("pgm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw UsageError("pgm: " + path + " is not binary PGM (P5)");
  auto next_int = [&]() -> int {
    int v;
    while (f >> std::ws && f.peek() == '#') {
      std::string comment;
      std::getline(f, comment);
    }
    if (!(f >> v)) throw UsageError("pgm: " + path + " has a malformed header");
    return v;
  };
  const int width = next_int();
  const int height = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw UsageError("pgm: " + path + " must use maxval 255");
  f.get();  // single whitespace after header
  if (height != cfg.n_mels) {
    throw UsageError("pgm: " + path + " has " + std::to_string(height) +
                     " rows, config expects " + std::to_string(cfg.n_mels) +
                     " mel bands");
  }
  MelSpec s;
  s.n_mels = height;
  s.width = width;
  s.meta = cfg;
  s.meta.width = width;
  s.values.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const int c = f.get();
    if (c == EOF) throw UsageError("pgm: " + path + " is truncated");
    s.values[i] = static_cast<float>(c) / 255.0f;
  }
  return s;
}

}  // namespace sq2s
