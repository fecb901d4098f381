// sq2s/common.hpp
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

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sq2s {

// Malformed user input (bad files, bad flags, bad directories). The CLI maps
// this to exit code 2; any other exception is an internal error (exit 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// When enabled, every tensor op scans its output for NaN/Inf and throws with
// the op name. Creation from user data is always validated regardless.
inline std::atomic<bool>& debug_checks_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}
inline void set_debug_checks(bool on) { debug_checks_flag().store(on); }
inline bool debug_checks() {
  return debug_checks_flag().load(std::memory_order_relaxed);
}

// FNV-1a 64-bit, used for config hashes in checkpoints.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Deterministic RNG. Gaussian draws go through Box-Muller rather than
// std::normal_distribution so the stream is identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n) {
    if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be > 0");
    return static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed derivation for independent substreams (folds, trials, items).
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
  return fnv1a64(std::to_string(base) + "/" + tag);
}

}  // namespace sq2s
