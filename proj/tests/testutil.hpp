// Copyright 2026 The foleygen Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FOLEYGEN_TESTS_TESTUTIL_HPP_
#define FOLEYGEN_TESTS_TESTUTIL_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "foleygen/dataio.hpp"
#include "foleygen/rng.hpp"
#include "foleygen/specops.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    const auto stamp =
        std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("foleygen_" + tag + "_" + std::to_string(stamp) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Goertzel power scan; independent of the library's FFT.
inline double goertzel_power(const std::vector<double>& x, int rate, double hz) {
  const double w = 2.0 * 3.14159265358979323846 * hz / rate;
  const double coeff = 2.0 * std::cos(w);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    s0 = v + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  return s1 * s1 + s2 * s2 - coeff * s1 * s2;
}

inline double dominant_frequency(const std::vector<double>& x, int rate, double lo,
                                 double hi, double step) {
  double best_f = lo, best_p = -1.0;
  for (double f = lo; f <= hi; f += step) {
    const double p = goertzel_power(x, rate, f);
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  return best_f;
}

inline foleygen::dataio::AudioClip make_tone(double hz, double seconds, int rate,
                                             double amp = 0.5) {
  foleygen::dataio::AudioClip clip;
  clip.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    clip.samples[i] =
        amp * std::sin(2.0 * 3.14159265358979323846 * hz * static_cast<double>(i) / rate);
  return clip;
}

inline foleygen::dataio::AudioClip make_noise(double seconds, int rate,
                                              std::uint64_t seed, double amp = 0.3) {
  foleygen::dataio::AudioClip clip;
  clip.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  clip.samples.resize(n);
  foleygen::Rng rng(seed);
  for (double& s : clip.samples) s = amp * std::tanh(rng.normal());
  return clip;
}

// Small analysis configuration for fast model tests: 1 s at 8 kHz,
// 128 x 32 log-mel.
inline foleygen::specops::MelConfig tiny_mel_config() {
  foleygen::specops::MelConfig cfg;
  cfg.sample_rate = 8000;
  cfg.n_fft = 256;
  cfg.hop = 64;
  cfg.mel_bins = 32;
  cfg.fmin = 0.0;
  cfg.fmax = 4000.0;
  cfg.frames = 128;
  cfg.clip_samples = 8000;
  return cfg;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace testutil

#endif  // FOLEYGEN_TESTS_TESTUTIL_HPP_
