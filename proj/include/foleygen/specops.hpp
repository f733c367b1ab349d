// Copyright 2026 The foleygen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FOLEYGEN_SPECOPS_HPP_
#define FOLEYGEN_SPECOPS_HPP_

#include <memory>
#include <vector>

#include "foleygen/dataio.hpp"
#include "foleygen/mat.hpp"

namespace foleygen::specops {

// Amplitude floor of the log compression; log(1e-5) ~ -11.5 keeps silence
// finite.
inline constexpr double kLogFloorAmp = 1e-5;
inline double log_floor() { return std::log(kLogFloorAmp); }

struct MelConfig {
  int sample_rate = 22050;
  int n_fft = 1024;
  int hop = 256;
  int mel_bins = 64;
  double fmin = 0.0;
  double fmax = 11025.0;
  int frames = 352;        // after padding; divisible by the largest VAE level
  int clip_samples = 88200;

  // 22.05 kHz analysis for the small stack.
  static MelConfig small_profile();
  // 16 kHz analysis for the large stack; synthesis is upsampled afterwards.
  static MelConfig large_profile();

  void validate(int max_compression = 8) const;
  int fft_bins() const { return n_fft / 2 + 1; }
};

struct MelSpectrogram {
  MelConfig config;
  Mat values;  // frames x mel_bins, log-amplitude

  int frames() const { return values.rows; }
  int bins() const { return values.cols; }
};

// Precomputes the STFT window, mel filterbank, and the filterbank
// pseudo-inverse for one configuration. Construction is the only non-pure
// step; all member calls are const and thread-safe.
class MelProcessor {
 public:
  explicit MelProcessor(const MelConfig& cfg);
  ~MelProcessor();
  MelProcessor(MelProcessor&&) noexcept;
  MelProcessor& operator=(MelProcessor&&) noexcept;

  const MelConfig& config() const;

  // Magnitude STFT, frames x (n_fft/2 + 1). The waveform is reflection
  // padded so exactly config().frames frames come out regardless of clip
  // length (longer clips are cropped in time).
  Mat stft_magnitude(const dataio::AudioClip& clip) const;

  MelSpectrogram forward(const dataio::AudioClip& clip) const;

  // Pseudo-inverse of the filterbank: log-mel back to non-negative linear
  // magnitudes, frames x (n_fft/2 + 1).
  Mat inverse(const MelSpectrogram& mel) const;

  // Filterbank + log applied to a magnitude spectrogram (no STFT).
  MelSpectrogram project(const Mat& magnitude) const;

  // Phase reconstruction; waveform comes back at config().clip_samples
  // length, peak-normalized when the peak exceeds 1.
  dataio::AudioClip griffin_lim(const Mat& magnitude, int iters) const;

  // || |STFT(clip)| - magnitude ||_F / ||magnitude||_F
  double spectral_convergence(const Mat& magnitude,
                              const dataio::AudioClip& clip) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Convenience wrappers for one-off use.
MelSpectrogram mel_forward(const dataio::AudioClip& clip, const MelConfig& cfg);
Mat mel_inverse(const MelSpectrogram& mel);

// mel -> waveform interface so a learned vocoder can replace Griffin-Lim
// without touching callers.
class Vocoder {
 public:
  virtual ~Vocoder() = default;
  virtual dataio::AudioClip synthesize(const MelSpectrogram& mel) const = 0;
};

class GriffinLimVocoder : public Vocoder {
 public:
  GriffinLimVocoder(const MelConfig& cfg, int iters = 32)
      : processor_(cfg), iters_(iters) {}
  dataio::AudioClip synthesize(const MelSpectrogram& mel) const override;

 private:
  MelProcessor processor_;
  int iters_;
};

}  // namespace foleygen::specops

#endif  // FOLEYGEN_SPECOPS_HPP_
