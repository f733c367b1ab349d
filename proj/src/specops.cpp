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

#include "foleygen/specops.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <Eigen/Dense>

#include "foleygen/errors.hpp"

namespace foleygen::specops {
namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT. Hand-rolled instead of FFTW so analysis and
// Griffin-Lim are bit-reproducible run to run with no planner state.
class Fft {
 public:
  explicit Fft(int n) : n_(n) {
    // bit-reversal permutation
    rev_.assign(static_cast<std::size_t>(n), 0);
    int log2n = 0;
    while ((1 << log2n) < n) ++log2n;
    for (int i = 0; i < n; ++i) {
      int r = 0;
      for (int b = 0; b < log2n; ++b)
        if (i & (1 << b)) r |= 1 << (log2n - 1 - b);
      rev_[static_cast<std::size_t>(i)] = r;
    }
    tw_.assign(static_cast<std::size_t>(n / 2), {});
    for (int k = 0; k < n / 2; ++k)
      tw_[static_cast<std::size_t>(k)] =
          std::polar(1.0, -2.0 * kPi * k / n);
  }

  void transform(std::vector<std::complex<double>>& x, bool inverse) const {
    const int n = n_;
    if (inverse)
      for (auto& v : x) v = std::conj(v);
    for (int i = 0; i < n; ++i) {
      const int r = rev_[static_cast<std::size_t>(i)];
      if (i < r) std::swap(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(r)]);
    }
    for (int len = 2; len <= n; len <<= 1) {
      const int half = len / 2;
      const int stride = n / len;
      for (int i = 0; i < n; i += len) {
        for (int j = 0; j < half; ++j) {
          const std::complex<double> w = tw_[static_cast<std::size_t>(j * stride)];
          auto& a = x[static_cast<std::size_t>(i + j)];
          auto& b = x[static_cast<std::size_t>(i + j + half)];
          const std::complex<double> t = b * w;
          b = a - t;
          a += t;
        }
      }
    }
    if (inverse) {
      const double inv_n = 1.0 / n;
      for (auto& v : x) v = std::conj(v) * inv_n;
    }
  }

 private:
  int n_;
  std::vector<int> rev_;
  std::vector<std::complex<double>> tw_;
};

// Repeated mirroring handles indices arbitrarily far outside [0, n).
std::size_t mirror_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long m = static_cast<long>(n);
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * m - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

using CMat = std::vector<std::vector<std::complex<double>>>;  // frames x bins

}  // namespace

MelConfig MelConfig::small_profile() {
  MelConfig cfg;
  cfg.sample_rate = 22050;
  cfg.n_fft = 1024;
  cfg.hop = 256;
  cfg.mel_bins = 64;
  cfg.fmin = 0.0;
  cfg.fmax = 11025.0;
  cfg.frames = 352;
  cfg.clip_samples = 88200;
  return cfg;
}

MelConfig MelConfig::large_profile() {
  MelConfig cfg;
  cfg.sample_rate = 16000;
  cfg.n_fft = 1024;
  cfg.hop = 160;
  cfg.mel_bins = 64;
  cfg.fmin = 0.0;
  cfg.fmax = 8000.0;
  cfg.frames = 352;
  cfg.clip_samples = 64000;
  return cfg;
}

void MelConfig::validate(int max_compression) const {
  if (sample_rate <= 0 || hop <= 0 || clip_samples <= 0)
    throw ConfigError("mel config: rates and lengths must be positive");
  if (!is_power_of_two(n_fft))
    throw ConfigError("mel config: n_fft must be a power of two");
  if (frames <= 0 || frames % max_compression != 0)
    throw ConfigError("mel config: frames must be a positive multiple of " +
                      std::to_string(max_compression));
  if (mel_bins <= 0 || mel_bins % max_compression != 0)
    throw ConfigError("mel config: mel_bins must be a positive multiple of " +
                      std::to_string(max_compression));
  if (fmin < 0.0 || fmax <= fmin || fmax > sample_rate / 2.0 + 1e-9)
    throw ConfigError("mel config: need 0 <= fmin < fmax <= nyquist");
}

struct MelProcessor::Impl {
  MelConfig cfg;
  Fft fft;
  std::vector<double> window;  // periodic Hann
  Mat filterbank;              // mel_bins x fft_bins
  Mat pinv;                    // fft_bins x mel_bins

  explicit Impl(const MelConfig& c) : cfg(c), fft(c.n_fft) {
    cfg.validate();
    window.assign(static_cast<std::size_t>(cfg.n_fft), 0.0);
    for (int i = 0; i < cfg.n_fft; ++i)
      window[static_cast<std::size_t>(i)] =
          0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.n_fft);
    build_filterbank();
  }

  static double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
  static double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

  void build_filterbank() {
    const int bins = cfg.fft_bins();
    filterbank = Mat(cfg.mel_bins, bins);
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.fmax);
    std::vector<double> edges(static_cast<std::size_t>(cfg.mel_bins) + 2);
    for (int i = 0; i < cfg.mel_bins + 2; ++i)
      edges[static_cast<std::size_t>(i)] =
          mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.mel_bins + 1));
    for (int m = 0; m < cfg.mel_bins; ++m) {
      const double lo = edges[static_cast<std::size_t>(m)];
      const double mid = edges[static_cast<std::size_t>(m) + 1];
      const double hi = edges[static_cast<std::size_t>(m) + 2];
      for (int k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
        const double up = (f - lo) / std::max(mid - lo, 1e-9);
        const double down = (hi - f) / std::max(hi - mid, 1e-9);
        filterbank.at(m, k) = std::max(0.0, std::min(up, down));
      }
    }
    // Least-squares inverse of the filterbank: P = W^T (W W^T)^-1.
    Eigen::MatrixXd w(cfg.mel_bins, bins);
    for (int m = 0; m < cfg.mel_bins; ++m)
      for (int k = 0; k < bins; ++k) w(m, k) = filterbank.at(m, k);
    const Eigen::MatrixXd gram = w * w.transpose();
    const Eigen::MatrixXd p =
        w.transpose() *
        gram.ldlt().solve(Eigen::MatrixXd::Identity(cfg.mel_bins, cfg.mel_bins));
    pinv = Mat(bins, cfg.mel_bins);
    for (int k = 0; k < bins; ++k)
      for (int m = 0; m < cfg.mel_bins; ++m) pinv.at(k, m) = p(k, m);
  }

  CMat stft(const std::vector<double>& x) const {
    const int half = cfg.n_fft / 2;
    const int bins = cfg.fft_bins();
    CMat spec(static_cast<std::size_t>(cfg.frames));
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.n_fft));
    for (int t = 0; t < cfg.frames; ++t) {
      const long start = static_cast<long>(t) * cfg.hop - half;
      for (int j = 0; j < cfg.n_fft; ++j) {
        const double s =
            x.empty() ? 0.0 : x[mirror_index(start + j, x.size())];
        buf[static_cast<std::size_t>(j)] = {s * window[static_cast<std::size_t>(j)], 0.0};
      }
      fft.transform(buf, /*inverse=*/false);
      spec[static_cast<std::size_t>(t)].assign(buf.begin(), buf.begin() + bins);
    }
    return spec;
  }

  std::vector<double> istft(const CMat& spec, int out_len) const {
    const int half = cfg.n_fft / 2;
    const int bins = cfg.fft_bins();
    const std::size_t padded_len =
        static_cast<std::size_t>(cfg.frames - 1) * cfg.hop + cfg.n_fft;
    std::vector<double> acc(padded_len, 0.0), wsum(padded_len, 0.0);
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.n_fft));
    for (int t = 0; t < cfg.frames; ++t) {
      for (int k = 0; k < bins; ++k) buf[static_cast<std::size_t>(k)] = spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
      for (int k = 1; k < cfg.n_fft / 2; ++k)
        buf[static_cast<std::size_t>(cfg.n_fft - k)] =
            std::conj(spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]);
      buf[0] = {buf[0].real(), 0.0};
      buf[static_cast<std::size_t>(cfg.n_fft / 2)] = {
          buf[static_cast<std::size_t>(cfg.n_fft / 2)].real(), 0.0};
      fft.transform(buf, /*inverse=*/true);
      const std::size_t base = static_cast<std::size_t>(t) * cfg.hop;
      for (int j = 0; j < cfg.n_fft; ++j) {
        const double w = window[static_cast<std::size_t>(j)];
        acc[base + static_cast<std::size_t>(j)] += buf[static_cast<std::size_t>(j)].real() * w;
        wsum[base + static_cast<std::size_t>(j)] += w * w;
      }
    }
    std::vector<double> out(static_cast<std::size_t>(out_len), 0.0);
    for (int s = 0; s < out_len; ++s) {
      const std::size_t p = static_cast<std::size_t>(s + half);
      if (p < padded_len && wsum[p] > 1e-9) out[static_cast<std::size_t>(s)] = acc[p] / wsum[p];
    }
    return out;
  }
};

MelProcessor::MelProcessor(const MelConfig& cfg) : impl_(std::make_unique<Impl>(cfg)) {}
MelProcessor::~MelProcessor() = default;
MelProcessor::MelProcessor(MelProcessor&&) noexcept = default;
MelProcessor& MelProcessor::operator=(MelProcessor&&) noexcept = default;

const MelConfig& MelProcessor::config() const { return impl_->cfg; }

Mat MelProcessor::stft_magnitude(const dataio::AudioClip& clip) const {
  if (clip.sample_rate != impl_->cfg.sample_rate)
    throw ConfigError("stft: clip rate " + std::to_string(clip.sample_rate) +
                      " != config rate " + std::to_string(impl_->cfg.sample_rate));
  const CMat spec = impl_->stft(clip.samples);
  Mat mag(impl_->cfg.frames, impl_->cfg.fft_bins());
  for (int t = 0; t < mag.rows; ++t)
    for (int k = 0; k < mag.cols; ++k)
      mag.at(t, k) = std::abs(spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]);
  return mag;
}

MelSpectrogram MelProcessor::forward(const dataio::AudioClip& clip) const {
  return project(stft_magnitude(clip));
}

MelSpectrogram MelProcessor::project(const Mat& magnitude) const {
  const MelConfig& cfg = impl_->cfg;
  if (magnitude.cols != cfg.fft_bins())
    throw ConfigError("mel project: magnitude has wrong bin count");
  MelSpectrogram mel;
  mel.config = cfg;
  mel.values = Mat(magnitude.rows, cfg.mel_bins);
  for (int t = 0; t < magnitude.rows; ++t) {
    const double* m = magnitude.row(t);
    double* out = mel.values.row(t);
    for (int b = 0; b < cfg.mel_bins; ++b) {
      const double* w = impl_->filterbank.row(b);
      double acc = 0.0;
      for (int k = 0; k < magnitude.cols; ++k) acc += w[k] * m[k];
      out[b] = std::log(acc + kLogFloorAmp);
    }
  }
  return mel;
}

Mat MelProcessor::inverse(const MelSpectrogram& mel) const {
  const MelConfig& cfg = impl_->cfg;
  if (mel.bins() != cfg.mel_bins)
    throw ConfigError("mel inverse: bin count mismatch");
  for (double v : mel.values.a)
    if (!std::isfinite(v)) throw InputError("mel inverse: non-finite input");
  const int bins = cfg.fft_bins();
  Mat mag(mel.frames(), bins);
  std::vector<double> lin(static_cast<std::size_t>(cfg.mel_bins));
  for (int t = 0; t < mel.frames(); ++t) {
    const double* v = mel.values.row(t);
    for (int b = 0; b < cfg.mel_bins; ++b)
      lin[static_cast<std::size_t>(b)] = std::max(0.0, std::exp(v[b]) - kLogFloorAmp);
    double* out = mag.row(t);
    for (int k = 0; k < bins; ++k) {
      const double* p = impl_->pinv.row(k);
      double acc = 0.0;
      for (int b = 0; b < cfg.mel_bins; ++b) acc += p[b] * lin[static_cast<std::size_t>(b)];
      out[k] = std::max(0.0, acc);
    }
  }
  return mag;
}

dataio::AudioClip MelProcessor::griffin_lim(const Mat& magnitude, int iters) const {
  const MelConfig& cfg = impl_->cfg;
  if (iters < 1) throw InputError("griffin_lim: iters must be >= 1");
  if (magnitude.rows != cfg.frames || magnitude.cols != cfg.fft_bins())
    throw ConfigError("griffin_lim: magnitude shape mismatch");

  // Zero initial phase; each iteration re-estimates phase from the signal.
  CMat spec(static_cast<std::size_t>(cfg.frames),
            std::vector<std::complex<double>>(static_cast<std::size_t>(cfg.fft_bins())));
  for (int t = 0; t < cfg.frames; ++t)
    for (int k = 0; k < cfg.fft_bins(); ++k)
      spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = {magnitude.at(t, k), 0.0};

  std::vector<double> x;
  for (int it = 0; it < iters; ++it) {
    x = impl_->istft(spec, cfg.clip_samples);
    const CMat est = impl_->stft(x);
    for (int t = 0; t < cfg.frames; ++t) {
      for (int k = 0; k < cfg.fft_bins(); ++k) {
        const std::complex<double> c = est[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
        const double a = std::abs(c);
        const std::complex<double> phase = a > 1e-12 ? c / a : std::complex<double>(1.0, 0.0);
        spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = magnitude.at(t, k) * phase;
      }
    }
  }
  x = impl_->istft(spec, cfg.clip_samples);

  dataio::AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.samples = std::move(x);
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 1.0) {
    const double inv = 1.0 / peak;
    for (double& s : clip.samples) s *= inv;
  }
  return clip;
}

double MelProcessor::spectral_convergence(const Mat& magnitude,
                                          const dataio::AudioClip& clip) const {
  const Mat est = stft_magnitude(clip);
  const double ref = magnitude.frobenius_norm();
  const double dist = frobenius_distance(est, magnitude);
  return ref > 1e-12 ? dist / ref : dist;
}

MelSpectrogram mel_forward(const dataio::AudioClip& clip, const MelConfig& cfg) {
  return MelProcessor(cfg).forward(clip);
}

Mat mel_inverse(const MelSpectrogram& mel) {
  return MelProcessor(mel.config).inverse(mel);
}

dataio::AudioClip GriffinLimVocoder::synthesize(const MelSpectrogram& mel) const {
  return processor_.griffin_lim(processor_.inverse(mel), iters_);
}

}  // namespace foleygen::specops
