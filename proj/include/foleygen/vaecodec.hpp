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

#ifndef FOLEYGEN_VAECODEC_HPP_
#define FOLEYGEN_VAECODEC_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "foleygen/dataio.hpp"
#include "foleygen/nn.hpp"
#include "foleygen/specops.hpp"

namespace foleygen::vaecodec {

// Latent block of shape (frames/c, bins/c, channels), stored channel-major.
struct LatentTensor {
  nn::Tensor3 data;       // ch x (frames/c) x (bins/c)
  int compression = 4;

  int frames() const { return data.h; }
  int bins() const { return data.w; }
  int channels() const { return data.ch; }
};

struct VaeConfig {
  int compression = 4;  // 4 or 8, per-axis downsampling factor
  int base_channels = 16;
  int latent_channels = 4;
  double kl_weight = 1e-2;
  int mel_frames = 352;
  int mel_bins = 64;
};

struct ElboTerms {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

struct VaeTrainReport {
  std::vector<double> epoch_total;
  std::vector<double> epoch_reconstruction;
  std::vector<double> epoch_kl;
};

class VaeModel {
 public:
  VaeModel(const VaeConfig& cfg, std::uint64_t seed);

  const VaeConfig& config() const { return cfg_; }

  // Posterior parameters; mel dims must be divisible by the compression
  // level.
  std::pair<LatentTensor, LatentTensor> encode(const specops::MelSpectrogram& mel) const;
  // Decoded log-mel, clamped to the log floor.
  specops::MelSpectrogram decode(const LatentTensor& z,
                                 const specops::MelConfig& mel_cfg) const;

  nn::ParamRegistry& registry() { return registry_; }
  const nn::ParamRegistry& registry() const { return registry_; }
  std::uint64_t param_checksum() const { return registry_.checksum(); }
  std::string fingerprint_text() const;

 private:
  friend struct VaeTrainer;

  VaeConfig cfg_;
  nn::Conv2d e1_, e2_, e3_, e_head_;  // e3 only used when compression == 8
  nn::Conv2d d_in_, d_mid_, d_up1_, d_up2_, d_out_;
  nn::ParamRegistry registry_;
};

// mean + exp(0.5 * log_variance) * eps with eps ~ N(0, I) from the rng.
LatentTensor reparameterize(const LatentTensor& mean, const LatentTensor& log_variance,
                            Rng& rng);

// 0.5 * sum(mu^2 + exp(lv) - 1 - lv) / element_count
double kl_divergence(const LatentTensor& mean, const LatentTensor& log_variance);

// Element-mean squared error between two equally shaped mels.
double reconstruction_mse(const specops::MelSpectrogram& recon,
                          const specops::MelSpectrogram& target);

// total = reconstruction + kl_weight * kl, with the latent sampled from the
// posterior using `rng`.
ElboTerms elbo_loss(const VaeModel& model, const specops::MelSpectrogram& mel,
                    Rng& rng);

VaeTrainReport train_vae(VaeModel& model,
                         const std::vector<specops::MelSpectrogram>& mels,
                         int epochs, int batch_size, double lr, std::uint64_t seed);

VaeTrainReport train_vae(VaeModel& model, const dataio::DatasetManifest& manifest,
                         const specops::MelProcessor& mel, double clip_seconds,
                         int epochs, int batch_size, double lr, std::uint64_t seed);

}  // namespace foleygen::vaecodec

#endif  // FOLEYGEN_VAECODEC_HPP_
