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

#ifndef FOLEYGEN_LATENTDIFF_HPP_
#define FOLEYGEN_LATENTDIFF_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "foleygen/dataio.hpp"
#include "foleygen/jointembed.hpp"
#include "foleygen/nn.hpp"
#include "foleygen/vaecodec.hpp"

namespace foleygen::latentdiff {

// Per-step variances with 1-based indexing; index 0 is the no-noise
// boundary (alpha_bar[0] = 1).
struct NoiseSchedule {
  int n_steps = 0;
  std::vector<double> beta;       // size n_steps + 1, beta[0] = 0
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product of alpha

  static NoiseSchedule linear(int n, double beta_start, double beta_end);
  double ab(int n) const { return alpha_bar[static_cast<std::size_t>(n)]; }
};

// Anything that predicts the injected noise from (z_n, n, condition).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual nn::Tensor3 predict(const nn::Tensor3& z, int step,
                              const std::vector<double>& condition) const = 0;
};

// Closed-form forward marginal: sqrt(ab_n) z0 + sqrt(1 - ab_n) eps.
nn::Tensor3 q_sample(const nn::Tensor3& z0, int n, const nn::Tensor3& eps,
                     const NoiseSchedule& schedule);

// Element-mean squared error between eps and the model prediction at
// z_n = q_sample(z0, n, eps).
double denoise_loss(const Denoiser& model, const nn::Tensor3& z0, int n,
                    const nn::Tensor3& eps, const std::vector<double>& condition,
                    const NoiseSchedule& schedule);

struct SamplerConfig {
  int steps = 200;
  double eta = 0.0;  // 0 = deterministic, 1 = ancestral
};

struct SampleStats {
  long denoiser_calls = 0;
};

// Strided DDIM-style reverse process: `steps` uniformly spaced timesteps,
// one denoiser evaluation each. Deterministic for eta = 0 and a fixed seed.
std::vector<nn::Tensor3> sample_latents(const Denoiser& model,
                                        const std::vector<double>& condition,
                                        const SamplerConfig& sampler,
                                        const NoiseSchedule& schedule,
                                        std::uint64_t seed, int count,
                                        int latent_ch, int latent_h, int latent_w,
                                        SampleStats* stats = nullptr);

struct DenoiserConfig {
  int latent_channels = 4;
  int latent_frames = 88;
  int latent_bins = 16;
  int base_width = 32;  // small profile; the large profile uses 64
  int cond_dim = 64;
  int time_dim = 32;
  int fuse_dim = 64;
};

// Three-level U-Net over the latent block. The conditioning vector is
// projected and added to the timestep embedding, which is injected as a
// per-channel bias at each resolution.
class UNetDenoiser : public Denoiser {
 public:
  UNetDenoiser(const DenoiserConfig& cfg, std::uint64_t seed);

  const DenoiserConfig& config() const { return cfg_; }
  nn::Tensor3 predict(const nn::Tensor3& z, int step,
                      const std::vector<double>& condition) const override;

  // Forward + backward of the denoising objective; accumulates parameter
  // gradients and returns the loss.
  double loss_and_grad(const nn::Tensor3& z0, int n, const nn::Tensor3& eps,
                       const std::vector<double>& condition,
                       const NoiseSchedule& schedule);

  double latent_scale() const { return latent_scale_.w[0]; }
  void set_latent_scale(double s) { latent_scale_.w[0] = s; }

  nn::ParamRegistry& registry() { return registry_; }
  const nn::ParamRegistry& registry() const { return registry_; }
  std::uint64_t param_checksum() const { return registry_.checksum(); }
  std::string fingerprint_text() const;

 private:
  struct Ctx;
  nn::Tensor3 forward(const nn::Tensor3& z, int step,
                      const std::vector<double>& condition, Ctx* ctx) const;
  void backward(const Ctx& ctx, const nn::Tensor3& dout);

  DenoiserConfig cfg_;
  nn::Conv2d conv_in_, block1_, down1_, block2_, down2_, mid_;
  nn::Conv2d up_conv2_, block3_, up_conv1_, block4_, conv_out_;
  nn::Linear time_proj_, cond_proj_, inj1_, inj2_, inj3_;
  nn::Param latent_scale_;  // diffusion-space scaling of VAE latents
  nn::ParamRegistry registry_;
};

enum class TrainMode { kPretrain, kFinetune };

struct LdmTrainOptions {
  int epochs = 10;
  int batch_size = 8;
  double lr = 1e-3;
};

// Frozen upstream models plus the analysis settings used to build the
// latent/conditioning cache.
struct LdmTrainContext {
  const vaecodec::VaeModel& vae;
  const jointembed::JointEmbedModel& clap;
  const dataio::ClassMap& classes;
  const specops::MelProcessor& mel;
  double clip_seconds = 4.0;
};

// Pretrain conditions on the clip's audio embedding; finetune on the text
// embedding of its class prompt. The frozen models are untouched
// (checksummed before and after).
jointembed::TrainReport train_ldm(UNetDenoiser& model, TrainMode mode,
                                  const dataio::DatasetManifest& manifest,
                                  const LdmTrainContext& ctx,
                                  const NoiseSchedule& schedule,
                                  const LdmTrainOptions& options, std::uint64_t seed);

// Cache-level trainer used by the manifest wrapper and by tests.
jointembed::TrainReport train_ldm_cached(UNetDenoiser& model,
                                         const std::vector<nn::Tensor3>& latents,
                                         const std::vector<std::vector<double>>& conditions,
                                         const NoiseSchedule& schedule,
                                         const LdmTrainOptions& options,
                                         std::uint64_t seed);

}  // namespace foleygen::latentdiff

#endif  // FOLEYGEN_LATENTDIFF_HPP_
