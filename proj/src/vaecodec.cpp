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

#include "foleygen/vaecodec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "foleygen/errors.hpp"

namespace foleygen::vaecodec {

VaeModel::VaeModel(const VaeConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      e1_(1, cfg.base_channels, 2),
      e2_(cfg.base_channels, 2 * cfg.base_channels, 2),
      e3_(cfg.compression == 8 ? 2 * cfg.base_channels : 1,
          cfg.compression == 8 ? 2 * cfg.base_channels : 1, 2),
      e_head_(2 * cfg.base_channels, 2 * cfg.latent_channels, 1),
      d_in_(cfg.latent_channels, 2 * cfg.base_channels, 1),
      d_mid_(cfg.compression == 8 ? 2 * cfg.base_channels : 1,
             cfg.compression == 8 ? 2 * cfg.base_channels : 1, 1),
      d_up1_(2 * cfg.base_channels, cfg.base_channels, 1),
      d_up2_(cfg.base_channels, cfg.base_channels, 1),
      d_out_(cfg.base_channels, 1, 1) {
  if (cfg.compression != 4 && cfg.compression != 8)
    throw ConfigError("vae: compression level must be 4 or 8");
  if (cfg.mel_frames % cfg.compression != 0 || cfg.mel_bins % cfg.compression != 0)
    throw ConfigError("vae: mel dims must be divisible by the compression level");
  if (cfg.latent_channels <= 0 || cfg.base_channels <= 0)
    throw ConfigError("vae: channel counts must be positive");

  Rng rng(Rng::mix(seed, 0xae0));
  const bool deep = cfg.compression == 8;
  e1_.init(rng);
  e2_.init(rng);
  if (deep) e3_.init(rng);
  e_head_.init(rng, 0.5);
  d_in_.init(rng);
  if (deep) d_mid_.init(rng);
  d_up1_.init(rng);
  d_up2_.init(rng);
  d_out_.init(rng, 0.5);

  e1_.register_params(registry_);
  e2_.register_params(registry_);
  if (deep) e3_.register_params(registry_);
  e_head_.register_params(registry_);
  d_in_.register_params(registry_);
  if (deep) d_mid_.register_params(registry_);
  d_up1_.register_params(registry_);
  d_up2_.register_params(registry_);
  d_out_.register_params(registry_);
}

std::string VaeModel::fingerprint_text() const {
  std::ostringstream os;
  os << "vaecodec|c=" << cfg_.compression << "|base=" << cfg_.base_channels
     << "|latent=" << cfg_.latent_channels << "|klw=" << cfg_.kl_weight
     << "|mel=" << cfg_.mel_frames << "x" << cfg_.mel_bins;
  return os.str();
}

// ---------------------------------------------------------------------------

struct VaeTrainer {
  struct EncCtx {
    nn::Tensor3 x, p1, h1, p2, h2, p3, h3, head;
  };
  struct DecCtx {
    nn::Tensor3 z, p0, h0, u1, pm, hm, u2, p2, h2, u3, p3, h3;
  };

  static void split_head(const VaeModel& m, const nn::Tensor3& head,
                         LatentTensor* mean, LatentTensor* logvar) {
    const int lc = m.cfg_.latent_channels;
    mean->data = nn::Tensor3(lc, head.h, head.w);
    logvar->data = nn::Tensor3(lc, head.h, head.w);
    mean->compression = m.cfg_.compression;
    logvar->compression = m.cfg_.compression;
    const std::size_t plane = head.plane_size();
    std::copy(head.v.begin(), head.v.begin() + static_cast<std::ptrdiff_t>(lc * plane),
              mean->data.v.begin());
    std::copy(head.v.begin() + static_cast<std::ptrdiff_t>(lc * plane), head.v.end(),
              logvar->data.v.begin());
    // keep the posterior variance in a sane range
    for (double& v : logvar->data.v) v = std::clamp(v, -30.0, 10.0);
  }

  static void encode_forward(const VaeModel& m, const nn::Tensor3& x, EncCtx& c) {
    c.x = x;
    c.p1 = m.e1_.forward(c.x);
    nn::silu_forward(c.p1, c.h1);
    c.p2 = m.e2_.forward(c.h1);
    nn::silu_forward(c.p2, c.h2);
    if (m.cfg_.compression == 8) {
      c.p3 = m.e3_.forward(c.h2);
      nn::silu_forward(c.p3, c.h3);
      c.head = m.e_head_.forward(c.h3);
    } else {
      c.head = m.e_head_.forward(c.h2);
    }
  }

  static void encode_backward(VaeModel& m, const EncCtx& c, const nn::Tensor3& dhead) {
    if (m.cfg_.compression == 8) {
      nn::Tensor3 dh3 = m.e_head_.backward(c.h3, dhead);
      nn::Tensor3 dp3;
      nn::silu_backward(c.p3, dh3, dp3);
      nn::Tensor3 dh2 = m.e3_.backward(c.h2, dp3);
      nn::Tensor3 dp2;
      nn::silu_backward(c.p2, dh2, dp2);
      nn::Tensor3 dh1 = m.e2_.backward(c.h1, dp2);
      nn::Tensor3 dp1;
      nn::silu_backward(c.p1, dh1, dp1);
      m.e1_.backward(c.x, dp1);
    } else {
      nn::Tensor3 dh2 = m.e_head_.backward(c.h2, dhead);
      nn::Tensor3 dp2;
      nn::silu_backward(c.p2, dh2, dp2);
      nn::Tensor3 dh1 = m.e2_.backward(c.h1, dp2);
      nn::Tensor3 dp1;
      nn::silu_backward(c.p1, dh1, dp1);
      m.e1_.backward(c.x, dp1);
    }
  }

  static nn::Tensor3 decode_forward(const VaeModel& m, const nn::Tensor3& z, DecCtx& c) {
    c.z = z;
    c.p0 = m.d_in_.forward(c.z);
    nn::silu_forward(c.p0, c.h0);
    const nn::Tensor3* cur = &c.h0;
    if (m.cfg_.compression == 8) {
      c.u1 = nn::upsample2x(*cur);
      c.pm = m.d_mid_.forward(c.u1);
      nn::silu_forward(c.pm, c.hm);
      cur = &c.hm;
    }
    c.u2 = nn::upsample2x(*cur);
    c.p2 = m.d_up1_.forward(c.u2);
    nn::silu_forward(c.p2, c.h2);
    c.u3 = nn::upsample2x(c.h2);
    c.p3 = m.d_up2_.forward(c.u3);
    nn::silu_forward(c.p3, c.h3);
    return m.d_out_.forward(c.h3);
  }

  static nn::Tensor3 decode_backward(VaeModel& m, const DecCtx& c,
                                     const nn::Tensor3& dout) {
    nn::Tensor3 dh3 = m.d_out_.backward(c.h3, dout);
    nn::Tensor3 dp3;
    nn::silu_backward(c.p3, dh3, dp3);
    nn::Tensor3 du3 = m.d_up2_.backward(c.u3, dp3);
    nn::Tensor3 dh2 = nn::upsample2x_backward(du3);
    nn::Tensor3 dp2;
    nn::silu_backward(c.p2, dh2, dp2);
    nn::Tensor3 du2 = m.d_up1_.backward(c.u2, dp2);
    nn::Tensor3 dcur = nn::upsample2x_backward(du2);
    if (m.cfg_.compression == 8) {
      nn::Tensor3 dpm;
      nn::silu_backward(c.pm, dcur, dpm);
      nn::Tensor3 du1 = m.d_mid_.backward(c.u1, dpm);
      dcur = nn::upsample2x_backward(du1);
    }
    nn::Tensor3 dp0;
    nn::silu_backward(c.p0, dcur, dp0);
    return m.d_in_.backward(c.z, dp0);
  }

  static nn::Tensor3 mel_to_tensor(const specops::MelSpectrogram& mel) {
    nn::Tensor3 x(1, mel.frames(), mel.bins());
    std::copy(mel.values.a.begin(), mel.values.a.end(), x.v.begin());
    return x;
  }
};

std::pair<LatentTensor, LatentTensor> VaeModel::encode(
    const specops::MelSpectrogram& mel) const {
  if (mel.frames() % cfg_.compression != 0 || mel.bins() % cfg_.compression != 0)
    throw ConfigError("vae encode: mel shape " + std::to_string(mel.frames()) + "x" +
                      std::to_string(mel.bins()) + " not divisible by compression " +
                      std::to_string(cfg_.compression));
  VaeTrainer::EncCtx ctx;
  VaeTrainer::encode_forward(*this, VaeTrainer::mel_to_tensor(mel), ctx);
  LatentTensor mean, logvar;
  VaeTrainer::split_head(*this, ctx.head, &mean, &logvar);
  return {std::move(mean), std::move(logvar)};
}

specops::MelSpectrogram VaeModel::decode(const LatentTensor& z,
                                         const specops::MelConfig& mel_cfg) const {
  if (z.channels() != cfg_.latent_channels)
    throw ConfigError("vae decode: latent has " + std::to_string(z.channels()) +
                      " channels, model expects " +
                      std::to_string(cfg_.latent_channels));
  if (z.frames() * cfg_.compression != mel_cfg.frames ||
      z.bins() * cfg_.compression != mel_cfg.mel_bins)
    throw ConfigError("vae decode: latent shape inconsistent with mel config");
  VaeTrainer::DecCtx ctx;
  const nn::Tensor3 out = VaeTrainer::decode_forward(*this, z.data, ctx);
  specops::MelSpectrogram mel;
  mel.config = mel_cfg;
  mel.values = Mat(out.h, out.w);
  const double floor = specops::log_floor();
  for (int t = 0; t < out.h; ++t)
    for (int b = 0; b < out.w; ++b) mel.values.at(t, b) = std::max(out.at(0, t, b), floor);
  return mel;
}

LatentTensor reparameterize(const LatentTensor& mean, const LatentTensor& log_variance,
                            Rng& rng) {
  if (!mean.data.same_shape(log_variance.data))
    throw InputError("reparameterize: shape mismatch");
  LatentTensor z = mean;
  for (std::size_t i = 0; i < z.data.v.size(); ++i)
    z.data.v[i] += std::exp(0.5 * log_variance.data.v[i]) * rng.normal();
  return z;
}

double kl_divergence(const LatentTensor& mean, const LatentTensor& log_variance) {
  if (!mean.data.same_shape(log_variance.data))
    throw InputError("kl_divergence: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < mean.data.v.size(); ++i) {
    const double mu = mean.data.v[i];
    const double lv = log_variance.data.v[i];
    acc += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
  }
  return acc / static_cast<double>(mean.data.v.size());
}

double reconstruction_mse(const specops::MelSpectrogram& recon,
                          const specops::MelSpectrogram& target) {
  if (recon.frames() != target.frames() || recon.bins() != target.bins())
    throw InputError("reconstruction_mse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < recon.values.a.size(); ++i) {
    const double d = recon.values.a[i] - target.values.a[i];
    acc += d * d;
  }
  return acc / static_cast<double>(recon.values.a.size());
}

namespace {

struct SampleLoss {
  double total, rec, kl;
};

// Shared by elbo_loss and the trainer so both see the same objective.
SampleLoss forward_backward(VaeModel& model, const specops::MelSpectrogram& mel,
                            Rng& rng, bool with_grad) {
  VaeTrainer::EncCtx enc;
  VaeTrainer::encode_forward(model, VaeTrainer::mel_to_tensor(mel), enc);
  LatentTensor mean, logvar;
  VaeTrainer::split_head(model, enc.head, &mean, &logvar);

  nn::Tensor3 eps(mean.data.ch, mean.data.h, mean.data.w);
  rng.fill_normal(eps.v);
  LatentTensor z = mean;
  for (std::size_t i = 0; i < z.data.v.size(); ++i)
    z.data.v[i] += std::exp(0.5 * logvar.data.v[i]) * eps.v[i];

  VaeTrainer::DecCtx dec;
  const nn::Tensor3 recon = VaeTrainer::decode_forward(model, z.data, dec);

  const std::size_t mel_count = recon.v.size();
  double rec = 0.0;
  for (std::size_t i = 0; i < mel_count; ++i) {
    const double d = recon.v[i] - mel.values.a[i];
    rec += d * d;
  }
  rec /= static_cast<double>(mel_count);
  const double kl = kl_divergence(mean, logvar);
  const double total = rec + model.config().kl_weight * kl;

  if (with_grad) {
    nn::Tensor3 drecon(recon.ch, recon.h, recon.w);
    for (std::size_t i = 0; i < mel_count; ++i)
      drecon.v[i] = 2.0 * (recon.v[i] - mel.values.a[i]) / static_cast<double>(mel_count);
    const nn::Tensor3 dz = VaeTrainer::decode_backward(model, dec, drecon);

    const std::size_t latent_count = mean.data.v.size();
    const double klw = model.config().kl_weight;
    nn::Tensor3 dhead(enc.head.ch, enc.head.h, enc.head.w);
    const std::size_t plane = enc.head.plane_size();
    const int lc = model.config().latent_channels;
    for (std::size_t i = 0; i < latent_count; ++i) {
      const double mu = mean.data.v[i];
      const double lv = logvar.data.v[i];
      // reconstruction path through the sampled latent + analytic KL
      double dmu = dz.v[i] + klw * 0.5 * (2.0 * mu) / static_cast<double>(latent_count);
      double dlv = dz.v[i] * eps.v[i] * 0.5 * std::exp(0.5 * lv) +
                   klw * 0.5 * (std::exp(lv) - 1.0) / static_cast<double>(latent_count);
      dhead.v[i] = dmu;
      dhead.v[static_cast<std::size_t>(lc) * plane + i] = dlv;
    }
    VaeTrainer::encode_backward(model, enc, dhead);
  }
  return {total, rec, kl};
}

}  // namespace

ElboTerms elbo_loss(const VaeModel& model, const specops::MelSpectrogram& mel,
                    Rng& rng) {
  // The const_cast is confined to the no-grad path.
  const SampleLoss s =
      forward_backward(const_cast<VaeModel&>(model), mel, rng, /*with_grad=*/false);
  return {s.total, s.rec, s.kl};
}

VaeTrainReport train_vae(VaeModel& model,
                         const std::vector<specops::MelSpectrogram>& mels,
                         int epochs, int batch_size, double lr, std::uint64_t seed) {
  VaeTrainReport report;
  if (epochs <= 0) return report;
  if (mels.empty()) throw InputError("train_vae: no training mels");
  if (batch_size <= 0) throw InputError("train_vae: batch size must be positive");

  nn::Adam adam(lr);
  std::vector<std::size_t> order(mels.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(epoch) + 0x7ae));
    rng.shuffle(order);
    double sum_total = 0.0, sum_rec = 0.0, sum_kl = 0.0;
    int count = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      model.registry().zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const SampleLoss s = forward_backward(model, mels[order[i]], rng, true);
        if (!std::isfinite(s.total))
          throw TrainingError("vae training diverged at epoch " + std::to_string(epoch) +
                              " sample " + std::to_string(i));
        sum_total += s.total;
        sum_rec += s.rec;
        sum_kl += s.kl;
        ++count;
      }
      // average the batch gradient
      const double inv = 1.0 / static_cast<double>(end - start);
      for (nn::Param* p : model.registry().params())
        for (double& g : p->g) g *= inv;
      adam.step(model.registry());
    }
    report.epoch_total.push_back(sum_total / count);
    report.epoch_reconstruction.push_back(sum_rec / count);
    report.epoch_kl.push_back(sum_kl / count);
  }
  return report;
}

VaeTrainReport train_vae(VaeModel& model, const dataio::DatasetManifest& manifest,
                         const specops::MelProcessor& mel, double clip_seconds,
                         int epochs, int batch_size, double lr, std::uint64_t seed) {
  if (manifest.entries.empty()) throw InputError("train_vae: manifest has no entries");
  std::vector<specops::MelSpectrogram> mels;
  mels.reserve(manifest.entries.size());
  for (const dataio::ManifestEntry& entry : manifest.entries) {
    dataio::AudioClip clip =
        dataio::load_clip(manifest, entry, mel.config().sample_rate);
    clip = dataio::trim_or_pad(clip, clip_seconds);
    mels.push_back(mel.forward(clip));
  }
  return train_vae(model, mels, epochs, batch_size, lr, seed);
}

}  // namespace foleygen::vaecodec
