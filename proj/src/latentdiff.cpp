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

#include "foleygen/latentdiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "foleygen/errors.hpp"

namespace foleygen::latentdiff {
namespace {

std::vector<double> sinusoid_embedding(int step, int dim) {
  std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max(1, half - 1));
    out[static_cast<std::size_t>(2 * i)] = std::sin(step * freq);
    out[static_cast<std::size_t>(2 * i + 1)] = std::cos(step * freq);
  }
  return out;
}

void add_channel_bias(nn::Tensor3& x, const std::vector<double>& bias) {
  for (int c = 0; c < x.ch; ++c) {
    double* p = x.plane(c);
    const double b = bias[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < x.plane_size(); ++i) p[i] += b;
  }
}

std::vector<double> channel_sum(const nn::Tensor3& x) {
  std::vector<double> out(static_cast<std::size_t>(x.ch), 0.0);
  for (int c = 0; c < x.ch; ++c) {
    const double* p = x.plane(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.plane_size(); ++i) acc += p[i];
    out[static_cast<std::size_t>(c)] = acc;
  }
  return out;
}

void add_inplace(nn::Tensor3& a, const nn::Tensor3& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int n, double beta_start, double beta_end) {
  if (n < 1) throw ConfigError("noise schedule: need at least one step");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw ConfigError("noise schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.n_steps = n;
  s.beta.assign(static_cast<std::size_t>(n) + 1, 0.0);
  s.alpha.assign(static_cast<std::size_t>(n) + 1, 1.0);
  s.alpha_bar.assign(static_cast<std::size_t>(n) + 1, 1.0);
  for (int i = 1; i <= n; ++i) {
    const double frac = n > 1 ? static_cast<double>(i - 1) / (n - 1) : 0.0;
    s.beta[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[static_cast<std::size_t>(i)] = 1.0 - s.beta[static_cast<std::size_t>(i)];
    s.alpha_bar[static_cast<std::size_t>(i)] =
        s.alpha_bar[static_cast<std::size_t>(i) - 1] * s.alpha[static_cast<std::size_t>(i)];
  }
  return s;
}

nn::Tensor3 q_sample(const nn::Tensor3& z0, int n, const nn::Tensor3& eps,
                     const NoiseSchedule& schedule) {
  if (n < 1 || n > schedule.n_steps)
    throw InputError("q_sample: step " + std::to_string(n) + " outside [1, " +
                     std::to_string(schedule.n_steps) + "]");
  if (!z0.same_shape(eps)) throw ConfigError("q_sample: eps shape mismatch");
  const double ab = schedule.ab(n);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  nn::Tensor3 out(z0.ch, z0.h, z0.w);
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = a * z0.v[i] + b * eps.v[i];
  return out;
}

double denoise_loss(const Denoiser& model, const nn::Tensor3& z0, int n,
                    const nn::Tensor3& eps, const std::vector<double>& condition,
                    const NoiseSchedule& schedule) {
  const nn::Tensor3 zn = q_sample(z0, n, eps, schedule);
  const nn::Tensor3 pred = model.predict(zn, n, condition);
  if (!pred.same_shape(eps))
    throw ConfigError("denoise_loss: prediction shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < eps.v.size(); ++i) {
    const double d = eps.v[i] - pred.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(eps.v.size());
}

std::vector<nn::Tensor3> sample_latents(const Denoiser& model,
                                        const std::vector<double>& condition,
                                        const SamplerConfig& sampler,
                                        const NoiseSchedule& schedule,
                                        std::uint64_t seed, int count,
                                        int latent_ch, int latent_h, int latent_w,
                                        SampleStats* stats) {
  if (sampler.steps < 1) throw ConfigError("sampler: steps must be >= 1");
  if (sampler.steps > schedule.n_steps)
    throw ConfigError("sampler: steps " + std::to_string(sampler.steps) +
                      " exceed schedule length " + std::to_string(schedule.n_steps));
  if (count < 1) throw InputError("sample_latents: count must be >= 1");

  const int stride = schedule.n_steps / sampler.steps;
  std::vector<int> taus(static_cast<std::size_t>(sampler.steps));
  for (int i = 0; i < sampler.steps; ++i)
    taus[static_cast<std::size_t>(i)] = schedule.n_steps - i * stride;

  std::vector<nn::Tensor3> out;
  out.reserve(static_cast<std::size_t>(count));
  long calls = 0;
  for (int draw = 0; draw < count; ++draw) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(draw)));
    nn::Tensor3 z(latent_ch, latent_h, latent_w);
    rng.fill_normal(z.v);
    for (int i = 0; i < sampler.steps; ++i) {
      const int t = taus[static_cast<std::size_t>(i)];
      const int t_next = (i + 1 < sampler.steps) ? taus[static_cast<std::size_t>(i) + 1] : 0;
      const nn::Tensor3 eps_hat = model.predict(z, t, condition);
      ++calls;
      const double ab_t = schedule.ab(t);
      const double ab_p = schedule.ab(t_next);
      const double sqrt_ab_t = std::sqrt(ab_t);
      const double sqrt_one_minus = std::sqrt(1.0 - ab_t);
      double sigma = 0.0;
      if (sampler.eta > 0.0 && ab_p < 1.0) {
        sigma = sampler.eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) *
                std::sqrt(1.0 - ab_t / ab_p);
      }
      const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
      const double sqrt_ab_p = std::sqrt(ab_p);
      for (std::size_t k = 0; k < z.v.size(); ++k) {
        const double x0 = (z.v[k] - sqrt_one_minus * eps_hat.v[k]) / sqrt_ab_t;
        double next = sqrt_ab_p * x0 + dir * eps_hat.v[k];
        if (sigma > 0.0) next += sigma * rng.normal();
        z.v[k] = next;
      }
    }
    out.push_back(std::move(z));
  }
  if (stats != nullptr) stats->denoiser_calls = calls;
  return out;
}

// ---------------------------------------------------------------------------
// U-Net denoiser

struct UNetDenoiser::Ctx {
  std::vector<double> t_sin, u_pre, u, cond;
  nn::Tensor3 z, p0, g0, pa, h1, pd1, g1, pb, h2, pd2, g2, pm;
  nn::Tensor3 uu2, pu2, s2, pc, uu1, pu1, s1, pe, h4;
};

UNetDenoiser::UNetDenoiser(const DenoiserConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      conv_in_(cfg.latent_channels, cfg.base_width, 1),
      block1_(cfg.base_width, cfg.base_width, 1),
      down1_(cfg.base_width, 2 * cfg.base_width, 2),
      block2_(2 * cfg.base_width, 2 * cfg.base_width, 1),
      down2_(2 * cfg.base_width, 4 * cfg.base_width, 2),
      mid_(4 * cfg.base_width, 4 * cfg.base_width, 1),
      up_conv2_(4 * cfg.base_width, 2 * cfg.base_width, 1),
      block3_(2 * cfg.base_width, 2 * cfg.base_width, 1),
      up_conv1_(2 * cfg.base_width, cfg.base_width, 1),
      block4_(cfg.base_width, cfg.base_width, 1),
      conv_out_(cfg.base_width, cfg.latent_channels, 1),
      time_proj_(cfg.time_dim, cfg.fuse_dim),
      cond_proj_(cfg.cond_dim, cfg.fuse_dim, /*with_bias=*/false),
      inj1_(cfg.fuse_dim, cfg.base_width),
      inj2_(cfg.fuse_dim, 2 * cfg.base_width),
      inj3_(cfg.fuse_dim, 4 * cfg.base_width),
      latent_scale_(1) {
  if (cfg.latent_frames % 4 != 0 || cfg.latent_bins % 4 != 0)
    throw ConfigError("denoiser: latent dims must be divisible by 4");
  if (cfg.time_dim % 2 != 0) throw ConfigError("denoiser: time_dim must be even");

  Rng rng(Rng::mix(seed, 0xd1ff));
  conv_in_.init(rng);
  block1_.init(rng);
  down1_.init(rng);
  block2_.init(rng);
  down2_.init(rng);
  mid_.init(rng);
  up_conv2_.init(rng);
  block3_.init(rng);
  up_conv1_.init(rng);
  block4_.init(rng);
  conv_out_.init(rng, 0.05);  // near-zero start keeps early training stable
  time_proj_.init(rng);
  cond_proj_.init(rng);
  inj1_.init(rng, 0.5);
  inj2_.init(rng, 0.5);
  inj3_.init(rng, 0.5);
  latent_scale_.w[0] = 1.0;

  conv_in_.register_params(registry_);
  block1_.register_params(registry_);
  down1_.register_params(registry_);
  block2_.register_params(registry_);
  down2_.register_params(registry_);
  mid_.register_params(registry_);
  up_conv2_.register_params(registry_);
  block3_.register_params(registry_);
  up_conv1_.register_params(registry_);
  block4_.register_params(registry_);
  conv_out_.register_params(registry_);
  time_proj_.register_params(registry_);
  cond_proj_.register_params(registry_);
  inj1_.register_params(registry_);
  inj2_.register_params(registry_);
  inj3_.register_params(registry_);
  registry_.add(&latent_scale_);
}

std::string UNetDenoiser::fingerprint_text() const {
  std::ostringstream os;
  os << "latentdiff|latent=" << cfg_.latent_channels << "x" << cfg_.latent_frames
     << "x" << cfg_.latent_bins << "|width=" << cfg_.base_width
     << "|cond=" << cfg_.cond_dim << "|time=" << cfg_.time_dim
     << "|fuse=" << cfg_.fuse_dim;
  return os.str();
}

nn::Tensor3 UNetDenoiser::forward(const nn::Tensor3& z, int step,
                                  const std::vector<double>& condition,
                                  Ctx* ctx) const {
  if (z.ch != cfg_.latent_channels || z.h != cfg_.latent_frames ||
      z.w != cfg_.latent_bins)
    throw ConfigError("denoiser: latent shape mismatch");
  if (static_cast<int>(condition.size()) != cfg_.cond_dim)
    throw ConfigError("denoiser: condition dimension " +
                      std::to_string(condition.size()) + " != configured " +
                      std::to_string(cfg_.cond_dim));

  Ctx local;
  Ctx& c = ctx ? *ctx : local;
  c.cond = condition;
  c.t_sin = sinusoid_embedding(step, cfg_.time_dim);
  c.u_pre = time_proj_.forward(c.t_sin);
  const std::vector<double> cu = cond_proj_.forward(condition);
  for (std::size_t i = 0; i < c.u_pre.size(); ++i) c.u_pre[i] += cu[i];
  nn::silu_forward_vec(c.u_pre, c.u);

  const std::vector<double> i1 = inj1_.forward(c.u);
  const std::vector<double> i2 = inj2_.forward(c.u);
  const std::vector<double> i3 = inj3_.forward(c.u);

  c.z = z;
  c.p0 = conv_in_.forward(c.z);
  nn::Tensor3 h0;
  nn::silu_forward(c.p0, h0);
  c.g0 = std::move(h0);
  add_channel_bias(c.g0, i1);
  c.pa = block1_.forward(c.g0);
  nn::silu_forward(c.pa, c.h1);

  c.pd1 = down1_.forward(c.h1);
  nn::Tensor3 hd1;
  nn::silu_forward(c.pd1, hd1);
  c.g1 = std::move(hd1);
  add_channel_bias(c.g1, i2);
  c.pb = block2_.forward(c.g1);
  nn::silu_forward(c.pb, c.h2);

  c.pd2 = down2_.forward(c.h2);
  nn::Tensor3 hd2;
  nn::silu_forward(c.pd2, hd2);
  c.g2 = std::move(hd2);
  add_channel_bias(c.g2, i3);
  c.pm = mid_.forward(c.g2);
  nn::Tensor3 hm;
  nn::silu_forward(c.pm, hm);

  c.uu2 = nn::upsample2x(hm);
  c.pu2 = up_conv2_.forward(c.uu2);
  nn::Tensor3 hu2;
  nn::silu_forward(c.pu2, hu2);
  c.s2 = std::move(hu2);
  add_inplace(c.s2, c.h2);
  c.pc = block3_.forward(c.s2);
  nn::Tensor3 h3;
  nn::silu_forward(c.pc, h3);

  c.uu1 = nn::upsample2x(h3);
  c.pu1 = up_conv1_.forward(c.uu1);
  nn::Tensor3 hu1;
  nn::silu_forward(c.pu1, hu1);
  c.s1 = std::move(hu1);
  add_inplace(c.s1, c.h1);
  c.pe = block4_.forward(c.s1);
  nn::silu_forward(c.pe, c.h4);

  return conv_out_.forward(c.h4);
}

nn::Tensor3 UNetDenoiser::predict(const nn::Tensor3& z, int step,
                                  const std::vector<double>& condition) const {
  return forward(z, step, condition, nullptr);
}

void UNetDenoiser::backward(const Ctx& c, const nn::Tensor3& dout) {
  std::vector<double> du(static_cast<std::size_t>(cfg_.fuse_dim), 0.0);
  auto accumulate_du = [&](const std::vector<double>& d) {
    for (std::size_t i = 0; i < du.size(); ++i) du[i] += d[i];
  };

  nn::Tensor3 dh4 = conv_out_.backward(c.h4, dout);
  nn::Tensor3 dpe;
  nn::silu_backward(c.pe, dh4, dpe);
  nn::Tensor3 ds1 = block4_.backward(c.s1, dpe);

  // skip branch into h1 saved for later
  nn::Tensor3 dh1_skip = ds1;
  nn::Tensor3 dpu1;
  nn::silu_backward(c.pu1, ds1, dpu1);
  nn::Tensor3 duu1 = up_conv1_.backward(c.uu1, dpu1);
  nn::Tensor3 dh3 = nn::upsample2x_backward(duu1);
  nn::Tensor3 dpc;
  nn::silu_backward(c.pc, dh3, dpc);
  nn::Tensor3 ds2 = block3_.backward(c.s2, dpc);

  nn::Tensor3 dh2_skip = ds2;
  nn::Tensor3 dpu2;
  nn::silu_backward(c.pu2, ds2, dpu2);
  nn::Tensor3 duu2 = up_conv2_.backward(c.uu2, dpu2);
  nn::Tensor3 dhm = nn::upsample2x_backward(duu2);
  nn::Tensor3 dpm;
  nn::silu_backward(c.pm, dhm, dpm);
  nn::Tensor3 dg2 = mid_.backward(c.g2, dpm);
  accumulate_du(inj3_.backward(c.u, channel_sum(dg2)));

  nn::Tensor3 dpd2;
  nn::silu_backward(c.pd2, dg2, dpd2);
  nn::Tensor3 dh2 = down2_.backward(c.h2, dpd2);
  add_inplace(dh2, dh2_skip);
  nn::Tensor3 dpb;
  nn::silu_backward(c.pb, dh2, dpb);
  nn::Tensor3 dg1 = block2_.backward(c.g1, dpb);
  accumulate_du(inj2_.backward(c.u, channel_sum(dg1)));

  nn::Tensor3 dpd1;
  nn::silu_backward(c.pd1, dg1, dpd1);
  nn::Tensor3 dh1 = down1_.backward(c.h1, dpd1);
  add_inplace(dh1, dh1_skip);
  nn::Tensor3 dpa;
  nn::silu_backward(c.pa, dh1, dpa);
  nn::Tensor3 dg0 = block1_.backward(c.g0, dpa);
  accumulate_du(inj1_.backward(c.u, channel_sum(dg0)));

  nn::Tensor3 dp0;
  nn::silu_backward(c.p0, dg0, dp0);
  conv_in_.backward(c.z, dp0);

  std::vector<double> du_pre;
  nn::silu_backward_vec(c.u_pre, du, du_pre);
  time_proj_.backward(c.t_sin, du_pre);
  cond_proj_.backward(c.cond, du_pre);
}

double UNetDenoiser::loss_and_grad(const nn::Tensor3& z0, int n,
                                   const nn::Tensor3& eps,
                                   const std::vector<double>& condition,
                                   const NoiseSchedule& schedule) {
  const nn::Tensor3 zn = q_sample(z0, n, eps, schedule);
  Ctx ctx;
  const nn::Tensor3 pred = forward(zn, n, condition, &ctx);
  const std::size_t count = eps.v.size();
  double loss = 0.0;
  nn::Tensor3 dout(pred.ch, pred.h, pred.w);
  for (std::size_t i = 0; i < count; ++i) {
    const double d = pred.v[i] - eps.v[i];
    loss += d * d;
    dout.v[i] = 2.0 * d / static_cast<double>(count);
  }
  backward(ctx, dout);
  return loss / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Training

jointembed::TrainReport train_ldm_cached(
    UNetDenoiser& model, const std::vector<nn::Tensor3>& latents,
    const std::vector<std::vector<double>>& conditions, const NoiseSchedule& schedule,
    const LdmTrainOptions& options, std::uint64_t seed) {
  jointembed::TrainReport report;
  if (options.epochs <= 0) return report;
  if (latents.empty()) throw InputError("train_ldm: no training latents");
  if (latents.size() != conditions.size())
    throw InputError("train_ldm: latent/condition count mismatch");

  nn::Adam adam(options.lr);
  std::vector<std::size_t> order(latents.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(epoch) + 0x10d));
    rng.shuffle(order);
    double sum_loss = 0.0;
    int count = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      model.registry().zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const nn::Tensor3& z0 = latents[order[i]];
        const int n = rng.uniform_int(1, schedule.n_steps);
        nn::Tensor3 eps(z0.ch, z0.h, z0.w);
        rng.fill_normal(eps.v);
        const double loss =
            model.loss_and_grad(z0, n, eps, conditions[order[i]], schedule);
        if (!std::isfinite(loss))
          throw TrainingError("ldm training diverged at epoch " +
                              std::to_string(epoch) + " sample " + std::to_string(i));
        sum_loss += loss;
        ++count;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (nn::Param* p : model.registry().params())
        for (double& g : p->g) g *= inv;
      // the scale is data statistics, not a trainable weight
      model.registry().params().back()->g[0] = 0.0;
      adam.step(model.registry());
    }
    report.epoch_mean_loss.push_back(sum_loss / count);
  }
  return report;
}

jointembed::TrainReport train_ldm(UNetDenoiser& model, TrainMode mode,
                                  const dataio::DatasetManifest& manifest,
                                  const LdmTrainContext& ctx,
                                  const NoiseSchedule& schedule,
                                  const LdmTrainOptions& options, std::uint64_t seed) {
  if (manifest.entries.empty()) throw InputError("train_ldm: manifest has no entries");

  const std::uint64_t vae_sum_before = ctx.vae.param_checksum();
  const std::uint64_t clap_sum_before = ctx.clap.param_checksum();

  std::vector<nn::Tensor3> latents;
  std::vector<std::vector<double>> conditions;
  latents.reserve(manifest.entries.size());
  conditions.reserve(manifest.entries.size());

  for (const dataio::ManifestEntry& entry : manifest.entries) {
    dataio::AudioClip clip =
        dataio::load_clip(manifest, entry, ctx.mel.config().sample_rate);
    clip = dataio::trim_or_pad(clip, ctx.clip_seconds);
    const specops::MelSpectrogram mel = ctx.mel.forward(clip);
    latents.push_back(ctx.vae.encode(mel).first.data);
    if (mode == TrainMode::kPretrain) {
      conditions.push_back(ctx.clap.encode_audio(mel).values);
    } else {
      if (!entry.label_id.has_value())
        throw InputError("train_ldm finetune: entry '" + entry.path +
                         "' has no label, so no prompt is available");
      const std::string& prompt = ctx.classes.by_id(*entry.label_id).prompt;
      conditions.push_back(ctx.clap.encode_text(prompt).values);
    }
  }

  // Standardize the diffusion space once, from pretraining statistics.
  if (mode == TrainMode::kPretrain || model.latent_scale() == 1.0) {
    double sq = 0.0;
    std::size_t n = 0;
    for (const nn::Tensor3& z : latents) {
      for (double v : z.v) sq += v * v;
      n += z.v.size();
    }
    const double std_dev = std::sqrt(std::max(sq / static_cast<double>(n), 1e-12));
    model.set_latent_scale(1.0 / std_dev);
  }
  const double scale = model.latent_scale();
  for (nn::Tensor3& z : latents)
    for (double& v : z.v) v *= scale;

  jointembed::TrainReport report =
      train_ldm_cached(model, latents, conditions, schedule, options, seed);

  if (ctx.vae.param_checksum() != vae_sum_before ||
      ctx.clap.param_checksum() != clap_sum_before)
    throw TrainingError("train_ldm: frozen model parameters changed");
  return report;
}

}  // namespace foleygen::latentdiff
