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

#include "foleygen/jointembed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "foleygen/errors.hpp"

namespace foleygen::jointembed {
namespace {

constexpr double kTemperatureMin = 1e-3;
constexpr double kTemperatureMax = 1.0;

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      words.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(current);
  return words;
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  Vocabulary vocab;
  for (const std::string& t : texts) {
    for (std::string& w : split_words(t)) vocab.words_.push_back(std::move(w));
  }
  std::sort(vocab.words_.begin(), vocab.words_.end());
  vocab.words_.erase(std::unique(vocab.words_.begin(), vocab.words_.end()),
                     vocab.words_.end());
  return vocab;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
  std::vector<int> ids;
  for (const std::string& w : split_words(text)) {
    const auto it = std::lower_bound(words_.begin(), words_.end(), w);
    if (it != words_.end() && *it == w) {
      ids.push_back(static_cast<int>(it - words_.begin()) + 1);
    } else {
      ids.push_back(0);  // UNK
    }
  }
  if (ids.empty()) ids.push_back(0);
  return ids;
}

JointEmbedModel::JointEmbedModel(const JointEmbedConfig& cfg, Vocabulary vocab,
                                 std::uint64_t seed)
    : cfg_(cfg),
      vocab_(std::move(vocab)),
      a1_(1, cfg.base_channels, 2),
      a2_(cfg.base_channels, 2 * cfg.base_channels, 2),
      a3_(2 * cfg.base_channels, 4 * cfg.base_channels, 2),
      a_proj_(4 * cfg.base_channels, cfg.embed_dim),
      tokens_(static_cast<std::size_t>(vocab_.size()) * cfg.token_dim),
      t1_(cfg.token_dim, cfg.text_hidden),
      t2_(cfg.text_hidden, cfg.embed_dim),
      temperature_(1) {
  if (cfg.mel_frames % 8 != 0 || cfg.mel_bins % 8 != 0)
    throw ConfigError("joint embed: mel dims must be divisible by 8");
  Rng rng(Rng::mix(seed, 0x10a1));
  a1_.init(rng);
  a2_.init(rng);
  a3_.init(rng);
  a_proj_.init(rng);
  for (double& v : tokens_.w) v = 0.1 * rng.normal();
  t1_.init(rng);
  t2_.init(rng);
  temperature_.w[0] = cfg.temperature_init;

  a1_.register_params(registry_);
  a2_.register_params(registry_);
  a3_.register_params(registry_);
  a_proj_.register_params(registry_);
  registry_.add(&tokens_);
  t1_.register_params(registry_);
  t2_.register_params(registry_);
  registry_.add(&temperature_);
}

std::string JointEmbedModel::fingerprint_text() const {
  std::ostringstream os;
  os << "jointembed|dim=" << cfg_.embed_dim << "|base=" << cfg_.base_channels
     << "|token=" << cfg_.token_dim << "|hidden=" << cfg_.text_hidden
     << "|mel=" << cfg_.mel_frames << "x" << cfg_.mel_bins << "|vocab=";
  for (const std::string& w : vocab_.words()) os << w << ",";
  return os.str();
}

// ---------------------------------------------------------------------------
// Forward/backward contexts. The trainer is a friend so inference stays a
// tight const path.

struct JointEmbedTrainer {
  static nn::Param& temperature(JointEmbedModel& m) { return m.temperature_; }

  struct AudioCtx {
    nn::Tensor3 x, p1, h1, p2, h2, p3, h3;
    std::vector<double> pooled, proj;
  };
  struct TextCtx {
    std::vector<int> ids;
    std::vector<double> avg, p1, h1, out;
  };

  static std::vector<double> audio_forward(const JointEmbedModel& m,
                                           const specops::MelSpectrogram& mel,
                                           AudioCtx* ctx) {
    if (mel.frames() != m.cfg_.mel_frames || mel.bins() != m.cfg_.mel_bins)
      throw ConfigError("encode_audio: mel shape " + std::to_string(mel.frames()) +
                        "x" + std::to_string(mel.bins()) + " != configured " +
                        std::to_string(m.cfg_.mel_frames) + "x" +
                        std::to_string(m.cfg_.mel_bins));
    AudioCtx local;
    AudioCtx& c = ctx ? *ctx : local;
    c.x = nn::Tensor3(1, mel.frames(), mel.bins());
    std::copy(mel.values.a.begin(), mel.values.a.end(), c.x.v.begin());
    c.p1 = m.a1_.forward(c.x);
    nn::silu_forward(c.p1, c.h1);
    c.p2 = m.a2_.forward(c.h1);
    nn::silu_forward(c.p2, c.h2);
    c.p3 = m.a3_.forward(c.h2);
    nn::silu_forward(c.p3, c.h3);
    c.pooled = nn::global_avg_pool(c.h3);
    c.proj = m.a_proj_.forward(c.pooled);
    return nn::l2_normalize(c.proj);
  }

  static void audio_backward(JointEmbedModel& m, const AudioCtx& c,
                             const std::vector<double>& demb) {
    const std::vector<double> dproj = nn::l2_normalize_backward(c.proj, demb);
    const std::vector<double> dpooled = m.a_proj_.backward(c.pooled, dproj);
    nn::Tensor3 dh3 = nn::global_avg_pool_backward(dpooled, c.h3.ch, c.h3.h, c.h3.w);
    nn::Tensor3 dp3;
    nn::silu_backward(c.p3, dh3, dp3);
    nn::Tensor3 dh2 = m.a3_.backward(c.h2, dp3);
    nn::Tensor3 dp2;
    nn::silu_backward(c.p2, dh2, dp2);
    nn::Tensor3 dh1 = m.a2_.backward(c.h1, dp2);
    nn::Tensor3 dp1;
    nn::silu_backward(c.p1, dh1, dp1);
    m.a1_.backward(c.x, dp1);
  }

  static std::vector<double> text_forward(const JointEmbedModel& m,
                                          const std::string& prompt, TextCtx* ctx) {
    if (prompt.empty()) throw InputError("encode_text: empty prompt");
    TextCtx local;
    TextCtx& c = ctx ? *ctx : local;
    c.ids = m.vocab_.tokenize(prompt);
    c.avg.assign(static_cast<std::size_t>(m.cfg_.token_dim), 0.0);
    const double inv = 1.0 / static_cast<double>(c.ids.size());
    for (int id : c.ids) {
      const double* row =
          m.tokens_.w.data() + static_cast<std::size_t>(id) * m.cfg_.token_dim;
      for (int k = 0; k < m.cfg_.token_dim; ++k) c.avg[static_cast<std::size_t>(k)] += row[k] * inv;
    }
    c.p1 = m.t1_.forward(c.avg);
    nn::silu_forward_vec(c.p1, c.h1);
    c.out = m.t2_.forward(c.h1);
    return nn::l2_normalize(c.out);
  }

  static void text_backward(JointEmbedModel& m, const TextCtx& c,
                            const std::vector<double>& demb) {
    const std::vector<double> dout = nn::l2_normalize_backward(c.out, demb);
    const std::vector<double> dh1 = m.t2_.backward(c.h1, dout);
    std::vector<double> dp1;
    nn::silu_backward_vec(c.p1, dh1, dp1);
    const std::vector<double> davg = m.t1_.backward(c.avg, dp1);
    const double inv = 1.0 / static_cast<double>(c.ids.size());
    for (int id : c.ids) {
      double* grow = m.tokens_.g.data() + static_cast<std::size_t>(id) * m.cfg_.token_dim;
      for (int k = 0; k < m.cfg_.token_dim; ++k) grow[k] += davg[static_cast<std::size_t>(k)] * inv;
    }
  }

  // Loss plus gradients wrt the (normalized) embeddings and temperature.
  static double info_nce_with_grad(const std::vector<std::vector<double>>& audio,
                                   const std::vector<std::vector<double>>& text,
                                   double tau,
                                   std::vector<std::vector<double>>* daudio,
                                   std::vector<std::vector<double>>* dtext,
                                   double* dtau) {
    const int b = static_cast<int>(audio.size());
    const int d = static_cast<int>(audio[0].size());
    std::vector<double> sims(static_cast<std::size_t>(b) * b, 0.0);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) acc += audio[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * text[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
        sims[static_cast<std::size_t>(i) * b + j] = acc;
      }

    auto logit = [&](int i, int j) { return sims[static_cast<std::size_t>(i) * b + j] / tau; };

    double loss = 0.0;
    std::vector<double> glogit(static_cast<std::size_t>(b) * b, 0.0);
    const double scale = 1.0 / (2.0 * b);
    // audio -> text over rows
    for (int i = 0; i < b; ++i) {
      double mx = logit(i, 0);
      for (int j = 1; j < b; ++j) mx = std::max(mx, logit(i, j));
      double z = 0.0;
      for (int j = 0; j < b; ++j) z += std::exp(logit(i, j) - mx);
      loss += scale * (std::log(z) + mx - logit(i, i));
      for (int j = 0; j < b; ++j) {
        const double p = std::exp(logit(i, j) - mx) / z;
        glogit[static_cast<std::size_t>(i) * b + j] += scale * (p - (i == j ? 1.0 : 0.0));
      }
    }
    // text -> audio over columns
    for (int j = 0; j < b; ++j) {
      double mx = logit(0, j);
      for (int i = 1; i < b; ++i) mx = std::max(mx, logit(i, j));
      double z = 0.0;
      for (int i = 0; i < b; ++i) z += std::exp(logit(i, j) - mx);
      loss += scale * (std::log(z) + mx - logit(j, j));
      for (int i = 0; i < b; ++i) {
        const double p = std::exp(logit(i, j) - mx) / z;
        glogit[static_cast<std::size_t>(i) * b + j] += scale * (p - (i == j ? 1.0 : 0.0));
      }
    }

    if (daudio != nullptr) {
      daudio->assign(static_cast<std::size_t>(b), std::vector<double>(static_cast<std::size_t>(d), 0.0));
      dtext->assign(static_cast<std::size_t>(b), std::vector<double>(static_cast<std::size_t>(d), 0.0));
      double tau_acc = 0.0;
      for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
          const double g = glogit[static_cast<std::size_t>(i) * b + j];
          const double ds = g / tau;
          tau_acc += g * (-sims[static_cast<std::size_t>(i) * b + j] / (tau * tau));
          for (int k = 0; k < d; ++k) {
            (*daudio)[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] += ds * text[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
            (*dtext)[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] += ds * audio[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
          }
        }
      }
      *dtau = tau_acc;
    }
    return loss;
  }
};

EmbeddingVector JointEmbedModel::encode_text(const std::string& prompt) const {
  EmbeddingVector e;
  e.values = JointEmbedTrainer::text_forward(*this, prompt, nullptr);
  e.modality = Modality::kText;
  return e;
}

EmbeddingVector JointEmbedModel::encode_audio(const specops::MelSpectrogram& mel) const {
  EmbeddingVector e;
  e.values = JointEmbedTrainer::audio_forward(*this, mel, nullptr);
  e.modality = Modality::kAudio;
  return e;
}

double info_nce_loss(const std::vector<EmbeddingVector>& audio,
                     const std::vector<EmbeddingVector>& text, double temperature) {
  if (audio.size() != text.size() || audio.size() < 2)
    throw InputError("info_nce_loss: need aligned batches of size >= 2");
  if (temperature <= 0.0) throw InputError("info_nce_loss: temperature must be > 0");
  std::vector<std::vector<double>> a, t;
  for (std::size_t i = 0; i < audio.size(); ++i) {
    if (audio[i].dim() != text[i].dim() || audio[i].dim() != audio[0].dim())
      throw InputError("info_nce_loss: embedding dimension mismatch");
    a.push_back(audio[i].values);
    t.push_back(text[i].values);
  }
  return JointEmbedTrainer::info_nce_with_grad(a, t, temperature, nullptr, nullptr,
                                               nullptr);
}

double contrastive_loss(
    const JointEmbedModel& model,
    const std::vector<std::pair<specops::MelSpectrogram, std::string>>& batch) {
  if (batch.size() < 2) throw InputError("contrastive_loss: batch size must be >= 2");
  std::vector<EmbeddingVector> audio, text;
  for (const auto& [mel, prompt] : batch) {
    audio.push_back(model.encode_audio(mel));
    text.push_back(model.encode_text(prompt));
  }
  return info_nce_loss(audio, text, model.temperature());
}

TrainReport train_joint_embedding_pairs(
    JointEmbedModel& model,
    const std::vector<std::pair<specops::MelSpectrogram, std::string>>& pairs,
    const TrainOptions& options, std::uint64_t seed) {
  TrainReport report;
  if (options.epochs <= 0) return report;
  if (pairs.size() < 2)
    throw InputError("train_joint_embedding: need at least 2 pairs");

  nn::Adam adam(options.lr);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(epoch) + 1));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      if (end - start < 2) continue;  // InfoNCE needs negatives

      std::vector<JointEmbedTrainer::AudioCtx> actx(end - start);
      std::vector<JointEmbedTrainer::TextCtx> tctx(end - start);
      std::vector<std::vector<double>> a_emb, t_emb;
      for (std::size_t i = start; i < end; ++i) {
        const auto& [mel, prompt] = pairs[order[i]];
        a_emb.push_back(JointEmbedTrainer::audio_forward(model, mel, &actx[i - start]));
        t_emb.push_back(JointEmbedTrainer::text_forward(model, prompt, &tctx[i - start]));
      }

      std::vector<std::vector<double>> da, dt;
      double dtau = 0.0;
      const double loss = JointEmbedTrainer::info_nce_with_grad(
          a_emb, t_emb, model.temperature(), &da, &dt, &dtau);
      if (!std::isfinite(loss))
        throw TrainingError("joint embedding diverged at epoch " +
                            std::to_string(epoch) + " batch " + std::to_string(batches));

      model.registry().zero_grad();
      for (std::size_t i = 0; i < a_emb.size(); ++i) {
        JointEmbedTrainer::audio_backward(model, actx[i], da[i]);
        JointEmbedTrainer::text_backward(model, tctx[i], dt[i]);
      }
      JointEmbedTrainer::temperature(model).g[0] = dtau;
      adam.step(model.registry());
      double& tau = JointEmbedTrainer::temperature(model).w[0];
      tau = std::clamp(tau, kTemperatureMin, kTemperatureMax);

      epoch_loss += loss;
      ++batches;
    }
    report.epoch_mean_loss.push_back(batches > 0 ? epoch_loss / batches : 0.0);
  }
  return report;
}

TrainReport train_joint_embedding(JointEmbedModel& model,
                                  const dataio::DatasetManifest& manifest,
                                  const dataio::ClassMap& classes,
                                  const specops::MelProcessor& mel,
                                  double clip_seconds, const TrainOptions& options,
                                  std::uint64_t seed) {
  if (manifest.entries.empty())
    throw InputError("train_joint_embedding: manifest has no entries");
  std::vector<std::pair<specops::MelSpectrogram, std::string>> pairs;
  pairs.reserve(manifest.entries.size());
  for (const dataio::ManifestEntry& entry : manifest.entries) {
    dataio::AudioClip clip =
        dataio::load_clip(manifest, entry, mel.config().sample_rate);
    clip = dataio::trim_or_pad(clip, clip_seconds);
    std::string prompt;
    if (entry.label_id.has_value()) {
      prompt = classes.by_id(*entry.label_id).prompt;
    } else if (!entry.caption.empty()) {
      prompt = entry.caption;
    } else {
      throw InputError("train_joint_embedding: entry '" + entry.path +
                       "' has neither label nor caption");
    }
    pairs.emplace_back(mel.forward(clip), std::move(prompt));
  }
  return train_joint_embedding_pairs(model, pairs, options, seed);
}

}  // namespace foleygen::jointembed
