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

#ifndef FOLEYGEN_JOINTEMBED_HPP_
#define FOLEYGEN_JOINTEMBED_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "foleygen/dataio.hpp"
#include "foleygen/embedding.hpp"
#include "foleygen/nn.hpp"
#include "foleygen/specops.hpp"

namespace foleygen::jointembed {

// Fixed word list with UNK at id 0. Prompts are closed-class here, so a
// vocabulary built from them is enough.
class Vocabulary {
 public:
  static Vocabulary build(const std::vector<std::string>& texts);
  std::vector<int> tokenize(const std::string& text) const;
  int size() const { return static_cast<int>(words_.size()) + 1; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;  // sorted; token id = index + 1
};

struct JointEmbedConfig {
  int embed_dim = 64;
  int base_channels = 8;  // audio encoder width; the large profile doubles it
  int token_dim = 32;
  int text_hidden = 64;
  int mel_frames = 352;
  int mel_bins = 64;
  double temperature_init = 0.07;
};

struct TrainOptions {
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-3;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
};

// Dual-encoder contrastive model: a small conv stack over log-mels and a
// token-average MLP over prompts, projected into one unit sphere.
class JointEmbedModel {
 public:
  JointEmbedModel(const JointEmbedConfig& cfg, Vocabulary vocab, std::uint64_t seed);

  const JointEmbedConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  EmbeddingVector encode_text(const std::string& prompt) const;
  EmbeddingVector encode_audio(const specops::MelSpectrogram& mel) const;

  double temperature() const { return temperature_.w[0]; }

  nn::ParamRegistry& registry() { return registry_; }
  const nn::ParamRegistry& registry() const { return registry_; }
  std::uint64_t param_checksum() const { return registry_.checksum(); }
  std::string fingerprint_text() const;

 private:
  friend struct JointEmbedTrainer;

  JointEmbedConfig cfg_;
  Vocabulary vocab_;

  nn::Conv2d a1_, a2_, a3_;
  nn::Linear a_proj_;
  nn::Param tokens_;  // vocab x token_dim
  nn::Linear t1_, t2_;
  nn::Param temperature_;
  nn::ParamRegistry registry_;
};

// Symmetric InfoNCE over already-encoded pairs: mean of the audio->text and
// text->audio cross entropies of the similarity/temperature matrix.
double info_nce_loss(const std::vector<EmbeddingVector>& audio,
                     const std::vector<EmbeddingVector>& text, double temperature);

// Encoder path + InfoNCE for aligned (mel, prompt) pairs; batch size >= 2.
double contrastive_loss(
    const JointEmbedModel& model,
    const std::vector<std::pair<specops::MelSpectrogram, std::string>>& batch);

// In-place contrastive training on a manifest split. Entries with a label
// use the class prompt; caption rows use their caption text.
TrainReport train_joint_embedding(JointEmbedModel& model,
                                  const dataio::DatasetManifest& manifest,
                                  const dataio::ClassMap& classes,
                                  const specops::MelProcessor& mel,
                                  double clip_seconds, const TrainOptions& options,
                                  std::uint64_t seed);

// Same trainer over precomputed (mel, prompt) pairs; used by tests and by
// the manifest wrapper above.
TrainReport train_joint_embedding_pairs(
    JointEmbedModel& model,
    const std::vector<std::pair<specops::MelSpectrogram, std::string>>& pairs,
    const TrainOptions& options, std::uint64_t seed);

}  // namespace foleygen::jointembed

#endif  // FOLEYGEN_JOINTEMBED_HPP_
