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

#ifndef FOLEYGEN_ORCHESTRATOR_HPP_
#define FOLEYGEN_ORCHESTRATOR_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "foleygen/dataio.hpp"
#include "foleygen/fadmetric.hpp"
#include "foleygen/latentdiff.hpp"
#include "foleygen/selector.hpp"

namespace foleygen::orchestrator {

// Flat `key = value` run configuration. Keys are validated against the
// known set below; anything else fails fast. Pattern keys take a class
// name suffix (dataset.prompt.<class>, route.<class>, filter.mode.<class>,
// filter.threshold.<class>, filter.targets.<class>).
class RunConfig {
 public:
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_string(const std::string& text, const std::string& source);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback = "") const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const dataio::ClassMap& classes() const { return classes_; }
  std::filesystem::path out_dir() const;
  std::uint64_t base_seed() const;

 private:
  void validate_keys(const std::string& source) const;
  void build_classes();

  std::map<std::string, std::string> values_;
  dataio::ClassMap classes_;
};

struct ModelProfile {
  std::string name;  // "small" | "large"
  int sample_rate = 22050;
  int compression = 4;
  int denoiser_width = 32;
  int embed_channels = 8;
  int vae_channels = 16;
  bool upsample_output = false;
  specops::MelConfig mel;
};

ModelProfile make_profile(const RunConfig& cfg, const std::string& name);

// Default ensemble split: moving_motor_vehicle and rain go to the large
// stack, the other five to the small one; route.<class> overrides.
ModelProfile route_class(const dataio::ClassLabel& label, const RunConfig& cfg);
std::string route_class_name(const dataio::ClassLabel& label, const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints: FCKP | u32 version | module id | u64 fingerprint |
// u64 count | doubles | u64 payload checksum.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t fingerprint_of(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const std::string& module_id,
                     std::uint64_t fingerprint, const std::vector<double>& params);

struct LoadedCheckpoint {
  std::string module_id;
  std::uint64_t fingerprint = 0;
  std::vector<double> params;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint_checked(const std::filesystem::path& path,
                                         const std::string& expected_module,
                                         std::uint64_t expected_fingerprint);

// ---------------------------------------------------------------------------

// Append-only run log with ISO-8601 UTC timestamps.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path);
  void line(const std::string& message);

 private:
  std::ofstream out_;
};

// Exclusive ownership of an output directory via a .lock file.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

// ---------------------------------------------------------------------------
// Trained per-profile stack, reconstructed from checkpoints.

struct ProfileBundle {
  ModelProfile profile;
  std::unique_ptr<jointembed::JointEmbedModel> clap;
  std::unique_ptr<vaecodec::VaeModel> vae;
  std::unique_ptr<latentdiff::UNetDenoiser> ldm;
  std::map<int, double> thresholds;  // class id -> filter threshold
};

std::filesystem::path checkpoint_dir(const RunConfig& cfg);
ProfileBundle load_bundle(const RunConfig& cfg, const std::string& profile_name);

// Fresh (untrained) models shaped for a profile.
std::unique_ptr<jointembed::JointEmbedModel> make_clap(const RunConfig& cfg,
                                                       const ModelProfile& profile,
                                                       std::uint64_t seed);
std::unique_ptr<vaecodec::VaeModel> make_vae(const RunConfig& cfg,
                                             const ModelProfile& profile,
                                             std::uint64_t seed);
std::unique_ptr<latentdiff::UNetDenoiser> make_ldm(const RunConfig& cfg,
                                                   const ModelProfile& profile,
                                                   std::uint64_t seed);

// Stage drivers. Each stage checkpoints its result and is skipped on rerun
// when the existing checkpoint's fingerprint matches.
struct StageResult {
  std::filesystem::path checkpoint;
  bool skipped = false;
};

StageResult stage_train_clap(const RunConfig& cfg, const ModelProfile& profile,
                             std::uint64_t seed, RunLog& log);
StageResult stage_train_vae(const RunConfig& cfg, const ModelProfile& profile,
                            std::uint64_t seed, RunLog& log);
StageResult stage_pretrain_ldm(const RunConfig& cfg, const ModelProfile& profile,
                               std::uint64_t seed, RunLog& log);
StageResult stage_finetune_ldm(const RunConfig& cfg, const ModelProfile& profile,
                               std::uint64_t seed, RunLog& log);

// Stage order: joint embedding, VAE, LDM pretrain (audio embeddings), LDM
// finetune (text embeddings); runs for every profile the routing needs.
std::vector<std::filesystem::path> run_transfer_pipeline(const RunConfig& cfg,
                                                         std::uint64_t seed,
                                                         RunLog& log);

struct GenerateResult {
  std::vector<std::filesystem::path> wavs;
  int candidates_generated = 0;
  int rounds_used = 0;
  bool fallback_used = false;
};

GenerateResult generate_clips(const dataio::ClassLabel& label, int count,
                              const RunConfig& cfg, std::uint64_t seed, RunLog& log);

// Embedding helpers shared by evaluate and the acceptance harness.
std::unique_ptr<fadmetric::EmbeddingBackend> make_backend(const RunConfig& cfg);
std::map<std::string, std::vector<std::vector<double>>> embed_wav_tree(
    const std::filesystem::path& dir, const dataio::ClassMap& classes,
    const fadmetric::EmbeddingBackend& backend, const specops::MelConfig& mel_cfg,
    double clip_seconds);
std::map<std::string, std::vector<std::vector<double>>> embed_manifest(
    const dataio::DatasetManifest& manifest, const dataio::ClassMap& classes,
    const fadmetric::EmbeddingBackend& backend, const specops::MelConfig& mel_cfg,
    double clip_seconds);

fadmetric::FadReport evaluate_run(const RunConfig& cfg,
                                  const std::filesystem::path& output_dir,
                                  const std::filesystem::path& reference_manifest,
                                  RunLog& log);

// CLI verb bodies; `pipeline` = train + generate + evaluate.
void verb_ingest(const RunConfig& cfg, std::uint64_t seed);
void verb_train_clap(const RunConfig& cfg, std::uint64_t seed);
void verb_train_vae(const RunConfig& cfg, std::uint64_t seed);
void verb_pretrain_ldm(const RunConfig& cfg, std::uint64_t seed);
void verb_finetune_ldm(const RunConfig& cfg, std::uint64_t seed);
void verb_generate(const RunConfig& cfg, std::uint64_t seed);
void verb_evaluate(const RunConfig& cfg, std::uint64_t seed);
void verb_pipeline(const RunConfig& cfg, std::uint64_t seed);

}  // namespace foleygen::orchestrator

#endif  // FOLEYGEN_ORCHESTRATOR_HPP_
