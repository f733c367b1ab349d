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

#ifndef FOLEYGEN_DATAIO_HPP_
#define FOLEYGEN_DATAIO_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace foleygen::dataio {

struct ClassLabel {
  int id = -1;
  std::string name;
  std::string prompt;  // text description fed to the text encoder
};

// Bijective id <-> name mapping for the sound classes plus their prompts.
// The default ordering is alphabetical over the seven class names, which
// puts keyboard at id 3.
class ClassMap {
 public:
  static ClassMap dcase_default();
  // `names` in id order; `prompt_overrides` keyed by class name.
  static ClassMap create(const std::vector<std::string>& names,
                         const std::map<std::string, std::string>& prompt_overrides);

  int count() const { return static_cast<int>(labels_.size()); }
  const ClassLabel& by_id(int id) const;
  const ClassLabel* by_name(const std::string& name) const;
  const std::vector<ClassLabel>& all() const { return labels_; }

 private:
  std::vector<ClassLabel> labels_;
};

// A prompt for classes without a hand-picked description.
std::string default_prompt_for(const std::string& class_name);

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 0;
  std::optional<int> label_id;
  std::string source_id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

struct ManifestEntry {
  std::string path;             // relative to the manifest root
  std::optional<int> label_id;  // absent for caption-only rows
  std::string caption;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<ManifestEntry> entries;
};

// Parses `path,label` CSV (one header line). The label column is either a
// class id in [0, max_label_id] or free text treated as a caption. Every
// referenced file must exist under the manifest directory.
DatasetManifest load_manifest(const std::filesystem::path& csv_path,
                              int max_label_id = 6);

// Raw multichannel WAV payload; PCM16 and IEEE float32 are accepted.
struct WavData {
  std::vector<std::vector<double>> channels;
  int sample_rate = 0;
};

WavData load_wav(const std::filesystem::path& path);
void write_wav_pcm16(const std::filesystem::path& path,
                     const std::vector<std::vector<double>>& channels,
                     int sample_rate);
void write_wav_pcm16(const std::filesystem::path& path, const AudioClip& clip);
void write_wav_float32(const std::filesystem::path& path,
                       const std::vector<std::vector<double>>& channels,
                       int sample_rate);

// Decodes a manifest entry to a mono clip at `target_rate`. Stereo sources
// are downmixed by channel mean; the waveform is rescaled only when its
// peak exceeds 1.
AudioClip load_clip(const DatasetManifest& manifest, const ManifestEntry& entry,
                    int target_rate);

// Exact-length normalization: truncates from the head, zero-pads the tail.
AudioClip trim_or_pad(const AudioClip& clip, double length_s);

// Band-limited (windowed-sinc) resampling; identity when the rate matches.
AudioClip resample(const AudioClip& clip, int new_rate);

// Writes a deterministic synthetic corpus with per-class tone/noise
// textures plus a manifest, laid out as <root>/<split>/*.wav.
void write_synthetic_corpus(const std::filesystem::path& root,
                            const std::string& split, const ClassMap& classes,
                            int clips_per_class, double seconds, int sample_rate,
                            std::uint64_t seed);

// One clip of the synthetic texture family, usable directly in tests.
AudioClip synthetic_clip(const ClassLabel& label, double seconds, int sample_rate,
                         std::uint64_t seed);

}  // namespace foleygen::dataio

#endif  // FOLEYGEN_DATAIO_HPP_
