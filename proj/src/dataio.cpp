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

#include "foleygen/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "foleygen/errors.hpp"
#include "foleygen/rng.hpp"

namespace foleygen::dataio {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_int(const std::string& s, int* out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    const long v = std::stol(s, &pos);
    if (pos != s.size()) return false;
    *out = static_cast<int>(v);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

std::string default_prompt_for(const std::string& class_name) {
  std::string readable = class_name;
  std::replace(readable.begin(), readable.end(), '_', ' ');
  return "the sound of " + readable;
}

ClassMap ClassMap::dcase_default() {
  static const std::vector<std::string> kNames = {
      "dog_bark",  "footstep", "gunshot",      "keyboard",
      "moving_motor_vehicle", "rain", "sneeze_cough"};
  return create(kNames, {});
}

ClassMap ClassMap::create(const std::vector<std::string>& names,
                          const std::map<std::string, std::string>& prompt_overrides) {
  if (names.empty()) throw ValidationError("class map needs at least one class name");
  std::set<std::string> seen;
  ClassMap map;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& name = names[i];
    if (name.empty()) throw ValidationError("class name must be non-empty");
    if (!seen.insert(name).second)
      throw ValidationError("duplicate class name '" + name + "'");
    ClassLabel label;
    label.id = static_cast<int>(i);
    label.name = name;
    if (auto it = prompt_overrides.find(name); it != prompt_overrides.end()) {
      label.prompt = it->second;
    } else if (name == "keyboard") {
      label.prompt = "someone using keyboard";
    } else if (name == "moving_motor_vehicle") {
      label.prompt = "A moving motor";
    } else {
      label.prompt = default_prompt_for(name);
    }
    if (label.prompt.empty())
      throw ValidationError("prompt for class '" + name + "' is empty");
    map.labels_.push_back(std::move(label));
  }
  return map;
}

const ClassLabel& ClassMap::by_id(int id) const {
  if (id < 0 || id >= count())
    throw ValidationError("class id " + std::to_string(id) + " out of range");
  return labels_[static_cast<std::size_t>(id)];
}

const ClassLabel* ClassMap::by_name(const std::string& name) const {
  for (const ClassLabel& l : labels_)
    if (l.name == name) return &l;
  return nullptr;
}

DatasetManifest load_manifest(const std::filesystem::path& csv_path,
                              int max_label_id) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open manifest " + csv_path.string());

  DatasetManifest manifest;
  manifest.root = csv_path.parent_path();
  manifest.split = manifest.root.filename().string();

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (line_no == 1) {
      if (text != "path,label")
        throw ParseError(csv_path.string() + ": line 1: expected header 'path,label'");
      continue;
    }
    if (text.empty()) continue;
    const std::size_t comma = text.find(',');
    if (comma == std::string::npos)
      throw ParseError(csv_path.string() + ": line " + std::to_string(line_no) +
                       ": expected 'path,label'");
    ManifestEntry entry;
    entry.path = trim(text.substr(0, comma));
    const std::string label_field = trim(text.substr(comma + 1));
    if (entry.path.empty())
      throw ParseError(csv_path.string() + ": line " + std::to_string(line_no) +
                       ": empty path");
    int id = 0;
    if (parse_int(label_field, &id)) {
      if (id < 0 || id > max_label_id)
        throw ValidationError(csv_path.string() + ": line " + std::to_string(line_no) +
                              ": label id " + std::to_string(id) + " outside [0, " +
                              std::to_string(max_label_id) + "]");
      entry.label_id = id;
    } else {
      entry.caption = label_field;
    }
    if (!std::filesystem::exists(manifest.root / entry.path))
      throw ValidationError(csv_path.string() + ": line " + std::to_string(line_no) +
                            ": missing file '" + entry.path + "'");
    manifest.entries.push_back(std::move(entry));
  }
  if (line_no == 0) throw ParseError(csv_path.string() + ": empty manifest file");
  return manifest;
}

// ---------------------------------------------------------------------------
// WAV input/output. RIFF parsing is done by hand: inputs are PCM16 or IEEE
// float32, outputs are always PCM16.

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void push_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void push_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void write_wav(const std::filesystem::path& path,
               const std::vector<std::vector<double>>& channels, int sample_rate,
               bool as_float) {
  if (channels.empty() || sample_rate <= 0)
    throw InputError("wav write needs at least one channel and a positive rate");
  const std::size_t frames = channels[0].size();
  for (const auto& ch : channels)
    if (ch.size() != frames) throw InputError("wav write: channel length mismatch");

  const int num_channels = static_cast<int>(channels.size());
  const int bytes_per_sample = as_float ? 4 : 2;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(frames * num_channels * bytes_per_sample);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  push_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  push_u32(out, 16);
  push_u16(out, as_float ? 3 : 1);  // IEEE float / PCM
  push_u16(out, static_cast<std::uint16_t>(num_channels));
  push_u32(out, static_cast<std::uint32_t>(sample_rate));
  push_u32(out, static_cast<std::uint32_t>(sample_rate * num_channels * bytes_per_sample));
  push_u16(out, static_cast<std::uint16_t>(num_channels * bytes_per_sample));
  push_u16(out, static_cast<std::uint16_t>(bytes_per_sample * 8));
  out += "data";
  push_u32(out, data_bytes);

  for (std::size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < num_channels; ++c) {
      const double s = channels[static_cast<std::size_t>(c)][i];
      if (as_float) {
        const float f = static_cast<float>(s);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        push_u32(out, bits);
      } else {
        const double clamped = std::clamp(s, -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        push_u16(out, static_cast<std::uint16_t>(q));
      }
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path.string());
}

}  // namespace

WavData load_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DecodeError("cannot open wav file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw DecodeError(path.string() + ": not a RIFF WAVE file");

  int format = 0, num_channels = 0, bits = 0, rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= n) {
    const std::uint32_t chunk_len = read_u32(p + off + 4);
    const unsigned char* chunk = p + off + 8;
    if (off + 8 + chunk_len > n)
      throw DecodeError(path.string() + ": truncated chunk");
    if (std::memcmp(p + off, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw DecodeError(path.string() + ": short fmt chunk");
      format = read_u16(chunk);
      num_channels = read_u16(chunk + 2);
      rate = static_cast<int>(read_u32(chunk + 4));
      bits = read_u16(chunk + 14);
    } else if (std::memcmp(p + off, "data", 4) == 0) {
      data = chunk;
      data_len = chunk_len;
    }
    off += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (num_channels <= 0 || rate <= 0 || data == nullptr)
    throw DecodeError(path.string() + ": missing fmt or data chunk");
  const bool pcm16 = (format == 1 && bits == 16);
  const bool float32 = (format == 3 && bits == 32);
  if (!pcm16 && !float32)
    throw DecodeError(path.string() + ": unsupported encoding (need PCM16 or float32)");

  const int bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = static_cast<std::size_t>(num_channels) * bytes_per_sample;
  const std::size_t frames = data_len / frame_bytes;

  WavData wav;
  wav.sample_rate = rate;
  wav.channels.assign(static_cast<std::size_t>(num_channels),
                      std::vector<double>(frames, 0.0));
  for (std::size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < num_channels; ++c) {
      const unsigned char* s = data + i * frame_bytes +
                               static_cast<std::size_t>(c) * bytes_per_sample;
      if (pcm16) {
        const auto v = static_cast<std::int16_t>(read_u16(s));
        wav.channels[static_cast<std::size_t>(c)][i] = v / 32767.0;
      } else {
        float fv;
        const std::uint32_t bits32 = read_u32(s);
        std::memcpy(&fv, &bits32, 4);
        wav.channels[static_cast<std::size_t>(c)][i] = fv;
      }
    }
  }
  return wav;
}

void write_wav_pcm16(const std::filesystem::path& path,
                     const std::vector<std::vector<double>>& channels,
                     int sample_rate) {
  write_wav(path, channels, sample_rate, /*as_float=*/false);
}

void write_wav_pcm16(const std::filesystem::path& path, const AudioClip& clip) {
  write_wav(path, {clip.samples}, clip.sample_rate, /*as_float=*/false);
}

void write_wav_float32(const std::filesystem::path& path,
                       const std::vector<std::vector<double>>& channels,
                       int sample_rate) {
  write_wav(path, channels, sample_rate, /*as_float=*/true);
}

AudioClip load_clip(const DatasetManifest& manifest, const ManifestEntry& entry,
                    int target_rate) {
  const WavData wav = load_wav(manifest.root / entry.path);

  AudioClip clip;
  clip.sample_rate = wav.sample_rate;
  clip.label_id = entry.label_id;
  clip.source_id = entry.path;
  const std::size_t frames = wav.channels[0].size();
  clip.samples.assign(frames, 0.0);
  const double inv = 1.0 / static_cast<double>(wav.channels.size());
  for (const auto& ch : wav.channels)
    for (std::size_t i = 0; i < frames; ++i) clip.samples[i] += ch[i] * inv;

  if (clip.sample_rate != target_rate) clip = resample(clip, target_rate);

  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::fabs(s));
  if (!std::isfinite(peak)) throw DecodeError(entry.path + ": non-finite samples");
  if (peak > 1.0) {
    const double inv_peak = 1.0 / peak;
    for (double& s : clip.samples) s *= inv_peak;
  }
  return clip;
}

AudioClip trim_or_pad(const AudioClip& clip, double length_s) {
  if (length_s <= 0.0) throw InputError("trim_or_pad: length must be positive");
  const auto target =
      static_cast<std::size_t>(std::llround(length_s * clip.sample_rate));
  AudioClip out = clip;
  if (out.samples.size() > target) {
    out.samples.resize(target);  // keep the head
  } else if (out.samples.size() < target) {
    out.samples.resize(target, 0.0);
  }
  return out;
}

AudioClip resample(const AudioClip& clip, int new_rate) {
  if (new_rate <= 0) throw InputError("resample: rate must be positive");
  if (clip.sample_rate == new_rate) return clip;

  const int in_rate = clip.sample_rate;
  const std::size_t in_n = clip.samples.size();
  const auto out_n = static_cast<std::size_t>(
      std::llround(static_cast<double>(in_n) * new_rate / in_rate));

  // Windowed-sinc interpolation; the cutoff tracks the lower Nyquist.
  constexpr int kHalfTaps = 24;
  const double cutoff =
      0.945 * std::min(1.0, static_cast<double>(new_rate) / in_rate);

  AudioClip out;
  out.sample_rate = new_rate;
  out.label_id = clip.label_id;
  out.source_id = clip.source_id;
  out.samples.assign(out_n, 0.0);

  const double step = static_cast<double>(in_rate) / new_rate;
  for (std::size_t j = 0; j < out_n; ++j) {
    const double t = static_cast<double>(j) * step;
    const auto center = static_cast<long>(std::floor(t));
    double acc = 0.0, wsum = 0.0;
    for (long k = center - kHalfTaps + 1; k <= center + kHalfTaps; ++k) {
      const double u = t - static_cast<double>(k);
      const double window = 0.5 + 0.5 * std::cos(kPi * u / kHalfTaps);
      double s;
      if (u == 0.0) {
        s = cutoff;
      } else {
        s = cutoff * std::sin(kPi * cutoff * u) / (kPi * cutoff * u);
      }
      const double weight = s * window;
      wsum += weight;
      if (k >= 0 && k < static_cast<long>(in_n))
        acc += weight * clip.samples[static_cast<std::size_t>(k)];
    }
    out.samples[j] = wsum > 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus: each class has a distinct tone/noise texture with seeded
// per-clip jitter. All spectral content stays below 7 kHz so the 16 kHz
// profile keeps the class signatures intact.

namespace {

void add_tone_burst(std::vector<double>& x, int rate, double t0, double dur,
                    double f0, int harmonics, double amp, double decay) {
  const auto begin = static_cast<std::size_t>(t0 * rate);
  const auto len = static_cast<std::size_t>(dur * rate);
  for (std::size_t i = 0; i < len && begin + i < x.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 0.0;
    for (int h = 1; h <= harmonics; ++h)
      v += std::sin(2.0 * kPi * f0 * h * t) / h;
    x[begin + i] += amp * v * std::exp(-decay * t);
  }
}

void add_noise_burst(std::vector<double>& x, int rate, double t0, double dur,
                     double center_hz, double bandwidth_hz, double amp,
                     double decay, Rng& rng) {
  const auto begin = static_cast<std::size_t>(t0 * rate);
  const auto len = static_cast<std::size_t>(dur * rate);
  // Band-pass noise: white noise amplitude-modulated onto a carrier.
  double lp = 0.0;
  const double alpha =
      1.0 - std::exp(-2.0 * kPi * bandwidth_hz / (2.0 * rate));
  for (std::size_t i = 0; i < len && begin + i < x.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    lp += alpha * (rng.normal() - lp);
    const double carrier = std::sin(2.0 * kPi * center_hz * t);
    x[begin + i] += amp * lp * carrier * std::exp(-decay * t) * 3.0;
  }
}

}  // namespace

AudioClip synthetic_clip(const ClassLabel& label, double seconds, int sample_rate,
                         std::uint64_t seed) {
  Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(label.id)));
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::vector<double> x(n, 0.0);
  const double total = seconds;

  switch (label.id % 7) {
    case 0: {  // dog_bark: short harmonic yaps around 300 Hz
      const int barks = 3 + rng.uniform_int(0, 2);
      for (int b = 0; b < barks; ++b) {
        const double t0 = rng.uniform() * (total - 0.3);
        const double f0 = 280.0 + 40.0 * rng.uniform();
        add_tone_burst(x, sample_rate, t0, 0.2, f0, 4, 0.5, 18.0);
      }
      break;
    }
    case 1: {  // footstep: sparse low thumps
      const int steps = 5 + rng.uniform_int(0, 2);
      for (int s = 0; s < steps; ++s) {
        const double t0 = (s + 0.2 + 0.4 * rng.uniform()) * total / (steps + 1);
        const double f0 = 85.0 + 25.0 * rng.uniform();
        add_tone_burst(x, sample_rate, t0, 0.12, f0, 2, 0.6, 35.0);
        add_noise_burst(x, sample_rate, t0, 0.03, 1200.0, 600.0, 0.08, 80.0, rng);
      }
      break;
    }
    case 2: {  // gunshot: one or two loud broadband cracks
      const int shots = 1 + rng.uniform_int(0, 1);
      for (int s = 0; s < shots; ++s) {
        const double t0 = 0.2 + rng.uniform() * (total * 0.5);
        add_noise_burst(x, sample_rate, t0, 0.35, 900.0, 2500.0, 0.9, 14.0, rng);
        add_tone_burst(x, sample_rate, t0, 0.25, 150.0, 2, 0.4, 16.0);
      }
      break;
    }
    case 3: {  // keyboard: many short high clicks
      const int clicks = 16 + rng.uniform_int(0, 8);
      for (int c = 0; c < clicks; ++c) {
        const double t0 = rng.uniform() * (total - 0.05);
        const double fc = 2800.0 + 900.0 * rng.uniform();
        add_noise_burst(x, sample_rate, t0, 0.02, fc, 1400.0, 0.5, 120.0, rng);
      }
      break;
    }
    case 4: {  // moving_motor_vehicle: steady low harmonic drone plus band noise
      const double f0 = 62.0 + 18.0 * rng.uniform();
      add_tone_burst(x, sample_rate, 0.0, total, f0, 6, 0.35, 0.0);
      add_noise_burst(x, sample_rate, 0.0, total, 450.0, 300.0, 0.12, 0.0, rng);
      break;
    }
    case 5: {  // rain: steady broadband hiss
      add_noise_burst(x, sample_rate, 0.0, total, 3300.0, 2600.0, 0.3, 0.0, rng);
      add_noise_burst(x, sample_rate, 0.0, total, 5200.0, 1500.0, 0.15, 0.0, rng);
      break;
    }
    default: {  // sneeze_cough: single mid-band burst with a sweep
      const double t0 = 0.3 + rng.uniform() * (total * 0.4);
      add_noise_burst(x, sample_rate, t0, 0.45, 800.0, 700.0, 0.7, 7.0, rng);
      add_tone_burst(x, sample_rate, t0, 0.25, 420.0 + 120.0 * rng.uniform(), 3,
                     0.2, 12.0);
      break;
    }
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  if (peak > 1e-12) {
    const double gain = 0.7 / std::max(peak, 0.7);
    for (double& v : x) v *= gain;
  }

  AudioClip clip;
  clip.samples = std::move(x);
  clip.sample_rate = sample_rate;
  clip.label_id = label.id;
  clip.source_id = label.name + "_synth";
  return clip;
}

void write_synthetic_corpus(const std::filesystem::path& root,
                            const std::string& split, const ClassMap& classes,
                            int clips_per_class, double seconds, int sample_rate,
                            std::uint64_t seed) {
  const std::filesystem::path dir = root / split;
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest under " + dir.string());
  manifest << "path,label\n";
  for (const ClassLabel& label : classes.all()) {
    for (int i = 0; i < clips_per_class; ++i) {
      const AudioClip clip = synthetic_clip(
          label, seconds, sample_rate,
          Rng::mix(seed, static_cast<std::uint64_t>(label.id) * 10007 + i));
      std::ostringstream name;
      name << label.name << "_" << i << ".wav";
      write_wav_pcm16(dir / name.str(), clip);
      manifest << name.str() << "," << label.id << "\n";
    }
  }
}

}  // namespace foleygen::dataio
