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

#include "foleygen/orchestrator.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <ctime>
#include <sstream>

#include "foleygen/errors.hpp"

namespace foleygen::orchestrator {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const std::array<const char*, 29> kExactKeys = {
    "out.dir",
    "dataset.root",
    "dataset.pretrain_root",
    "dataset.split",
    "dataset.clip_seconds",
    "dataset.pretrain_clip_seconds",
    "dataset.classes",
    "profile.small.denoiser_width",
    "profile.small.embed_channels",
    "profile.small.vae_channels",
    "profile.large.denoiser_width",
    "profile.large.embed_channels",
    "profile.large.vae_channels",
    "embed.dim",
    "schedule.n",
    "schedule.beta_start",
    "schedule.beta_end",
    "sampler.steps",
    "sampler.eta",
    "train.batch_size",
    "train.lr",
    "train.clap_epochs",
    "train.vae_epochs",
    "train.ldm_pretrain_epochs",
    "train.ldm_finetune_epochs",
    "filter.max_resample_rounds",
    "filter.reference_k",
    "generate.count",
    "generate.candidates_per_round",
};

const std::array<const char*, 7> kExactKeys2 = {
    "generate.emit_unfiltered", "generate.griffin_lim_iters",
    "fad.backend",              "fad.dim",
    "fad.seed",                 "fad.external_generated_dir",
    "fad.external_reference_dir",
};

const std::array<const char*, 5> kClassKeyPrefixes = {
    "dataset.prompt.", "route.", "filter.mode.", "filter.threshold.",
    "filter.targets.",
};

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (c == sep) {
      out.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  out.push_back(trim(current));
  return out;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_string(text, path.string());
}

RunConfig RunConfig::from_string(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ": line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + ": line " + std::to_string(line_no) + ": empty key");
    if (!cfg.values_.emplace(key, value).second)
      throw ConfigError(source + ": line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
  }
  cfg.build_classes();
  cfg.validate_keys(source);
  return cfg;
}

void RunConfig::build_classes() {
  std::vector<std::string> names;
  const auto it = values_.find("dataset.classes");
  if (it != values_.end()) {
    names = split_list(it->second, ',');
  } else {
    for (const dataio::ClassLabel& l : dataio::ClassMap::dcase_default().all())
      names.push_back(l.name);
  }
  std::map<std::string, std::string> prompts;
  for (const auto& [key, value] : values_) {
    if (key.rfind("dataset.prompt.", 0) == 0)
      prompts[key.substr(std::strlen("dataset.prompt."))] = value;
  }
  classes_ = dataio::ClassMap::create(names, prompts);
}

void RunConfig::validate_keys(const std::string& source) const {
  for (const auto& [key, value] : values_) {
    bool known = false;
    for (const char* k : kExactKeys)
      if (key == k) {
        known = true;
        break;
      }
    if (!known)
      for (const char* k : kExactKeys2)
        if (key == k) {
          known = true;
          break;
        }
    if (!known && key == "seed") known = true;
    if (!known) {
      for (const char* prefix : kClassKeyPrefixes) {
        if (key.rfind(prefix, 0) == 0) {
          const std::string suffix = key.substr(std::strlen(prefix));
          if (classes_.by_name(suffix) == nullptr)
            throw ConfigError(source + ": key '" + key +
                              "' names unknown class '" + suffix + "'");
          known = true;
          break;
        }
      }
    }
    if (!known) throw ConfigError(source + ": unknown key '" + key + "'");
  }
  // route overrides must name a profile
  for (const auto& [key, value] : values_) {
    if (key.rfind("route.", 0) == 0 && value != "small" && value != "large")
      throw ConfigError(source + ": '" + key + "' must be small or large");
    if (key.rfind("filter.mode.", 0) == 0 && value != "text" &&
        value != "audio_reference" && value != "conjunctive")
      throw ConfigError(source + ": '" + key +
                        "' must be text, audio_reference, or conjunctive");
  }
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it != values_.end() ? it->second : fallback;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const long v = std::stol(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + it->second + "' is not an integer");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + it->second + "' is not a number");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError("key '" + key + "': expected true or false");
}

std::filesystem::path RunConfig::out_dir() const {
  const std::string dir = get("out.dir");
  if (dir.empty()) throw ConfigError("config is missing required key 'out.dir'");
  return dir;
}

std::uint64_t RunConfig::base_seed() const {
  return static_cast<std::uint64_t>(get_int("seed", 0));
}

// ---------------------------------------------------------------------------

ModelProfile make_profile(const RunConfig& cfg, const std::string& name) {
  ModelProfile p;
  p.name = name;
  if (name == "small") {
    p.sample_rate = 22050;
    p.compression = 4;
    p.upsample_output = false;
    p.denoiser_width = cfg.get_int("profile.small.denoiser_width", 32);
    p.embed_channels = cfg.get_int("profile.small.embed_channels", 8);
    p.vae_channels = cfg.get_int("profile.small.vae_channels", 16);
    p.mel = specops::MelConfig::small_profile();
  } else if (name == "large") {
    p.sample_rate = 16000;
    p.compression = 8;
    p.upsample_output = true;
    p.denoiser_width = cfg.get_int("profile.large.denoiser_width", 64);
    p.embed_channels = cfg.get_int("profile.large.embed_channels", 16);
    p.vae_channels = cfg.get_int("profile.large.vae_channels", 24);
    p.mel = specops::MelConfig::large_profile();
  } else {
    throw ConfigError("unknown profile '" + name + "'");
  }
  return p;
}

std::string route_class_name(const dataio::ClassLabel& label, const RunConfig& cfg) {
  const std::string key = "route." + label.name;
  if (cfg.has(key)) return cfg.get(key);
  if (label.name == "moving_motor_vehicle" || label.name == "rain") return "large";
  return "small";
}

ModelProfile route_class(const dataio::ClassLabel& label, const RunConfig& cfg) {
  return make_profile(cfg, route_class_name(label, cfg));
}

// ---------------------------------------------------------------------------
// Checkpoints

std::uint64_t fingerprint_of(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t payload_checksum(const std::vector<double>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : params) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::string& what)
      : bytes_(bytes), what_(what) {}

  void need(std::size_t n) {
    if (off_ + n > bytes_.size())
      throw CheckpointTruncationError(what_ + ": truncated checkpoint file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[off_ + i])) << (8 * i);
    off_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[off_ + i])) << (8 * i);
    off_ += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(off_, n);
    off_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - off_; }
  const char* cursor() const { return bytes_.data() + off_; }
  void skip(std::size_t n) { off_ += n; }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t off_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& module_id,
                     std::uint64_t fingerprint, const std::vector<double>& params) {
  std::filesystem::create_directories(path.parent_path());
  std::string out;
  out.reserve(32 + module_id.size() + params.size() * 8);
  out += "FCKP";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(module_id.size()));
  out += module_id;
  put_u64(out, fingerprint);
  put_u64(out, static_cast<std::uint64_t>(params.size()));
  for (double v : params) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  }
  put_u64(out, payload_checksum(params));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  ByteReader r(bytes, path.string());
  const std::string magic = r.str(4);
  if (magic != "FCKP") throw DecodeError(path.string() + ": not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError(path.string() + ": version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  LoadedCheckpoint ckpt;
  const std::uint32_t id_len = r.u32();
  ckpt.module_id = r.str(id_len);
  ckpt.fingerprint = r.u64();
  const std::uint64_t count = r.u64();
  r.need(count * 8 + 8);
  ckpt.params.resize(count);
  std::memcpy(ckpt.params.data(), r.cursor(), count * 8);
  r.skip(count * 8);
  const std::uint64_t expected_sum = r.u64();
  if (payload_checksum(ckpt.params) != expected_sum)
    throw DecodeError(path.string() + ": checkpoint payload corrupt");
  return ckpt;
}

LoadedCheckpoint load_checkpoint_checked(const std::filesystem::path& path,
                                         const std::string& expected_module,
                                         std::uint64_t expected_fingerprint) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.module_id != expected_module)
    throw CheckpointFingerprintError(path.string() + ": module '" + ckpt.module_id +
                                     "', expected '" + expected_module + "'");
  if (ckpt.fingerprint != expected_fingerprint)
    throw CheckpointFingerprintError(
        path.string() + ": config fingerprint mismatch (checkpoint was written " +
        "under a different configuration)");
  return ckpt;
}

// ---------------------------------------------------------------------------

RunLog::RunLog(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw IoError("cannot open run log " + path.string());
}

void RunLog::line(const std::string& message) {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  out_ << stamp << " " << message << "\n";
  out_.flush();
}

DirLock::DirLock(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  lock_path_ = dir / ".lock";
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw IoError("output directory " + dir.string() +
                    " is locked by another run (.lock exists)");
    throw IoError("cannot create lock file " + lock_path_.string());
  }
  ::close(fd);
}

DirLock::~DirLock() {
  std::error_code ec;
  std::filesystem::remove(lock_path_, ec);
}

// ---------------------------------------------------------------------------
// Model construction shaped by profile + config

std::unique_ptr<jointembed::JointEmbedModel> make_clap(const RunConfig& cfg,
                                                       const ModelProfile& profile,
                                                       std::uint64_t seed) {
  jointembed::JointEmbedConfig jc;
  jc.embed_dim = cfg.get_int("embed.dim", 64);
  jc.base_channels = profile.embed_channels;
  jc.mel_frames = profile.mel.frames;
  jc.mel_bins = profile.mel.mel_bins;
  std::vector<std::string> texts;
  for (const dataio::ClassLabel& l : cfg.classes().all()) {
    texts.push_back(l.prompt);
    const std::string targets = cfg.get("filter.targets." + l.name);
    if (!targets.empty())
      for (const std::string& t : split_list(targets, '|')) texts.push_back(t);
  }
  return std::make_unique<jointembed::JointEmbedModel>(
      jc, jointembed::Vocabulary::build(texts), seed);
}

std::unique_ptr<vaecodec::VaeModel> make_vae(const RunConfig& cfg,
                                             const ModelProfile& profile,
                                             std::uint64_t seed) {
  (void)cfg;
  vaecodec::VaeConfig vc;
  vc.compression = profile.compression;
  vc.base_channels = profile.vae_channels;
  vc.latent_channels = 4;
  vc.kl_weight = 1e-2;
  vc.mel_frames = profile.mel.frames;
  vc.mel_bins = profile.mel.mel_bins;
  return std::make_unique<vaecodec::VaeModel>(vc, seed);
}

std::unique_ptr<latentdiff::UNetDenoiser> make_ldm(const RunConfig& cfg,
                                                   const ModelProfile& profile,
                                                   std::uint64_t seed) {
  latentdiff::DenoiserConfig dc;
  dc.latent_channels = 4;
  dc.latent_frames = profile.mel.frames / profile.compression;
  dc.latent_bins = profile.mel.mel_bins / profile.compression;
  dc.base_width = profile.denoiser_width;
  dc.cond_dim = cfg.get_int("embed.dim", 64);
  return std::make_unique<latentdiff::UNetDenoiser>(dc, seed);
}

std::filesystem::path checkpoint_dir(const RunConfig& cfg) {
  return cfg.out_dir() / "checkpoints";
}

ProfileBundle load_bundle(const RunConfig& cfg, const std::string& profile_name) {
  ProfileBundle bundle;
  bundle.profile = make_profile(cfg, profile_name);
  const std::filesystem::path dir = checkpoint_dir(cfg);

  bundle.clap = make_clap(cfg, bundle.profile, 0);
  const auto clap_ckpt = load_checkpoint_checked(
      dir / (profile_name + "_clap.ckpt"), "jointembed/" + profile_name,
      fingerprint_of(bundle.clap->fingerprint_text() + "|profile=" + profile_name));
  bundle.clap->registry().load_flat(clap_ckpt.params);

  bundle.vae = make_vae(cfg, bundle.profile, 0);
  const auto vae_ckpt = load_checkpoint_checked(
      dir / (profile_name + "_vae.ckpt"), "vaecodec/" + profile_name,
      fingerprint_of(bundle.vae->fingerprint_text() + "|profile=" + profile_name));
  bundle.vae->registry().load_flat(vae_ckpt.params);

  bundle.ldm = make_ldm(cfg, bundle.profile, 0);
  const auto ldm_ckpt = load_checkpoint_checked(
      dir / (profile_name + "_ldm.ckpt"), "latentdiff/" + profile_name,
      fingerprint_of(bundle.ldm->fingerprint_text() + "|profile=" + profile_name));
  bundle.ldm->registry().load_flat(ldm_ckpt.params);

  // per-class thresholds written at joint-embedding training time
  const std::filesystem::path thresholds = dir / ("thresholds_" + profile_name + ".csv");
  if (std::filesystem::exists(thresholds)) {
    std::ifstream f(thresholds);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      const std::string t = trim(line);
      if (t.empty()) continue;
      const std::size_t comma = t.find(',');
      if (comma == std::string::npos) continue;
      const dataio::ClassLabel* label = cfg.classes().by_name(t.substr(0, comma));
      if (label != nullptr)
        bundle.thresholds[label->id] = std::stod(t.substr(comma + 1));
    }
  }
  return bundle;
}

}  // namespace foleygen::orchestrator
