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

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

#include "foleygen/errors.hpp"
#include "foleygen/orchestrator.hpp"

namespace foleygen::orchestrator {
namespace {

std::vector<std::string> split_pipe(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (c == '|') {
      out.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) out.push_back(current);
  return out;
}

dataio::DatasetManifest task_manifest(const RunConfig& cfg) {
  const std::string root = cfg.get("dataset.root");
  if (root.empty()) throw ConfigError("config is missing required key 'dataset.root'");
  const std::string split = cfg.get("dataset.split", "train");
  return dataio::load_manifest(std::filesystem::path(root) / split / "manifest.csv",
                               cfg.classes().count() - 1);
}

dataio::DatasetManifest pretrain_manifest(const RunConfig& cfg) {
  const std::string root = cfg.get("dataset.pretrain_root", cfg.get("dataset.root"));
  if (root.empty()) throw ConfigError("config is missing required key 'dataset.root'");
  const std::string split = cfg.get("dataset.split", "train");
  return dataio::load_manifest(std::filesystem::path(root) / split / "manifest.csv",
                               cfg.classes().count() - 1);
}

latentdiff::NoiseSchedule schedule_from(const RunConfig& cfg) {
  return latentdiff::NoiseSchedule::linear(cfg.get_int("schedule.n", 1000),
                                           cfg.get_double("schedule.beta_start", 1e-4),
                                           cfg.get_double("schedule.beta_end", 0.02));
}

latentdiff::SamplerConfig sampler_from(const RunConfig& cfg) {
  latentdiff::SamplerConfig sampler;
  sampler.steps = cfg.get_int("sampler.steps", 200);
  sampler.eta = cfg.get_double("sampler.eta", 0.0);
  return sampler;
}

std::uint64_t stage_seed(const RunConfig& cfg, std::uint64_t seed,
                         const std::string& stage) {
  (void)cfg;
  return Rng::mix(seed, fingerprint_of(stage));
}

double percentile25(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double q = 0.25 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(q);
  const double frac = q - static_cast<double>(lo);
  return values[lo] + frac * (values[std::min(lo + 1, values.size() - 1)] - values[lo]);
}

// 25th percentile of each class's clip-to-prompt similarity, written next
// to the checkpoints so generation picks them up.
void write_thresholds(const RunConfig& cfg, const ModelProfile& profile,
                      const jointembed::JointEmbedModel& clap, RunLog& log) {
  const dataio::DatasetManifest manifest = task_manifest(cfg);
  const specops::MelProcessor mel(profile.mel);
  const double clip_seconds = cfg.get_double("dataset.clip_seconds", 4.0);

  std::map<int, std::vector<double>> sims;
  std::map<int, EmbeddingVector> prompt_embeddings;
  for (const dataio::ClassLabel& label : cfg.classes().all())
    prompt_embeddings[label.id] = clap.encode_text(label.prompt);
  for (const dataio::ManifestEntry& entry : manifest.entries) {
    if (!entry.label_id.has_value()) continue;
    dataio::AudioClip clip = dataio::load_clip(manifest, entry, profile.mel.sample_rate);
    clip = dataio::trim_or_pad(clip, clip_seconds);
    const EmbeddingVector e = clap.encode_audio(mel.forward(clip));
    sims[*entry.label_id].push_back(
        cosine_similarity(e, prompt_embeddings[*entry.label_id]));
  }

  const std::filesystem::path path =
      checkpoint_dir(cfg) / ("thresholds_" + profile.name + ".csv");
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "class,threshold\n";
  for (const dataio::ClassLabel& label : cfg.classes().all()) {
    const auto it = sims.find(label.id);
    if (it == sims.end() || it->second.empty()) continue;
    f << label.name << "," << percentile25(it->second) << "\n";
  }
  log.line("thresholds written for profile " + profile.name);
}

struct ClapVae {
  std::unique_ptr<jointembed::JointEmbedModel> clap;
  std::unique_ptr<vaecodec::VaeModel> vae;
};

ClapVae load_clap_vae(const RunConfig& cfg, const ModelProfile& profile) {
  ClapVae pair;
  const std::filesystem::path dir = checkpoint_dir(cfg);
  pair.clap = make_clap(cfg, profile, 0);
  pair.clap->registry().load_flat(
      load_checkpoint_checked(
          dir / (profile.name + "_clap.ckpt"), "jointembed/" + profile.name,
          fingerprint_of(pair.clap->fingerprint_text() + "|profile=" + profile.name))
          .params);
  pair.vae = make_vae(cfg, profile, 0);
  pair.vae->registry().load_flat(
      load_checkpoint_checked(
          dir / (profile.name + "_vae.ckpt"), "vaecodec/" + profile.name,
          fingerprint_of(pair.vae->fingerprint_text() + "|profile=" + profile.name))
          .params);
  return pair;
}

std::string loss_summary(const std::vector<double>& trace) {
  if (trace.empty()) return "no epochs";
  std::ostringstream os;
  os << "loss " << trace.front() << " -> " << trace.back();
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

StageResult stage_train_clap(const RunConfig& cfg, const ModelProfile& profile,
                             std::uint64_t seed, RunLog& log) {
  auto model = make_clap(cfg, profile, stage_seed(cfg, seed, "clap/" + profile.name));
  const std::string module = "jointembed/" + profile.name;
  const std::uint64_t fp =
      fingerprint_of(model->fingerprint_text() + "|profile=" + profile.name);
  const std::filesystem::path ckpt =
      checkpoint_dir(cfg) / (profile.name + "_clap.ckpt");

  if (std::filesystem::exists(ckpt)) {
    const auto loaded = load_checkpoint_checked(ckpt, module, fp);
    log.line("stage train-clap profile=" + profile.name + " skipped (checkpoint ok)");
    if (!std::filesystem::exists(checkpoint_dir(cfg) /
                                 ("thresholds_" + profile.name + ".csv"))) {
      model->registry().load_flat(loaded.params);
      write_thresholds(cfg, profile, *model, log);
    }
    return {ckpt, true};
  }

  log.line("stage train-clap profile=" + profile.name + " start");
  const dataio::DatasetManifest manifest = task_manifest(cfg);
  const specops::MelProcessor mel(profile.mel);
  jointembed::TrainOptions options;
  options.epochs = cfg.get_int("train.clap_epochs", 24);
  options.batch_size = cfg.get_int("train.batch_size", 8);
  options.lr = cfg.get_double("train.lr", 1e-3);
  const auto report = jointembed::train_joint_embedding(
      *model, manifest, cfg.classes(), mel, cfg.get_double("dataset.clip_seconds", 4.0),
      options, stage_seed(cfg, seed, "clap-train/" + profile.name));
  save_checkpoint(ckpt, module, fp, model->registry().flatten());
  write_thresholds(cfg, profile, *model, log);
  log.line("stage train-clap profile=" + profile.name + " done, " +
           loss_summary(report.epoch_mean_loss));
  return {ckpt, false};
}

StageResult stage_train_vae(const RunConfig& cfg, const ModelProfile& profile,
                            std::uint64_t seed, RunLog& log) {
  auto model = make_vae(cfg, profile, stage_seed(cfg, seed, "vae/" + profile.name));
  const std::string module = "vaecodec/" + profile.name;
  const std::uint64_t fp =
      fingerprint_of(model->fingerprint_text() + "|profile=" + profile.name);
  const std::filesystem::path ckpt = checkpoint_dir(cfg) / (profile.name + "_vae.ckpt");

  if (std::filesystem::exists(ckpt)) {
    load_checkpoint_checked(ckpt, module, fp);
    log.line("stage train-vae profile=" + profile.name + " skipped (checkpoint ok)");
    return {ckpt, true};
  }

  log.line("stage train-vae profile=" + profile.name + " start");
  const dataio::DatasetManifest manifest = task_manifest(cfg);
  const specops::MelProcessor mel(profile.mel);
  const auto report = vaecodec::train_vae(
      *model, manifest, mel, cfg.get_double("dataset.clip_seconds", 4.0),
      cfg.get_int("train.vae_epochs", 30), cfg.get_int("train.batch_size", 8),
      cfg.get_double("train.lr", 1e-3), stage_seed(cfg, seed, "vae-train/" + profile.name));
  save_checkpoint(ckpt, module, fp, model->registry().flatten());
  log.line("stage train-vae profile=" + profile.name + " done, " +
           loss_summary(report.epoch_total));
  return {ckpt, false};
}

StageResult stage_pretrain_ldm(const RunConfig& cfg, const ModelProfile& profile,
                               std::uint64_t seed, RunLog& log) {
  auto model = make_ldm(cfg, profile, stage_seed(cfg, seed, "ldm/" + profile.name));
  const std::string module = "latentdiff/" + profile.name + "/pretrain";
  const std::uint64_t fp =
      fingerprint_of(model->fingerprint_text() + "|profile=" + profile.name + "|pretrain");
  const std::filesystem::path ckpt =
      checkpoint_dir(cfg) / (profile.name + "_ldm_pretrained.ckpt");

  if (std::filesystem::exists(ckpt)) {
    load_checkpoint_checked(ckpt, module, fp);
    log.line("stage pretrain-ldm profile=" + profile.name + " skipped (checkpoint ok)");
    return {ckpt, true};
  }

  log.line("stage pretrain-ldm profile=" + profile.name + " start");
  const ClapVae frozen = load_clap_vae(cfg, profile);
  const std::uint64_t clap_sum = frozen.clap->param_checksum();
  const std::uint64_t vae_sum = frozen.vae->param_checksum();
  log.line("frozen checksums clap=" + std::to_string(clap_sum) +
           " vae=" + std::to_string(vae_sum));

  const dataio::DatasetManifest manifest = pretrain_manifest(cfg);
  const specops::MelProcessor mel(profile.mel);
  latentdiff::LdmTrainContext ctx{*frozen.vae, *frozen.clap, cfg.classes(), mel,
                                  cfg.get_double("dataset.pretrain_clip_seconds", 10.0)};
  latentdiff::LdmTrainOptions options;
  options.epochs = cfg.get_int("train.ldm_pretrain_epochs", 12);
  options.batch_size = cfg.get_int("train.batch_size", 8);
  options.lr = cfg.get_double("train.lr", 1e-3);
  const auto report = latentdiff::train_ldm(
      *model, latentdiff::TrainMode::kPretrain, manifest, ctx, schedule_from(cfg),
      options, stage_seed(cfg, seed, "ldm-pretrain/" + profile.name));

  log.line("frozen checksums after clap=" + std::to_string(frozen.clap->param_checksum()) +
           " vae=" + std::to_string(frozen.vae->param_checksum()));
  save_checkpoint(ckpt, module, fp, model->registry().flatten());
  log.line("stage pretrain-ldm profile=" + profile.name + " done, " +
           loss_summary(report.epoch_mean_loss));
  return {ckpt, false};
}

StageResult stage_finetune_ldm(const RunConfig& cfg, const ModelProfile& profile,
                               std::uint64_t seed, RunLog& log) {
  auto model = make_ldm(cfg, profile, stage_seed(cfg, seed, "ldm/" + profile.name));
  const std::string module = "latentdiff/" + profile.name;
  const std::uint64_t fp =
      fingerprint_of(model->fingerprint_text() + "|profile=" + profile.name);
  const std::filesystem::path ckpt = checkpoint_dir(cfg) / (profile.name + "_ldm.ckpt");

  if (std::filesystem::exists(ckpt)) {
    load_checkpoint_checked(ckpt, module, fp);
    log.line("stage finetune-ldm profile=" + profile.name + " skipped (checkpoint ok)");
    return {ckpt, true};
  }

  const std::filesystem::path pre_ckpt =
      checkpoint_dir(cfg) / (profile.name + "_ldm_pretrained.ckpt");
  if (!std::filesystem::exists(pre_ckpt))
    throw IoError("stage finetune-ldm: missing pretrain checkpoint " +
                  pre_ckpt.string());
  model->registry().load_flat(
      load_checkpoint_checked(pre_ckpt, "latentdiff/" + profile.name + "/pretrain",
                              fingerprint_of(model->fingerprint_text() + "|profile=" +
                                             profile.name + "|pretrain"))
          .params);

  log.line("stage finetune-ldm profile=" + profile.name + " start");
  const ClapVae frozen = load_clap_vae(cfg, profile);
  const dataio::DatasetManifest manifest = task_manifest(cfg);
  const specops::MelProcessor mel(profile.mel);
  latentdiff::LdmTrainContext ctx{*frozen.vae, *frozen.clap, cfg.classes(), mel,
                                  cfg.get_double("dataset.clip_seconds", 4.0)};
  latentdiff::LdmTrainOptions options;
  options.epochs = cfg.get_int("train.ldm_finetune_epochs", 12);
  options.batch_size = cfg.get_int("train.batch_size", 8);
  options.lr = cfg.get_double("train.lr", 1e-3);
  const auto report = latentdiff::train_ldm(
      *model, latentdiff::TrainMode::kFinetune, manifest, ctx, schedule_from(cfg),
      options, stage_seed(cfg, seed, "ldm-finetune/" + profile.name));

  save_checkpoint(ckpt, module, fp, model->registry().flatten());
  log.line("stage finetune-ldm profile=" + profile.name + " done, " +
           loss_summary(report.epoch_mean_loss));
  return {ckpt, false};
}

std::vector<std::filesystem::path> run_transfer_pipeline(const RunConfig& cfg,
                                                         std::uint64_t seed,
                                                         RunLog& log) {
  std::set<std::string> needed;
  for (const dataio::ClassLabel& label : cfg.classes().all())
    needed.insert(route_class_name(label, cfg));

  std::vector<std::filesystem::path> checkpoints;
  for (const std::string& name : needed) {
    const ModelProfile profile = make_profile(cfg, name);
    const char* stage = "";
    try {
      stage = "train-clap";
      checkpoints.push_back(stage_train_clap(cfg, profile, seed, log).checkpoint);
      stage = "train-vae";
      checkpoints.push_back(stage_train_vae(cfg, profile, seed, log).checkpoint);
      stage = "pretrain-ldm";
      checkpoints.push_back(stage_pretrain_ldm(cfg, profile, seed, log).checkpoint);
      stage = "finetune-ldm";
      checkpoints.push_back(stage_finetune_ldm(cfg, profile, seed, log).checkpoint);
    } catch (const Error& e) {
      log.line(std::string("stage ") + stage + " profile=" + name + " failed: " +
               e.what());
      throw Error(e.category(), std::string("stage ") + stage + " (profile " + name +
                                    "): " + e.what());
    }
  }
  return checkpoints;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

struct ScoresCsv {
  std::ofstream out;

  explicit ScoresCsv(const std::filesystem::path& path) {
    const bool fresh = !std::filesystem::exists(path);
    out.open(path, std::ios::app);
    if (!out) throw IoError("cannot open " + path.string());
    if (fresh) out << "candidate_id,target,score,accepted\n";
  }
};

selector::Candidate synthesize_candidate(
    const ProfileBundle& bundle, const specops::MelProcessor& mel,
    const latentdiff::NoiseSchedule& schedule, const latentdiff::SamplerConfig& sampler,
    const std::vector<double>& condition, const dataio::ClassLabel& label,
    double clip_seconds, int gl_iters, std::uint64_t cand_seed, int seed_order,
    const std::string& id) {
  const latentdiff::DenoiserConfig& dc = bundle.ldm->config();
  std::vector<nn::Tensor3> latents = latentdiff::sample_latents(
      *bundle.ldm, condition, sampler, schedule, cand_seed, 1, dc.latent_channels,
      dc.latent_frames, dc.latent_bins);

  vaecodec::LatentTensor z;
  z.data = std::move(latents[0]);
  z.compression = bundle.profile.compression;
  const double scale = bundle.ldm->latent_scale();
  if (scale != 0.0 && scale != 1.0)
    for (double& v : z.data.v) v /= scale;

  const specops::MelSpectrogram decoded = bundle.vae->decode(z, bundle.profile.mel);
  const Mat magnitude = mel.inverse(decoded);
  dataio::AudioClip clip = mel.griffin_lim(magnitude, gl_iters);

  selector::Candidate cand;
  cand.id = id;
  cand.seed_order = seed_order;
  cand.audio_embedding = bundle.clap->encode_audio(mel.forward(clip));

  if (bundle.profile.upsample_output) clip = dataio::resample(clip, 22050);
  clip = dataio::trim_or_pad(clip, clip_seconds);
  clip.label_id = label.id;
  clip.source_id = id;
  cand.clip = std::move(clip);
  return cand;
}

}  // namespace

GenerateResult generate_clips(const dataio::ClassLabel& label, int count,
                              const RunConfig& cfg, std::uint64_t seed, RunLog& log) {
  if (count < 1) throw InputError("generate_clips: count must be >= 1");
  const std::string profile_name = route_class_name(label, cfg);
  const ProfileBundle bundle = load_bundle(cfg, profile_name);
  const specops::MelProcessor mel(bundle.profile.mel);
  const latentdiff::NoiseSchedule schedule = schedule_from(cfg);
  const latentdiff::SamplerConfig sampler = sampler_from(cfg);
  const double clip_seconds = cfg.get_double("dataset.clip_seconds", 4.0);
  const int gl_iters = cfg.get_int("generate.griffin_lim_iters", 32);

  // conditioning always uses the text embedding of the class prompt
  const std::vector<double> condition = bundle.clap->encode_text(label.prompt).values;

  // filter policy
  selector::FilterPolicy policy;
  const std::string mode_key = "filter.mode." + label.name;
  std::string mode = cfg.get(mode_key);
  if (mode.empty())
    mode = (label.name == "moving_motor_vehicle") ? "audio_reference" : "text";
  double threshold = 0.0;
  if (cfg.has("filter.threshold." + label.name)) {
    threshold = cfg.get_double("filter.threshold." + label.name, 0.0);
  } else if (const auto it = bundle.thresholds.find(label.id);
             it != bundle.thresholds.end()) {
    threshold = it->second;
  } else {
    log.line("warning: no threshold for class " + label.name + ", using 0");
  }
  policy.class_thresholds[label.id] = threshold;
  policy.default_threshold = threshold;
  policy.max_resample_rounds = cfg.get_int("filter.max_resample_rounds", 5);
  policy.reference_k = cfg.get_int("filter.reference_k", 10);

  if (mode == "audio_reference") {
    policy.mode = selector::FilterMode::kAudioReference;
    const dataio::DatasetManifest manifest = task_manifest(cfg);
    std::vector<specops::MelSpectrogram> class_mels;
    for (const dataio::ManifestEntry& entry : manifest.entries) {
      if (entry.label_id != label.id) continue;
      dataio::AudioClip clip =
          dataio::load_clip(manifest, entry, bundle.profile.mel.sample_rate);
      class_mels.push_back(mel.forward(dataio::trim_or_pad(clip, clip_seconds)));
    }
    if (class_mels.empty())
      throw InputError("audio_reference filter: no training clips for class " +
                       label.name);
    const int k = std::min<int>(policy.reference_k, static_cast<int>(class_mels.size()));
    const selector::MotorReference ref =
        selector::build_motor_reference(class_mels, *bundle.clap, k);
    policy.targets.emplace_back("audio_reference:" + label.name, ref.primary);
  } else if (mode == "conjunctive") {
    policy.mode = selector::FilterMode::kConjunctive;
    std::vector<std::string> targets = split_pipe(cfg.get("filter.targets." + label.name));
    if (targets.empty()) targets.push_back(label.prompt);
    for (const std::string& t : targets)
      policy.targets.emplace_back(t, bundle.clap->encode_text(t));
  } else {
    policy.mode = selector::FilterMode::kText;
    policy.targets.emplace_back(label.prompt, bundle.clap->encode_text(label.prompt));
  }
  const std::string primary_name = policy.targets[0].first;

  const int per_round = std::max(1, cfg.get_int("generate.candidates_per_round", count));

  GenerateResult result;
  std::vector<selector::Candidate> all, accepted;
  const std::uint64_t class_seed = Rng::mix(seed, static_cast<std::uint64_t>(label.id));
  for (int round = 0; round < policy.max_resample_rounds; ++round) {
    std::vector<selector::Candidate> batch;
    for (int i = 0; i < per_round; ++i) {
      const std::uint64_t cand_seed = Rng::mix(
          class_seed, (static_cast<std::uint64_t>(round) << 32) |
                          static_cast<std::uint64_t>(i));
      std::ostringstream id;
      id << label.name << "_r" << round << "_c" << i;
      batch.push_back(synthesize_candidate(bundle, mel, schedule, sampler, condition,
                                           label, clip_seconds, gl_iters, cand_seed,
                                           static_cast<int>(all.size()) + i, id.str()));
    }
    selector::score_candidates(batch, policy.targets);
    const selector::FilterResult filtered =
        selector::apply_threshold_filter(batch, policy, /*rounds_exhausted=*/false);
    accepted.insert(accepted.end(), filtered.accepted.begin(), filtered.accepted.end());
    all.insert(all.end(), batch.begin(), batch.end());
    result.rounds_used = round + 1;
    if (static_cast<int>(accepted.size()) >= count) break;
  }
  result.candidates_generated = static_cast<int>(all.size());

  if (accepted.empty()) {
    const selector::FilterResult fallback =
        selector::apply_threshold_filter(all, policy, /*rounds_exhausted=*/true);
    accepted = fallback.accepted;
    result.fallback_used = true;
    log.line("class " + label.name + ": filter fallback fired, keeping top candidate");
  }

  std::set<std::string> accepted_ids;
  for (const selector::Candidate& c : accepted) accepted_ids.insert(c.id);

  if (static_cast<int>(accepted.size()) < count) {
    // resampling budget spent; fill from the best-scoring rejects
    std::vector<selector::Candidate> rejected;
    for (const selector::Candidate& c : all)
      if (accepted_ids.count(c.id) == 0) rejected.push_back(c);
    std::stable_sort(rejected.begin(), rejected.end(),
                     [&](const selector::Candidate& a, const selector::Candidate& b) {
                       const double sa = a.scores.at(primary_name);
                       const double sb = b.scores.at(primary_name);
                       if (sa != sb) return sa > sb;
                       return a.seed_order < b.seed_order;
                     });
    for (const selector::Candidate& c : rejected) {
      if (static_cast<int>(accepted.size()) >= count) break;
      accepted.push_back(c);
      result.fallback_used = true;
    }
    if (result.fallback_used)
      log.line("class " + label.name + ": filter starvation, filled " +
               std::to_string(count - static_cast<int>(accepted_ids.size())) +
               " outputs from below-threshold candidates");
  }

  const std::vector<selector::Candidate> final_set =
      selector::select_outputs(accepted, count, primary_name);

  const std::filesystem::path class_dir = cfg.out_dir() / label.name;
  std::filesystem::create_directories(class_dir);
  for (std::size_t i = 0; i < final_set.size(); ++i) {
    std::ostringstream name;
    name << label.name << "_" << i << ".wav";
    const std::filesystem::path path = class_dir / name.str();
    dataio::write_wav_pcm16(path, final_set[i].clip);
    result.wavs.push_back(path);
  }

  if (cfg.get_bool("generate.emit_unfiltered", false)) {
    std::vector<selector::Candidate> in_order = all;
    std::stable_sort(in_order.begin(), in_order.end(),
                     [](const selector::Candidate& a, const selector::Candidate& b) {
                       return a.seed_order < b.seed_order;
                     });
    const std::filesystem::path raw_dir = class_dir / "unfiltered";
    std::filesystem::create_directories(raw_dir);
    for (int i = 0; i < count && i < static_cast<int>(in_order.size()); ++i) {
      std::ostringstream name;
      name << label.name << "_" << i << ".wav";
      dataio::write_wav_pcm16(raw_dir / name.str(),
                              in_order[static_cast<std::size_t>(i)].clip);
    }
  }

  ScoresCsv scores(cfg.out_dir() / "scores.csv");
  for (const selector::Candidate& c : all)
    for (const auto& [target, score] : c.scores)
      scores.out << c.id << "," << target << "," << score << ","
                 << (accepted_ids.count(c.id) ? 1 : 0) << "\n";

  log.line("class " + label.name + ": wrote " + std::to_string(final_set.size()) +
           " clips from " + std::to_string(all.size()) + " candidates (" +
           std::to_string(result.rounds_used) + " rounds)");
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

std::unique_ptr<fadmetric::EmbeddingBackend> make_backend(const RunConfig& cfg) {
  const std::string backend = cfg.get("fad.backend", "randproj");
  if (backend == "randproj") {
    return std::make_unique<fadmetric::RandomProjectionBackend>(
        specops::MelConfig::small_profile().mel_bins, cfg.get_int("fad.dim", 64),
        static_cast<std::uint64_t>(cfg.get_int("fad.seed", 1234)));
  }
  if (backend == "joint") {
    const ModelProfile profile = make_profile(cfg, "small");
    auto clap = make_clap(cfg, profile, 0);
    clap->registry().load_flat(
        load_checkpoint_checked(
            checkpoint_dir(cfg) / "small_clap.ckpt", "jointembed/small",
            fingerprint_of(clap->fingerprint_text() + "|profile=small"))
            .params);
    // wrap so the backend owns the model
    struct Owned : fadmetric::EmbeddingBackend {
      std::unique_ptr<jointembed::JointEmbedModel> model;
      std::string name() const override { return "joint"; }
      std::vector<double> embed(const specops::MelSpectrogram& mel) const override {
        return model->encode_audio(mel).values;
      }
    };
    auto owned = std::make_unique<Owned>();
    owned->model = std::move(clap);
    return owned;
  }
  if (backend == "external") return nullptr;  // file-based path, no inference
  throw ConfigError("fad.backend must be randproj, joint, or external");
}

std::map<std::string, std::vector<std::vector<double>>> embed_wav_tree(
    const std::filesystem::path& dir, const dataio::ClassMap& classes,
    const fadmetric::EmbeddingBackend& backend, const specops::MelConfig& mel_cfg,
    double clip_seconds) {
  const specops::MelProcessor mel(mel_cfg);
  std::map<std::string, std::vector<std::vector<double>>> out;
  for (const dataio::ClassLabel& label : classes.all()) {
    const std::filesystem::path class_dir = dir / label.name;
    if (!std::filesystem::exists(class_dir)) continue;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(class_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const std::filesystem::path& path : files) {
      const dataio::WavData wav = dataio::load_wav(path);
      dataio::AudioClip clip;
      clip.sample_rate = wav.sample_rate;
      clip.samples.assign(wav.channels[0].size(), 0.0);
      const double inv = 1.0 / static_cast<double>(wav.channels.size());
      for (const auto& ch : wav.channels)
        for (std::size_t i = 0; i < ch.size(); ++i) clip.samples[i] += ch[i] * inv;
      if (clip.sample_rate != mel_cfg.sample_rate)
        clip = dataio::resample(clip, mel_cfg.sample_rate);
      clip = dataio::trim_or_pad(clip, clip_seconds);
      out[label.name].push_back(backend.embed(mel.forward(clip)));
    }
  }
  return out;
}

std::map<std::string, std::vector<std::vector<double>>> embed_manifest(
    const dataio::DatasetManifest& manifest, const dataio::ClassMap& classes,
    const fadmetric::EmbeddingBackend& backend, const specops::MelConfig& mel_cfg,
    double clip_seconds) {
  const specops::MelProcessor mel(mel_cfg);
  std::map<std::string, std::vector<std::vector<double>>> out;
  for (const dataio::ManifestEntry& entry : manifest.entries) {
    if (!entry.label_id.has_value()) continue;
    dataio::AudioClip clip = dataio::load_clip(manifest, entry, mel_cfg.sample_rate);
    clip = dataio::trim_or_pad(clip, clip_seconds);
    out[classes.by_id(*entry.label_id).name].push_back(backend.embed(mel.forward(clip)));
  }
  return out;
}

fadmetric::FadReport evaluate_run(const RunConfig& cfg,
                                  const std::filesystem::path& output_dir,
                                  const std::filesystem::path& reference_manifest,
                                  RunLog& log) {
  std::vector<std::string> class_order;
  for (const dataio::ClassLabel& label : cfg.classes().all())
    class_order.push_back(label.name);

  fadmetric::FadReport report;
  const std::string backend_name = cfg.get("fad.backend", "randproj");
  if (backend_name == "external") {
    const std::string gen_dir = cfg.get("fad.external_generated_dir");
    const std::string ref_dir = cfg.get("fad.external_reference_dir");
    if (gen_dir.empty() || ref_dir.empty())
      throw ConfigError("external FAD backend needs fad.external_generated_dir and "
                        "fad.external_reference_dir");
    std::map<std::string, std::vector<std::vector<double>>> gen, ref;
    for (const std::string& name : class_order) {
      const std::filesystem::path g = std::filesystem::path(gen_dir) / (name + ".femb");
      const std::filesystem::path r = std::filesystem::path(ref_dir) / (name + ".femb");
      if (std::filesystem::exists(g)) gen[name] = fadmetric::read_femb(g);
      if (std::filesystem::exists(r)) ref[name] = fadmetric::read_femb(r);
    }
    report = fadmetric::evaluate_classes(gen, ref, class_order, "external");
  } else {
    const auto backend = make_backend(cfg);
    const double clip_seconds = cfg.get_double("dataset.clip_seconds", 4.0);
    const specops::MelConfig mel_cfg = specops::MelConfig::small_profile();
    const auto gen =
        embed_wav_tree(output_dir, cfg.classes(), *backend, mel_cfg, clip_seconds);
    const auto ref = embed_manifest(dataio::load_manifest(reference_manifest,
                                                          cfg.classes().count() - 1),
                                    cfg.classes(), *backend, mel_cfg, clip_seconds);
    report = fadmetric::evaluate_classes(gen, ref, class_order, backend->name());
  }

  fadmetric::write_fad_report_csv(cfg.out_dir() / "fad_report.csv", report);
  fadmetric::print_fad_report(std::cout, report);
  std::ostringstream os;
  os << "fad average " << report.average << " over " << report.per_class.size()
     << " classes (backend " << report.backend << ")";
  log.line(os.str());
  return report;
}

// ---------------------------------------------------------------------------
// Verbs

void verb_ingest(const RunConfig& cfg, std::uint64_t seed) {
  (void)seed;
  const dataio::DatasetManifest manifest = task_manifest(cfg);
  std::map<int, int> counts;
  std::map<int, double> durations;
  int captioned = 0;
  for (const dataio::ManifestEntry& entry : manifest.entries) {
    const dataio::AudioClip clip = dataio::load_clip(manifest, entry, 22050);
    if (entry.label_id.has_value()) {
      counts[*entry.label_id] += 1;
      durations[*entry.label_id] += clip.duration_seconds();
    } else {
      ++captioned;
    }
  }
  std::cout << "split " << manifest.split << ": " << manifest.entries.size()
            << " entries\n";
  for (const dataio::ClassLabel& label : cfg.classes().all()) {
    std::cout << "  " << label.id << " " << label.name << ": " << counts[label.id]
              << " clips, " << durations[label.id] << " s\n";
  }
  if (captioned > 0) std::cout << "  caption-only entries: " << captioned << "\n";
}

void verb_train_clap(const RunConfig& cfg, std::uint64_t seed) {
  DirLock lock(cfg.out_dir());
  RunLog log(cfg.out_dir() / "run.log");
  std::set<std::string> needed;
  for (const dataio::ClassLabel& label : cfg.classes().all())
    needed.insert(route_class_name(label, cfg));
  for (const std::string& name : needed)
    stage_train_clap(cfg, make_profile(cfg, name), seed, log);
}

void verb_train_vae(const RunConfig& cfg, std::uint64_t seed) {
  DirLock lock(cfg.out_dir());
  RunLog log(cfg.out_dir() / "run.log");
  std::set<std::string> needed;
  for (const dataio::ClassLabel& label : cfg.classes().all())
    needed.insert(route_class_name(label, cfg));
  for (const std::string& name : needed)
    stage_train_vae(cfg, make_profile(cfg, name), seed, log);
}

void verb_pretrain_ldm(const RunConfig& cfg, std::uint64_t seed) {
  DirLock lock(cfg.out_dir());
  RunLog log(cfg.out_dir() / "run.log");
  std::set<std::string> needed;
  for (const dataio::ClassLabel& label : cfg.classes().all())
    needed.insert(route_class_name(label, cfg));
  for (const std::string& name : needed)
    stage_pretrain_ldm(cfg, make_profile(cfg, name), seed, log);
}

void verb_finetune_ldm(const RunConfig& cfg, std::uint64_t seed) {
  DirLock lock(cfg.out_dir());
  RunLog log(cfg.out_dir() / "run.log");
  std::set<std::string> needed;
  for (const dataio::ClassLabel& label : cfg.classes().all())
    needed.insert(route_class_name(label, cfg));
  for (const std::string& name : needed)
    stage_finetune_ldm(cfg, make_profile(cfg, name), seed, log);
}

void verb_generate(const RunConfig& cfg, std::uint64_t seed) {
  DirLock lock(cfg.out_dir());
  RunLog log(cfg.out_dir() / "run.log");
  const int count = cfg.get_int("generate.count", 4);
  for (const dataio::ClassLabel& label : cfg.classes().all())
    generate_clips(label, count, cfg, seed, log);
}

void verb_evaluate(const RunConfig& cfg, std::uint64_t seed) {
  (void)seed;
  DirLock lock(cfg.out_dir());
  RunLog log(cfg.out_dir() / "run.log");
  const std::string root = cfg.get("dataset.root");
  if (root.empty()) throw ConfigError("config is missing required key 'dataset.root'");
  const std::string split = cfg.get("dataset.split", "train");
  evaluate_run(cfg, cfg.out_dir(),
               std::filesystem::path(root) / split / "manifest.csv", log);
}

void verb_pipeline(const RunConfig& cfg, std::uint64_t seed) {
  DirLock lock(cfg.out_dir());
  RunLog log(cfg.out_dir() / "run.log");
  log.line("pipeline start (seed " + std::to_string(seed) + ")");
  run_transfer_pipeline(cfg, seed, log);
  const int count = cfg.get_int("generate.count", 4);
  for (const dataio::ClassLabel& label : cfg.classes().all())
    generate_clips(label, count, cfg, seed, log);
  const std::string root = cfg.get("dataset.root");
  const std::string split = cfg.get("dataset.split", "train");
  evaluate_run(cfg, cfg.out_dir(),
               std::filesystem::path(root) / split / "manifest.csv", log);
  log.line("pipeline done");
}

}  // namespace foleygen::orchestrator
