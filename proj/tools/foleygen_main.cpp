// Copyright 2026 The foleygen Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: ingest, train-clap, train-vae, pretrain-ldm,
// finetune-ldm, generate, evaluate, pipeline, synth-dataset.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "foleygen/dataio.hpp"
#include "foleygen/errors.hpp"
#include "foleygen/orchestrator.hpp"

namespace {

using foleygen::orchestrator::RunConfig;

struct VerbArgs {
  std::string config_path;
  std::int64_t seed = -1;  // -1: take the config's seed key
};

std::uint64_t effective_seed(const RunConfig& cfg, const VerbArgs& args) {
  return args.seed >= 0 ? static_cast<std::uint64_t>(args.seed) : cfg.base_seed();
}

void add_verb(CLI::App& app, const std::string& name, const std::string& help,
              VerbArgs& args,
              void (*body)(const RunConfig&, std::uint64_t)) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", args.config_path, "run configuration file")->required();
  sub->add_option("--seed", args.seed, "seed override (defaults to the config's seed)");
  sub->callback([&args, body]() {
    const RunConfig cfg = RunConfig::from_file(args.config_path);
    body(cfg, effective_seed(cfg, args));
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"foleygen: label-conditioned Foley sound generation"};
  app.require_subcommand(1);

  VerbArgs args;
  add_verb(app, "ingest", "validate a dataset and print per-class statistics", args,
           foleygen::orchestrator::verb_ingest);
  add_verb(app, "train-clap", "train the joint audio-text embedding", args,
           foleygen::orchestrator::verb_train_clap);
  add_verb(app, "train-vae", "train the mel-spectrogram VAE", args,
           foleygen::orchestrator::verb_train_vae);
  add_verb(app, "pretrain-ldm", "pretrain the diffusion generator on audio embeddings",
           args, foleygen::orchestrator::verb_pretrain_ldm);
  add_verb(app, "finetune-ldm", "finetune the diffusion generator on text embeddings",
           args, foleygen::orchestrator::verb_finetune_ldm);
  add_verb(app, "generate", "sample, filter, and write clips for every class", args,
           foleygen::orchestrator::verb_generate);
  add_verb(app, "evaluate", "compute the per-class FAD report", args,
           foleygen::orchestrator::verb_evaluate);
  add_verb(app, "pipeline", "run all stages: train, generate, evaluate", args,
           foleygen::orchestrator::verb_pipeline);

  // synthetic corpus writer, mostly for demos and smoke tests
  std::string synth_out = "synth_data";
  int synth_clips = 40;
  double synth_seconds = 4.0;
  int synth_rate = 22050;
  std::int64_t synth_seed = 7;
  CLI::App* synth =
      app.add_subcommand("synth-dataset", "write a deterministic synthetic corpus");
  synth->add_option("--out", synth_out, "output dataset root");
  synth->add_option("--clips", synth_clips, "clips per class");
  synth->add_option("--seconds", synth_seconds, "clip length in seconds");
  synth->add_option("--rate", synth_rate, "sample rate in Hz");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->callback([&]() {
    foleygen::dataio::write_synthetic_corpus(
        synth_out, "train", foleygen::dataio::ClassMap::dcase_default(), synth_clips,
        synth_seconds, synth_rate, static_cast<std::uint64_t>(synth_seed));
    std::cout << "wrote synthetic corpus under " << synth_out << "/train\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const foleygen::Error& e) {
    std::cerr << "error[" << e.category() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
