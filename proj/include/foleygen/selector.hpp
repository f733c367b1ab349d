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

#ifndef FOLEYGEN_SELECTOR_HPP_
#define FOLEYGEN_SELECTOR_HPP_

#include <map>
#include <string>
#include <vector>

#include "foleygen/dataio.hpp"
#include "foleygen/embedding.hpp"
#include "foleygen/jointembed.hpp"

namespace foleygen::selector {

struct Candidate {
  std::string id;
  dataio::AudioClip clip;  // may be empty for score-only use
  EmbeddingVector audio_embedding;
  std::map<std::string, double> scores;  // target name -> cosine
  int seed_order = 0;                    // generation order, breaks ties
};

enum class FilterMode { kText, kAudioReference, kConjunctive };

struct FilterPolicy {
  FilterMode mode = FilterMode::kText;
  std::map<int, double> class_thresholds;  // class id -> cosine threshold
  double default_threshold = 0.0;
  // (name, embedding) pairs; targets[0] is the primary scoring target.
  std::vector<std::pair<std::string, EmbeddingVector>> targets;
  int max_resample_rounds = 5;
  int reference_k = 10;

  double threshold_for(const Candidate& c) const {
    if (c.clip.label_id.has_value()) {
      const auto it = class_thresholds.find(*c.clip.label_id);
      if (it != class_thresholds.end()) return it->second;
    }
    return default_threshold;
  }
};

// Adds one cosine score per target to every candidate; order preserved.
void score_candidates(std::vector<Candidate>& candidates,
                      const std::vector<std::pair<std::string, EmbeddingVector>>& targets);

struct FilterResult {
  std::vector<Candidate> accepted;
  bool fallback_used = false;
};

// Threshold filter against the primary target (or all targets in
// conjunctive mode). When nothing passes and the resample budget is spent,
// the single best-scoring candidate is returned instead of an empty set.
FilterResult apply_threshold_filter(const std::vector<Candidate>& candidates,
                                    const FilterPolicy& policy,
                                    bool rounds_exhausted);

struct MotorReference {
  EmbeddingVector primary;               // mean of the selected members
  std::vector<EmbeddingVector> members;  // top-k most typical embeddings
};

// Ranks class-audio embeddings by similarity to the class centroid and
// keeps the top k; their mean becomes the primary filter target.
MotorReference build_motor_reference(const std::vector<EmbeddingVector>& class_embeddings,
                                     int k);
MotorReference build_motor_reference(const std::vector<specops::MelSpectrogram>& class_mels,
                                     const jointembed::JointEmbedModel& model, int k);

// Top `required` accepted candidates by primary-target score, descending;
// ties broken by generation order.
std::vector<Candidate> select_outputs(const std::vector<Candidate>& accepted,
                                      int required, const std::string& primary_target);

}  // namespace foleygen::selector

#endif  // FOLEYGEN_SELECTOR_HPP_
