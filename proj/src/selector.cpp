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

#include "foleygen/selector.hpp"

#include <algorithm>
#include <cmath>

#include "foleygen/errors.hpp"

namespace foleygen::selector {
namespace {

double primary_score(const Candidate& c, const std::string& primary_name) {
  const auto it = c.scores.find(primary_name);
  if (it == c.scores.end())
    throw InputError("candidate '" + c.id + "' has no score for target '" +
                     primary_name + "'");
  return it->second;
}

}  // namespace

void score_candidates(std::vector<Candidate>& candidates,
                      const std::vector<std::pair<std::string, EmbeddingVector>>& targets) {
  if (targets.empty()) throw InputError("score_candidates: empty target list");
  for (Candidate& c : candidates)
    for (const auto& [name, target] : targets)
      c.scores[name] = cosine_similarity(c.audio_embedding, target);
}

FilterResult apply_threshold_filter(const std::vector<Candidate>& candidates,
                                    const FilterPolicy& policy,
                                    bool rounds_exhausted) {
  if (policy.targets.empty())
    throw InputError("apply_threshold_filter: policy has no targets");
  const std::string& primary = policy.targets[0].first;

  FilterResult result;
  for (const Candidate& c : candidates) {
    const double threshold = policy.threshold_for(c);
    bool pass;
    if (policy.mode == FilterMode::kConjunctive) {
      pass = true;
      for (const auto& [name, target] : policy.targets)
        if (primary_score(c, name) < threshold) {
          pass = false;
          break;
        }
    } else {
      pass = primary_score(c, primary) >= threshold;
    }
    if (pass) result.accepted.push_back(c);
  }

  if (result.accepted.empty() && rounds_exhausted && !candidates.empty()) {
    const Candidate* best = &candidates.front();
    for (const Candidate& c : candidates)
      if (primary_score(c, primary) > primary_score(*best, primary)) best = &c;
    result.accepted.push_back(*best);
    result.fallback_used = true;
  }
  return result;
}

MotorReference build_motor_reference(const std::vector<EmbeddingVector>& class_embeddings,
                                     int k) {
  if (class_embeddings.empty())
    throw InputError("build_motor_reference: empty class embedding set");
  if (k < 1 || k > static_cast<int>(class_embeddings.size()))
    throw InputError("build_motor_reference: k must be in [1, class size]");

  const int dim = class_embeddings[0].dim();
  EmbeddingVector centroid;
  centroid.modality = Modality::kAudio;
  centroid.values.assign(static_cast<std::size_t>(dim), 0.0);
  for (const EmbeddingVector& e : class_embeddings) {
    if (e.dim() != dim)
      throw InputError("build_motor_reference: embedding dimension mismatch");
    for (int i = 0; i < dim; ++i)
      centroid.values[static_cast<std::size_t>(i)] += e.values[static_cast<std::size_t>(i)];
  }
  for (double& v : centroid.values) v /= static_cast<double>(class_embeddings.size());

  // typicality = cosine to the class centroid; stable sort keeps input order
  // on ties
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < class_embeddings.size(); ++i)
    ranked.emplace_back(cosine_similarity(class_embeddings[i], centroid), i);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  MotorReference ref;
  ref.primary.modality = Modality::kAudio;
  ref.primary.values.assign(static_cast<std::size_t>(dim), 0.0);
  for (int i = 0; i < k; ++i) {
    const EmbeddingVector& e = class_embeddings[ranked[static_cast<std::size_t>(i)].second];
    ref.members.push_back(e);
    for (int d = 0; d < dim; ++d)
      ref.primary.values[static_cast<std::size_t>(d)] += e.values[static_cast<std::size_t>(d)] / k;
  }
  return ref;
}

MotorReference build_motor_reference(const std::vector<specops::MelSpectrogram>& class_mels,
                                     const jointembed::JointEmbedModel& model, int k) {
  std::vector<EmbeddingVector> embeddings;
  embeddings.reserve(class_mels.size());
  for (const specops::MelSpectrogram& mel : class_mels)
    embeddings.push_back(model.encode_audio(mel));
  return build_motor_reference(embeddings, k);
}

std::vector<Candidate> select_outputs(const std::vector<Candidate>& accepted,
                                      int required, const std::string& primary_target) {
  if (accepted.empty()) throw InputError("select_outputs: empty accepted set");
  std::vector<Candidate> out = accepted;
  std::stable_sort(out.begin(), out.end(), [&](const Candidate& a, const Candidate& b) {
    const double sa = primary_score(a, primary_target);
    const double sb = primary_score(b, primary_target);
    if (sa != sb) return sa > sb;
    return a.seed_order < b.seed_order;
  });
  if (static_cast<int>(out.size()) > required)
    out.resize(static_cast<std::size_t>(required));
  return out;
}

}  // namespace foleygen::selector
