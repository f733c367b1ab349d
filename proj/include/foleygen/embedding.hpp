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

#ifndef FOLEYGEN_EMBEDDING_HPP_
#define FOLEYGEN_EMBEDDING_HPP_

#include <vector>

namespace foleygen {

enum class Modality { kAudio, kText };

// A point in the shared audio-text space. Encoder outputs are unit-norm;
// externally supplied feature vectors need not be.
struct EmbeddingVector {
  std::vector<double> values;
  Modality modality = Modality::kAudio;

  int dim() const { return static_cast<int>(values.size()); }
};

// a.b / (||a|| ||b||); throws InputError on dimension mismatch or a zero
// vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

}  // namespace foleygen

#endif  // FOLEYGEN_EMBEDDING_HPP_
