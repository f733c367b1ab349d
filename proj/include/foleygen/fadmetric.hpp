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

#ifndef FOLEYGEN_FADMETRIC_HPP_
#define FOLEYGEN_FADMETRIC_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "foleygen/embedding.hpp"
#include "foleygen/jointembed.hpp"
#include "foleygen/mat.hpp"
#include "foleygen/specops.hpp"

namespace foleygen::fadmetric {

struct GaussianStats {
  std::vector<double> mean;
  Mat covariance;  // symmetric, unbiased (count - 1)
  int count = 0;

  int dim() const { return static_cast<int>(mean.size()); }
};

// Sample mean plus unbiased covariance, symmetrized as (C + C^T) / 2.
GaussianStats fit_gaussian(const std::vector<std::vector<double>>& embeddings);
GaussianStats fit_gaussian(const std::vector<EmbeddingVector>& embeddings);

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [-1e-8, 0] are clamped to zero; anything more negative is an error.
Mat sqrtm_psd(const Mat& matrix);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), clamped to 0
// when roundoff leaves a tiny negative value.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct FadReport {
  std::vector<std::pair<std::string, double>> per_class;  // in class order
  double average = 0.0;
  std::string backend;
  std::vector<std::string> missing_classes;
  bool warning = false;
};

// Average of the given per-class scores; the same path evaluate_classes
// uses for its summary row.
FadReport make_report(const std::vector<std::pair<std::string, double>>& per_class,
                      const std::string& backend);

// Per-class Frechet distances between generated and reference embedding
// sets. A class missing on either side is reported absent and the average
// covers the present classes with a warning flag.
FadReport evaluate_classes(
    const std::map<std::string, std::vector<std::vector<double>>>& generated,
    const std::map<std::string, std::vector<std::vector<double>>>& reference,
    const std::vector<std::string>& class_order, const std::string& backend);

void write_fad_report_csv(const std::filesystem::path& path, const FadReport& report);
void print_fad_report(std::ostream& os, const FadReport& report);

// .femb container: magic "FEMB", uint32 count, uint32 dim (little endian),
// then count*dim float32 values row-major.
void write_femb(const std::filesystem::path& path,
                const std::vector<std::vector<double>>& embeddings);
std::vector<std::vector<double>> read_femb(const std::filesystem::path& path);

// mel -> feature vector used for FAD. Implementations must be deterministic.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> embed(const specops::MelSpectrogram& mel) const = 0;
};

// Training-free baseline: per-bin mean and deviation of the log-mel pushed
// through a fixed seeded random projection with tanh.
class RandomProjectionBackend : public EmbeddingBackend {
 public:
  RandomProjectionBackend(int mel_bins, int out_dim, std::uint64_t seed);
  std::string name() const override { return "randproj"; }
  std::vector<double> embed(const specops::MelSpectrogram& mel) const override;

 private:
  int mel_bins_, out_dim_;
  Mat projection_;  // out_dim x (2 * mel_bins)
};

// Audio tower of the trained joint embedding model.
class JointEmbedBackend : public EmbeddingBackend {
 public:
  explicit JointEmbedBackend(const jointembed::JointEmbedModel& model)
      : model_(model) {}
  std::string name() const override { return "joint"; }
  std::vector<double> embed(const specops::MelSpectrogram& mel) const override {
    return model_.encode_audio(mel).values;
  }

 private:
  const jointembed::JointEmbedModel& model_;
};

}  // namespace foleygen::fadmetric

#endif  // FOLEYGEN_FADMETRIC_HPP_
