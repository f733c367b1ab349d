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

#include "foleygen/fadmetric.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <Eigen/Dense>

#include "foleygen/errors.hpp"
#include "foleygen/rng.hpp"

namespace foleygen::fadmetric {
namespace {

Eigen::MatrixXd to_eigen(const Mat& m) {
  Eigen::MatrixXd out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) out(r, c) = m.at(r, c);
  return out;
}

Mat from_eigen(const Eigen::MatrixXd& m) {
  Mat out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) = m(r, c);
  return out;
}

Eigen::MatrixXd sqrtm_psd_eigen(const Eigen::MatrixXd& m, const char* what) {
  const double scale = std::max(1.0, m.norm());
  if ((m - m.transpose()).norm() > 1e-8 * scale)
    throw NumericalError(std::string(what) + ": matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success)
    throw NumericalError(std::string(what) + ": eigendecomposition failed");
  Eigen::VectorXd ev = solver.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8 * scale)
      throw NumericalError(std::string(what) + ": matrix is not PSD (eigenvalue " +
                           std::to_string(ev(i)) + ")");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& embeddings) {
  if (embeddings.size() < 2)
    throw InputError("fit_gaussian: need at least 2 embeddings, got " +
                     std::to_string(embeddings.size()));
  const int dim = static_cast<int>(embeddings[0].size());
  for (const auto& e : embeddings)
    if (static_cast<int>(e.size()) != dim)
      throw InputError("fit_gaussian: mixed embedding dimensions");

  GaussianStats stats;
  stats.count = static_cast<int>(embeddings.size());
  stats.mean.assign(static_cast<std::size_t>(dim), 0.0);
  for (const auto& e : embeddings)
    for (int i = 0; i < dim; ++i) stats.mean[static_cast<std::size_t>(i)] += e[static_cast<std::size_t>(i)];
  for (double& v : stats.mean) v /= stats.count;

  stats.covariance = Mat(dim, dim);
  for (const auto& e : embeddings) {
    for (int i = 0; i < dim; ++i) {
      const double di = e[static_cast<std::size_t>(i)] - stats.mean[static_cast<std::size_t>(i)];
      for (int j = 0; j < dim; ++j) {
        const double dj = e[static_cast<std::size_t>(j)] - stats.mean[static_cast<std::size_t>(j)];
        stats.covariance.at(i, j) += di * dj;
      }
    }
  }
  const double inv = 1.0 / (stats.count - 1);
  for (double& v : stats.covariance.a) v *= inv;
  // enforce exact symmetry
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      const double s = 0.5 * (stats.covariance.at(i, j) + stats.covariance.at(j, i));
      stats.covariance.at(i, j) = s;
      stats.covariance.at(j, i) = s;
    }
  return stats;
}

GaussianStats fit_gaussian(const std::vector<EmbeddingVector>& embeddings) {
  std::vector<std::vector<double>> raw;
  raw.reserve(embeddings.size());
  for (const EmbeddingVector& e : embeddings) raw.push_back(e.values);
  return fit_gaussian(raw);
}

Mat sqrtm_psd(const Mat& matrix) {
  if (matrix.rows != matrix.cols) throw InputError("sqrtm_psd: matrix must be square");
  return from_eigen(sqrtm_psd_eigen(to_eigen(matrix), "sqrtm_psd"));
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim())
    throw InputError("frechet_distance: dimension mismatch (" +
                     std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  const int d = a.dim();
  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = a.mean[static_cast<std::size_t>(i)] - b.mean[static_cast<std::size_t>(i)];
    mean_term += diff * diff;
  }
  const Eigen::MatrixXd sa = to_eigen(a.covariance);
  const Eigen::MatrixXd sb = to_eigen(b.covariance);
  const Eigen::MatrixXd sa_half = sqrtm_psd_eigen(sa, "frechet_distance");
  // symmetrize the sandwich before the second root to keep roundoff in check
  Eigen::MatrixXd inner = sa_half * sb * sa_half;
  inner = 0.5 * (inner + inner.transpose());
  const Eigen::MatrixXd cross = sqrtm_psd_eigen(inner, "frechet_distance");
  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross.trace();
  if (value < -1e-8)
    throw NumericalError("frechet_distance: significantly negative result " +
                         std::to_string(value));
  return std::max(value, 0.0);
}

FadReport make_report(const std::vector<std::pair<std::string, double>>& per_class,
                      const std::string& backend) {
  if (per_class.empty()) throw InputError("make_report: no per-class scores");
  FadReport report;
  report.per_class = per_class;
  report.backend = backend;
  double sum = 0.0;
  for (const auto& [name, score] : per_class) sum += score;
  report.average = sum / static_cast<double>(per_class.size());
  return report;
}

FadReport evaluate_classes(
    const std::map<std::string, std::vector<std::vector<double>>>& generated,
    const std::map<std::string, std::vector<std::vector<double>>>& reference,
    const std::vector<std::string>& class_order, const std::string& backend) {
  std::vector<std::pair<std::string, double>> per_class;
  std::vector<std::string> missing;
  for (const std::string& name : class_order) {
    const auto g = generated.find(name);
    const auto r = reference.find(name);
    if (g == generated.end() || g->second.size() < 2 || r == reference.end() ||
        r->second.size() < 2) {
      missing.push_back(name);
      continue;
    }
    per_class.emplace_back(name,
                           frechet_distance(fit_gaussian(g->second), fit_gaussian(r->second)));
  }
  if (per_class.empty())
    throw InputError("evaluate_classes: no class present on both sides");
  FadReport report = make_report(per_class, backend);
  report.missing_classes = std::move(missing);
  report.warning = !report.missing_classes.empty();
  return report;
}

void print_fad_report(std::ostream& os, const FadReport& report) {
  os << "class,fad\n";
  os << std::fixed << std::setprecision(6);
  for (const auto& [name, score] : report.per_class) os << name << "," << score << "\n";
  os << "average," << report.average << "\n";
  os.unsetf(std::ios_base::floatfield);
  for (const std::string& name : report.missing_classes)
    os << "# warning: class '" << name << "' missing on one side\n";
}

void write_fad_report_csv(const std::filesystem::path& path, const FadReport& report) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  print_fad_report(f, report);
}

// ---------------------------------------------------------------------------
// .femb files

void write_femb(const std::filesystem::path& path,
                const std::vector<std::vector<double>>& embeddings) {
  if (embeddings.empty()) throw InputError("write_femb: empty embedding set");
  const std::uint32_t count = static_cast<std::uint32_t>(embeddings.size());
  const std::uint32_t dim = static_cast<std::uint32_t>(embeddings[0].size());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write("FEMB", 4);
  auto put_u32 = [&f](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(count);
  put_u32(dim);
  for (const auto& e : embeddings) {
    if (e.size() != dim) throw InputError("write_femb: ragged embedding rows");
    for (double v : e) {
      const float fv = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &fv, 4);
      put_u32(bits);
    }
  }
  if (!f) throw IoError("short write to " + path.string());
}

std::vector<std::vector<double>> read_femb(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "FEMB", 4) != 0)
    throw DecodeError(path.string() + ": not a FEMB file");
  auto get_u32 = [&f, &path]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw DecodeError(path.string() + ": truncated FEMB file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t count = get_u32();
  const std::uint32_t dim = get_u32();
  std::vector<std::vector<double>> out(count, std::vector<double>(dim, 0.0));
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) {
      const std::uint32_t bits = get_u32();
      float fv;
      std::memcpy(&fv, &bits, 4);
      out[i][j] = fv;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

RandomProjectionBackend::RandomProjectionBackend(int mel_bins, int out_dim,
                                                 std::uint64_t seed)
    : mel_bins_(mel_bins), out_dim_(out_dim), projection_(out_dim, 2 * mel_bins) {
  Rng rng(Rng::mix(seed, 0xfad));
  const double scale = 1.0 / std::sqrt(static_cast<double>(2 * mel_bins));
  for (double& v : projection_.a) v = scale * rng.normal();
}

std::vector<double> RandomProjectionBackend::embed(
    const specops::MelSpectrogram& mel) const {
  if (mel.bins() != mel_bins_)
    throw ConfigError("randproj backend: mel has " + std::to_string(mel.bins()) +
                      " bins, expected " + std::to_string(mel_bins_));
  // features: per-bin mean and standard deviation over time
  std::vector<double> feat(static_cast<std::size_t>(2 * mel_bins_), 0.0);
  const int frames = mel.frames();
  for (int b = 0; b < mel_bins_; ++b) {
    double sum = 0.0, sq = 0.0;
    for (int t = 0; t < frames; ++t) {
      const double v = mel.values.at(t, b);
      sum += v;
      sq += v * v;
    }
    const double m = sum / frames;
    feat[static_cast<std::size_t>(b)] = m;
    feat[static_cast<std::size_t>(mel_bins_ + b)] =
        std::sqrt(std::max(sq / frames - m * m, 0.0));
  }
  std::vector<double> out(static_cast<std::size_t>(out_dim_), 0.0);
  for (int o = 0; o < out_dim_; ++o) {
    const double* row = projection_.row(o);
    double acc = 0.0;
    for (int i = 0; i < 2 * mel_bins_; ++i) acc += row[i] * feat[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(o)] = std::tanh(acc);
  }
  return out;
}

}  // namespace foleygen::fadmetric
