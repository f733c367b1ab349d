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

#ifndef FOLEYGEN_MAT_HPP_
#define FOLEYGEN_MAT_HPP_

#include <cmath>
#include <cstddef>
#include <vector>

namespace foleygen {

// Dense row-major matrix of doubles. Deliberately minimal; heavy linear
// algebra goes through Eigen inside the .cpp files.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return a.size(); }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
  }
};

inline double frobenius_distance(const Mat& x, const Mat& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.a.size(); ++i) {
    const double d = x.a[i] - y.a[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace foleygen

#endif  // FOLEYGEN_MAT_HPP_
