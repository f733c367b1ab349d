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

#ifndef FOLEYGEN_NN_HPP_
#define FOLEYGEN_NN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "foleygen/rng.hpp"

// Small double-precision layer toolkit with hand-written backward passes.
// Everything is single-threaded and allocation-explicit, so a fixed seed
// reproduces training bit for bit.
namespace foleygen::nn {

struct Tensor3 {
  int ch = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int c, int hh, int ww)
      : ch(c), h(hh), w(ww), v(static_cast<std::size_t>(c) * hh * ww, 0.0) {}

  std::size_t size() const { return v.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  double* plane(int c) { return v.data() + static_cast<std::size_t>(c) * plane_size(); }
  const double* plane(int c) const {
    return v.data() + static_cast<std::size_t>(c) * plane_size();
  }
  double& at(int c, int y, int x) {
    return v[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
  double at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
  bool same_shape(const Tensor3& o) const {
    return ch == o.ch && h == o.h && w == o.w;
  }
  void fill(double value) { std::fill(v.begin(), v.end(), value); }
};

struct Param {
  std::vector<double> w, g;
  explicit Param(std::size_t n) : w(n, 0.0), g(n, 0.0) {}
  std::size_t size() const { return w.size(); }
};

// Flat view over all parameters of a model, in registration order. Used by
// the optimizer, checkpoints, and checksums.
class ParamRegistry {
 public:
  void add(Param* p) { params_.push_back(p); }
  const std::vector<Param*>& params() const { return params_; }

  std::size_t total_size() const;
  void zero_grad();
  std::vector<double> flatten() const;
  void load_flat(std::span<const double> values);
  std::uint64_t checksum() const;  // FNV-1a over the raw bytes

 private:
  std::vector<Param*> params_;
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

void silu_forward(const Tensor3& pre, Tensor3& out);
// dpre = dout * silu'(pre); safe to alias dpre with dout.
void silu_backward(const Tensor3& pre, const Tensor3& dout, Tensor3& dpre);
void silu_forward_vec(const std::vector<double>& pre, std::vector<double>& out);
void silu_backward_vec(const std::vector<double>& pre,
                       const std::vector<double>& dout, std::vector<double>& dpre);

// 3x3 convolution with zero padding 1 and stride 1 or 2.
struct Conv2d {
  int in_ch, out_ch, stride;
  Param weight;  // [out][in][3][3]
  Param bias;    // [out]

  Conv2d(int in, int out, int s)
      : in_ch(in), out_ch(out), stride(s),
        weight(static_cast<std::size_t>(in) * out * 9),
        bias(static_cast<std::size_t>(out)) {}

  void init(Rng& rng, double gain = 1.0);
  int out_dim(int d) const { return (d - 1) / stride + 1; }
  Tensor3 forward(const Tensor3& x) const;
  // Accumulates weight/bias grads and returns grad wrt the input.
  Tensor3 backward(const Tensor3& x, const Tensor3& dy);
  void register_params(ParamRegistry& reg) {
    reg.add(&weight);
    reg.add(&bias);
  }
};

struct Linear {
  int in_dim, out_dim;
  bool has_bias;
  Param weight;  // [out][in]
  Param bias;    // [out]

  Linear(int in, int out, bool with_bias = true)
      : in_dim(in), out_dim(out), has_bias(with_bias),
        weight(static_cast<std::size_t>(in) * out),
        bias(static_cast<std::size_t>(out)) {}

  void init(Rng& rng, double gain = 1.0);
  std::vector<double> forward(const std::vector<double>& x) const;
  std::vector<double> backward(const std::vector<double>& x,
                               const std::vector<double>& dy);
  void register_params(ParamRegistry& reg) {
    reg.add(&weight);
    if (has_bias) reg.add(&bias);
  }
};

Tensor3 upsample2x(const Tensor3& x);
Tensor3 upsample2x_backward(const Tensor3& dy);

std::vector<double> global_avg_pool(const Tensor3& x);
Tensor3 global_avg_pool_backward(const std::vector<double>& dy, int ch, int h, int w);

// y = x / max(||x||, eps)
std::vector<double> l2_normalize(const std::vector<double>& x, double eps = 1e-12);
std::vector<double> l2_normalize_backward(const std::vector<double>& x,
                                          const std::vector<double>& dy,
                                          double eps = 1e-12);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update from the accumulated grads, then leaves grads intact
  // (callers zero them explicitly).
  void step(ParamRegistry& reg);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace foleygen::nn

#endif  // FOLEYGEN_NN_HPP_
