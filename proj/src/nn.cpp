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

#include "foleygen/nn.hpp"

#include <cmath>
#include <cstring>

#include "foleygen/errors.hpp"

namespace foleygen::nn {

std::size_t ParamRegistry::total_size() const {
  std::size_t n = 0;
  for (const Param* p : params_) n += p->size();
  return n;
}

void ParamRegistry::zero_grad() {
  for (Param* p : params_) std::fill(p->g.begin(), p->g.end(), 0.0);
}

std::vector<double> ParamRegistry::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const Param* p : params_) out.insert(out.end(), p->w.begin(), p->w.end());
  return out;
}

void ParamRegistry::load_flat(std::span<const double> values) {
  if (values.size() != total_size())
    throw ValidationError("parameter blob size " + std::to_string(values.size()) +
                          " does not match model size " +
                          std::to_string(total_size()));
  std::size_t off = 0;
  for (Param* p : params_) {
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
              values.begin() + static_cast<std::ptrdiff_t>(off + p->size()),
              p->w.begin());
    off += p->size();
  }
}

std::uint64_t ParamRegistry::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Param* p : params_) {
    for (double v : p->w) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

void silu_forward(const Tensor3& pre, Tensor3& out) {
  out = pre;
  for (double& x : out.v) x = silu(x);
}

void silu_backward(const Tensor3& pre, const Tensor3& dout, Tensor3& dpre) {
  dpre = dout;
  for (std::size_t i = 0; i < pre.v.size(); ++i) dpre.v[i] *= silu_grad(pre.v[i]);
}

void silu_forward_vec(const std::vector<double>& pre, std::vector<double>& out) {
  out = pre;
  for (double& x : out) x = silu(x);
}

void silu_backward_vec(const std::vector<double>& pre,
                       const std::vector<double>& dout, std::vector<double>& dpre) {
  dpre = dout;
  for (std::size_t i = 0; i < pre.size(); ++i) dpre[i] *= silu_grad(pre[i]);
}

void Conv2d::init(Rng& rng, double gain) {
  const double std_dev = gain * std::sqrt(2.0 / (static_cast<double>(in_ch) * 9));
  for (double& w : weight.w) w = std_dev * rng.normal();
  std::fill(bias.w.begin(), bias.w.end(), 0.0);
}

Tensor3 Conv2d::forward(const Tensor3& x) const {
  const int ho = out_dim(x.h), wo = out_dim(x.w);
  Tensor3 y(out_ch, ho, wo);
  for (int oc = 0; oc < out_ch; ++oc) {
    double* yp = y.plane(oc);
    const double b = bias.w[static_cast<std::size_t>(oc)];
    for (std::size_t i = 0; i < y.plane_size(); ++i) yp[i] = b;
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* xp = x.plane(ic);
      const double* wk = weight.w.data() + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= x.h) continue;
          double* yrow = yp + static_cast<std::size_t>(oy) * wo;
          const double* xrow = xp + static_cast<std::size_t>(iy) * x.w;
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = wk[ky * 3 + kx];
            if (wv == 0.0) continue;
            // ix = ox*stride + kx - 1 must stay inside [0, x.w)
            int ox_lo = 0;
            while (ox_lo * stride + kx - 1 < 0) ++ox_lo;
            int ox_hi = wo - 1;
            while (ox_hi >= 0 && ox_hi * stride + kx - 1 >= x.w) --ox_hi;
            const double* xx = xrow + (static_cast<std::size_t>(ox_lo) * stride + kx - 1);
            if (stride == 1) {
              for (int ox = ox_lo; ox <= ox_hi; ++ox, ++xx) yrow[ox] += wv * *xx;
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox, xx += stride) yrow[ox] += wv * *xx;
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor3 Conv2d::backward(const Tensor3& x, const Tensor3& dy) {
  const int ho = dy.h, wo = dy.w;
  Tensor3 dx(x.ch, x.h, x.w);
  for (int oc = 0; oc < out_ch; ++oc) {
    const double* dyp = dy.plane(oc);
    double bacc = 0.0;
    for (std::size_t i = 0; i < dy.plane_size(); ++i) bacc += dyp[i];
    bias.g[static_cast<std::size_t>(oc)] += bacc;
    for (int ic = 0; ic < in_ch; ++ic) {
      const double* xp = x.plane(ic);
      double* dxp = dx.plane(ic);
      double* gk = weight.g.data() + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
      const double* wk = weight.w.data() + (static_cast<std::size_t>(oc) * in_ch + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= x.h) continue;
          const double* dyrow = dyp + static_cast<std::size_t>(oy) * wo;
          const double* xrow = xp + static_cast<std::size_t>(iy) * x.w;
          double* dxrow = dxp + static_cast<std::size_t>(iy) * x.w;
          for (int kx = 0; kx < 3; ++kx) {
            int ox_lo = 0;
            while (ox_lo * stride + kx - 1 < 0) ++ox_lo;
            int ox_hi = wo - 1;
            while (ox_hi >= 0 && ox_hi * stride + kx - 1 >= x.w) --ox_hi;
            const double wv = wk[ky * 3 + kx];
            double wacc = 0.0;
            const double* xx = xrow + (static_cast<std::size_t>(ox_lo) * stride + kx - 1);
            double* dxx = dxrow + (static_cast<std::size_t>(ox_lo) * stride + kx - 1);
            for (int ox = ox_lo; ox <= ox_hi; ++ox, xx += stride, dxx += stride) {
              const double g = dyrow[ox];
              wacc += g * *xx;
              *dxx += g * wv;
            }
            gk[ky * 3 + kx] += wacc;
          }
        }
      }
    }
  }
  return dx;
}

void Linear::init(Rng& rng, double gain) {
  const double std_dev = gain * std::sqrt(2.0 / in_dim);
  for (double& w : weight.w) w = std_dev * rng.normal();
  std::fill(bias.w.begin(), bias.w.end(), 0.0);
}

std::vector<double> Linear::forward(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != in_dim)
    throw ValidationError("linear: input size mismatch");
  std::vector<double> y(static_cast<std::size_t>(out_dim), 0.0);
  for (int o = 0; o < out_dim; ++o) {
    const double* w = weight.w.data() + static_cast<std::size_t>(o) * in_dim;
    double acc = has_bias ? bias.w[static_cast<std::size_t>(o)] : 0.0;
    for (int i = 0; i < in_dim; ++i) acc += w[i] * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

std::vector<double> Linear::backward(const std::vector<double>& x,
                                     const std::vector<double>& dy) {
  std::vector<double> dx(static_cast<std::size_t>(in_dim), 0.0);
  for (int o = 0; o < out_dim; ++o) {
    const double g = dy[static_cast<std::size_t>(o)];
    if (has_bias) bias.g[static_cast<std::size_t>(o)] += g;
    const double* w = weight.w.data() + static_cast<std::size_t>(o) * in_dim;
    double* gw = weight.g.data() + static_cast<std::size_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) {
      gw[i] += g * x[static_cast<std::size_t>(i)];
      dx[static_cast<std::size_t>(i)] += g * w[i];
    }
  }
  return dx;
}

Tensor3 upsample2x(const Tensor3& x) {
  Tensor3 y(x.ch, x.h * 2, x.w * 2);
  for (int c = 0; c < x.ch; ++c) {
    const double* xp = x.plane(c);
    double* yp = y.plane(c);
    for (int i = 0; i < x.h; ++i) {
      for (int j = 0; j < x.w; ++j) {
        const double v = xp[static_cast<std::size_t>(i) * x.w + j];
        const std::size_t base = (static_cast<std::size_t>(2 * i) * y.w) + 2 * j;
        yp[base] = v;
        yp[base + 1] = v;
        yp[base + static_cast<std::size_t>(y.w)] = v;
        yp[base + static_cast<std::size_t>(y.w) + 1] = v;
      }
    }
  }
  return y;
}

Tensor3 upsample2x_backward(const Tensor3& dy) {
  Tensor3 dx(dy.ch, dy.h / 2, dy.w / 2);
  for (int c = 0; c < dx.ch; ++c) {
    const double* dyp = dy.plane(c);
    double* dxp = dx.plane(c);
    for (int i = 0; i < dx.h; ++i) {
      for (int j = 0; j < dx.w; ++j) {
        const std::size_t base = (static_cast<std::size_t>(2 * i) * dy.w) + 2 * j;
        dxp[static_cast<std::size_t>(i) * dx.w + j] =
            dyp[base] + dyp[base + 1] + dyp[base + static_cast<std::size_t>(dy.w)] +
            dyp[base + static_cast<std::size_t>(dy.w) + 1];
      }
    }
  }
  return dx;
}

std::vector<double> global_avg_pool(const Tensor3& x) {
  std::vector<double> y(static_cast<std::size_t>(x.ch), 0.0);
  const double inv = 1.0 / static_cast<double>(x.plane_size());
  for (int c = 0; c < x.ch; ++c) {
    const double* xp = x.plane(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.plane_size(); ++i) acc += xp[i];
    y[static_cast<std::size_t>(c)] = acc * inv;
  }
  return y;
}

Tensor3 global_avg_pool_backward(const std::vector<double>& dy, int ch, int h, int w) {
  Tensor3 dx(ch, h, w);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  for (int c = 0; c < ch; ++c) {
    const double g = dy[static_cast<std::size_t>(c)] * inv;
    double* p = dx.plane(c);
    for (std::size_t i = 0; i < dx.plane_size(); ++i) p[i] = g;
  }
  return dx;
}

std::vector<double> l2_normalize(const std::vector<double>& x, double eps) {
  double n = 0.0;
  for (double v : x) n += v * v;
  n = std::max(std::sqrt(n), eps);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / n;
  return y;
}

std::vector<double> l2_normalize_backward(const std::vector<double>& x,
                                          const std::vector<double>& dy,
                                          double eps) {
  double n = 0.0;
  for (double v : x) n += v * v;
  n = std::max(std::sqrt(n), eps);
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * dy[i];
  std::vector<double> dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    dx[i] = dy[i] / n - x[i] * dot / (n * n * n);
  return dx;
}

void Adam::step(ParamRegistry& reg) {
  const auto& params = reg.params();
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const Param* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->g[i];
      m_[pi][i] = beta1_ * m_[pi][i] + (1.0 - beta1_) * g;
      v_[pi][i] = beta2_ * v_[pi][i] + (1.0 - beta2_) * g * g;
      const double mhat = m_[pi][i] / bc1;
      const double vhat = v_[pi][i] / bc2;
      p->w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace foleygen::nn
